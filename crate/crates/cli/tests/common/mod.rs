#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hrspec::{CrystalStructure, Hessian, Site};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_hrspec");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixtures_with_prefix(prefix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    v.sort();
    v
}

pub fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "error").output().unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value of a `key\tvalue` line printed on stdout.
pub fn field(o: &Output, key: &str) -> Option<String> {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")).map(str::to_string))
}

/// Header parameter `# key = value` of a TSV file.
pub fn header_value(text: &str, key: &str) -> Option<String> {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("# {key} = ")).map(str::to_string))
}

/// Data rows of a TSV file, split on tabs.
pub fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_structure(n_atoms: usize, seed: u64) -> CrystalStructure {
    let mut r = rng(seed);
    let side = 4.0 * (n_atoms as f64).cbrt().ceil();
    let sites = (0..n_atoms)
        .map(|i| {
            let (species, mass) = if i % 2 == 0 { ("C", 12.011) } else { ("Si", 28.085) };
            Site {
                species: species.into(),
                mass,
                position: [r.gen_range(0.0..side), r.gen_range(0.0..side), r.gen_range(0.0..side)],
            }
        })
        .collect();
    CrystalStructure::new([[side, 0.0, 0.0], [0.0, side, 0.0], [0.0, 0.0, side]], sites).unwrap()
}

/// Central springs between all pairs plus an on-site spring.
pub fn spring_hessian(structure: &CrystalStructure, seed: u64, onsite: f64) -> Hessian {
    let mut r = rng(seed ^ 0x5eed);
    let sites = structure.sites();
    let n = sites.len();
    let dim = 3 * n;
    let mut h = vec![0.0; dim * dim];
    for a in 0..n {
        for b in a + 1..n {
            let d: Vec<f64> = (0..3).map(|c| sites[b].position[c] - sites[a].position[c]).collect();
            let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let u: Vec<f64> = d.iter().map(|x| x / len).collect();
            let k = r.gen_range(2.0..20.0);
            for i in 0..3 {
                for j in 0..3 {
                    let kk = k * (u[i] * u[j]);
                    h[(3 * a + i) * dim + 3 * a + j] += kk;
                    h[(3 * b + i) * dim + 3 * b + j] += kk;
                    h[(3 * a + i) * dim + 3 * b + j] -= kk;
                    h[(3 * b + i) * dim + 3 * a + j] -= kk;
                }
            }
        }
    }
    for i in 0..dim {
        h[i * dim + i] += onsite;
    }
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (h[i * dim + j] + h[j * dim + i]);
            h[i * dim + j] = v;
            h[j * dim + i] = v;
        }
    }
    Hessian::new(dim, h).unwrap()
}

/// Dense symmetric matrix with entries uniform in [−1, 1) plus a diagonal shift.
pub fn random_symmetric_hessian(dim: usize, seed: u64, shift: f64) -> Hessian {
    let mut r = rng(seed);
    let mut h = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let v: f64 = r.gen_range(-1.0..1.0);
            h[i * dim + j] = v;
            h[j * dim + i] = v;
        }
        h[i * dim + i] += shift;
    }
    Hessian::new(dim, h).unwrap()
}

pub fn random_displacements(n_atoms: usize, scale: f64, seed: u64) -> Vec<[f64; 3]> {
    let mut r = rng(seed ^ 0xd15);
    (0..n_atoms)
        .map(|_| [r.gen_range(-scale..scale), r.gen_range(-scale..scale), r.gen_range(-scale..scale)])
        .collect()
}
