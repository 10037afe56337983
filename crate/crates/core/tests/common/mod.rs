#![allow(dead_code)]

use hrspec::{CrystalStructure, Hessian, Site};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cubic cell with atoms on jittered sites; alternating C and Si.
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

/// Central-force spring network between every pair within `cutoff` plus an
/// optional isotropic on-site spring (breaks translation invariance).
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
            if len == 0.0 {
                continue;
            }
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
    // exact symmetry
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (h[i * dim + j] + h[j * dim + i]);
            h[i * dim + j] = v;
            h[j * dim + i] = v;
        }
    }
    Hessian::new(dim, h).unwrap()
}

pub fn random_displacements(n_atoms: usize, scale: f64, seed: u64) -> Vec<[f64; 3]> {
    let mut r = rng(seed ^ 0xd15);
    (0..n_atoms)
        .map(|_| [r.gen_range(-scale..scale), r.gen_range(-scale..scale), r.gen_range(-scale..scale)])
        .collect()
}
