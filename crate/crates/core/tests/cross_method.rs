use hrspec::fcoracle::{enumerate_fc, oracle_on, Broadening};
use hrspec::vibronic::{emission_lineshape, ladder_weights};
use hrspec::{HrDecomposition, HrEntry, LineshapeConfig};

fn hr(modes: &[(f64, f64)]) -> HrDecomposition {
    HrDecomposition::new(
        modes
            .iter()
            .enumerate()
            .map(|(k, &(omega_mev, sk))| HrEntry { mode: k, omega_mev, qk: 0.0, sk })
            .collect(),
    )
    .unwrap()
}

#[test]
fn poisson_ladder_weights() {
    let h = hr(&[(150.0, 2.0)]);
    let mut cfg = LineshapeConfig::auto(2.6, 1.0, 2.0, &h, 0.1, None).unwrap();
    cfg.omega_cubed = false;
    let (ls, _) = emission_lineshape(&h, &cfg).unwrap();
    let w = ladder_weights(&ls, 150.0, 16);
    let mut p = (-2f64).exp();
    for n in 0..=8 {
        eprintln!("n={n} {:.3e}", (w[n] - p).abs());
        assert!((w[n] - p).abs() < 1e-4);
        p *= 2.0 / (n + 1) as f64;
    }
}

#[test]
fn oracle_matches_fft_route() {
    let h = hr(&[(60.0, 0.8), (85.0, 0.5), (110.0, 0.9), (145.0, 0.5), (180.0, 0.3)]);
    let mut cfg = LineshapeConfig::auto(2.6, 1.0, 2.0, &h, 0.1, None).unwrap();
    cfg.omega_cubed = false;
    let (ls, _) = emission_lineshape(&h, &cfg).unwrap();
    let ladder = enumerate_fc(&h, 24).unwrap();
    let b = Broadening { gamma_mev: 1.0, sigma_mev: 2.0 };
    let t = std::time::Instant::now();
    let o = oracle_on(&ladder, 2.6, b, ls.energies_ev()).unwrap();
    let step = ls.step_ev();
    let l1: f64 = ls.spectral_function().iter().zip(&o.values).map(|(a, b)| (a - b).abs() * step).sum();
    eprintln!("lines {} tail {:e} L1 {l1:e} in {:?}", ladder.lines().len(), ladder.tail(), t.elapsed());
    assert!(l1 < 1e-4);
}
