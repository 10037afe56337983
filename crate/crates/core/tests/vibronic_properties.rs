mod common;

use hrspec::phonons::diagonalize;
use hrspec::vibronic::{
    covering_grid, decompose, emission_lineshape, generating_function, qk_from_displacement, qk_from_forces,
    spectral_density, unnormalized_intensity, HrOptions, TimeGrid,
};
use hrspec::{
    ForceDelta, GeometryPair, HrDecomposition, HrEntry, LineshapeConfig, Mode, PhononBasis,
};
use proptest::prelude::*;

fn hr_strategy() -> impl Strategy<Value = HrDecomposition> {
    prop::collection::vec((20.0f64..200.0, 0.0f64..1.5), 1..5).prop_map(|v| {
        HrDecomposition::new(
            v.into_iter()
                .enumerate()
                .map(|(k, (omega_mev, sk))| HrEntry { mode: k, omega_mev, qk: 0.0, sk })
                .collect(),
        )
        .unwrap()
    })
}

fn harmonic_pair(n: usize, seed: u64) -> (PhononBasis, GeometryPair, ForceDelta) {
    let s = common::random_structure(n, seed);
    let h = common::spring_hessian(&s, seed, 0.5);
    let basis = diagonalize(&h, &s).unwrap();
    let ground: Vec<[f64; 3]> = s.sites().iter().map(|x| x.position).collect();
    let dr = common::random_displacements(n, 0.05, seed);
    let excited: Vec<[f64; 3]> = ground
        .iter()
        .zip(&dr)
        .map(|(g, d)| [g[0] + d[0], g[1] + d[1], g[2] + d[2]])
        .collect();
    let flat: Vec<f64> = dr.iter().flatten().copied().collect();
    let forces = ForceDelta::new(h.apply(&flat)).unwrap();
    (basis, GeometryPair::new(ground, excited).unwrap(), forces)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn routes_agree_on_harmonic_data(n in 2usize..8, seed in any::<u64>()) {
        let (basis, pair, forces) = harmonic_pair(n, seed);
        let opts = HrOptions::default();
        let a = qk_from_displacement(&basis, &pair, &opts).unwrap();
        let b = qk_from_forces(&basis, &forces, &opts).unwrap();
        prop_assert!(b.excluded.is_empty());
        let scale = a.qk.iter().map(|q| q.abs()).fold(0.0, f64::max);
        for (x, y) in a.qk.iter().zip(&b.qk) {
            prop_assert!((x - y).abs() <= 1e-8 * scale, "{x} vs {y}");
        }
        let sa = decompose(&basis, &a, &opts).unwrap().total();
        let sb = decompose(&basis, &b, &opts).unwrap().total();
        prop_assert!((sa - sb).abs() <= 1e-10 * sa.max(1.0));
    }

    #[test]
    fn generating_function_symmetries(hr in hr_strategy()) {
        let tg = TimeGrid::new(0.5, 1 << 12).unwrap();
        let grid = covering_grid(&hr, 2.0, tg.energy_step_mev()).unwrap();
        let sd = spectral_density(&hr, 2.0, grid).unwrap();
        prop_assert!((sd.integral() - hr.total()).abs() <= 1e-6 * hr.total().max(1e-300));
        let gf = generating_function(&sd, tg).unwrap();
        let n = tg.n;
        for j in 1..n / 2 {
            let a = gf.values()[n / 2 + j];
            let b = gf.values()[n / 2 - j];
            prop_assert!((a - b.conj()).norm() < 1e-12);
            prop_assert!(a.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn lineshape_normalization(hr in hr_strategy(), zpl in 1.5f64..3.0, cubed in any::<bool>()) {
        let mut cfg = LineshapeConfig::auto(zpl, 1.0, 2.0, &hr, 0.1, None).unwrap();
        cfg.omega_cubed = cubed;
        let (ls, _) = emission_lineshape(&hr, &cfg).unwrap();
        prop_assert!((ls.integral() - 1.0).abs() < 1e-6);
        prop_assert!((ls.diagnostics().full_integral - 1.0).abs() < 1e-9);
        prop_assert!(ls.diagnostics().max_imag_ratio < 1e-9);
        // L does not depend on the optical prefactor
        let mut scaled = cfg.clone();
        scaled.refractive_index = Some(2.6);
        scaled.dipole_magnitude = Some(3.1);
        let (ls2, _) = emission_lineshape(&hr, &scaled).unwrap();
        prop_assert_eq!(ls.intensity(), ls2.intensity());
        let raw = unnormalized_intensity(&ls2, &scaled);
        let base = unnormalized_intensity(&ls, &cfg);
        for (a, b) in raw.iter().zip(&base) {
            prop_assert!((a - 2.6 * 3.1 * 3.1 * b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn degenerate_mixing_leaves_spectrum_unchanged(theta in 0.0f64..std::f64::consts::PI, seed in any::<u64>()) {
        // one atom, modes 60 / 90 / 90 meV along x, y, z; remix the degenerate pair
        let m = 12.011;
        let lambda = |w: f64| (w / hrspec::units::HBAR_MEV_FS).powi(2) / hrspec::units::EV_PER_AMU_A2_IN_FS2;
        let (c, s) = (theta.cos(), theta.sin());
        let build = |v2: Vec<f64>, v3: Vec<f64>| {
            PhononBasis::new(
                vec![
                    Mode { omega_mev: 60.0, eigenvalue: lambda(60.0), vector: vec![1.0, 0.0, 0.0] },
                    Mode { omega_mev: 90.0, eigenvalue: lambda(90.0), vector: v2 },
                    Mode { omega_mev: 90.0, eigenvalue: lambda(90.0), vector: v3 },
                ],
                vec!["C".into()],
                vec![m],
                115.0,
                None,
            )
            .unwrap()
        };
        let plain = build(vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]);
        let mixed = build(vec![0.0, c, s], vec![0.0, -s, c]);
        let d = common::random_displacements(1, 0.1, seed)[0];
        let pair = GeometryPair::new(vec![[0.0; 3]], vec![d]).unwrap();
        let opts = HrOptions::default();
        let h1 = decompose(&plain, &qk_from_displacement(&plain, &pair, &opts).unwrap(), &opts).unwrap();
        let h2 = decompose(&mixed, &qk_from_displacement(&mixed, &pair, &opts).unwrap(), &opts).unwrap();
        prop_assert!((h1.total() - h2.total()).abs() < 1e-8 * h1.total().max(1.0));
        let cfg = LineshapeConfig::auto(2.0, 1.0, 2.0, &h1, 0.1, None).unwrap();
        let (l1, _) = emission_lineshape(&h1, &cfg).unwrap();
        let (l2, _) = emission_lineshape(&h2, &cfg).unwrap();
        for (a, b) in l1.intensity().iter().zip(l2.intensity()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
