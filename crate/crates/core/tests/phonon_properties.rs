mod common;

use hrspec::phonons::{apply_asr, diagonalize, residuals, symmetrize};
use hrspec::{CrystalStructure, Hessian, Site};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn orthonormal_and_complete(n in 2usize..7, seed in any::<u64>()) {
        let s = common::random_structure(n, seed);
        let h = common::spring_hessian(&s, seed, 0.3);
        let basis = diagonalize(&h, &s).unwrap();
        prop_assert!(basis.orthonormality_error() < 1e-8);
        let dim = 3 * n;
        for i in 0..dim {
            for j in 0..dim {
                let v: f64 = basis.modes().iter().map(|m| m.vector[i] * m.vector[j]).sum();
                let t = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - t).abs() < 1e-6);
            }
        }
        for r in residuals(&h, &basis).unwrap() {
            prop_assert!(r < 1e-8);
        }
    }

    #[test]
    fn spectrum_invariant_under_atom_permutation(n in 2usize..7, seed in any::<u64>(), shift in 1usize..6) {
        let s = common::random_structure(n, seed);
        let h = common::spring_hessian(&s, seed, 0.1);
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let sites: Vec<Site> = perm.iter().map(|&p| s.sites()[p].clone()).collect();
        let sp = CrystalStructure::new(*s.lattice(), sites).unwrap();
        let dim = 3 * n;
        let mut data = vec![0.0; dim * dim];
        for a in 0..n {
            for b in 0..n {
                for i in 0..3 {
                    for j in 0..3 {
                        data[(3 * a + i) * dim + 3 * b + j] = h.get(3 * perm[a] + i, 3 * perm[b] + j);
                    }
                }
            }
        }
        let hp = Hessian::new(dim, data).unwrap();
        let f1 = diagonalize(&symmetrize(&h).unwrap(), &s).unwrap().frequencies();
        let f2 = diagonalize(&symmetrize(&hp).unwrap(), &sp).unwrap().frequencies();
        for (a, b) in f1.iter().zip(&f2) {
            prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
    }

    #[test]
    fn asr_gives_three_zero_modes(n in 2usize..7, seed in any::<u64>(), noise in 1e-4f64..1e-2) {
        let s = common::random_structure(n, seed);
        let h = common::spring_hessian(&s, seed, noise);
        let (fixed, report) = apply_asr(&h, &s.masses()).unwrap();
        prop_assert!(report.applied);
        let basis = diagonalize(&fixed, &s).unwrap();
        let mut abs: Vec<f64> = basis.frequencies().iter().map(|f| f.abs()).collect();
        abs.sort_by(f64::total_cmp);
        prop_assert!(abs[2] < 0.01, "{:?}", &abs[..4]);
    }
}
