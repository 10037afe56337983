mod common;

use std::collections::BTreeMap;

use hrspec::io::*;
use hrspec::phonons::diagonalize;
use hrspec::{
    ChemicalPotential, Correction, DefectEntry, ForceDelta, GeometryPair, HostReference, HrDecomposition, HrEntry,
    RelaxationInfo, StoichiometryTerm,
};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3f64..1e3, -1e-8f64..1e-8, (-300i32..300).prop_map(|e| 1.2345678901234567 * 10f64.powi(e))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn structure(n in 1usize..6, seed in any::<u64>()) {
        let s = common::random_structure(n, seed);
        let text = write_structure(&s);
        let back = parse_structure(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(write_structure(&back), text);
    }

    #[test]
    fn hessian_and_modes(n in 1usize..5, seed in any::<u64>()) {
        let s = common::random_structure(n, seed);
        let h = common::spring_hessian(&s, seed, 0.3).with_structure_hash(s.hash());
        let text = write_hessian(&h);
        let back = parse_hessian(&text, Some(&s)).unwrap();
        prop_assert_eq!(&back, &h);
        prop_assert_eq!(write_hessian(&back), text);

        let basis = diagonalize(&h, &s).unwrap();
        let text = write_modes(&basis, None);
        let back = parse_modes(&text).unwrap();
        prop_assert_eq!(&back, &basis);
        prop_assert_eq!(write_modes(&back, None), text);
    }

    #[test]
    fn geometry_and_forces(
        n in 1usize..6,
        seed in any::<u64>(),
        thresholds in (prop::option::of(0.0f64..0.1), prop::option::of(0.0f64..0.1)),
        with_species in any::<bool>(),
    ) {
        let s = common::random_structure(n, seed);
        let species = s.species();
        let sp = with_species.then_some(species.as_slice());
        let ground: Vec<[f64; 3]> = s.sites().iter().map(|x| x.position).collect();
        let excited: Vec<[f64; 3]> = ground
            .iter()
            .zip(common::random_displacements(n, 0.1, seed))
            .map(|(g, d)| [g[0] + d[0], g[1] + d[1], g[2] + d[2]])
            .collect();
        let pair = GeometryPair::new(ground, excited).unwrap().with_relaxation(RelaxationInfo {
            ground_force_threshold: thresholds.0,
            excited_force_threshold: thresholds.1,
        });
        let text = write_geometry_pair(&pair, sp);
        let back = parse_geometry_pair(&text, Some(&s)).unwrap();
        prop_assert_eq!(&back, &pair);
        prop_assert_eq!(write_geometry_pair(&back, sp), text);

        let f = ForceDelta::new(common::random_displacements(n, 2.0, seed ^ 7).into_iter().flatten().collect()).unwrap();
        let text = write_force_delta(&f, sp);
        let back = parse_force_delta(&text, Some(&s)).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(write_force_delta(&back, sp), text);
    }

    #[test]
    fn hr(
        rows in prop::collection::vec((1e-3f64..300.0, finite(), 0.0f64..5.0), 1..12),
        route in prop::option::of(prop_oneof![Just("displacement".to_string()), Just("forces".to_string())]),
        excluded in prop::collection::vec(0usize..3, 0..3),
    ) {
        let hr = HrDecomposition::new(
            rows.into_iter()
                .enumerate()
                .map(|(k, (omega_mev, qk, sk))| HrEntry { mode: k + 3, omega_mev, qk, sk })
                .collect(),
        ).unwrap();
        let doc = HrDocument { hr, route, excluded_modes: excluded };
        let text = write_hr(&doc);
        let back = parse_hr(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(write_hr(&back), text);
    }

    #[test]
    fn defects(
        energies in prop::collection::vec((-3i32..4, finite(), prop::option::of(finite()), -2i32..3, any::<bool>()), 1..8),
        host in (finite(), finite(), 0.1f64..6.0, finite(), finite()),
        dielectric in prop::option::of((1.0f64..20.0, 10.0f64..5000.0)),
    ) {
        let mut mu = BTreeMap::new();
        mu.insert("C".to_string(), ChemicalPotential { reference_energy: host.3, delta: 0.0 });
        mu.insert("Si".to_string(), ChemicalPotential { reference_energy: host.4, delta: -0.3 });
        let mut h = HostReference::new(host.0, host.1, host.2, mu).unwrap();
        if let Some((eps, v)) = dielectric {
            h = h.with_dielectric(eps, v);
        }
        let entries: Vec<DefectEntry> = energies
            .into_iter()
            .enumerate()
            .map(|(i, (q, e, corr, count, excited))| {
                let correction = match corr {
                    Some(c) => Correction::Explicit(c),
                    None if dielectric.is_some() => Correction::Analytic,
                    None => Correction::Explicit(0.0),
                };
                let mut stoich = vec![StoichiometryTerm { species: "C".into(), count }];
                if i % 2 == 1 {
                    stoich.push(StoichiometryTerm { species: "Si".into(), count: -count });
                }
                let d = DefectEntry::new(format!("D{i}"), q, e, stoich, correction).unwrap();
                if excited { d.excited() } else { d }
            })
            .collect();
        let table = DefectTable { host: h, entries };
        let text = write_defects(&table);
        let back = parse_defects(&text).unwrap();
        prop_assert_eq!(&back, &table);
        prop_assert_eq!(write_defects(&back), text);
    }

    #[test]
    fn dissociation(rows in prop::collection::vec(("[A-Za-z0-9_]{1,8}", finite(), finite(), finite()), 0..6)) {
        let rows: Vec<DissociationRow> = rows
            .into_iter()
            .map(|(label, e_smaller, e_split, e_cluster)| DissociationRow { label, e_smaller, e_split, e_cluster })
            .collect();
        let text = write_dissociation(&rows);
        let back = parse_dissociation(&text).unwrap();
        prop_assert_eq!(&back, &rows);
        prop_assert_eq!(write_dissociation(&back), text);
    }

    #[test]
    fn manifest(args in prop::collection::vec("[ -~]{0,12}", 0..6), blobs in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 0..4)) {
        let digests: Vec<FileDigest> = blobs
            .iter()
            .enumerate()
            .map(|(i, b)| FileDigest { path: format!("f{i}.json"), sha256: sha256_hex(b) })
            .collect();
        let m = Manifest::new(args, digests.clone(), digests);
        let text = write_manifest(&m);
        let back = parse_manifest(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(write_manifest(&back), text);
    }
}
