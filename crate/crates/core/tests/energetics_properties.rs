use std::collections::BTreeMap;

use hrspec::energetics::{stability_diagram, transition_level};
use hrspec::{ChemicalPotential, Correction, DefectEntry, HostReference};
use proptest::prelude::*;

fn host(gap: f64) -> HostReference {
    let mut mu = BTreeMap::new();
    mu.insert("C".to_string(), ChemicalPotential { reference_energy: -9.2, delta: 0.0 });
    HostReference::new(-500.0, 4.1, gap, mu).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_is_pointwise_minimum(
        charges in prop::collection::btree_set(-3i32..4, 1..6),
        energies in prop::collection::vec(-505.0f64..-495.0, 6),
        gap in 0.5f64..4.0,
    ) {
        let host = host(gap);
        let entries: Vec<DefectEntry> = charges
            .iter()
            .zip(&energies)
            .map(|(&q, &e)| {
                let stoich = vec![hrspec::StoichiometryTerm { species: "C".into(), count: 1 }];
                DefectEntry::new("X", q, e, stoich, Correction::Explicit(0.0)).unwrap()
            })
            .collect();
        let refs: Vec<&DefectEntry> = entries.iter().collect();
        let d = stability_diagram("X", &refs, &host).unwrap();
        for i in 0..=200 {
            let ef = gap * i as f64 / 200.0;
            let min = d.lines.iter().map(|l| l.at(ef)).fold(f64::INFINITY, f64::min);
            prop_assert!((d.envelope_at(ef) - min).abs() < 1e-9, "at {ef}: {} vs {min}", d.envelope_at(ef));
        }
        // segments tile the gap
        prop_assert_eq!(d.envelope.first().unwrap().from, 0.0);
        prop_assert_eq!(d.envelope.last().unwrap().to, gap);
        for w in d.envelope.windows(2) {
            prop_assert_eq!(w[0].to, w[1].from);
            prop_assert!(w[0].charge > w[1].charge);
        }
    }

    #[test]
    fn transition_level_is_antisymmetric(q1 in -3i32..4, dq in 1i32..4, e1 in -10.0f64..10.0, e2 in -10.0f64..10.0) {
        let a = (q1, e1);
        let b = (q1 + dq, e2);
        let x = transition_level(a, b).unwrap();
        prop_assert_eq!(x, transition_level(b, a).unwrap());
        let at = |(q, e): (i32, f64)| e + q as f64 * x;
        prop_assert!((at(a) - at(b)).abs() < 1e-9);
    }
}
