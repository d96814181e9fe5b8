use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::Gamma;

use riskfed::data::{Label, LabeledDataset, Record};
use riskfed::partition::{exdir_partition, validate_partition};
use riskfed::rng::{self, Stream};

fn grouped(sectors: &[u32]) -> LabeledDataset<f64> {
    let records = sectors
        .iter()
        .enumerate()
        .map(|(i, &s)| Record {
            features: vec![i as f64, 1.0],
            label: if i % 2 == 0 { Label::Positive } else { Label::Negative },
            sector: s,
        })
        .collect();
    LabeledDataset::new(2, records).unwrap()
}

#[test]
fn four_clients_two_groups_match_a_redrawn_dirichlet() {
    let sectors: Vec<u32> = (0..1000).map(|i| (i * 7 % 13 % 2) as u32).collect();
    let data = grouped(&sectors);
    let plan = exdir_partition(&data, 4, 1, 1.0, 42).unwrap();

    let all: Vec<usize> = plan.assignments.iter().flatten().copied().collect();
    let unique: BTreeSet<usize> = all.iter().copied().collect();
    assert_eq!(all.len(), unique.len());
    assert_eq!(unique, (0..data.len()).collect());

    for group in [0u32, 1] {
        let eligible: Vec<usize> = (0..4).filter(|&k| plan.client_groups[k] == vec![group]).collect();
        assert_eq!(eligible.len(), 2);
        let members: Vec<usize> = (0..data.len()).filter(|&i| sectors[i] == group).collect();

        let gamma = Gamma::new(1.0, 1.0).unwrap();
        let mut r = rng::derive(42, Stream::Dirichlet, &[u64::from(group)]);
        let draws: Vec<f64> = (0..eligible.len()).map(|_| r.sample(gamma)).collect();
        let total: f64 = draws.iter().sum();

        let mut offset = 0;
        for (&k, g) in eligible.iter().zip(&draws) {
            let expected = g / total * members.len() as f64;
            let got = plan.assignments[k].len();
            assert!((got as f64 - expected).abs() <= 1.0, "client {k}: {got} vs {expected}");
            // contiguous temporal block of the group
            assert_eq!(plan.assignments[k], members[offset..offset + got]);
            offset += got;
        }
    }
    assert!(validate_partition(&plan, &data, true).is_valid());
}

#[test]
fn two_groups_two_clients_split_whole_groups() {
    let data = grouped(&[0, 1, 1, 0, 0, 1, 0]);
    let plan = exdir_partition(&data, 2, 1, 1.0, 5).unwrap();
    let mut got: Vec<Vec<usize>> = plan.assignments.clone();
    got.sort();
    assert_eq!(got, vec![vec![0, 3, 4, 6], vec![1, 2, 5]]);
}

fn setup() -> impl Strategy<Value = (Vec<u32>, usize, usize, f64, u64)> {
    (1u32..5, 1usize..8, 0.1f64..50.0, any::<u64>()).prop_flat_map(|(groups, clients, alpha, seed)| {
        (
            prop::collection::vec(0..groups, 40..200),
            Just(clients),
            1usize..=groups as usize,
            Just(alpha),
            Just(seed),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plans_are_valid_or_rejected((sectors, clients, c, alpha, seed) in setup()) {
        let data = grouped(&sectors);
        match exdir_partition(&data, clients, c.min(data.sectors().len()), alpha, seed) {
            Ok(plan) => {
                let full = clients * plan.labels_per_client >= data.sectors().len();
                let report = validate_partition(&plan, &data, full);
                prop_assert!(report.is_valid(), "{}", report.summary());
                let again = exdir_partition(&data, clients, plan.labels_per_client, alpha, seed).unwrap();
                prop_assert_eq!(again.assignments, plan.assignments);
            }
            Err(e) => prop_assert_eq!(e.exit_code(), 2),
        }
    }

    #[test]
    fn large_alpha_gives_equal_shares(n in 20usize..400, clients in 1usize..6, seed in any::<u64>()) {
        let data = grouped(&vec![0; n]);
        let plan = exdir_partition(&data, clients, 1, 1e6, seed).unwrap();
        let equal = n as f64 / clients as f64;
        for a in &plan.assignments {
            prop_assert!((a.len() as f64 - equal).abs() <= 1.0);
        }
    }
}
