mod common;

use std::collections::HashMap;

use emblens_core::partition_metrics::{
    adjusted_mutual_information, contingency, expected_mutual_information, mutual_information,
    partition_entropy,
};
use emblens_core::Partition;
use proptest::prelude::*;

fn part(labels: &[usize]) -> Partition {
    Partition::from_labels(labels.to_vec())
}

fn sorted_sizes(labels: &[usize]) -> Vec<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut v: Vec<usize> = counts.into_values().collect();
    v.sort_unstable();
    v
}

#[test]
fn emi_matches_enumeration_for_small_partitions() {
    // every pair over n <= 6 with at most 3 labels; n = 7 is covered by the
    // acceptance run
    for n in 1..=6 {
        let parts = common::set_partitions(n, 3);
        let mut memo: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
        for p in &parts {
            for q in &parts {
                let key = (sorted_sizes(p), sorted_sizes(q));
                let oracle = *memo.entry(key).or_insert_with(|| common::emi_enumeration(p, q));
                let t = contingency(&part(p), &part(q)).unwrap();
                let got = expected_mutual_information(&t);
                assert!((got - oracle).abs() < 1e-9, "n={n} p={p:?} q={q:?}: {got} vs {oracle}");
                let mi = mutual_information(&t);
                assert!((mi - common::mi_direct(p, q)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn entropy_matches_direct_count() {
    for p in common::set_partitions(6, 4) {
        assert!((partition_entropy(&part(&p)) - common::entropy_direct(&p)).abs() < 1e-12);
    }
}

fn labels_strategy(max_n: usize, max_k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(0..max_k, n),
            prop::collection::vec(0..max_k, n),
        )
    })
}

fn relabel(labels: &[usize], shift: usize, k: usize) -> Vec<usize> {
    labels.iter().map(|&l| (l * 7 + shift) % k + k).collect()
}

proptest! {
    #[test]
    fn symmetric_in_the_two_partitions((p, q) in labels_strategy(60, 6)) {
        let (pp, qq) = (part(&p), part(&q));
        let t = contingency(&pp, &qq).unwrap();
        let tt = contingency(&qq, &pp).unwrap();
        prop_assert!((mutual_information(&t) - mutual_information(&tt)).abs() < 1e-12);
        prop_assert!((expected_mutual_information(&t) - expected_mutual_information(&tt)).abs() < 1e-12);
        let a = adjusted_mutual_information(&pp, &qq).unwrap();
        let b = adjusted_mutual_information(&qq, &pp).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_relabeling((p, q) in labels_strategy(60, 6), shift in 0usize..6) {
        // l -> 7l + shift mod 6 is a bijection on 0..6; the offset leaves unused labels
        let p2 = relabel(&p, shift, 6);
        let q2 = relabel(&q, shift + 1, 6);
        let t = contingency(&part(&p), &part(&q)).unwrap();
        let t2 = contingency(&part(&p2), &part(&q2)).unwrap();
        prop_assert!((mutual_information(&t) - mutual_information(&t2)).abs() < 1e-12);
        prop_assert!((expected_mutual_information(&t) - expected_mutual_information(&t2)).abs() < 1e-12);
        let a = adjusted_mutual_information(&part(&p), &part(&q)).unwrap();
        let b = adjusted_mutual_information(&part(&p2), &part(&q2)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn information_bounds((p, q) in labels_strategy(80, 8)) {
        let (pp, qq) = (part(&p), part(&q));
        let i = mutual_information(&contingency(&pp, &qq).unwrap());
        prop_assert!(i >= 0.0);
        prop_assert!(i <= partition_entropy(&pp).min(partition_entropy(&qq)) + 1e-12);
        let ami = adjusted_mutual_information(&pp, &qq).unwrap();
        prop_assert!(ami <= 1.0 + 1e-12);
    }

    #[test]
    fn self_agreement_is_one(p in prop::collection::vec(0usize..5, 2..80)) {
        let pp = part(&p);
        prop_assert!((adjusted_mutual_information(&pp, &pp).unwrap() - 1.0).abs() < 1e-12);
    }
}
