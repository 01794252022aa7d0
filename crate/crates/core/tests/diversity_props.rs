use std::collections::BTreeMap;

use collapse_core::diversity::{
    dbscan, frequency_table, pielou_evenness, proportional_deviation, resolve_entities,
    shannon_index, uniform_deviation, FrequencyTable, Metric, VectorSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{dbscan_oracle, euclid, random_points};

fn labels(r: usize) -> Vec<String> {
    (0..r).map(|i| format!("e{i:03}")).collect()
}

fn table(counts: &[u64]) -> FrequencyTable {
    let reference = labels(counts.len());
    let map = reference
        .iter()
        .cloned()
        .zip(counts.iter().copied())
        .collect();
    FrequencyTable::from_counts(&reference, &map).unwrap()
}

#[test]
fn pielou_reproduces_reported_rounding() {
    assert_eq!(
        format!("{:.2}", pielou_evenness(4.01, 2693).unwrap()),
        "0.51"
    );
    assert_eq!(
        format!("{:.2}", pielou_evenness(7.02, 2693).unwrap()),
        "0.89"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn shannon_lies_in_zero_ln_r(counts in prop::collection::vec(0u64..50, 2..40)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let t = table(&counts);
        let h = shannon_index(&t).unwrap();
        let r = counts.len();
        prop_assert!(h >= 0.0 && h <= (r as f64).ln() + 1e-12);
        let j = pielou_evenness(h, r).unwrap();
        prop_assert!((0.0..=1.0).contains(&j));
        let uniform = counts.iter().all(|&c| c == counts[0]);
        prop_assert_eq!(uniform, (j - 1.0).abs() < 1e-12, "j = {}", j);
    }

    #[test]
    fn uniform_tables_have_full_evenness(r in 2usize..200, c in 1u64..20) {
        let t = table(&vec![c; r]);
        let h = shannon_index(&t).unwrap();
        prop_assert!((h - (r as f64).ln()).abs() < 1e-12);
        prop_assert!((pielou_evenness(h, r).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(uniform_deviation(&t).unwrap() < 1e-12);
    }

    #[test]
    fn singleton_has_zero_entropy(r in 2usize..100, at in 0usize..100, c in 1u64..1000) {
        let mut counts = vec![0; r];
        counts[at % r] = c;
        prop_assert_eq!(shannon_index(&table(&counts)).unwrap(), 0.0);
    }

    #[test]
    fn tables_add_over_concatenation(a in prop::collection::vec(0usize..8, 0..30), b in prop::collection::vec(0usize..8, 0..30)) {
        let reference = labels(8);
        let ma: Vec<&str> = a.iter().map(|&i| reference[i].as_str()).collect();
        let mb: Vec<&str> = b.iter().map(|&i| reference[i].as_str()).collect();
        let joined: Vec<&str> = ma.iter().chain(&mb).copied().collect();
        let ta = frequency_table(&ma, &reference).unwrap();
        let tb = frequency_table(&mb, &reference).unwrap();
        prop_assert_eq!(ta.merged(&tb).unwrap(), frequency_table(&joined, &reference).unwrap());
    }

    #[test]
    fn proportional_deviation_ignores_weight_scale(
        counts in prop::collection::vec(0u64..30, 2..20),
        raw in prop::collection::vec(0.01f64..5.0, 20),
        k in 0.001f64..1000.0,
    ) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let t = table(&counts);
        let w: BTreeMap<String, f64> = t.reference().iter().cloned().zip(raw.iter().copied()).collect();
        let scaled: BTreeMap<String, f64> = w.iter().map(|(l, v)| (l.clone(), v * k)).collect();
        let a = proportional_deviation(&t, &w).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - proportional_deviation(&t, &scaled).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn dbscan_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let n = rng.random_range(1..=25);
        let dim = rng.random_range(1..=3);
        let set = random_points(&mut rng, n, dim);
        let eps = rng.random_range(0.5..4.0);
        let min_pts = rng.random_range(1..=5);
        let got = dbscan(&set, eps, min_pts, Metric::Euclidean).unwrap();
        assert_eq!(got, dbscan_oracle(&set, eps, min_pts), "trial {trial}");
    }
}

#[test]
fn dbscan_ignores_input_order() {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let set = random_points(&mut rng, 20, 2);
        let mut rows: Vec<(String, Vec<f64>)> = set
            .labels()
            .iter()
            .cloned()
            .zip(set.vectors().iter().cloned())
            .collect();
        rows.shuffle(&mut rng);
        let shuffled = VectorSet::new(rows).unwrap();
        assert_eq!(
            dbscan(&set, 2.0, 3, Metric::Euclidean).unwrap(),
            dbscan(&shuffled, 2.0, 3, Metric::Euclidean).unwrap()
        );
    }
}

#[test]
fn resolution_matches_nearest_neighbour_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let mentions = random_points(&mut rng, 15, 2);
        let reference = VectorSet::new(
            (0..8)
                .map(|i| {
                    (
                        format!("r{i}"),
                        vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)],
                    )
                })
                .collect(),
        )
        .unwrap();
        let eps = rng.random_range(0.5..3.0);
        let got = resolve_entities(&mentions, &reference, eps, Metric::Euclidean).unwrap();
        for (label, v) in mentions.labels().iter().zip(mentions.vectors()) {
            let best = reference
                .labels()
                .iter()
                .zip(reference.vectors())
                .map(|(r, rv)| (euclid(v, rv), r))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)))
                .unwrap();
            let want = (best.0 <= eps).then(|| best.1.clone());
            assert_eq!(got[label], want);
        }
    }
}
