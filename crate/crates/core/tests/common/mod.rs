//! Oracles shared by the property suites and the acceptance harness.
#![allow(dead_code)]

use std::collections::BTreeMap;

use collapse_core::diversity::VectorSet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Density-connectivity by brute force: core points joined by transitive
/// closure of the eps relation, each border point attached through its
/// smallest-labelled core neighbour, clusters named by their smallest member.
pub fn dbscan_oracle(set: &VectorSet, eps: f64, min_pts: usize) -> BTreeMap<String, Option<usize>> {
    let n = set.len();
    let v = set.vectors();
    let near = |i: usize, j: usize| euclid(&v[i], &v[j]) <= eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
        .collect();
    let mut comp: Vec<usize> = (0..n).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && near(i, j) && comp[i] != comp[j] {
                    let m = comp[i].min(comp[j]);
                    comp[i] = m;
                    comp[j] = m;
                    changed = true;
                }
            }
        }
    }
    let label = |i: usize| set.labels()[i].clone();
    let mut raw: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if core[i] {
            raw[i] = Some(comp[i]);
        } else {
            raw[i] = (0..n)
                .filter(|&j| core[j] && near(i, j))
                .min_by_key(|&j| label(j))
                .map(|j| comp[j]);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| label(i));
    let mut names = BTreeMap::new();
    for &i in &order {
        if let Some(c) = raw[i] {
            let next = names.len();
            names.entry(c).or_insert(next);
        }
    }
    (0..n)
        .map(|i| (label(i), raw[i].map(|c| names[&c])))
        .collect()
}

/// `n` labelled points `p00, p01, ...` uniform in `[0, 10)^dim`.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> VectorSet {
    VectorSet::new(
        (0..n)
            .map(|i| {
                (
                    format!("p{i:02}"),
                    (0..dim).map(|_| rng.random_range(0.0..10.0)).collect(),
                )
            })
            .collect(),
    )
    .unwrap()
}
