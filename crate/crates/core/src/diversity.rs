//! Output-diversity measures for a corpus of entity mentions: frequency
//! tables over a fixed reference list, Shannon and Pielou indices,
//! empirical representativeness scores, DBSCAN and nearest-reference entity
//! resolution over precomputed vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mention counts over a fixed reference list of entity labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyTable {
    reference: Vec<String>,
    index: BTreeMap<String, usize>,
    counts: Vec<u64>,
}

impl FrequencyTable {
    /// Empty table; reference labels must be unique and non-empty.
    pub fn new<S: AsRef<str>>(reference: &[S]) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::usage("reference list is empty"));
        }
        let mut index = BTreeMap::new();
        for (i, label) in reference.iter().enumerate() {
            let label = label.as_ref();
            if index.insert(label.to_string(), i).is_some() {
                return Err(Error::usage(format!("duplicate reference label `{label}`")));
            }
        }
        Ok(Self {
            reference: reference.iter().map(|s| s.as_ref().to_string()).collect(),
            index,
            counts: vec![0; reference.len()],
        })
    }

    pub fn from_counts<S: AsRef<str>>(
        reference: &[S],
        counts: &BTreeMap<String, u64>,
    ) -> Result<Self> {
        let mut table = Self::new(reference)?;
        for (label, &c) in counts {
            table.add(label, c)?;
        }
        Ok(table)
    }

    pub fn add(&mut self, label: &str, count: u64) -> Result<()> {
        let &i = self
            .index
            .get(label)
            .ok_or_else(|| Error::usage(format!("`{label}` is not in the reference list")))?;
        self.counts[i] += count;
        Ok(())
    }

    /// R, the number of reference entities.
    pub fn reference_size(&self) -> usize {
        self.reference.len()
    }

    pub fn reference(&self) -> &[String] {
        &self.reference
    }

    pub fn count(&self, label: &str) -> u64 {
        self.index.get(label).map_or(0, |&i| self.counts[i])
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(label, count)` pairs in reference order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.reference
            .iter()
            .map(String::as_str)
            .zip(self.counts.iter().copied())
    }

    /// Entities with a positive count, most frequent first; ties by
    /// reference order.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut rows: Vec<(usize, &str, u64)> = self
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| *c > 0)
            .map(|(i, (l, c))| (i, l, c))
            .collect();
        rows.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
        rows.into_iter().map(|(_, l, c)| (l, c)).collect()
    }

    /// Entrywise sum of two tables over the same reference list.
    pub fn merged(&self, other: &FrequencyTable) -> Result<FrequencyTable> {
        if self.reference != other.reference {
            return Err(Error::usage("tables have different reference lists"));
        }
        let mut out = self.clone();
        for (a, b) in out.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(out)
    }

    fn probabilities(&self) -> Result<Vec<f64>> {
        let total = self.total();
        if total == 0 {
            return Err(Error::usage("frequency table is empty"));
        }
        Ok(self
            .counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect())
    }
}

/// Counts resolved mentions; every label must be a reference label.
pub fn frequency_table<S: AsRef<str>, T: AsRef<str>>(
    mentions: &[S],
    reference: &[T],
) -> Result<FrequencyTable> {
    let mut table = FrequencyTable::new(reference)?;
    for m in mentions {
        table.add(m.as_ref(), 1)?;
    }
    Ok(table)
}

/// `H' = -sum p ln p` over entities with a positive count.
pub fn shannon_index(table: &FrequencyTable) -> Result<f64> {
    let p = table.probabilities()?;
    Ok(p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum())
}

/// `H' / ln R`.
pub fn pielou_evenness(h_prime: f64, r: usize) -> Result<f64> {
    if r < 2 {
        return Err(Error::usage(format!("evenness needs R >= 2, got {r}")));
    }
    let max = (r as f64).ln();
    if !(h_prime >= 0.0 && h_prime <= max + 1e-9) {
        return Err(Error::usage(format!(
            "Shannon index {h_prime} outside [0, ln {r}]"
        )));
    }
    Ok((h_prime / max).min(1.0))
}

/// Reference entities that never occur.
pub fn minimal_representativeness(table: &FrequencyTable) -> Vec<String> {
    table
        .iter()
        .filter(|(_, c)| *c == 0)
        .map(|(l, _)| l.to_string())
        .collect()
}

fn total_variation(p: &[f64], weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::usage("weights must be finite and >= 0"));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(Error::usage("weights sum to zero"));
    }
    let tv = 0.5
        * p.iter()
            .zip(weights)
            .map(|(pi, wi)| (pi - wi / sum).abs())
            .sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// Total-variation distance between observed proportions and the
/// weight-proportional target. Uniform weights give the strong uniform
/// check.
pub fn proportional_deviation(
    table: &FrequencyTable,
    weights: &BTreeMap<String, f64>,
) -> Result<f64> {
    let p = table.probabilities()?;
    let w = table
        .reference()
        .iter()
        .map(|l| {
            weights
                .get(l)
                .copied()
                .ok_or_else(|| Error::usage(format!("no weight for `{l}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    total_variation(&p, &w)
}

/// [`proportional_deviation`] against equal weights.
pub fn uniform_deviation(table: &FrequencyTable) -> Result<f64> {
    let p = table.probabilities()?;
    total_variation(&p, &vec![1.0; p.len()])
}

/// Entity-to-group assignment plus group weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    groups: BTreeMap<String, String>,
    weights: BTreeMap<String, f64>,
}

impl GroupPartition {
    pub fn new(groups: BTreeMap<String, String>, weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.values().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::usage("group weights must be finite and >= 0"));
        }
        if weights.values().sum::<f64>() <= 0.0 {
            return Err(Error::usage("group weights are all zero"));
        }
        if let Some((e, g)) = groups.iter().find(|(_, g)| !weights.contains_key(*g)) {
            return Err(Error::usage(format!(
                "entity `{e}` maps to group `{g}` with no weight"
            )));
        }
        Ok(Self { groups, weights })
    }

    pub fn group_of(&self, entity: &str) -> Option<&str> {
        self.groups.get(entity).map(String::as_str)
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }
}

/// Aggregates counts by group, then measures total variation against the
/// group weights.
pub fn group_proportional_deviation(
    table: &FrequencyTable,
    partition: &GroupPartition,
) -> Result<f64> {
    let total = table.total();
    if total == 0 {
        return Err(Error::usage("frequency table is empty"));
    }
    let mut by_group: BTreeMap<&str, u64> =
        partition.weights.keys().map(|g| (g.as_str(), 0)).collect();
    for (label, count) in table.iter().filter(|(_, c)| *c > 0) {
        let g = partition
            .group_of(label)
            .ok_or_else(|| Error::usage(format!("entity `{label}` has no group")))?;
        *by_group
            .get_mut(g)
            .expect("groups validated against weights") += count;
    }
    let p: Vec<f64> = by_group
        .values()
        .map(|&c| c as f64 / total as f64)
        .collect();
    let w: Vec<f64> = partition.weights.values().copied().collect();
    total_variation(&p, &w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
    Cosine,
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

/// Labelled vectors of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSet {
    dim: usize,
    labels: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl VectorSet {
    pub fn new(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |(_, v)| v.len());
        let mut seen = BTreeSet::new();
        let mut labels = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len());
        for (label, v) in rows {
            if v.len() != dim {
                return Err(Error::usage(format!(
                    "`{label}` has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::usage(format!(
                    "`{label}` has a non-finite component"
                )));
            }
            if !seen.insert(label.clone()) {
                return Err(Error::usage(format!("duplicate vector label `{label}`")));
            }
            labels.push(label);
            vectors.push(v);
        }
        Ok(Self {
            dim,
            labels,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.vectors[i].as_slice())
    }

    /// Subset with the given labels, in the given order.
    pub fn select<S: AsRef<str>>(&self, labels: &[S]) -> Result<VectorSet> {
        let pos: BTreeMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut rows = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            let &i = pos
                .get(l)
                .ok_or_else(|| Error::usage(format!("no vector for `{l}`")))?;
            rows.push((l.to_string(), self.vectors[i].clone()));
        }
        VectorSet::new(rows)
    }
}

/// DBSCAN over a vector set. A point is core when at least `min_pts` points,
/// itself included, lie within `eps`. Border points reachable from several
/// clusters join the one holding the lexicographically smallest core label.
/// Cluster ids are numbered by each cluster's smallest member label, so the
/// result does not depend on input order. `None` marks noise.
pub fn dbscan(
    set: &VectorSet,
    eps: f64,
    min_pts: usize,
    metric: Metric,
) -> Result<BTreeMap<String, Option<usize>>> {
    if set.is_empty() {
        return Err(Error::usage("no vectors to cluster"));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::usage(format!("eps must be > 0, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::usage("min_pts must be >= 1"));
    }
    // Work in label order so every tie-break below is order-free.
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.labels[a].cmp(&set.labels[b]));
    let n = order.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| metric.distance(&set.vectors[order[i]], &set.vectors[order[j]]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut cluster = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || cluster[start].is_some() {
            continue;
        }
        cluster[start] = Some(next);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if core[q] && cluster[q].is_none() {
                    cluster[q] = Some(next);
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    // Clusters were opened in order of their smallest core label.
    for i in 0..n {
        if !core[i] {
            cluster[i] = neighbours[i]
                .iter()
                .filter(|&&j| core[j])
                .filter_map(|&j| cluster[j])
                .min();
        }
    }
    // Renumber by smallest member label (border points included).
    let mut rename = BTreeMap::new();
    for c in cluster.iter().flatten() {
        let len = rename.len();
        rename.entry(*c).or_insert(len);
    }
    Ok((0..n)
        .map(|i| (set.labels[order[i]].clone(), cluster[i].map(|c| rename[&c])))
        .collect())
}

/// Maps each mention to its nearest reference label if within `eps`, else
/// `None` (discarded). Equidistant references resolve to the smallest label.
pub fn resolve_entities(
    mentions: &VectorSet,
    reference: &VectorSet,
    eps: f64,
    metric: Metric,
) -> Result<BTreeMap<String, Option<String>>> {
    if !mentions.is_empty() && !reference.is_empty() && mentions.dim != reference.dim {
        return Err(Error::usage(format!(
            "mention vectors have dimension {}, reference vectors {}",
            mentions.dim, reference.dim
        )));
    }
    let mut out = BTreeMap::new();
    for (label, v) in mentions.labels.iter().zip(&mentions.vectors) {
        let mut best: Option<(f64, &String)> = None;
        for (r, rv) in reference.labels.iter().zip(&reference.vectors) {
            let d = metric.distance(v, rv);
            let better = match best {
                None => true,
                Some((bd, bl)) => d < bd || (d == bd && r < bl),
            };
            if better {
                best = Some((d, r));
            }
        }
        let hit = best.filter(|(d, _)| *d <= eps).map(|(_, r)| r.clone());
        out.insert(label.clone(), hit);
    }
    Ok(out)
}

/// One row of a mentions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub mention: String,
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::parse(path, line, reason)
}

fn require_columns(path: &Path, headers: &csv::StringRecord, cols: &[&str]) -> Result<()> {
    for c in cols {
        if !headers.iter().any(|h| h == *c) {
            return Err(parse_err(path, 1, format!("missing column `{c}`")));
        }
    }
    Ok(())
}

/// Deserializes every row; errors carry the 1-based file line.
fn read_rows<T: serde::de::DeserializeOwned>(path: &Path, cols: &[&str]) -> Result<Vec<T>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    require_columns(path, &headers, cols)?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| parse_err(path, i + 2, e.to_string())))
        .collect()
}

/// Columns `mention` and optional `prompt`, `model`. Empty optional cells
/// read as absent.
pub fn read_mentions(path: &Path) -> Result<Vec<Mention>> {
    let rows: Vec<Mention> = read_rows(path, &["mention"])?;
    Ok(rows
        .into_iter()
        .map(|m| Mention {
            prompt: m.prompt.filter(|s| !s.is_empty()),
            model: m.model.filter(|s| !s.is_empty()),
            ..m
        })
        .collect())
}

/// Column `label`.
pub fn read_reference(path: &Path) -> Result<Vec<String>> {
    #[derive(Deserialize)]
    struct Row {
        label: String,
    }
    let rows: Vec<Row> = read_rows(path, &["label"])?;
    Ok(rows.into_iter().map(|r| r.label).collect())
}

/// Columns `label, v0, v1, ...`.
pub fn read_vectors(path: &Path) -> Result<VectorSet> {
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    require_columns(path, &headers, &["label"])?;
    let label_col = headers.iter().position(|h| h == "label").expect("checked");
    let mut dims: Vec<(usize, usize)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(k) = h.strip_prefix('v').and_then(|k| k.parse::<usize>().ok()) {
            dims.push((k, i));
        }
    }
    dims.sort();
    if dims.is_empty() || dims.iter().enumerate().any(|(expect, (k, _))| *k != expect) {
        return Err(parse_err(path, 1, "vector columns must be v0..v{d-1}"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        let label = rec.get(label_col).unwrap_or_default().to_string();
        let v = dims
            .iter()
            .map(|&(k, col)| {
                rec.get(col)
                    .unwrap_or_default()
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("v{k} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((label, v));
    }
    VectorSet::new(rows).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Two columns: a key column named `key_col` and `weight`.
pub fn read_weights(path: &Path, key_col: &str) -> Result<BTreeMap<String, f64>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    require_columns(path, &headers, &[key_col, "weight"])?;
    let k = headers.iter().position(|h| h == key_col).expect("checked");
    let w = headers.iter().position(|h| h == "weight").expect("checked");
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        let weight: f64 = rec
            .get(w)
            .unwrap_or_default()
            .parse()
            .map_err(|_| parse_err(path, line, "weight is not a number"))?;
        if out
            .insert(rec.get(k).unwrap_or_default().to_string(), weight)
            .is_some()
        {
            return Err(parse_err(path, line, format!("duplicate {key_col}")));
        }
    }
    Ok(out)
}

/// Columns `label, group`.
pub fn read_group_map(path: &Path) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        label: String,
        group: String,
    }
    let rows: Vec<Row> = read_rows(path, &["label", "group"])?;
    Ok(rows.into_iter().map(|r| (r.label, r.group)).collect())
}
