use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use collapse_core::diversity::{
    dbscan, group_proportional_deviation, minimal_representativeness, pielou_evenness,
    proportional_deviation, read_group_map, read_mentions, read_reference, read_vectors,
    read_weights, resolve_entities, shannon_index, uniform_deviation, FrequencyTable,
    GroupPartition, Mention, Metric,
};
use collapse_core::io::{create, save_json};
use collapse_core::{fmt_num, Error};
use serde::{Deserialize, Serialize};

use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Euclidean,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DiversityArgs {
    /// Columns `mention` and optional `prompt`, `model`.
    #[arg(long)]
    pub mentions: PathBuf,
    /// Column `label`: the canonical entity list (R is its length).
    #[arg(long)]
    pub reference: PathBuf,
    /// Columns `label, v0..`: vectors for mentions and reference labels.
    /// Without it mentions must match reference labels exactly.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 2)]
    pub min_pts: usize,
    #[arg(long, value_enum, default_value = "euclidean")]
    pub metric: MetricArg,
    /// Columns `label, weight` for the proportional check.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Columns `label, group`; needs --group-weights.
    #[arg(long, requires = "group_weights")]
    pub groups: Option<PathBuf>,
    /// Columns `group, weight`.
    #[arg(long, requires = "groups")]
    pub group_weights: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

pub const INDICES_CSV: &str = "indices.csv";
pub const RESOLUTION_CSV: &str = "resolution.csv";
pub const REPRESENTATIVENESS_CSV: &str = "representativeness.csv";
pub const MISSING_CSV: &str = "missing_entities.csv";
pub const CLUSTERS_CSV: &str = "clusters.csv";
pub const METADATA_JSON: &str = "diversity_metadata.json";

type Key = (Option<String>, Option<String>);
type Resolution = BTreeMap<String, Option<String>>;
type Clusters = BTreeMap<String, Option<usize>>;

fn cell(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("")
}

/// File-name fragment: anything outside `[A-Za-z0-9._-]` becomes `_`.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn frequency_file(prompt: &Option<String>) -> String {
    match prompt {
        Some(p) => format!("frequency_{}.csv", slug(p)),
        None => "frequency.csv".to_string(),
    }
}

/// Mention string to reference label, or `None` when discarded.
fn resolve(
    mentions: &[Mention],
    reference: &[String],
    args: &DiversityArgs,
) -> Result<(Resolution, Option<Clusters>)> {
    let distinct: BTreeSet<&str> = mentions.iter().map(|m| m.mention.as_str()).collect();
    let Some(path) = &args.vectors else {
        let known: BTreeSet<&str> = reference.iter().map(String::as_str).collect();
        let map = distinct
            .into_iter()
            .map(|m| (m.to_string(), known.contains(m).then(|| m.to_string())))
            .collect();
        return Ok((map, None));
    };
    let vectors = read_vectors(crate::input(path)?)?;
    let wanted: Vec<&str> = distinct.into_iter().collect();
    let mention_set = vectors
        .select(&wanted)
        .with_context(|| format!("mention vectors in {}", path.display()))?;
    let reference_set = vectors
        .select(reference)
        .with_context(|| format!("reference vectors in {}", path.display()))?;
    let metric = Metric::from(args.metric);
    let map = resolve_entities(&mention_set, &reference_set, args.eps, metric)?;
    let clusters = dbscan(&mention_set, args.eps, args.min_pts, metric)?;
    Ok((map, Some(clusters)))
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn run(args: DiversityArgs) -> Result<Manifest> {
    if !(args.eps.is_finite() && args.eps > 0.0) {
        return Err(Error::usage(format!("--eps must be > 0, got {}", args.eps)).into());
    }
    let mentions = read_mentions(crate::input(&args.mentions)?)?;
    if mentions.is_empty() {
        return Err(Error::usage(format!("{}: no mentions", args.mentions.display())).into());
    }
    let reference = read_reference(crate::input(&args.reference)?)?;
    let empty = FrequencyTable::new(&reference)?;
    let r = empty.reference_size();
    let weights = args
        .weights
        .as_deref()
        .map(|p| read_weights(crate::input(p)?, "label").map_err(anyhow::Error::from))
        .transpose()?;
    let partition = match (&args.groups, &args.group_weights) {
        (Some(g), Some(w)) => Some(GroupPartition::new(
            read_group_map(crate::input(g)?)?,
            read_weights(crate::input(w)?, "group")?,
        )?),
        _ => None,
    };

    let (resolved, clusters) = resolve(&mentions, &reference, &args)?;

    let mut tables: BTreeMap<Key, FrequencyTable> = BTreeMap::new();
    let mut totals: BTreeMap<Key, usize> = BTreeMap::new();
    for m in &mentions {
        let key = (m.model.clone(), m.prompt.clone());
        *totals.entry(key.clone()).or_default() += 1;
        let table = tables.entry(key).or_insert_with(|| empty.clone());
        if let Some(label) = &resolved[&m.mention] {
            table.add(label, 1)?;
        }
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut written = Vec::new();

    let path = args.out.join(INDICES_CSV);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record([
        "model",
        "prompt",
        "n_mentions",
        "n_resolved",
        "n_entities",
        "shannon",
        "pielou",
        "shannon_exact",
        "pielou_exact",
    ])?;
    for ((model, prompt), t) in &tables {
        let (h, j) = if t.total() > 0 {
            let h = shannon_index(t)?;
            let j = if r >= 2 {
                Some(pielou_evenness(h, r)?)
            } else {
                None
            };
            (Some(h), j)
        } else {
            (None, None)
        };
        let entities = t.counts().iter().filter(|&&c| c > 0).count();
        w.write_record([
            cell(model).to_string(),
            cell(prompt).to_string(),
            totals[&(model.clone(), prompt.clone())].to_string(),
            t.total().to_string(),
            entities.to_string(),
            h.map(|v| format!("{v:.2}")).unwrap_or_default(),
            j.map(|v| format!("{v:.2}")).unwrap_or_default(),
            opt_num(h),
            opt_num(j),
        ])?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    written.push(path);

    // Frequencies per prompt, pooled over models, sorted by rank.
    let mut by_prompt: BTreeMap<Option<String>, FrequencyTable> = BTreeMap::new();
    for ((_, prompt), t) in &tables {
        let pooled = match by_prompt.remove(prompt) {
            Some(acc) => acc.merged(t)?,
            None => t.clone(),
        };
        by_prompt.insert(prompt.clone(), pooled);
    }
    let mut names = BTreeSet::new();
    for (prompt, t) in &by_prompt {
        let name = frequency_file(prompt);
        if !names.insert(name.clone()) {
            return Err(Error::usage(format!("prompts map to the same file name {name}")).into());
        }
        let path = args.out.join(name);
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["rank", "label", "count", "proportion"])?;
        let total = t.total();
        for (i, (label, count)) in t.ranked().into_iter().filter(|(_, c)| *c > 0).enumerate() {
            w.write_record([
                (i + 1).to_string(),
                label.to_string(),
                count.to_string(),
                fmt_num(count as f64 / total as f64),
            ])?;
        }
        w.flush()
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }

    let path = args.out.join(RESOLUTION_CSV);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["mention", "resolved"])?;
    for (m, hit) in &resolved {
        w.write_record([m.as_str(), cell(hit)])?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    written.push(path);

    // Representativeness over each (model, prompt) and the pooled corpus.
    let mut scopes: Vec<(String, String, FrequencyTable)> = tables
        .iter()
        .map(|((m, p), t)| (cell(m).to_string(), cell(p).to_string(), t.clone()))
        .collect();
    let all = tables
        .values()
        .try_fold(empty.clone(), |acc, t| acc.merged(t))?;
    scopes.push(("*".into(), "*".into(), all));

    let rep_path = args.out.join(REPRESENTATIVENESS_CSV);
    let miss_path = args.out.join(MISSING_CSV);
    let mut rep = csv::Writer::from_writer(create(&rep_path)?);
    let mut miss = csv::Writer::from_writer(create(&miss_path)?);
    rep.write_record([
        "model",
        "prompt",
        "n_resolved",
        "n_missing",
        "uniform_deviation",
        "proportional_deviation",
        "group_deviation",
    ])?;
    miss.write_record(["model", "prompt", "label"])?;
    for (model, prompt, t) in &scopes {
        let missing = minimal_representativeness(t);
        let filled = t.total() > 0;
        let uniform = filled.then(|| uniform_deviation(t)).transpose()?;
        let proportional = match &weights {
            Some(wt) if filled => Some(proportional_deviation(t, wt)?),
            _ => None,
        };
        let group = match &partition {
            Some(gp) if filled => Some(group_proportional_deviation(t, gp)?),
            _ => None,
        };
        rep.write_record([
            model.clone(),
            prompt.clone(),
            t.total().to_string(),
            missing.len().to_string(),
            opt_num(uniform),
            opt_num(proportional),
            opt_num(group),
        ])?;
        for label in &missing {
            miss.write_record([model.as_str(), prompt.as_str(), label.as_str()])?;
        }
    }
    rep.flush()
        .with_context(|| format!("writing {}", rep_path.display()))?;
    miss.flush()
        .with_context(|| format!("writing {}", miss_path.display()))?;
    written.push(rep_path);
    written.push(miss_path);

    if let Some(clusters) = &clusters {
        let path = args.out.join(CLUSTERS_CSV);
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["label", "cluster"])?;
        for (label, c) in clusters {
            let id = c.map_or_else(|| "noise".to_string(), |c| c.to_string());
            w.write_record([label.as_str(), id.as_str()])?;
        }
        w.flush()
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }

    let meta = args.out.join(METADATA_JSON);
    let mut outputs: Vec<String> = written
        .iter()
        .map(|p| {
            p.file_name()
                .expect("file path")
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    outputs.push(METADATA_JSON.into());
    save_json(
        &meta,
        &DiversityMetadata {
            tool: crate::TOOL,
            version: crate::VERSION,
            command: "diversity",
            args: &args,
            reference_size: r,
            outputs,
        },
    )?;
    written.push(meta);
    Ok(Manifest::new("diversity", &args.out, None, written))
}

#[derive(Serialize)]
struct DiversityMetadata<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    args: &'a DiversityArgs,
    reference_size: usize,
    outputs: Vec<String>,
}
