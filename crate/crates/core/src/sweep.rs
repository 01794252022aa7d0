//! Parameter grids with replications, run in parallel.
//!
//! Every run's seed is a hash of the base seed, the run's coordinate values
//! and its replication index, so results do not depend on scheduling, on the
//! order values are listed in, or on which other values share the grid.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{eval_grid, GriddedPdf};
use crate::distributions::TrueDistribution;
use crate::error::{Error, Result};
use crate::fmt_num;
use crate::io::{create, save_json};
use crate::simulation::{run_simulation, SimConfig};
use crate::stats::{mean, std_dev};

pub const AXES: [&str; 5] = ["delta", "eta", "sigma_tr", "generation_period", "df"];

pub const RUNS_CSV: &str = "runs.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const SWEEP_METADATA_JSON: &str = "sweep_metadata.json";
pub const TRUE_PDF_CSV: &str = "true_pdf.csv";

/// Values swept per axis; an empty list keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Axes {
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
    pub sigma_tr: Vec<f64>,
    /// `null` entries mean no generational turnover.
    pub generation_period: Vec<Option<usize>>,
    pub df: Vec<f64>,
}

impl Axes {
    fn listed(&self, axis: &str) -> bool {
        match axis {
            "delta" => !self.delta.is_empty(),
            "eta" => !self.eta.is_empty(),
            "sigma_tr" => !self.sigma_tr.is_empty(),
            "generation_period" => !self.generation_period.is_empty(),
            "df" => !self.df.is_empty(),
            _ => false,
        }
    }
}

fn one_replication() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub axes: Axes,
    #[serde(default = "one_replication")]
    pub replications: usize,
    #[serde(default)]
    pub base: SimConfig,
    #[serde(default)]
    pub base_seed: u64,
    /// Axes for the aggregated table; defaults to the axes listed in `axes`.
    #[serde(default)]
    pub group_by: Option<Vec<String>>,
    /// Also write each cell's mean final public pdf and the true pdf.
    #[serde(default)]
    pub save_final_pdfs: bool,
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub delta: f64,
    pub eta: f64,
    pub sigma_tr: f64,
    pub generation_period: Option<usize>,
    pub df: f64,
}

/// A coordinate value, for grouping and sorting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AxisValue {
    Real(f64),
    Period(Option<usize>),
}

impl AxisValue {
    fn cmp_total(&self, other: &Self) -> Ordering {
        match (self, other) {
            (AxisValue::Real(a), AxisValue::Real(b)) => a.total_cmp(b),
            (AxisValue::Period(a), AxisValue::Period(b)) => a.cmp(b),
            (AxisValue::Real(_), AxisValue::Period(_)) => Ordering::Less,
            (AxisValue::Period(_), AxisValue::Real(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Real(v) => f.write_str(&fmt_num(*v)),
            AxisValue::Period(Some(p)) => write!(f, "{p}"),
            AxisValue::Period(None) => f.write_str("none"),
        }
    }
}

impl Cell {
    pub fn get(&self, axis: &str) -> Result<AxisValue> {
        Ok(match axis {
            "delta" => AxisValue::Real(self.delta),
            "eta" => AxisValue::Real(self.eta),
            "sigma_tr" => AxisValue::Real(self.sigma_tr),
            "generation_period" => AxisValue::Period(self.generation_period),
            "df" => AxisValue::Real(self.df),
            _ => {
                return Err(Error::usage(format!(
                    "unknown axis `{axis}` (expected one of {})",
                    AXES.join(", ")
                )))
            }
        })
    }

    pub fn apply(&self, base: &SimConfig) -> SimConfig {
        SimConfig {
            delta: self.delta,
            eta: self.eta,
            sigma_tr: self.sigma_tr,
            generation_period: self.generation_period,
            df: self.df,
            ..base.clone()
        }
    }

    fn words(&self) -> [u64; 5] {
        [
            self.delta.to_bits(),
            self.eta.to_bits(),
            self.sigma_tr.to_bits(),
            self.generation_period.map_or(u64::MAX, |p| p as u64),
            self.df.to_bits(),
        ]
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one run; depends only on its coordinate values.
pub fn run_seed(base_seed: u64, cell: &Cell, replication: usize) -> u64 {
    let mut h = splitmix64(base_seed);
    for w in cell.words().into_iter().chain([replication as u64]) {
        h = splitmix64(h ^ w);
    }
    h
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        self.base.validate()?;
        for cell in self.cells() {
            cell.apply(&self.base).validate()?;
        }
        for axis in self.group_axes() {
            if !AXES.contains(&axis.as_str()) {
                return Err(Error::usage(format!("unknown axis `{axis}` in group_by")));
            }
        }
        Ok(())
    }

    /// Cartesian product, in the listed value order.
    pub fn cells(&self) -> Vec<Cell> {
        let base = &self.base;
        let or = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let periods = if self.axes.generation_period.is_empty() {
            vec![base.generation_period]
        } else {
            self.axes.generation_period.clone()
        };
        let mut cells = Vec::new();
        for &delta in &or(&self.axes.delta, base.delta) {
            for &eta in &or(&self.axes.eta, base.eta) {
                for &sigma_tr in &or(&self.axes.sigma_tr, base.sigma_tr) {
                    for &generation_period in &periods {
                        for &df in &or(&self.axes.df, base.df) {
                            cells.push(Cell {
                                delta,
                                eta,
                                sigma_tr,
                                generation_period,
                                df,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn total_runs(&self) -> usize {
        self.cells().len() * self.replications
    }

    pub fn group_axes(&self) -> Vec<String> {
        match &self.group_by {
            Some(g) => g.clone(),
            None => {
                let listed: Vec<String> = AXES
                    .iter()
                    .filter(|a| self.axes.listed(a))
                    .map(|a| a.to_string())
                    .collect();
                if listed.is_empty() {
                    AXES.iter().map(|a| a.to_string()).collect()
                } else {
                    listed
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed(String),
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Ok => f.write_str("ok"),
            RunStatus::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub cell: Cell,
    pub replication: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub initial_hellinger: Option<f64>,
    pub final_hellinger: Option<f64>,
    pub final_variance: Option<f64>,
    pub final_public: Option<GriddedPdf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: SweepGrid,
    /// Cell-major, replications in order.
    pub runs: Vec<RunOutcome>,
}

fn execute(grid: &SweepGrid, cell: Cell, replication: usize) -> RunOutcome {
    let seed = run_seed(grid.base_seed, &cell, replication);
    let config = SimConfig {
        seed,
        ..cell.apply(&grid.base)
    };
    let outcome = std::panic::catch_unwind(|| run_simulation(&config));
    let mut out = RunOutcome {
        cell,
        replication,
        seed,
        status: RunStatus::Ok,
        initial_hellinger: None,
        final_hellinger: None,
        final_variance: None,
        final_public: None,
    };
    match outcome {
        Ok(Ok(r)) => {
            out.initial_hellinger = Some(r.initial_hellinger);
            out.final_hellinger = Some(r.final_hellinger);
            out.final_variance = Some(r.final_variance());
            if grid.save_final_pdfs {
                out.final_public = Some(r.final_public);
            }
        }
        Ok(Err(e)) => out.status = RunStatus::Failed(e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            out.status = RunStatus::Failed(msg);
        }
    }
    out
}

/// Runs every (cell, replication) pair on `workers` threads (`0` lets
/// rayon decide). Failed runs are recorded, not propagated.
pub fn run_sweep(grid: &SweepGrid, workers: usize) -> Result<SweepResult> {
    grid.validate()?;
    let jobs: Vec<(Cell, usize)> = grid
        .cells()
        .into_iter()
        .flat_map(|c| (0..grid.replications).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
    let runs = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, rep)| execute(grid, cell, rep))
            .collect()
    });
    Ok(SweepResult {
        grid: grid.clone(),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub keys: Vec<(String, AxisValue)>,
    pub mean_hellinger: f64,
    pub std_hellinger: f64,
    pub mean_variance: f64,
    /// Successful runs.
    pub n: usize,
    pub n_failed: usize,
}

/// Groups successful runs by the named axes; rows sorted by axis values.
pub fn aggregate<S: AsRef<str>>(result: &SweepResult, group_by: &[S]) -> Result<Vec<AggregateRow>> {
    let axes: Vec<&str> = group_by.iter().map(|s| s.as_ref()).collect();
    let mut groups: Vec<(Vec<AxisValue>, Vec<&RunOutcome>)> = Vec::new();
    for run in &result.runs {
        let key = axes
            .iter()
            .map(|a| run.cell.get(a))
            .collect::<Result<Vec<_>>>()?;
        match groups.iter_mut().find(|(k, _)| same_key(k, &key)) {
            Some((_, members)) => members.push(run),
            None => groups.push((key, vec![run])),
        }
    }
    if axes.is_empty() && groups.is_empty() {
        groups.push((Vec::new(), Vec::new()));
    }
    groups.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.cmp_total(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    Ok(groups
        .into_iter()
        .map(|(key, members)| {
            let h: Vec<f64> = members.iter().filter_map(|r| r.final_hellinger).collect();
            let v: Vec<f64> = members.iter().filter_map(|r| r.final_variance).collect();
            AggregateRow {
                keys: axes.iter().map(|a| a.to_string()).zip(key).collect(),
                mean_hellinger: mean(&h),
                std_hellinger: std_dev(&h),
                mean_variance: mean(&v),
                n: h.len(),
                n_failed: members.len() - h.len(),
            }
        })
        .collect())
}

fn same_key(a: &[AxisValue], b: &[AxisValue]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.cmp_total(y).is_eq())
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn write_runs_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = AXES.to_vec();
    header.extend([
        "replication",
        "seed",
        "status",
        "initial_hellinger",
        "final_hellinger",
        "final_variance",
    ]);
    w.write_record(&header)?;
    for r in &result.runs {
        let mut row: Vec<String> = AXES
            .iter()
            .map(|a| r.cell.get(a).expect("known axis").to_string())
            .collect();
        row.extend([
            r.replication.to_string(),
            r.seed.to_string(),
            r.status.to_string(),
            opt_num(r.initial_hellinger),
            opt_num(r.final_hellinger),
            opt_num(r.final_variance),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], axes: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = axes.iter().map(String::as_str).collect();
    header.extend([
        "mean_hellinger",
        "std_hellinger",
        "mean_variance",
        "n",
        "n_failed",
    ]);
    w.write_record(&header)?;
    for row in rows {
        let mut rec: Vec<String> = row.keys.iter().map(|(_, v)| v.to_string()).collect();
        rec.extend([
            fmt_num(row.mean_hellinger),
            fmt_num(row.std_hellinger),
            fmt_num(row.mean_variance),
            row.n.to_string(),
            row.n_failed.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Sweep echo for `sweep_metadata.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepMetadata<'a> {
    pub tool: &'a str,
    pub version: &'a str,
    pub command: &'a str,
    pub sweep: &'a SweepGrid,
    pub total_runs: usize,
    pub failed_runs: usize,
    pub group_by: Vec<String>,
    pub outputs: Vec<String>,
}

/// File-name fragment for one cell, naming only the listed axes.
pub fn cell_slug(grid: &SweepGrid, cell: &Cell) -> String {
    let parts: Vec<String> = AXES
        .iter()
        .filter(|a| grid.axes.listed(a))
        .map(|a| format!("{a}-{}", cell.get(a).expect("known axis")))
        .collect();
    if parts.is_empty() {
        "base".to_string()
    } else {
        parts.join("_")
    }
}

/// Pointwise mean of each cell's final public pdfs, in cell order.
pub fn mean_final_pdfs(result: &SweepResult) -> Result<Vec<(Cell, GriddedPdf)>> {
    let mut out = Vec::new();
    for cell in result.grid.cells() {
        let pdfs: Vec<&GriddedPdf> = result
            .runs
            .iter()
            .filter(|r| r.cell == cell)
            .filter_map(|r| r.final_public.as_ref())
            .collect();
        let Some(first) = pdfs.first() else { continue };
        let mut acc = vec![0.0; first.densities().len()];
        for p in &pdfs {
            for (a, d) in acc.iter_mut().zip(p.densities()) {
                *a += d;
            }
        }
        acc.iter_mut().for_each(|a| *a /= pdfs.len() as f64);
        out.push((cell, GriddedPdf::from_values(*first.grid(), acc)?));
    }
    Ok(out)
}

/// Writes runs, aggregate and metadata (plus pdfs when requested) into
/// `dir`; returns every path written.
pub fn write_sweep(
    result: &SweepResult,
    dir: &Path,
    tool: &str,
    version: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid = &result.grid;
    let axes = grid.group_axes();
    let mut written = Vec::new();

    let runs = dir.join(RUNS_CSV);
    write_runs_csv(result, create(&runs)?)?;
    written.push(runs);

    let rows = aggregate(result, &axes)?;
    let agg = dir.join(AGGREGATE_CSV);
    write_aggregate_csv(&rows, &axes, create(&agg)?)?;
    written.push(agg);

    if grid.save_final_pdfs {
        let mut dfs: Vec<f64> = grid.cells().iter().map(|c| c.df).collect();
        dfs.sort_by(f64::total_cmp);
        dfs.dedup();
        for &df in &dfs {
            let truth = eval_grid(&TrueDistribution::standard(df)?, &grid.base.kde.grid)?;
            let name = if dfs.len() == 1 {
                TRUE_PDF_CSV.to_string()
            } else {
                format!("true_pdf_df-{}.csv", fmt_num(df))
            };
            let path = dir.join(name);
            truth.save_csv(&path)?;
            written.push(path);
        }
        for (cell, pdf) in mean_final_pdfs(result)? {
            let path = dir.join(format!("final_pdf_{}.csv", cell_slug(grid, &cell)));
            pdf.save_csv(&path)?;
            written.push(path);
        }
    }

    let meta = dir.join(SWEEP_METADATA_JSON);
    let mut outputs: Vec<String> = written
        .iter()
        .map(|p| {
            p.file_name()
                .expect("file path")
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    outputs.push(SWEEP_METADATA_JSON.to_string());
    save_json(
        &meta,
        &SweepMetadata {
            tool,
            version,
            command: "sweep",
            sweep: grid,
            total_runs: result.runs.len(),
            failed_runs: result
                .runs
                .iter()
                .filter(|r| r.status != RunStatus::Ok)
                .count(),
            group_by: axes,
            outputs,
        },
    )?;
    written.push(meta);
    Ok(written)
}

/// Mean final distance per value of one axis, for quick summaries.
pub fn means_by(result: &SweepResult, axis: &str) -> Result<BTreeMap<String, f64>> {
    Ok(aggregate(result, &[axis])?
        .into_iter()
        .map(|r| (r.keys[0].1.to_string(), r.mean_hellinger))
        .collect())
}
