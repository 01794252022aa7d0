//! Reading configs and writing run artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_num;
use crate::simulation::{RoundRecord, SimConfig, SimResult};

pub const ROUNDS_CSV: &str = "rounds.csv";
pub const FINAL_PDF_CSV: &str = "final_pdf.csv";
pub const METADATA_JSON: &str = "metadata.json";

pub const ROUND_COLUMNS: [&str; 8] = [
    "round",
    "n_full",
    "n_trunc",
    "n_abstain",
    "hellinger",
    "variance",
    "v_full",
    "v_trunc",
];

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// 1-based line of the first `"key"` in a JSON document.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    let needle = format!("\"{leaf}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

/// Parses JSON, mapping syntax and type errors to the offending line.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// Parses and validates a simulation config. Range errors point at the line
/// holding the offending key.
pub fn parse_config(text: &str, path: &Path) -> Result<SimConfig> {
    let config: SimConfig = parse_json(text, path)?;
    config.validate().map_err(|e| locate(e, text, path))?;
    Ok(config)
}

/// Attaches a file position to a config validation error.
pub fn locate(err: Error, text: &str, path: &Path) -> Error {
    match err {
        Error::Config { ref field, .. } => {
            Error::parse(path, line_of_key(text, field).unwrap_or(0), err.to_string())
        }
        other => other,
    }
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    parse_config(&read_text(path)?, path)
}

pub fn write_rounds_csv<W: Write>(records: &[RoundRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROUND_COLUMNS)?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.n_full.to_string(),
            r.n_trunc.to_string(),
            r.n_abstain.to_string(),
            fmt_num(r.hellinger),
            fmt_num(r.variance),
            fmt_num(r.v_full),
            fmt_num(r.v_trunc),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Summary numbers of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub initial_hellinger: f64,
    pub final_hellinger: f64,
    pub final_variance: f64,
    pub variance_slope: f64,
    pub narrowing: bool,
    pub generations: usize,
    pub collapse_floor_rounds: Vec<usize>,
}

impl RunSummary {
    pub fn of(result: &SimResult) -> Self {
        let metrics = crate::simulation::collapse_metrics(result);
        Self {
            initial_hellinger: result.initial_hellinger,
            final_hellinger: result.final_hellinger,
            final_variance: result.final_variance(),
            variance_slope: metrics.variance_slope,
            narrowing: metrics.narrowing,
            generations: result.records.last().map_or(0, |r| r.generation),
            collapse_floor_rounds: result.collapse_floor_rounds.clone(),
        }
    }
}

/// Everything needed to repeat a run: the full config (seed included) and
/// the build that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: SimConfig,
    pub summary: RunSummary,
    pub outputs: Vec<String>,
}

/// Writes the per-round CSV, the final public pdf and the metadata JSON
/// into `dir`, returning the paths in that order.
pub fn write_run(
    result: &SimResult,
    dir: &Path,
    tool: &str,
    version: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rounds = dir.join(ROUNDS_CSV);
    write_rounds_csv(&result.records, create(&rounds)?)?;
    let pdf = dir.join(FINAL_PDF_CSV);
    result.final_public.save_csv(&pdf)?;
    let meta = dir.join(METADATA_JSON);
    save_json(
        &meta,
        &RunMetadata {
            tool: tool.to_string(),
            version: version.to_string(),
            command: "run".to_string(),
            seed: result.config.seed,
            config: result.config.clone(),
            summary: RunSummary::of(result),
            outputs: vec![
                ROUNDS_CSV.into(),
                FINAL_PDF_CSV.into(),
                METADATA_JSON.into(),
            ],
        },
    )?;
    Ok(vec![rounds, pdf, meta])
}

/// Reads a CSV into its header and rows of raw strings.
pub fn read_csv_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((headers, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_delta_names_field_and_line() {
        let text = "{\n  \"n_rounds\": 5,\n  \"delta\": 1.5\n}\n";
        let err = parse_config(text, Path::new("c.json")).unwrap_err();
        let msg = err.to_string();
        assert!(err.is_validation());
        assert!(msg.starts_with("c.json:3:"), "{msg}");
        assert!(msg.contains("delta"), "{msg}");
    }

    #[test]
    fn syntax_and_unknown_keys_are_located() {
        let err = parse_config("{\n  \"n_rounds\": 5,,\n}", Path::new("c.json")).unwrap_err();
        assert!(err.to_string().starts_with("c.json:2:"), "{err}");
        let err = parse_config("{\n\n  \"deltaa\": 0.5\n}", Path::new("c.json")).unwrap_err();
        assert!(err.to_string().contains("deltaa"), "{err}");
        assert!(err.is_validation());
    }

    #[test]
    fn nested_keys_use_leaf_name() {
        let text = "{\n  \"kde\": {\n    \"bandwidth\": {\"rule\": \"fixed\", \"h\": -1},\n    \"grid\": {\"min\": -10, \"max\": 10, \"n_points\": 1024}\n  }\n}";
        let err = parse_config(text, Path::new("c.json")).unwrap_err();
        assert!(err.to_string().starts_with("c.json:3:"), "{err}");
    }

    #[test]
    fn empty_object_is_default() {
        assert_eq!(
            parse_config("{}", Path::new("c.json")).unwrap(),
            SimConfig::default()
        );
    }

    #[test]
    fn rounds_csv_header() {
        let mut out = Vec::new();
        write_rounds_csv(&[], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "round,n_full,n_trunc,n_abstain,hellinger,variance,v_full,v_trunc\n"
        );
    }
}
