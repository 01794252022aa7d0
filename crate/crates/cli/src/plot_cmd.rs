use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use collapse_core::io::save_json;
use collapse_core::plot::{
    distance_lines_svg, kde_overlay_svg, read_curve, read_distance_series, Labels,
};
use collapse_core::Error;
use serde::{Deserialize, Serialize};

use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Density curves from `x,density` CSVs (final_pdf_*.csv, true_pdf.csv).
    KdeOverlay,
    /// Mean final distance against one sweep axis, from aggregate.csv.
    DistanceLines,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PlotArgs {
    #[arg(value_enum)]
    pub kind: PlotKind,
    /// Input CSVs: one per curve for kde-overlay, one aggregate for distance-lines.
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Curve labels for kde-overlay, in input order; defaults to file names.
    #[arg(long, num_args = 1..)]
    #[serde(default)]
    pub label: Vec<String>,
    /// x-axis column for distance-lines.
    #[arg(long)]
    #[serde(default)]
    pub x: Option<String>,
    /// Column whose values split distance-lines into series.
    #[arg(long)]
    #[serde(default)]
    pub series: Option<String>,
    #[arg(long, default_value = "mean_hellinger")]
    pub y: String,
    #[arg(long)]
    #[serde(default)]
    pub title: Option<String>,
    /// Output SVG; its metadata goes next to it as `<name>.json`.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct PlotMetadata<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    args: &'a PlotArgs,
    outputs: Vec<String>,
}

/// `final_pdf_delta-0.8.csv` reads as `delta-0.8`, `true_pdf.csv` as `truth`.
fn default_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if stem.starts_with("true_pdf") {
        return stem
            .replacen("true_pdf", "truth", 1)
            .replace("_df-", " df-");
    }
    stem.strip_prefix("final_pdf_").unwrap_or(&stem).to_string()
}

fn render(args: &PlotArgs) -> Result<String> {
    match args.kind {
        PlotKind::KdeOverlay => {
            if !args.label.is_empty() && args.label.len() != args.input.len() {
                return Err(Error::usage(format!(
                    "{} labels given for {} inputs",
                    args.label.len(),
                    args.input.len()
                ))
                .into());
            }
            let curves = args
                .input
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let label = args
                        .label
                        .get(i)
                        .cloned()
                        .unwrap_or_else(|| default_label(p));
                    read_curve(crate::input(p)?, label).map_err(Into::into)
                })
                .collect::<Result<Vec<_>>>()?;
            let labels = Labels {
                title: args
                    .title
                    .clone()
                    .unwrap_or_else(|| "Public knowledge density".into()),
                x: "x".into(),
                y: "density".into(),
            };
            Ok(kde_overlay_svg(&curves, &labels)?)
        }
        PlotKind::DistanceLines => {
            let [path] = args.input.as_slice() else {
                return Err(Error::usage("distance-lines takes exactly one --input").into());
            };
            let x = args
                .x
                .as_deref()
                .ok_or_else(|| Error::usage("distance-lines needs --x"))?;
            let series =
                read_distance_series(crate::input(path)?, x, args.series.as_deref(), &args.y)?;
            let labels = Labels {
                title: args
                    .title
                    .clone()
                    .unwrap_or_else(|| format!("{} by {x}", args.y)),
                x: x.into(),
                y: args.y.clone(),
            };
            Ok(distance_lines_svg(&series, &labels)?)
        }
    }
}

pub fn run(args: PlotArgs) -> Result<Manifest> {
    let svg = render(&args)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&args.out, svg).with_context(|| format!("writing {}", args.out.display()))?;
    let meta = args.out.with_extension("json");
    let name = |p: &Path| {
        p.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    save_json(
        &meta,
        &PlotMetadata {
            tool: crate::TOOL,
            version: crate::VERSION,
            command: "plot",
            args: &args,
            outputs: vec![name(&args.out), name(&meta)],
        },
    )?;
    let dir = args.out.parent().unwrap_or(Path::new("")).to_path_buf();
    Ok(Manifest::new(
        "plot",
        &dir,
        None,
        vec![args.out.clone(), meta],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_from_file_names() {
        assert_eq!(
            default_label(Path::new("o/final_pdf_delta-0.8.csv")),
            "delta-0.8"
        );
        assert_eq!(default_label(Path::new("true_pdf.csv")), "truth");
        assert_eq!(default_label(Path::new("true_pdf_df-3.csv")), "truth df-3");
        assert_eq!(default_label(Path::new("other.csv")), "other");
    }
}
