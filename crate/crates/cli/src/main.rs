//! `collapse-sim`: single runs, parameter sweeps, SVG figures and diversity
//! reports.

mod diversity_cmd;
mod manifest;
mod plot_cmd;
mod presets;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use collapse_core::io::{load_config, parse_config, parse_json, read_text, write_run};
use collapse_core::simulation::{run_simulation, SimConfig};
use collapse_core::sweep::{run_sweep, write_sweep, SweepGrid};
use collapse_core::Error;
use serde_json::Value;

use manifest::Manifest;

pub const TOOL: &str = "collapse-sim";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "collapse-sim",
    version,
    about = "Knowledge-collapse simulations and diversity indices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write per-round, final-pdf and metadata files.
    Run(RunArgs),
    /// Run a parameter grid and write per-run and aggregated tables.
    Sweep(SweepArgs),
    /// Draw an SVG figure from run or sweep outputs.
    Plot(plot_cmd::PlotArgs),
    /// Shannon/Pielou indices and representativeness checks for a mention corpus.
    Diversity(diversity_cmd::DiversityArgs),
    /// Repeat a command from the metadata JSON it wrote.
    Rerun(RerunArgs),
    /// Write the shipped config and sweep presets to a directory.
    Presets {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config JSON; defaults to the shipped default config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped config preset.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the run manifest to this file.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep definition JSON.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    sweep: Option<PathBuf>,
    /// Name of a shipped sweep preset (figure3 ... figure6, appendixA).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the sweep's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "COLLAPSE_SIM_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RerunArgs {
    /// A metadata JSON written by run, sweep, plot or diversity.
    #[arg(long)]
    metadata: PathBuf,
    /// Output directory (for plot: output SVG path).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "COLLAPSE_SIM_WORKERS", default_value_t = 0)]
    workers: usize,
}

/// Fails with a validation error when an input file is missing.
pub fn input(path: &Path) -> Result<&Path> {
    if !path.is_file() {
        return Err(Error::usage(format!("{}: no such file", path.display())).into());
    }
    Ok(path)
}

fn cmd_run(args: RunArgs) -> Result<Manifest> {
    let (mut config, source) = match (&args.config, &args.preset) {
        (Some(path), _) => (load_config(input(path)?)?, Some(path.clone())),
        (None, Some(name)) => (presets::config(name)?, None),
        (None, None) => (presets::config("default")?, None),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    execute_run(&config, &args.out, source)
}

fn execute_run(config: &SimConfig, out: &Path, source: Option<PathBuf>) -> Result<Manifest> {
    let result = run_simulation(config)?;
    let files = write_run(&result, out, TOOL, VERSION)
        .with_context(|| format!("writing run outputs to {}", out.display()))?;
    Ok(Manifest::new("run", out, source, files))
}

fn cmd_sweep(args: SweepArgs) -> Result<Manifest> {
    let (mut grid, source) = match (&args.sweep, &args.preset) {
        (Some(path), _) => {
            let text = read_text(input(path)?)?;
            let grid: SweepGrid = parse_json(&text, path)?;
            grid.validate()
                .map_err(|e| collapse_core::io::locate(e, &text, path))?;
            (grid, Some(path.clone()))
        }
        (None, Some(name)) => (presets::sweep(name)?, None),
        (None, None) => unreachable!("clap requires --sweep or --preset"),
    };
    if let Some(seed) = args.seed {
        grid.base_seed = seed;
    }
    execute_sweep(&grid, &args.out, args.workers, source)
}

fn execute_sweep(
    grid: &SweepGrid,
    out: &Path,
    workers: usize,
    source: Option<PathBuf>,
) -> Result<Manifest> {
    let result = run_sweep(grid, workers)?;
    let files = write_sweep(&result, out, TOOL, VERSION)
        .with_context(|| format!("writing sweep outputs to {}", out.display()))?;
    Ok(Manifest::new("sweep", out, source, files))
}

fn cmd_rerun(args: RerunArgs) -> Result<Manifest> {
    let path = input(&args.metadata)?;
    let text = read_text(path)?;
    let meta: Value = parse_json(&text, path)?;
    let field = |name: &str| {
        meta.get(name)
            .cloned()
            .ok_or_else(|| Error::parse(path, 0, format!("metadata has no `{name}`")))
    };
    let command = field("command")?;
    match command.as_str() {
        Some("run") => {
            let config = parse_config(&field("config")?.to_string(), path)?;
            execute_run(&config, &args.out, Some(path.to_path_buf()))
        }
        Some("sweep") => {
            let grid: SweepGrid = serde_json::from_value(field("sweep")?)
                .map_err(|e| Error::parse(path, 0, e.to_string()))?;
            execute_sweep(&grid, &args.out, args.workers, Some(path.to_path_buf()))
        }
        Some("plot") => {
            let plot: plot_cmd::PlotArgs = serde_json::from_value(field("args")?)
                .map_err(|e| Error::parse(path, 0, e.to_string()))?;
            plot_cmd::run(plot_cmd::PlotArgs {
                out: args.out,
                manifest: None,
                ..plot
            })
        }
        Some("diversity") => {
            let div: diversity_cmd::DiversityArgs = serde_json::from_value(field("args")?)
                .map_err(|e| Error::parse(path, 0, e.to_string()))?;
            diversity_cmd::run(diversity_cmd::DiversityArgs {
                out: args.out,
                manifest: None,
                ..div
            })
        }
        _ => Err(Error::parse(path, 0, format!("unknown command {command}")).into()),
    }
}

fn dispatch(cli: Cli) -> Result<(Manifest, Option<PathBuf>)> {
    Ok(match cli.command {
        Command::Run(a) => {
            let m = a.manifest.clone();
            (cmd_run(a)?, m)
        }
        Command::Sweep(a) => {
            let m = a.manifest.clone();
            (cmd_sweep(a)?, m)
        }
        Command::Plot(a) => {
            let m = a.manifest.clone();
            (plot_cmd::run(a)?, m)
        }
        Command::Diversity(a) => {
            let m = a.manifest.clone();
            (diversity_cmd::run(a)?, m)
        }
        Command::Rerun(a) => (cmd_rerun(a)?, None),
        Command::Presets { out } => (presets::write_all(&out)?, None),
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli).and_then(|(m, path)| m.emit(path.as_deref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
