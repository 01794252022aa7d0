use std::path::Path;

use anyhow::{Context, Result};
use collapse_core::io::{parse_config, parse_json};
use collapse_core::simulation::SimConfig;
use collapse_core::sweep::SweepGrid;
use collapse_core::Error;

use crate::manifest::Manifest;

const CONFIGS: [(&str, &str); 1] = [("default", include_str!("../presets/default.json"))];

const SWEEPS: [(&str, &str); 5] = [
    ("figure3", include_str!("../presets/figure3.json")),
    ("figure4", include_str!("../presets/figure4.json")),
    ("figure5", include_str!("../presets/figure5.json")),
    ("figure6", include_str!("../presets/figure6.json")),
    ("appendixA", include_str!("../presets/appendixA.json")),
];

fn names(list: &[(&str, &str)]) -> String {
    list.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
}

fn lookup<'a>(list: &[(&'a str, &'a str)], name: &str, kind: &str) -> Result<(&'a str, &'a str)> {
    list.iter()
        .find(|(n, _)| *n == name)
        .copied()
        .ok_or_else(|| {
            Error::usage(format!(
                "unknown {kind} preset `{name}` (known: {})",
                names(list)
            ))
            .into()
        })
}

pub fn config(name: &str) -> Result<SimConfig> {
    let (n, text) = lookup(&CONFIGS, name, "config")?;
    Ok(parse_config(text, Path::new(&format!("{n}.json")))?)
}

pub fn sweep(name: &str) -> Result<SweepGrid> {
    let (n, text) = lookup(&SWEEPS, name, "sweep")?;
    let path = format!("{n}.json");
    let grid: SweepGrid = parse_json(text, Path::new(&path))?;
    grid.validate()?;
    Ok(grid)
}

pub fn write_all(dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    for (name, text) in CONFIGS.iter().chain(SWEEPS.iter()) {
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    Ok(Manifest::new("presets", dir, None, files))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for (name, _) in CONFIGS {
            config(name).unwrap();
        }
        for (name, _) in SWEEPS {
            sweep(name).unwrap();
        }
    }

    #[test]
    fn default_preset_matches_code_defaults() {
        assert_eq!(config("default").unwrap(), SimConfig::default());
    }

    #[test]
    fn unknown_preset_is_validation_error() {
        let err = sweep("figure9").unwrap_err();
        assert!(err.downcast_ref::<Error>().unwrap().is_validation());
    }
}
