use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use trr_core::feature_io::{read_feature_file, FeatureMapSet};
use trr_core::knowledge_base::{load_dataset, ParamRanges, PresetRecord, SplitSpec};
use trr_core::protocols::ProtocolError;

/// A failure with its exit code: 2 for bad input, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn input(e: impl fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::ClockUnavailable(_) => CliError::internal(e),
            _ => CliError::input(e),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn dataset(path: &Path) -> CliResult<Vec<PresetRecord>> {
    load_dataset(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn ranges(path: &Path) -> CliResult<ParamRanges> {
    ParamRanges::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn split(path: &Path) -> CliResult<SplitSpec> {
    SplitSpec::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// `.trrf` files under `input` (or `input` itself), sorted by path.
pub fn feature_paths(input: &Path) -> CliResult<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = fs::read_dir(input).map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(CliError::input)?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "trrf") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(CliError::Input(format!("no feature files (*.trrf) in {}", input.display())));
    }
    paths.sort();
    Ok(paths)
}

/// Decodes every feature file in parallel, keyed by item id.
pub fn features(input: &Path) -> CliResult<BTreeMap<String, FeatureMapSet<f64>>> {
    let maps = feature_paths(input)?
        .par_iter()
        .map(|p| read_feature_file::<f64>(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))))
        .collect::<CliResult<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for fm in maps {
        let id = fm.item_id.clone();
        if out.insert(id.clone(), fm).is_some() {
            return Err(CliError::Input(format!("item id {id:?} appears in more than one feature file")));
        }
    }
    Ok(out)
}

pub fn feature_file(path: &Path) -> CliResult<FeatureMapSet<f64>> {
    read_feature_file(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

pub fn to_json(value: &impl Serialize) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
    s.push('\n');
    Ok(s)
}

/// Writes `{"run_config": ..., "report": ...}` to `path`.
pub fn write_report(path: &Path, run_config: &Value, report: &impl Serialize) -> CliResult {
    let wrapped = serde_json::json!({
        "run_config": run_config,
        "report": serde_json::to_value(report).map_err(CliError::internal)?,
    });
    write_text(path, &to_json(&wrapped)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
