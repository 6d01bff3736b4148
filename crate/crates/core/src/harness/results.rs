//! Result files written by a run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{BlockResult, RunOutput};
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";
pub const RESULTS_HEADER: &str = "t,K,ser,train_units,infer_units,wall_ms";

pub fn results_csv(blocks: &[BlockResult]) -> String {
    let mut out = String::with_capacity(64 * (blocks.len() + 1));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for b in blocks {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            b.t, b.k, b.ser, b.train_units, b.infer_units, b.wall_ms
        );
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes `results.csv`, `summary.json` and `config.resolved.json` into `out_dir`.
pub fn emit_results(run: &RunOutput, cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = out_dir.join(RESULTS_FILE);
    fs::write(&csv, results_csv(&run.blocks)).map_err(|e| Error::io(&csv, e))?;
    write_json(&out_dir.join(SUMMARY_FILE), &run.summary)?;
    let resolved = ExperimentConfig {
        method: run.method,
        ..cfg.clone()
    };
    write_json(&out_dir.join(RESOLVED_CONFIG_FILE), &resolved)
}
