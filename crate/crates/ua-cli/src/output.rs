//! CSV and run-manifest emission.
//!
//! CSV contract: UTF-8, `\n` line endings, mandatory header
//! `axis,metric_mean,metric_std,array,scheme,trials,seed`, floats printed
//! with nine significant digits. Output bytes are a pure function of
//! (config, seed, code version).

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use ua_core::simkit::SweepResult;

pub const CSV_HEADER: &str = "axis,metric_mean,metric_std,array,scheme,trials,seed";

/// Nine significant digits; whole numbers (axis counts, seeds) print
/// without an exponent so the axis column stays human-readable.
pub fn fmt9(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:.8e}")
    }
}

pub fn render_csv(result: &SweepResult, axis_display: &[f64]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for series in &result.series {
        for (i, &axis) in axis_display.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt9(axis),
                fmt9(series.mean[i]),
                fmt9(series.std[i]),
                series.array,
                series.scheme,
                result.trials,
                result.seed
            ));
        }
    }
    out
}

/// Provenance record written beside every CSV.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_path: String,
    /// canonical TOML echo of the resolved configuration
    pub config_echo: String,
    /// SHA-256 over the echo and the code version
    pub content_hash: String,
    pub version: String,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub trials: usize,
    pub elapsed_ms: u128,
}

impl RunManifest {
    pub fn new(config_path: &Path, config_echo: String, result: &SweepResult) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let mut hasher = Sha256::new();
        hasher.update(config_echo.as_bytes());
        hasher.update(version.as_bytes());
        RunManifest {
            config_path: config_path.display().to_string(),
            config_echo,
            content_hash: format!("{:x}", hasher.finalize()),
            version,
            outputs: Vec::new(),
            seed: result.seed,
            trials: result.trials,
            elapsed_ms: 0,
        }
    }
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

pub fn write_outputs(
    csv_path: &Path,
    csv: &str,
    mut manifest: RunManifest,
    elapsed_ms: u128,
) -> Result<()> {
    std::fs::write(csv_path, csv)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    manifest.outputs = vec![csv_path.display().to_string()];
    manifest.elapsed_ms = elapsed_ms;
    let mpath = manifest_path(csv_path);
    let body = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&mpath, body).with_context(|| format!("cannot write {}", mpath.display()))?;
    Ok(())
}
