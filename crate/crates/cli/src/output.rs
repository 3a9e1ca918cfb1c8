//! Output files: delimited tables, JSON documents and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use addon_core::estimate::EstimateReport;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs byte for byte.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: Option<String>,
    pub config_sha256: Option<String>,
    /// Digest of the structural model section when data are simulated.
    pub model_sha256: Option<String>,
    pub seed: Option<u64>,
    pub derived_seeds: Vec<(String, u64)>,
    pub inputs: Vec<OutputFile>,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: None,
            config_sha256: None,
            model_sha256: None,
            seed: None,
            derived_seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(OutputFile { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }
}

/// Writes files into one directory and records them in the manifest.
pub struct OutDir {
    dir: PathBuf,
    pub manifest: Manifest,
}

impl OutDir {
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(OutputFile { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        let manifest = std::mem::replace(&mut self.manifest, Manifest::new(""));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.path("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-time plot table: one row per comparison, estimator and target time.
pub fn plot_table(report: &EstimateReport, sep: char) -> String {
    let mut out = ["comparison", "estimator", "kappa", "k", "estimate_g1", "estimate_g0", "contrast", "ci_lo", "ci_hi"]
        .join(&sep.to_string());
    out.push('\n');
    for c in &report.comparisons {
        for r in &c.per_time {
            let fields = [
                c.label.clone(),
                c.estimator.to_string(),
                c.kappa.to_string(),
                r.k.to_string(),
                r.treated.to_string(),
                r.control.to_string(),
                r.contrast.to_string(),
                cell(r.contrast_ci.map(|i| i.lo)),
                cell(r.contrast_ci.map(|i| i.hi)),
            ];
            let _ = writeln!(out, "{}", fields.join(&sep.to_string()));
        }
    }
    out
}

/// One row per comparison and estimator with the cumulative contrast over the
/// target times, grouped by treatment period.
pub fn summary_table(report: &EstimateReport, sep: char) -> String {
    let mut rows: Vec<(usize, usize)> = report.comparisons.iter().enumerate().map(|(i, c)| (c.kappa, i)).collect();
    rows.sort();
    let mut out = ["parameter", "estimator", "treatment_period", "targets", "estimate", "ci_lo", "ci_hi", "direction"]
        .join(&sep.to_string());
    out.push('\n');
    for (_, i) in rows {
        let c = &report.comparisons[i];
        let first = c.per_time.first().map_or(0, |r| r.k);
        let last = c.per_time.last().map_or(0, |r| r.k);
        let fields = [
            c.label.clone(),
            c.estimator.to_string(),
            format!("0..={}", c.kappa),
            format!("{first}..={last}"),
            c.cumulative.contrast.to_string(),
            cell(c.cumulative.ci.map(|i| i.lo)),
            cell(c.cumulative.ci.map(|i| i.hi)),
            serde_json::to_value(c.cumulative.direction)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        ];
        let _ = writeln!(out, "{}", fields.join(&sep.to_string()));
    }
    out
}

/// Human-readable summary printed after `estimate`.
pub fn summary_text(report: &EstimateReport) -> String {
    let mut out = String::new();
    for c in &report.comparisons {
        let ci = c.cumulative.ci.map(|i| format!(" ({:.2}, {:.2})", i.lo, i.hi)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<16} {:<9} kappa={:<3} cumulative contrast {:.2}{ci}",
            c.label, c.estimator, c.kappa, c.cumulative.contrast
        );
    }
    out
}
