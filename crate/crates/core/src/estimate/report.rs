//! Serializable estimation report. Values are stored as `f64` whatever the scalar
//! type used for the computation.

use serde::{Deserialize, Serialize};

use super::contrast::Direction;
use super::gformula::BaselineMode;
use super::ipw::WeightSummary;
use super::pipeline::Estimator;
use super::positivity::PositivityReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTimeRow {
    pub k: usize,
    pub treated: f64,
    pub control: f64,
    pub contrast: f64,
    pub treated_ci: Option<Interval>,
    pub control_ci: Option<Interval>,
    pub contrast_ci: Option<Interval>,
    /// Monte Carlo standard errors of the g-formula means.
    pub treated_mc_se: Option<f64>,
    pub control_mc_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeRow {
    pub contrast: f64,
    pub ci: Option<Interval>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEstimate {
    pub label: String,
    pub estimator: Estimator,
    pub treated: String,
    pub control: String,
    pub kappa: usize,
    pub per_time: Vec<PerTimeRow>,
    pub cumulative: CumulativeRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub var: String,
    pub times: Vec<usize>,
    pub family: String,
    pub part: String,
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub deviance: f64,
    pub rows: usize,
    pub ridge: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub comparison: String,
    pub regime: String,
    pub summary: WeightSummary<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInfo {
    pub replicates: usize,
    pub successes: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub models: Vec<ModelSummary>,
    pub weights: Vec<WeightReport>,
    pub positivity: Vec<PositivityReport<f64>>,
    pub bootstrap: Option<BootstrapInfo>,
    pub censoring: String,
    pub weight_truncation: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub subjects: usize,
    pub n_mc: usize,
    pub baseline: BaselineMode,
    pub bootstrap_seed: Option<u64>,
    /// Digest of the configuration that produced the report; filled in by the caller.
    pub config_digest: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub comparisons: Vec<ComparisonEstimate>,
    pub diagnostics: ReportDiagnostics,
    pub provenance: Provenance,
}

/// One row of the per-time plot table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub comparison: String,
    pub estimator: Estimator,
    pub k: usize,
    pub estimate_g1: f64,
    pub estimate_g0: f64,
    pub contrast: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl EstimateReport {
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        self.comparisons
            .iter()
            .flat_map(|c| {
                c.per_time.iter().map(|r| PlotRow {
                    comparison: c.label.clone(),
                    estimator: c.estimator,
                    k: r.k,
                    estimate_g1: r.treated,
                    estimate_g0: r.control,
                    contrast: r.contrast,
                    ci_lo: r.contrast_ci.map(|i| i.lo),
                    ci_hi: r.contrast_ci.map(|i| i.hi),
                })
            })
            .collect()
    }
}
