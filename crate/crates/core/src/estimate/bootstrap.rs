//! Nonparametric bootstrap over subjects with percentile intervals.

use std::fmt::Display;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::panel::Panel;
use crate::rng::{derive_seed, stream, Purpose};
use crate::scalar::{quantile_sorted, Scalar};

use super::EstimateError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: 500, seed: 0, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary<T> {
    pub replicates: usize,
    pub successes: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub level: f64,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

/// Subject indices of replicate `b`.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = stream(seed, Purpose::Bootstrap, b as u64, 0);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Runs `statistic` on `replicates` resampled panels and returns type-7 percentile
/// intervals for each coordinate of its output. The statistic also receives a seed
/// derived from the replicate index for any randomness of its own. Failed replicates
/// (errors or non-finite output) are counted; at least 90% must succeed.
pub fn bootstrap<T, E, F>(
    panel: &Panel<T>,
    cfg: &BootstrapConfig,
    statistic: F,
) -> Result<BootstrapSummary<T>, EstimateError>
where
    T: Scalar,
    E: Display,
    F: Fn(&Panel<T>, u64) -> Result<Vec<T>, E> + Sync,
{
    if cfg.replicates < 2 {
        return Err(EstimateError::TooFewReplicates);
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(EstimateError::Level);
    }
    let outcomes: Vec<Result<Vec<T>, String>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let sample = panel.resample(&resample_indices(panel.len(), cfg.seed, b));
            let values = statistic(&sample, derive_seed(cfg.seed, Purpose::Replicate, b as u64))
                .map_err(|e| format!("replicate {b}: {e}"))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(format!("replicate {b}: non-finite estimate"));
            }
            Ok(values)
        })
        .collect();
    let mut first_failure = None;
    let mut ok = Vec::new();
    for o in outcomes {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => {
                first_failure.get_or_insert(e);
            }
        }
    }
    let successes = ok.len();
    if (successes as f64) < 0.9 * cfg.replicates as f64 {
        return Err(EstimateError::TooManyFailures {
            successes,
            replicates: cfg.replicates,
            first: first_failure.unwrap_or_default(),
        });
    }
    let dim = ok[0].len();
    let (lo_p, hi_p) = ((1.0 - cfg.level) / 2.0, (1.0 + cfg.level) / 2.0);
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut col: Vec<T> = ok.iter().map(|v| v[j]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        lower.push(quantile_sorted(&col, lo_p));
        upper.push(quantile_sorted(&col, hi_p));
    }
    Ok(BootstrapSummary {
        replicates: cfg.replicates,
        successes,
        failures: cfg.replicates - successes,
        first_failure,
        level: cfg.level,
        lower,
        upper,
    })
}
