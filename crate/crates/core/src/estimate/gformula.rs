//! Parametric g-formula by Monte Carlo rollout from observed baselines.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fit::FitOptions;
use crate::panel::{Panel, TimePoint, Trajectory, Var};
use crate::regimes::RegimeSpec;
use crate::rng::{stream, Purpose};
use crate::rollout::{roll, RollSpec};
use crate::scalar::{mean_and_se, Scalar};

use super::{check_regime, check_targets, EstimateError, FittedModels, ModelFormulas};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Each rollout draws an observed baseline with replacement.
    #[default]
    Resample,
    /// Every observed baseline is rolled out `max(1, n_mc / n)` times.
    AllSubjects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeMode {
    /// Average the simulated doses.
    #[default]
    Simulated,
    /// Average the fitted conditional mean of `Y_k` given the simulated history, which
    /// removes the last draw's noise.
    ConditionalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GFormulaConfig<T> {
    pub n_mc: usize,
    pub seed: u64,
    pub baseline: BaselineMode,
    pub outcome: OutcomeMode,
    pub fit: FitOptions<T>,
    /// Return the simulated trajectories alongside the estimates.
    pub keep_rollouts: bool,
}

impl<T: Scalar> Default for GFormulaConfig<T> {
    fn default() -> Self {
        Self {
            n_mc: 10_000,
            seed: 0,
            baseline: BaselineMode::Resample,
            outcome: OutcomeMode::Simulated,
            fit: FitOptions::default(),
            keep_rollouts: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeEstimate<T> {
    pub regime: RegimeSpec,
    pub means: Vec<T>,
    /// Monte Carlo standard error of each mean.
    pub mc_se: Vec<T>,
    pub rollouts: Option<Vec<Trajectory<T>>>,
}

#[derive(Debug, Clone)]
pub struct GFormulaOutput<T> {
    pub targets: Vec<usize>,
    pub rollouts: usize,
    pub estimates: Vec<RegimeEstimate<T>>,
    pub models: FittedModels<T>,
}

/// Fits the models the rollout needs up to `max_k`: the competing event, covariates
/// and dose at `1..=max_k` and the natural treatment at `1..max_k`.
pub fn gformula_models<T: Scalar>(
    panel: &Panel<T>,
    formulas: &ModelFormulas,
    max_k: usize,
    opts: &FitOptions<T>,
) -> Result<FittedModels<T>, EstimateError> {
    FittedModels::fit(
        panel,
        formulas,
        |var| match var {
            Var::Treatment => (1..max_k).collect(),
            _ => (1..=max_k).collect(),
        },
        opts,
    )
}

/// Estimates `E[Y_k^g]` for every regime and target time. Rollouts share random
/// streams across regimes, so contrasts carry no independent simulation noise.
pub fn gformula<T: Scalar>(
    panel: &Panel<T>,
    formulas: &ModelFormulas,
    cfg: &GFormulaConfig<T>,
    regimes: &[RegimeSpec],
    targets: &[usize],
) -> Result<GFormulaOutput<T>, EstimateError> {
    let max_k = check_targets(targets, panel.horizon())?;
    for r in regimes {
        check_regime(panel, r)?;
    }
    let models = gformula_models(panel, formulas, max_k, &cfg.fit)?;
    let estimates = rollout_means(panel, &models, cfg, regimes, targets)?;
    Ok(GFormulaOutput { targets: targets.to_vec(), rollouts: rollout_count(panel, cfg)?, estimates, models })
}

fn baselines<T: Scalar>(panel: &Panel<T>) -> Vec<&TimePoint<T>> {
    panel.trajectories().iter().map(|t| &t.points[0]).filter(|p| p.at_risk()).collect()
}

fn rollout_count<T: Scalar>(panel: &Panel<T>, cfg: &GFormulaConfig<T>) -> Result<usize, EstimateError> {
    if cfg.n_mc == 0 {
        return Err(EstimateError::NoRollouts);
    }
    let n = baselines(panel).len();
    if n == 0 {
        return Err(EstimateError::EmptyPanel);
    }
    Ok(match cfg.baseline {
        BaselineMode::Resample => cfg.n_mc,
        BaselineMode::AllSubjects => n * (cfg.n_mc / n).max(1),
    })
}

/// Rollout means with already fitted models.
pub fn rollout_means<T: Scalar>(
    panel: &Panel<T>,
    models: &FittedModels<T>,
    cfg: &GFormulaConfig<T>,
    regimes: &[RegimeSpec],
    targets: &[usize],
) -> Result<Vec<RegimeEstimate<T>>, EstimateError> {
    let max_k = check_targets(targets, panel.horizon())?;
    let count = rollout_count(panel, cfg)?;
    let base = baselines(panel);
    let pick = |r: usize| -> usize {
        match cfg.baseline {
            BaselineMode::Resample => stream(cfg.seed, Purpose::Baseline, r as u64, 0).random_range(0..base.len()),
            BaselineMode::AllSubjects => r % base.len(),
        }
    };
    let dose_model = |k: usize| {
        models
            .get(Var::Dose)
            .and_then(|s| s.for_time(k))
            .ok_or_else(|| EstimateError::MissingModel { var: panel.schema().dose_name().to_string(), k })
    };
    regimes
        .iter()
        .map(|regime| {
            let rows: Vec<(Vec<T>, Option<Trajectory<T>>)> = (0..count)
                .into_par_iter()
                .map(|r| {
                    let spec = RollSpec {
                        regime,
                        until: max_k,
                        eliminate_censoring: true,
                        seed: cfg.seed,
                        purpose: Purpose::Rollout,
                        unit: r as u64,
                        baseline: Some(base[pick(r)]),
                        treat_last: false,
                    };
                    let rolled = roll(models, &spec, format!("{}", r + 1))?;
                    let h = &rolled.trajectory;
                    let ys = targets
                        .iter()
                        .map(|&k| match cfg.outcome {
                            OutcomeMode::Simulated => Ok(h.points[k].dose),
                            OutcomeMode::ConditionalMean if h.points[k].competing => Ok(T::zero()),
                            OutcomeMode::ConditionalMean => Ok(dose_model(k)?.mean(h, k)),
                        })
                        .collect::<Result<Vec<T>, EstimateError>>()?;
                    Ok((ys, cfg.keep_rollouts.then_some(rolled.trajectory)))
                })
                .collect::<Result<_, EstimateError>>()?;
            let mut means = Vec::with_capacity(targets.len());
            let mut mc_se = Vec::with_capacity(targets.len());
            for i in 0..targets.len() {
                let column: Vec<T> = rows.iter().map(|(ys, _)| ys[i]).collect();
                let (m, se) = mean_and_se(&column);
                means.push(m);
                mc_se.push(se);
            }
            let rollouts = cfg.keep_rollouts.then(|| rows.into_iter().filter_map(|(_, t)| t).collect());
            Ok(RegimeEstimate { regime: regime.clone(), means, mc_se, rollouts })
        })
        .collect()
}
