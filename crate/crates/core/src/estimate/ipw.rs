//! Inverse probability weighting for regime means.
//!
//! For a regime `g` and time `t` the weight factor is
//!
//! ```text
//! factor_t = sum over a in {0,1} of 1{A_t = g(Y_t, a)} * f(a | h_t) / f(A_t | h_t)
//! ```
//!
//! where `f` is the fitted treatment propensity. For an add-on regime this collapses
//! to `1{A_t = j} / f(j | h_t)` when `Y_t > 0` and to 1 otherwise. The mean of `Y_k`
//! uses `W = prod_{t <= min(k-1, kappa)} factor_t`.

use serde::{Deserialize, Serialize};

use crate::fit::{FitOptions, FittedSet};
use crate::panel::{Panel, Trajectory, Var};
use crate::regimes::{RegimeKind, RegimeSpec};
use crate::scalar::{pairwise_sum, quantile_sorted, Scalar};

use super::{check_regime, check_targets, EstimateError, ModelFormulas};

/// Estimated probability that a binary variable equals 1 at time `t` given the history.
pub trait Propensity<T: Scalar>: Sync {
    fn probability(&self, trajectory: &Trajectory<T>, t: usize) -> Option<T>;
}

impl<T: Scalar> Propensity<T> for FittedSet<T> {
    fn probability(&self, trajectory: &Trajectory<T>, t: usize) -> Option<T> {
        self.for_time(t)?.probability(trajectory, t)
    }
}

impl<T: Scalar, F> Propensity<T> for F
where
    F: Fn(&Trajectory<T>, usize) -> T + Sync,
{
    fn probability(&self, trajectory: &Trajectory<T>, t: usize) -> Option<T> {
        Some(self(trajectory, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Weights rescaled to average one among contributing subjects.
    #[default]
    Hajek,
    /// Plain mean of `Y * W` over all subjects.
    HorvitzThompson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringMode {
    /// Multiply by `1{C_t = 0} / P(C_t = 0 | history)` for each `t <= k`.
    #[default]
    Ipcw,
    /// Restrict to subjects uncensored through `k` without reweighting.
    CompleteCase,
}

impl CensoringMode {
    pub fn label(self) -> &'static str {
        match self {
            Self::Ipcw => "inverse probability of censoring weights",
            Self::CompleteCase => "complete case",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpwConfig<T> {
    pub normalization: Normalization,
    pub censoring: CensoringMode,
    /// Cap weights at this percentile (e.g. 99.5) of their distribution at each `k`.
    pub truncation: Option<f64>,
    pub fit: FitOptions<T>,
}

impl<T: Scalar> Default for IpwConfig<T> {
    fn default() -> Self {
        Self {
            normalization: Normalization::Hajek,
            censoring: CensoringMode::Ipcw,
            truncation: None,
            fit: FitOptions::default(),
        }
    }
}

/// The weight factor (or product of factors) in generic sum form, and the closed
/// add-on form when the regime is an add-on regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFactor<T> {
    pub generic: T,
    pub simplified: Option<T>,
}

/// Factor at time `t` for observed dose `y`, observed treatment `a` and
/// `p1 = f(1 | history)`. `None` when the observed treatment has probability 0.
pub fn ipw_factor<T: Scalar>(regime: &RegimeSpec, t: usize, y: T, a: bool, p1: T) -> Option<WeightFactor<T>> {
    let f = |x: bool| if x { p1 } else { T::one() - p1 };
    let denominator = f(a);
    if denominator == T::zero() {
        return None;
    }
    let positive = y > T::zero();
    let mut numerator = T::zero();
    for candidate in [false, true] {
        if regime.assign(t, positive, candidate) == a {
            numerator = numerator + f(candidate);
        }
    }
    let simplified = match regime.kind() {
        RegimeKind::AddOn(j) if t <= regime.kappa() && positive => {
            Some(if a == *j { T::one() / f(*j) } else { T::zero() })
        }
        RegimeKind::AddOn(_) => Some(T::one()),
        _ => None,
    };
    Some(WeightFactor { generic: numerator / denominator, simplified })
}

/// Product of factors over `t = 0..=s`. Times at or after the competing event
/// contribute 1: treatment is fixed at 0 there.
pub fn ipw_weight<T: Scalar>(
    trajectory: &Trajectory<T>,
    propensity: &(impl Propensity<T> + ?Sized),
    regime: &RegimeSpec,
    s: usize,
) -> Result<WeightFactor<T>, EstimateError> {
    let mut w = WeightFactor { generic: T::one(), simplified: Some(T::one()) };
    for t in 0..=s {
        let p = &trajectory.points[t];
        if p.competing {
            continue;
        }
        let p1 = propensity
            .probability(trajectory, t)
            .ok_or_else(|| EstimateError::MissingModel { var: "treatment".into(), k: t })?;
        let f = ipw_factor(regime, t, p.dose, p.treatment, p1)
            .ok_or_else(|| EstimateError::ZeroPropensity { subject: trajectory.id.clone(), t })?;
        w.generic = w.generic * f.generic;
        w.simplified = w.simplified.zip(f.simplified).map(|(a, b)| a * b);
    }
    Ok(w)
}

/// Distribution of the final weights at one target time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary<T> {
    pub k: usize,
    /// Subjects contributing (including zero weights).
    pub n: usize,
    pub zeros: usize,
    pub mean: T,
    pub max: T,
    pub p99: T,
    /// Cap applied by percentile truncation.
    pub truncated_at: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpwOutput<T> {
    pub targets: Vec<usize>,
    pub means: Vec<T>,
    pub weights: Vec<WeightSummary<T>>,
}

/// Fitted treatment and (optional) censoring models for weighting.
#[derive(Debug, Clone)]
pub struct IpwModels<T> {
    pub propensity: FittedSet<T>,
    pub censoring: Option<FittedSet<T>>,
}

impl<T: Scalar> IpwModels<T> {
    /// Fits the treatment model at `0..=min(max_k - 1, kappa)` and, under IPCW on a
    /// schema with censoring, the censoring model at `1..=max_k`.
    pub fn fit(
        panel: &Panel<T>,
        formulas: &ModelFormulas,
        max_k: usize,
        kappa: usize,
        cfg: &IpwConfig<T>,
    ) -> Result<Self, EstimateError> {
        let schema = panel.schema();
        let last = kappa.min(max_k.saturating_sub(1));
        let treat_times: Vec<usize> = (0..=last).collect();
        let propensity =
            crate::fit::fit_formula_set(panel, formulas.require(schema, Var::Treatment)?, &treat_times, &cfg.fit)?;
        let censoring = if cfg.censoring == CensoringMode::Ipcw && schema.has_censoring() {
            let set = formulas.require(schema, Var::Censor)?;
            Some(crate::fit::fit_formula_set(panel, set, &(1..=max_k).collect::<Vec<_>>(), &cfg.fit)?)
        } else {
            None
        };
        Ok(Self { propensity, censoring })
    }
}

/// Fits the weighting models from `formulas` and estimates `E[Y_k^g]` for each target.
pub fn ipw_mean<T: Scalar>(
    panel: &Panel<T>,
    formulas: &ModelFormulas,
    regime: &RegimeSpec,
    targets: &[usize],
    cfg: &IpwConfig<T>,
) -> Result<IpwOutput<T>, EstimateError> {
    let max_k = check_targets(targets, panel.horizon())?;
    let models = IpwModels::fit(panel, formulas, max_k, regime.kappa(), cfg)?;
    ipw_weighted_mean(
        panel,
        &models.propensity,
        models.censoring.as_ref().map(|c| c as &dyn Propensity<T>),
        regime,
        targets,
        cfg,
    )
}

/// Weighted means with already fitted models. `censoring` gives `P(C_t = 1 | history)`
/// and is required under IPCW when the panel has censoring.
pub fn ipw_weighted_mean<T: Scalar>(
    panel: &Panel<T>,
    propensity: &(impl Propensity<T> + ?Sized),
    censoring: Option<&dyn Propensity<T>>,
    regime: &RegimeSpec,
    targets: &[usize],
    cfg: &IpwConfig<T>,
) -> Result<IpwOutput<T>, EstimateError> {
    check_targets(targets, panel.horizon())?;
    check_regime(panel, regime)?;
    let schema = panel.schema();
    let ipcw = cfg.censoring == CensoringMode::Ipcw && schema.has_censoring();
    if ipcw && censoring.is_none() {
        return Err(EstimateError::MissingFormula(schema.censor_name().unwrap_or("C").to_string()));
    }
    let mut means = Vec::with_capacity(targets.len());
    let mut summaries = Vec::with_capacity(targets.len());
    for &k in targets {
        let s = (k - 1).min(regime.kappa());
        let mut weights = Vec::with_capacity(panel.len());
        let mut doses = Vec::with_capacity(panel.len());
        for traj in panel.trajectories() {
            if !traj.uncensored_through(k) {
                if ipcw {
                    weights.push(T::zero());
                    doses.push(T::zero());
                }
                continue;
            }
            let mut w = ipw_weight(traj, propensity, regime, s)?.generic;
            if ipcw {
                let model = censoring.expect("checked above");
                for t in 1..=k {
                    if !traj.points[t - 1].at_risk() {
                        continue;
                    }
                    let pc = model
                        .probability(traj, t)
                        .ok_or_else(|| EstimateError::MissingModel { var: "censoring".into(), k: t })?;
                    let stay = T::one() - pc;
                    if stay == T::zero() {
                        return Err(EstimateError::ZeroPropensity { subject: traj.id.clone(), t });
                    }
                    w = w / stay;
                }
            }
            weights.push(w);
            doses.push(traj.points[k].dose);
        }
        let mut sorted = weights.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("weights are finite"));
        if sorted.last().is_none_or(|&m| m == T::zero()) {
            return Err(EstimateError::NoCompliant { regime: regime.to_string(), k });
        }
        let truncated_at = cfg.truncation.map(|pct| quantile_sorted(&sorted, pct / 100.0));
        if let Some(cap) = truncated_at {
            for w in &mut weights {
                *w = w.min(cap);
            }
            for w in &mut sorted {
                *w = w.min(cap);
            }
        }
        let products: Vec<T> = weights.iter().zip(&doses).map(|(&w, &y)| w * y).collect();
        let total = pairwise_sum(&weights);
        let mean = match cfg.normalization {
            Normalization::Hajek => pairwise_sum(&products) / total,
            Normalization::HorvitzThompson => pairwise_sum(&products) / T::of_usize(weights.len()),
        };
        means.push(mean);
        summaries.push(WeightSummary {
            k,
            n: weights.len(),
            zeros: weights.iter().filter(|w| **w == T::zero()).count(),
            mean: total / T::of_usize(weights.len()),
            max: *sorted.last().expect("non-empty"),
            p99: quantile_sorted(&sorted, 0.99),
            truncated_at,
        });
    }
    Ok(IpwOutput { targets: targets.to_vec(), means, weights: summaries })
}
