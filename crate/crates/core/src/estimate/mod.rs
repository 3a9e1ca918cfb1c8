//! Estimators of counterfactual dose means under treatment regimes: the parametric
//! g-formula with Monte Carlo rollout and inverse probability weighting, plus
//! contrasts, the nonparametric bootstrap and positivity diagnostics.

mod bootstrap;
mod contrast;
mod gformula;
mod ipw;
mod pipeline;
mod positivity;
mod report;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::fit::{fit_formula_set, FitError, FitOptions, FittedSet, FormulaSet};
use crate::formula::Family;
use crate::panel::{Panel, Trajectory, Var, VariableSchema};
use crate::rng::NodeDraws;
use crate::rollout::{DrawError, Generator};
use crate::scalar::Scalar;

pub use bootstrap::{bootstrap, resample_indices, BootstrapConfig, BootstrapSummary};
pub use contrast::{contrast, cumulative_contrast, per_time_contrast, ContrastMode, Direction};
pub use gformula::{
    gformula, gformula_models, rollout_means, BaselineMode, GFormulaConfig, GFormulaOutput, OutcomeMode, RegimeEstimate,
};
pub use ipw::{
    ipw_factor, ipw_mean, ipw_weight, ipw_weighted_mean, CensoringMode, IpwConfig, IpwModels, IpwOutput, Normalization,
    Propensity, WeightFactor, WeightSummary,
};
pub use pipeline::{
    analyze, point_estimates, AnalysisConfig, Comparison, ComparisonEstimates, ComparisonValues, Estimator,
};
pub use positivity::{positivity_report, PositivityFlag, PositivityReport};
pub use report::{
    BootstrapInfo, ComparisonEstimate, CumulativeRow, EstimateReport, Interval, ModelSummary, PerTimeRow, PlotRow,
    Provenance, ReportDiagnostics, WeightReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("no formula for `{0}`")]
    MissingFormula(String),
    #[error("target time {k} must be within 1..={horizon}")]
    Target { k: usize, horizon: usize },
    #[error("no target times")]
    NoTargets,
    #[error("n_mc must be at least 1")]
    NoRollouts,
    #[error("regime horizon {regime} differs from panel horizon {panel}")]
    Horizon { regime: usize, panel: usize },
    #[error("no fitted model for {var} at time {k}")]
    MissingModel { var: String, k: usize },
    #[error("panel has no subjects with an observed baseline")]
    EmptyPanel,
    #[error("{family} model for `{var}` cannot be simulated")]
    UnsupportedFamily { family: Family, var: String },
    #[error("positivity failure: subject {subject} at time {t} has estimated probability 0 of its observed treatment")]
    ZeroPropensity { subject: String, t: usize },
    #[error("positivity failure: all weights are zero for {regime} at k={k} (no compliant subjects)")]
    NoCompliant { regime: String, k: usize },
    #[error("estimate grids differ: {0:?} vs {1:?}")]
    GridMismatch(Vec<usize>, Vec<usize>),
    #[error("bootstrap needs at least 2 replicates")]
    TooFewReplicates,
    #[error("bootstrap level must lie in (0, 1)")]
    Level,
    #[error("only {successes} of {replicates} bootstrap replicates succeeded (need 90%); first failure: {first}")]
    TooManyFailures { successes: usize, replicates: usize, first: String },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Draw(#[from] DrawError),
}

/// Model formulas for the variables an estimator needs, keyed by variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelFormulas {
    sets: BTreeMap<Var, FormulaSet>,
}

impl ModelFormulas {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, set: FormulaSet) -> Option<FormulaSet> {
        self.sets.insert(set.response(), set)
    }

    pub fn with(mut self, set: FormulaSet) -> Self {
        self.insert(set);
        self
    }

    pub fn get(&self, var: Var) -> Option<&FormulaSet> {
        self.sets.get(&var)
    }

    pub fn sets(&self) -> impl Iterator<Item = &FormulaSet> {
        self.sets.values()
    }

    fn require(&self, schema: &VariableSchema, var: Var) -> Result<&FormulaSet, EstimateError> {
        self.get(var).ok_or_else(|| EstimateError::MissingFormula(schema.name(var).to_string()))
    }
}

/// Fitted models used to simulate forward in the g-formula.
#[derive(Debug, Clone)]
pub struct FittedModels<T> {
    schema: VariableSchema,
    sets: BTreeMap<Var, FittedSet<T>>,
}

impl<T: Scalar> FittedModels<T> {
    /// Fits every variable the rollout draws (`D`, `L`, `Y`, natural `A`) at the times
    /// returned by `times`; variables with no times are skipped.
    pub fn fit(
        panel: &Panel<T>,
        formulas: &ModelFormulas,
        times: impl Fn(Var) -> Vec<usize>,
        opts: &FitOptions<T>,
    ) -> Result<Self, EstimateError> {
        let schema = panel.schema().clone();
        let mut sets = BTreeMap::new();
        for var in schema.vars() {
            if var == Var::Censor {
                continue;
            }
            let ts = times(var);
            if ts.is_empty() {
                continue;
            }
            let set = formulas.require(&schema, var)?;
            let family = set.family();
            let ok = match var {
                Var::Dose => family != Family::Linear,
                Var::Compete | Var::Treatment => family == Family::Logistic,
                _ => true,
            };
            if !ok {
                return Err(EstimateError::UnsupportedFamily { family, var: schema.name(var).to_string() });
            }
            sets.insert(var, fit_formula_set(panel, set, &ts, opts)?);
        }
        Ok(Self { schema, sets })
    }

    pub fn get(&self, var: Var) -> Option<&FittedSet<T>> {
        self.sets.get(&var)
    }

    pub fn sets(&self) -> impl Iterator<Item = &FittedSet<T>> {
        self.sets.values()
    }
}

impl<T: Scalar> Generator<T> for FittedModels<T> {
    fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    fn draw(&self, var: Var, k: usize, h: &Trajectory<T>, draws: &mut NodeDraws) -> Result<T, DrawError> {
        let model = self
            .sets
            .get(&var)
            .and_then(|s| s.for_time(k))
            .ok_or_else(|| DrawError::MissingModel { var: self.schema.name(var).to_string(), k })?;
        Ok(model.draw(h, k, draws))
    }
}

fn check_targets(targets: &[usize], horizon: usize) -> Result<usize, EstimateError> {
    if targets.is_empty() {
        return Err(EstimateError::NoTargets);
    }
    for &k in targets {
        if k == 0 || k > horizon {
            return Err(EstimateError::Target { k, horizon });
        }
    }
    Ok(*targets.iter().max().expect("non-empty"))
}

fn check_regime<T: Scalar>(panel: &Panel<T>, regime: &crate::regimes::RegimeSpec) -> Result<(), EstimateError> {
    if regime.horizon() != panel.horizon() {
        return Err(EstimateError::Horizon { regime: regime.horizon(), panel: panel.horizon() });
    }
    Ok(())
}
