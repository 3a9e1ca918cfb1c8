//! Structural-equation models: observed and counterfactual simulation, and
//! ground-truth counterfactual means by exact enumeration or Monte Carlo.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{FormulaError, LinearPredictor};
use crate::panel::{Panel, PanelError, TimePoint, Trajectory, Var, VariableSchema};
use crate::regimes::RegimeSpec;
use crate::rng::{NodeDraws, Purpose};
use crate::rollout::{as_flag, roll, DrawError, Generator, RollSpec, Rolled};
use crate::scalar::{logistic, mean_and_se, Scalar};

#[derive(Debug, Error)]
pub enum SemError {
    #[error("no structural equation for {var} at time {k}")]
    Incomplete { var: String, k: usize },
    #[error("{var}: family {family} is not allowed for this variable")]
    FamilyNotAllowed { var: String, family: &'static str },
    #[error("{var}: invalid parameter: {message}")]
    InvalidParameter { var: String, message: String },
    #[error("invalid time range `{0}`")]
    TimeRange(String),
    #[error("{var} at time {k}: {source}")]
    Formula { var: String, k: usize, source: FormulaError },
    #[error("{var} at time {k} has continuous support; enumeration needs finite support")]
    ContinuousSupport { var: String, k: usize },
    #[error("target time {k} must be within 0..={horizon}")]
    Target { k: usize, horizon: usize },
    #[error("regime horizon {regime} differs from model horizon {model}")]
    Horizon { regime: usize, model: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error(transparent)]
    Draw(#[from] DrawError),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Inclusive time range `from..=to`; `to = None` runs to the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub from: usize,
    pub to: Option<usize>,
}

impl TimeRange {
    pub fn all() -> Self {
        Self { from: 0, to: None }
    }

    pub fn at(k: usize) -> Self {
        Self { from: k, to: Some(k) }
    }

    pub fn from(k: usize) -> Self {
        Self { from: k, to: None }
    }

    pub fn contains(&self, k: usize) -> bool {
        k >= self.from && self.to.is_none_or(|t| k <= t)
    }
}

/// `3`, `1..`, `1..4` (inclusive) or `..`.
impl FromStr for TimeRange {
    type Err = SemError;

    fn from_str(s: &str) -> Result<Self, SemError> {
        let bad = || SemError::TimeRange(s.to_string());
        let s = s.trim();
        let Some((a, b)) = s.split_once("..") else {
            return s.parse().map(Self::at).map_err(|_| bad());
        };
        let from = if a.is_empty() { 0 } else { a.parse().map_err(|_| bad())? };
        let to = if b.is_empty() { None } else { Some(b.parse().map_err(|_| bad())?) };
        if to.is_some_and(|t| t < from) {
            return Err(bad());
        }
        Ok(Self { from, to })
    }
}

impl fmt::Display for TimeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to {
            Some(t) if t == self.from => write!(f, "{t}"),
            Some(t) => write!(f, "{}..{t}", self.from),
            None => write!(f, "{}..", self.from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeFamily<T> {
    /// `P(X = 1) = logistic(eta)`.
    Bernoulli {
        eta: LinearPredictor<T>,
    },
    /// `X ~ N(mean, sd^2)`.
    Gaussian {
        mean: LinearPredictor<T>,
        sd: T,
    },
    /// Positive with probability `logistic(positive)` (always, when absent); the
    /// positive dose is `exp(log_dose + sd * Z)`.
    Hurdle {
        positive: Option<LinearPredictor<T>>,
        log_dose: LinearPredictor<T>,
        sd: T,
    },
    Deterministic {
        value: LinearPredictor<T>,
    },
}

impl<T: Scalar> NodeFamily<T> {
    pub fn name(&self) -> &'static str {
        match self {
            NodeFamily::Bernoulli { .. } => "bernoulli",
            NodeFamily::Gaussian { .. } => "gaussian",
            NodeFamily::Hurdle { .. } => "hurdle",
            NodeFamily::Deterministic { .. } => "deterministic",
        }
    }

    fn predictors(&self) -> Vec<&LinearPredictor<T>> {
        match self {
            NodeFamily::Bernoulli { eta } => vec![eta],
            NodeFamily::Gaussian { mean, .. } => vec![mean],
            NodeFamily::Hurdle { positive, log_dose, .. } => positive.iter().chain([log_dose]).collect(),
            NodeFamily::Deterministic { value } => vec![value],
        }
    }

    fn sd(&self) -> Option<T> {
        match self {
            NodeFamily::Gaussian { sd, .. } | NodeFamily::Hurdle { sd, .. } => Some(*sd),
            _ => None,
        }
    }
}

/// Structural equation for one variable over a range of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec<T> {
    pub var: Var,
    pub times: TimeRange,
    pub family: NodeFamily<T>,
}

/// A complete generative model: one equation per schema variable per time.
///
/// `C_0` and `D_0` are fixed at 0 and never drawn. Once `D_k = 1` all later doses
/// and treatments are 0 and covariates are carried forward; once `C_k = 1` all
/// later fields are missing.
#[derive(Debug, Clone)]
pub struct StructuralModel<T> {
    schema: VariableSchema,
    vars: Vec<Var>,
    /// `table[k][i]` is the equation of `vars[i]` at time `k`.
    table: Vec<Vec<Option<NodeFamily<T>>>>,
}

impl<T: Scalar> StructuralModel<T> {
    /// Later specs override earlier ones where their time ranges overlap.
    pub fn new(schema: VariableSchema, specs: Vec<NodeSpec<T>>) -> Result<Self, SemError> {
        let vars = schema.vars();
        let horizon = schema.horizon();
        let mut table: Vec<Vec<Option<NodeFamily<T>>>> = vec![vec![None; vars.len()]; horizon + 1];
        for spec in specs {
            let name = schema.name(spec.var).to_string();
            let i = vars
                .iter()
                .position(|v| *v == spec.var)
                .ok_or_else(|| SemError::Incomplete { var: name.clone(), k: spec.times.from })?;
            let allowed = match (&spec.family, spec.var) {
                (NodeFamily::Hurdle { .. }, v) => v == Var::Dose,
                (NodeFamily::Gaussian { .. }, v) => matches!(v, Var::Covariate(_)),
                _ => true,
            };
            if !allowed {
                return Err(SemError::FamilyNotAllowed { var: name, family: spec.family.name() });
            }
            if let Some(sd) = spec.family.sd() {
                if !(sd.is_finite() && sd >= T::zero()) {
                    return Err(SemError::InvalidParameter { var: name, message: format!("sd = {sd}") });
                }
            }
            for (k, row) in table.iter_mut().enumerate() {
                if spec.times.contains(k) {
                    row[i] = Some(spec.family.clone());
                }
            }
        }
        for (k, row) in table.iter().enumerate() {
            for (i, &var) in vars.iter().enumerate() {
                if k == 0 && matches!(var, Var::Censor | Var::Compete) {
                    continue;
                }
                let name = || schema.name(var).to_string();
                let fam = row[i].as_ref().ok_or_else(|| SemError::Incomplete { var: name(), k })?;
                for lp in fam.predictors() {
                    lp.check(&schema, var, k).map_err(|source| SemError::Formula { var: name(), k, source })?;
                    if !lp.intercept.is_finite() || lp.terms.iter().any(|(c, _)| !c.is_finite()) {
                        return Err(SemError::InvalidParameter {
                            var: name(),
                            message: "non-finite coefficient".into(),
                        });
                    }
                }
            }
        }
        Ok(Self { schema, vars, table })
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn horizon(&self) -> usize {
        self.schema.horizon()
    }

    pub fn equation(&self, var: Var, k: usize) -> Option<&NodeFamily<T>> {
        let i = self.vars.iter().position(|v| *v == var)?;
        self.table.get(k)?.get(i)?.as_ref()
    }

    fn family(&self, var: Var, k: usize) -> Result<&NodeFamily<T>, DrawError> {
        self.equation(var, k).ok_or_else(|| DrawError::MissingModel { var: self.schema.name(var).to_string(), k })
    }

    fn eval(&self, var: Var, k: usize, lp: &LinearPredictor<T>, h: &Trajectory<T>) -> Result<T, DrawError> {
        let v = lp.eval(h, k);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DrawError::NonFinite { var: self.schema.name(var).to_string(), k, what: "linear predictor" })
        }
    }

    /// Finite support of `var` at `k` given the history, as `(value, probability)`.
    fn support(&self, var: Var, k: usize, h: &Trajectory<T>) -> Result<Vec<(T, T)>, SemError> {
        let continuous = || SemError::ContinuousSupport { var: self.schema.name(var).to_string(), k };
        Ok(match self.family(var, k)? {
            NodeFamily::Bernoulli { eta } => {
                let p = logistic(self.eval(var, k, eta, h)?);
                vec![(T::zero(), T::one() - p), (T::one(), p)]
            }
            NodeFamily::Deterministic { value } => vec![(self.eval(var, k, value, h)?, T::one())],
            NodeFamily::Gaussian { mean, sd } => {
                if *sd != T::zero() {
                    return Err(continuous());
                }
                vec![(self.eval(var, k, mean, h)?, T::one())]
            }
            NodeFamily::Hurdle { positive, log_dose, sd } => {
                if *sd != T::zero() {
                    return Err(continuous());
                }
                let p = match positive {
                    Some(lp) => logistic(self.eval(var, k, lp, h)?),
                    None => T::one(),
                };
                vec![(T::zero(), T::one() - p), (self.eval(var, k, log_dose, h)?.exp(), p)]
            }
        })
    }

    fn support_size(&self, var: Var, k: usize) -> usize {
        match self.equation(var, k) {
            Some(NodeFamily::Bernoulli { .. } | NodeFamily::Hurdle { .. }) => 2,
            _ => 1,
        }
    }
}

impl<T: Scalar> Generator<T> for StructuralModel<T> {
    fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    fn draw(&self, var: Var, k: usize, h: &Trajectory<T>, draws: &mut NodeDraws) -> Result<T, DrawError> {
        let flag = |b: bool| if b { T::one() } else { T::zero() };
        Ok(match self.family(var, k)? {
            NodeFamily::Bernoulli { eta } => {
                let p = logistic(self.eval(var, k, eta, h)?);
                flag(T::of(draws.uniform()) < p)
            }
            NodeFamily::Gaussian { mean, sd } => {
                let m = self.eval(var, k, mean, h)?;
                m + *sd * T::of(draws.normal())
            }
            NodeFamily::Hurdle { positive, log_dose, sd } => {
                let u = T::of(draws.uniform());
                let p = match positive {
                    Some(lp) => logistic(self.eval(var, k, lp, h)?),
                    None => T::one(),
                };
                let z = T::of(draws.normal());
                if u < p {
                    (self.eval(var, k, log_dose, h)? + *sd * z).exp()
                } else {
                    T::zero()
                }
            }
            NodeFamily::Deterministic { value } => self.eval(var, k, value, h)?,
        })
    }
}

/// Counterfactual panel together with the natural treatment values.
#[derive(Debug, Clone)]
pub struct RegimeSample<T> {
    pub panel: Panel<T>,
    /// `natural[i][k]`: natural treatment of subject `i` at time `k`.
    pub natural: Vec<Vec<bool>>,
}

fn check_regime<T: Scalar>(sem: &StructuralModel<T>, regime: &RegimeSpec) -> Result<(), SemError> {
    if regime.horizon() != sem.horizon() {
        return Err(SemError::Horizon { regime: regime.horizon(), model: sem.horizon() });
    }
    Ok(())
}

fn simulate<T: Scalar>(
    sem: &StructuralModel<T>,
    regime: &RegimeSpec,
    n: usize,
    seed: u64,
    eliminate_censoring: bool,
) -> Result<Vec<Rolled<T>>, SemError> {
    if n == 0 {
        return Err(SemError::EmptySample);
    }
    check_regime(sem, regime)?;
    let rolled = (0..n)
        .into_par_iter()
        .map(|i| {
            let spec = RollSpec {
                regime,
                until: sem.horizon(),
                eliminate_censoring,
                seed,
                purpose: Purpose::Simulation,
                unit: i as u64,
                baseline: None,
                treat_last: true,
            };
            roll(sem, &spec, (i + 1).to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rolled)
}

/// `n` i.i.d. trajectories from the observed-data law. Subject `i` (1-based id)
/// uses the random streams keyed by `(seed, i - 1)`.
pub fn simulate_observed<T: Scalar>(sem: &StructuralModel<T>, n: usize, seed: u64) -> Result<Panel<T>, SemError> {
    let natural = RegimeSpec::natural(sem.horizon()).expect("horizon validated by schema");
    Ok(simulate_regime(sem, &natural, n, seed, false)?.panel)
}

/// Counterfactual trajectories under `regime`, with the same random streams as
/// [`simulate_observed`]. Treatments in the panel are the regime-assigned values.
pub fn simulate_regime<T: Scalar>(
    sem: &StructuralModel<T>,
    regime: &RegimeSpec,
    n: usize,
    seed: u64,
    eliminate_censoring: bool,
) -> Result<RegimeSample<T>, SemError> {
    let (trajectories, natural) =
        simulate(sem, regime, n, seed, eliminate_censoring)?.into_iter().map(|r| (r.trajectory, r.natural)).unzip();
    Ok(RegimeSample { panel: Panel::new(sem.schema.clone(), trajectories)?, natural })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMethod {
    Enumerate,
    MonteCarlo { n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue<T> {
    pub mean: T,
    /// Monte Carlo standard error; `None` for exact enumeration.
    pub se: Option<T>,
}

/// Paths above which enumeration accumulates log-probabilities.
const LOG_SPACE_PATHS: f64 = 1e5;

/// `E[Y_k]` under `regime` with censoring eliminated.
pub fn oracle_mean<T: Scalar>(
    sem: &StructuralModel<T>,
    regime: &RegimeSpec,
    k: usize,
    method: OracleMethod,
) -> Result<OracleValue<T>, SemError> {
    if k > sem.horizon() {
        return Err(SemError::Target { k, horizon: sem.horizon() });
    }
    check_regime(sem, regime)?;
    match method {
        OracleMethod::MonteCarlo { n, seed } => {
            let rolled = simulate(sem, regime, n, seed, true)?;
            let ys: Vec<T> = rolled.iter().map(|r| r.trajectory.points[k].dose).collect();
            let (mean, se) = mean_and_se(&ys);
            Ok(OracleValue { mean, se: Some(se) })
        }
        OracleMethod::Enumerate => {
            let mut steps = Vec::new();
            for t in 0..=k {
                for &var in &sem.vars {
                    if var == Var::Censor || (t == 0 && var == Var::Compete) || (t == k && var == Var::Treatment) {
                        continue;
                    }
                    steps.push((t, var));
                }
            }
            let paths: f64 = steps.iter().map(|&(t, v)| sem.support_size(v, t) as f64).product();
            let mut e = Enumerator {
                sem,
                regime,
                steps: &steps,
                log_space: paths > LOG_SPACE_PATHS,
                h: Trajectory::new(
                    "oracle",
                    vec![TimePoint::new(vec![T::zero(); sem.schema.n_covariates()], T::zero(), false); k + 1],
                ),
                total: Vec::new(),
            };
            let start = if e.log_space { T::zero() } else { T::one() };
            e.visit(0, start)?;
            Ok(OracleValue { mean: crate::scalar::pairwise_sum(&e.total), se: None })
        }
    }
}

struct Enumerator<'a, T> {
    sem: &'a StructuralModel<T>,
    regime: &'a RegimeSpec,
    steps: &'a [(usize, Var)],
    log_space: bool,
    h: Trajectory<T>,
    /// `P(path) * Y_k` of every leaf, in visiting order.
    total: Vec<T>,
}

impl<T: Scalar> Enumerator<'_, T> {
    fn combine(&self, acc: T, p: T) -> T {
        if self.log_space {
            acc + p.ln()
        } else {
            acc * p
        }
    }

    fn visit(&mut self, step: usize, acc: T) -> Result<(), SemError> {
        let Some(&(t, var)) = self.steps.get(step) else {
            let k = self.h.horizon();
            let p = if self.log_space { acc.exp() } else { acc };
            self.total.push(p * self.h.points[k].dose);
            return Ok(());
        };
        if self.h.points[t].competing {
            return self.visit(step + 1, acc);
        }
        if var == Var::Compete && self.h.points[t - 1].competing {
            self.mark_dead(t);
            self.visit(step + 1, acc)?;
            self.h.points[t].competing = false;
            return Ok(());
        }
        let schema = self.sem.schema();
        for (value, p) in self.sem.support(var, t, &self.h)? {
            if p <= T::zero() {
                continue;
            }
            let next = self.combine(acc, p);
            match var {
                Var::Compete => {
                    if as_flag(schema, var, t, value)? {
                        self.mark_dead(t);
                        self.visit(step + 1, next)?;
                        self.h.points[t].competing = false;
                    } else {
                        self.visit(step + 1, next)?;
                    }
                }
                Var::Treatment => {
                    let natural = as_flag(schema, var, t, value)?;
                    let positive = self.h.points[t].dose > T::zero();
                    self.h.points[t].treatment = self.regime.assign(t, positive, natural);
                    self.visit(step + 1, next)?;
                }
                Var::Covariate(i) => {
                    self.h.points[t].covariates[i] = value;
                    self.visit(step + 1, next)?;
                }
                Var::Dose => {
                    if value < T::zero() {
                        return Err(DrawError::NegativeDose {
                            var: schema.dose_name().to_string(),
                            k: t,
                            value: value.as_f64(),
                        }
                        .into());
                    }
                    self.h.points[t].dose = value;
                    self.visit(step + 1, next)?;
                }
                Var::Censor => unreachable!("censoring is eliminated"),
            }
        }
        Ok(())
    }

    fn mark_dead(&mut self, t: usize) {
        let carried = self.h.points[t - 1].covariates.clone();
        let p = &mut self.h.points[t];
        p.competing = true;
        p.covariates = carried;
        p.dose = T::zero();
        p.treatment = false;
    }
}
