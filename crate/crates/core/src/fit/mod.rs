//! Parametric conditional models: logistic regression by iteratively reweighted
//! least squares, weighted linear regression, and the two-part hurdle dose model.

mod design;
mod linalg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Family, FormulaError, FormulaSpec, Term};
use crate::panel::{History, Panel, Var, VariableSchema};
use crate::rng::NodeDraws;
use crate::scalar::{logistic, Scalar};

pub use design::{build_design, Design, RowSource};
pub use linalg::{dot, Matrix};

use linalg::{weighted_least_squares, RankDeficient};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no rows to fit{context}")]
    Empty { context: String },
    #[error("rank-deficient design: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },
    #[error("perfect separation: {detail}")]
    Separation { detail: String },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid outcome at row {row}: {value}")]
    InvalidOutcome { row: usize, value: f64 },
    #[error("non-finite design value for subject {subject} at time {k} in column `{column}`")]
    NonFinite { subject: String, k: usize, column: String },
    #[error("time {k} is outside the panel horizon {horizon}")]
    TimeOutOfRange { k: usize, horizon: usize },
    #[error("family {family} cannot model {var}")]
    FamilyMismatch { family: Family, var: String },
    #[error("{var}: {source}")]
    Formula { var: String, source: FormulaError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions<T> {
    /// Convergence threshold on the largest absolute coefficient update.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Ridge penalty used to refit after detected separation; `None` reports the
    /// separation as an error.
    pub separation_ridge: Option<T>,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self { tolerance: T::fit_tolerance(), max_iterations: 100, separation_ridge: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T> {
    pub iterations: usize,
    pub deviance: T,
    pub converged: bool,
    pub rows: usize,
    /// Ridge penalty applied after separation, if any.
    pub ridge: Option<T>,
    /// Degenerate-data notes, e.g. all doses zero.
    pub note: Option<String>,
}

fn check_inputs<T: Scalar>(x: &Matrix<T>, y: &[T], w: &[T]) -> Result<(), FitError> {
    assert_eq!(x.rows(), y.len(), "outcome length");
    assert_eq!(x.rows(), w.len(), "weight length");
    if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v < T::zero()) {
        return Err(FitError::InvalidWeights(format!("weight {bad}")));
    }
    if x.rows() == 0 || w.iter().all(|v| *v == T::zero()) {
        return Err(FitError::Empty { context: String::new() });
    }
    if let Some(row) = y.iter().position(|v| !v.is_finite()) {
        return Err(FitError::InvalidOutcome { row, value: y[row].as_f64() });
    }
    Ok(())
}

fn rank_error(names: &[String], e: RankDeficient) -> FitError {
    FitError::RankDeficient { column: names.get(e.0).cloned().unwrap_or_else(|| format!("#{}", e.0)) }
}

fn column_names(cols: usize, names: Option<&[String]>) -> Vec<String> {
    names.map_or_else(|| (0..cols).map(|j| format!("x{j}")).collect(), <[String]>::to_vec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<T> {
    pub coefficients: Vec<T>,
    /// Inverse Fisher information `(X' W X)^{-1}` at the estimate.
    pub covariance: Vec<Vec<T>>,
    pub diagnostics: Diagnostics<T>,
}

impl<T: Scalar> LogisticFit<T> {
    pub fn probability(&self, row: &[T]) -> T {
        logistic(dot(&self.coefficients, row))
    }

    pub fn standard_errors(&self) -> Vec<T> {
        (0..self.coefficients.len()).map(|j| self.covariance[j][j].sqrt()).collect()
    }
}

fn bernoulli_deviance<T: Scalar>(x: &Matrix<T>, y: &[T], w: &[T], beta: &[T]) -> T {
    let two = T::one() + T::one();
    (0..x.rows()).fold(T::zero(), |acc, i| {
        let eta = dot(x.row(i), beta);
        // -log p = log(1 + exp(-eta)), computed stably
        let nll = |e: T| if e > T::zero() { (-e).exp().ln_1p() } else { (e).exp().ln_1p() - e };
        let l = if y[i] > T::zero() { nll(eta) } else { nll(-eta) };
        acc + two * w[i] * l
    })
}

/// Weighted logistic regression. `names` label columns in error messages.
pub fn fit_logistic<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    w: &[T],
    names: Option<&[String]>,
    opts: &FitOptions<T>,
) -> Result<LogisticFit<T>, FitError> {
    check_inputs(x, y, w)?;
    let names = column_names(x.cols(), names);
    if let Some(row) = y.iter().position(|v| *v != T::zero() && *v != T::one()) {
        return Err(FitError::InvalidOutcome { row, value: y[row].as_f64() });
    }
    let positive = y.iter().zip(w).any(|(y, w)| *y == T::one() && *w > T::zero());
    let negative = y.iter().zip(w).any(|(y, w)| *y == T::zero() && *w > T::zero());
    match irls(x, y, w, &names, opts, T::zero()) {
        Ok(fit) if positive && negative => Ok(fit),
        Ok(_) | Err(FitError::Separation { .. }) if opts.separation_ridge.is_some() => {
            let ridge = opts.separation_ridge.expect("checked");
            let mut fit = irls(x, y, w, &names, opts, ridge)?;
            fit.diagnostics.ridge = Some(ridge);
            Ok(fit)
        }
        Ok(_) => Err(FitError::Separation { detail: format!("all outcomes are {}", if positive { 1 } else { 0 }) }),
        Err(e) => Err(e),
    }
}

fn irls<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    w: &[T],
    names: &[String],
    opts: &FitOptions<T>,
    ridge: T,
) -> Result<LogisticFit<T>, FitError> {
    let n = x.rows();
    let p = x.cols();
    let floor = T::epsilon();
    let mut beta = vec![T::zero(); p];
    let mut deviance = bernoulli_deviance(x, y, w, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut working_w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    while iterations < opts.max_iterations {
        iterations += 1;
        for i in 0..n {
            let eta = dot(x.row(i), &beta);
            let mu = logistic(eta);
            let v = (mu * (T::one() - mu)).max(floor);
            working_w[i] = w[i] * v;
            z[i] = eta + (y[i] - mu) / v;
        }
        let ls = weighted_least_squares(x, &z, &working_w, ridge).map_err(|e| rank_error(names, e))?;
        let mut step: Vec<T> = ls.beta.iter().zip(&beta).map(|(a, b)| *a - *b).collect();
        // step halving keeps the penalised deviance from increasing
        let penalty = |b: &[T]| ridge * dot(b, b);
        let mut candidate: Vec<T>;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| *b + *s).collect();
            let d = bernoulli_deviance(x, y, w, &candidate);
            if d + penalty(&candidate) <= deviance + penalty(&beta) + T::fit_tolerance() || halvings >= 30 {
                deviance = d;
                break;
            }
            step.iter_mut().for_each(|s| *s = *s / (T::one() + T::one()));
            halvings += 1;
        }
        let delta = step.iter().fold(T::zero(), |m, s| m.max(s.abs()));
        beta = candidate;
        if delta < opts.tolerance {
            converged = true;
            break;
        }
    }
    let max_eta = (0..n).fold(T::zero(), |m, i| m.max(dot(x.row(i), &beta).abs()));
    if ridge == T::zero() && !converged && max_eta > T::of(30.0) {
        return Err(FitError::Separation {
            detail: format!("linear predictor reached |eta| = {max_eta} after {iterations} iterations"),
        });
    }
    // information at the estimate
    for i in 0..n {
        let mu = logistic(dot(x.row(i), &beta));
        working_w[i] = w[i] * (mu * (T::one() - mu)).max(floor);
    }
    let ls = weighted_least_squares(x, &vec![T::zero(); n], &working_w, ridge).map_err(|e| rank_error(names, e))?;
    Ok(LogisticFit {
        coefficients: beta,
        covariance: ls.xtwx_inv,
        diagnostics: Diagnostics { iterations, deviance, converged, rows: n, ridge: None, note: None },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit<T> {
    pub coefficients: Vec<T>,
    /// Residual variance `sum w r^2 / sum w * n / (n - p)`; 0 when `n <= p`.
    pub sigma2: T,
    pub covariance: Vec<Vec<T>>,
    pub diagnostics: Diagnostics<T>,
}

impl<T: Scalar> LinearFit<T> {
    pub fn mean(&self, row: &[T]) -> T {
        dot(&self.coefficients, row)
    }

    pub fn standard_errors(&self) -> Vec<T> {
        (0..self.coefficients.len()).map(|j| self.covariance[j][j].sqrt()).collect()
    }
}

/// Weighted least squares. Weights are treated as relative: multiplying all of them
/// by a constant changes nothing.
pub fn fit_linear<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    w: &[T],
    names: Option<&[String]>,
) -> Result<LinearFit<T>, FitError> {
    check_inputs(x, y, w)?;
    let names = column_names(x.cols(), names);
    let n_eff = w.iter().filter(|v| **v > T::zero()).count();
    let total: T = crate::scalar::pairwise_sum(w);
    let scale = T::of_usize(n_eff) / total;
    let wn: Vec<T> = w.iter().map(|v| *v * scale).collect();
    let ls = weighted_least_squares(x, y, &wn, T::zero()).map_err(|e| rank_error(&names, e))?;
    let p = x.cols();
    let rss = (0..x.rows()).fold(T::zero(), |acc, i| {
        let r = y[i] - dot(x.row(i), &ls.beta);
        acc + wn[i] * r * r
    });
    let sigma2 = if n_eff > p { rss / T::of_usize(n_eff - p) } else { T::zero() };
    let covariance = ls.xtwx_inv.iter().map(|r| r.iter().map(|v| *v * sigma2).collect()).collect();
    Ok(LinearFit {
        coefficients: ls.beta,
        sigma2,
        covariance,
        diagnostics: Diagnostics {
            iterations: 1,
            deviance: rss,
            converged: true,
            rows: x.rows(),
            ridge: None,
            note: None,
        },
    })
}

/// Probability part of a hurdle model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PositivePart<T> {
    Fitted(LogisticFit<T>),
    /// Every weighted dose was zero (0) or positive (1).
    Constant(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurdleFit<T> {
    pub positive: PositivePart<T>,
    /// Log-dose regression over positive doses; absent when no dose is positive.
    pub log_dose: Option<LinearFit<T>>,
    pub note: Option<String>,
}

impl<T: Scalar> HurdleFit<T> {
    pub fn probability(&self, row: &[T]) -> T {
        match &self.positive {
            PositivePart::Fitted(f) => f.probability(row),
            PositivePart::Constant(p) => *p,
        }
    }

    /// `E[dose | dose > 0] = exp(mu + sigma^2 / 2)`.
    pub fn positive_mean(&self, dose_row: &[T]) -> T {
        self.log_dose.as_ref().map_or(T::zero(), |f| (f.mean(dose_row) + f.sigma2 / (T::one() + T::one())).exp())
    }

    pub fn mean(&self, row: &[T], dose_row: &[T]) -> T {
        let p = self.probability(row);
        if p == T::zero() {
            T::zero()
        } else {
            p * self.positive_mean(dose_row)
        }
    }
}

/// Two-part dose model: logistic on `1{dose > 0}` over all rows (`x`), linear on
/// `log(dose)` over positive rows (`x_dose`).
pub fn fit_hurdle_dose<T: Scalar>(
    x: &Matrix<T>,
    x_dose: &Matrix<T>,
    doses: &[T],
    w: &[T],
    names: (Option<&[String]>, Option<&[String]>),
    opts: &FitOptions<T>,
) -> Result<HurdleFit<T>, FitError> {
    check_inputs(x, doses, w)?;
    if let Some(row) = doses.iter().position(|d| *d < T::zero()) {
        return Err(FitError::InvalidOutcome { row, value: doses[row].as_f64() });
    }
    let positive: Vec<bool> = doses.iter().zip(w).map(|(d, w)| *d > T::zero() && *w > T::zero()).collect();
    let any_zero = doses.iter().zip(w).any(|(d, w)| *d == T::zero() && *w > T::zero());
    if !positive.iter().any(|p| *p) {
        return Ok(HurdleFit {
            positive: PositivePart::Constant(T::zero()),
            log_dose: None,
            note: Some("all doses are zero; predicted mean is 0".into()),
        });
    }
    let (positive_part, note) = if any_zero {
        let ind: Vec<T> = positive.iter().map(|p| if *p { T::one() } else { T::zero() }).collect();
        (PositivePart::Fitted(fit_logistic(x, &ind, w, names.0, opts)?), None)
    } else {
        (PositivePart::Constant(T::one()), Some("all doses are positive; P(dose > 0) = 1".to_string()))
    };
    let xd = x_dose.select_rows(&positive);
    let logs: Vec<T> = doses.iter().zip(&positive).filter(|(_, p)| **p).map(|(d, _)| d.ln()).collect();
    let wd: Vec<T> = w.iter().zip(&positive).filter(|(_, p)| **p).map(|(w, _)| *w).collect();
    let log_dose = fit_linear(&xd, &logs, &wd, names.1)?;
    Ok(HurdleFit { positive: positive_part, log_dose: Some(log_dose), note })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelKind<T> {
    Logistic(LogisticFit<T>),
    Linear(LinearFit<T>),
    Hurdle(HurdleFit<T>),
}

/// A fitted conditional model bound to its formula terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    pub response: Var,
    pub times: Vec<usize>,
    pub columns: Vec<Term>,
    /// Log-dose columns of a hurdle model; empty otherwise.
    pub dose_columns: Vec<Term>,
    pub column_names: Vec<String>,
    pub kind: ModelKind<T>,
}

fn row_of<T: Scalar, H: History<T> + ?Sized>(cols: &[Term], h: &H, k: usize) -> Vec<T> {
    cols.iter().map(|t| t.eval(h, k)).collect()
}

impl<T: Scalar> FittedModel<T> {
    pub fn family(&self) -> Family {
        match self.kind {
            ModelKind::Logistic(_) => Family::Logistic,
            ModelKind::Linear(_) => Family::Linear,
            ModelKind::Hurdle(_) => Family::Hurdle,
        }
    }

    /// `P(response = 1)` for logistic models, `P(response > 0)` for hurdle models.
    pub fn probability<H: History<T> + ?Sized>(&self, h: &H, k: usize) -> Option<T> {
        match &self.kind {
            ModelKind::Logistic(f) => Some(f.probability(&row_of(&self.columns, h, k))),
            ModelKind::Hurdle(f) => Some(f.probability(&row_of(&self.columns, h, k))),
            ModelKind::Linear(_) => None,
        }
    }

    pub fn mean<H: History<T> + ?Sized>(&self, h: &H, k: usize) -> T {
        let row = row_of(&self.columns, h, k);
        match &self.kind {
            ModelKind::Logistic(f) => f.probability(&row),
            ModelKind::Linear(f) => f.mean(&row),
            ModelKind::Hurdle(f) => f.mean(&row, &row_of(&self.dose_columns, h, k)),
        }
    }

    /// One draw from the fitted conditional distribution. Consumes a uniform for the
    /// binary or positivity part and then a normal for the continuous part.
    pub fn draw<H: History<T> + ?Sized>(&self, h: &H, k: usize, draws: &mut NodeDraws) -> T {
        let row = row_of(&self.columns, h, k);
        let flag = |b: bool| if b { T::one() } else { T::zero() };
        match &self.kind {
            ModelKind::Logistic(f) => flag(T::of(draws.uniform()) < f.probability(&row)),
            ModelKind::Linear(f) => f.mean(&row) + f.sigma2.sqrt() * T::of(draws.normal()),
            ModelKind::Hurdle(f) => {
                let u = T::of(draws.uniform());
                let z = T::of(draws.normal());
                if u < f.probability(&row) {
                    let lf = f.log_dose.as_ref().expect("positive probability implies a log-dose fit");
                    (lf.mean(&row_of(&self.dose_columns, h, k)) + lf.sigma2.sqrt() * z).exp()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn diagnostics(&self) -> Vec<(&'static str, &Diagnostics<T>)> {
        match &self.kind {
            ModelKind::Logistic(f) => vec![("logistic", &f.diagnostics)],
            ModelKind::Linear(f) => vec![("linear", &f.diagnostics)],
            ModelKind::Hurdle(f) => {
                let mut v = Vec::new();
                if let PositivePart::Fitted(p) = &f.positive {
                    v.push(("positive", &p.diagnostics));
                }
                if let Some(l) = &f.log_dose {
                    v.push(("log_dose", &l.diagnostics));
                }
                v
            }
        }
    }

    pub fn note(&self) -> Option<&str> {
        match &self.kind {
            ModelKind::Hurdle(f) => f.note.as_deref(),
            _ => None,
        }
    }
}

/// Fits `formula` on the rows of `panel` at `times` (see [`build_design`] for the
/// row filter), with unit weights.
pub fn fit_formula<T: Scalar>(
    panel: &Panel<T>,
    formula: &FormulaSpec,
    times: &[usize],
    opts: &FitOptions<T>,
) -> Result<FittedModel<T>, FitError> {
    let schema = panel.schema();
    let var_name = schema.name(formula.response).to_string();
    let binary = matches!(formula.response, Var::Treatment | Var::Censor | Var::Compete);
    let allowed = match formula.family {
        Family::Logistic => true,
        Family::Linear => !binary && formula.response != Var::Dose,
        Family::Hurdle => formula.response == Var::Dose,
    };
    if !allowed {
        return Err(FitError::FamilyMismatch { family: formula.family, var: var_name });
    }
    let d = build_design(panel, formula, times)?;
    let context = || format!(" for {var_name} at times {times:?}");
    let w = vec![T::one(); d.outcomes.len()];
    if d.outcomes.is_empty() {
        return Err(FitError::Empty { context: context() });
    }
    let names: Vec<String> = d.columns.iter().map(|t| t.render(schema)).collect();
    let with_context = |e: FitError| match e {
        FitError::Separation { detail } => FitError::Separation { detail: format!("{detail}{}", context()) },
        other => other,
    };
    let kind = match formula.family {
        Family::Logistic => {
            ModelKind::Logistic(fit_logistic(&d.rows, &d.outcomes, &w, Some(&names), opts).map_err(with_context)?)
        }
        Family::Linear => ModelKind::Linear(fit_linear(&d.rows, &d.outcomes, &w, Some(&names))?),
        Family::Hurdle => {
            let dose_names: Vec<String> = d.dose_columns.iter().map(|t| t.render(schema)).collect();
            let dose_rows = d.dose_rows.as_ref().expect("hurdle design has dose rows");
            ModelKind::Hurdle(
                fit_hurdle_dose(&d.rows, dose_rows, &d.outcomes, &w, (Some(&names), Some(&dose_names)), opts)
                    .map_err(with_context)?,
            )
        }
    };
    Ok(FittedModel {
        response: formula.response,
        times: d.times.clone(),
        columns: d.columns,
        dose_columns: d.dose_columns,
        column_names: names,
        kind,
    })
}

/// Formula for one variable, with optional per-time overrides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaSet {
    pub default: FormulaSpec,
    pub overrides: BTreeMap<usize, FormulaSpec>,
}

impl FormulaSet {
    pub fn new(default: FormulaSpec) -> Self {
        Self { default, overrides: BTreeMap::new() }
    }

    pub fn with_override(mut self, k: usize, formula: FormulaSpec) -> Self {
        self.overrides.insert(k, formula);
        self
    }

    pub fn response(&self) -> Var {
        self.default.response
    }

    pub fn family(&self) -> Family {
        self.default.family
    }

    pub fn for_time(&self, k: usize) -> &FormulaSpec {
        self.overrides.get(&k).unwrap_or(&self.default)
    }

    pub fn check_at(&self, schema: &VariableSchema, k: usize) -> Result<(), FitError> {
        self.for_time(k)
            .check_at(schema, k)
            .map_err(|source| FitError::Formula { var: schema.name(self.response()).to_string(), source })
    }
}

/// Fitted models of one variable covering a set of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSet<T> {
    pub response: Var,
    pub models: Vec<FittedModel<T>>,
}

impl<T: Scalar> FittedSet<T> {
    pub fn for_time(&self, k: usize) -> Option<&FittedModel<T>> {
        self.models.iter().find(|m| m.times.contains(&k))
    }
}

/// Fits a formula set over `times`: overridden times on their own, the rest pooled
/// in one model or fitted per time according to the default formula.
pub fn fit_formula_set<T: Scalar>(
    panel: &Panel<T>,
    set: &FormulaSet,
    times: &[usize],
    opts: &FitOptions<T>,
) -> Result<FittedSet<T>, FitError> {
    let mut models = Vec::new();
    let mut pooled = Vec::new();
    for &k in times {
        match set.overrides.get(&k) {
            Some(f) => models.push(fit_formula(panel, f, &[k], opts)?),
            None if set.default.pooled => pooled.push(k),
            None => models.push(fit_formula(panel, &set.default, &[k], opts)?),
        }
    }
    if !pooled.is_empty() {
        models.push(fit_formula(panel, &set.default, &pooled, opts)?);
    }
    Ok(FittedSet { response: set.response(), models })
}

#[cfg(test)]
mod tests;
