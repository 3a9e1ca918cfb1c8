//! Formula mini-language binding model terms to lagged panel variables.
//!
//! Model formulas read `response ~ term + term + ...`:
//!
//! | syntax          | meaning                                                 |
//! |-----------------|---------------------------------------------------------|
//! | `X[-d]`         | `X` at `k - d`                                          |
//! | `X[0]`, `X`     | `X` at `k` (only for variables earlier within the time) |
//! | `X[@0]`         | baseline value of `X`                                   |
//! | `pos(X[..])`    | indicator `X > 0`                                       |
//! | `time`          | the time index `k` as a number                          |
//! | `factor(time)`  | one indicator per fitted time after the first           |
//! | `a:b`           | product of `a` and `b`                                  |
//! | `a*b`           | `a + b + a:b` (all sub-products)                        |
//! | `1`             | intercept; always included                              |
//!
//! Linear predictors of structural equations use the same atoms with numeric
//! coefficients: `-0.5 + 1.2*A[-1] + 0.3*L1[0]*Y[-1]`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{History, Var, VariableSchema};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("formula `{text}`: {message}")]
    Syntax { text: String, message: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("term `{term}` is not earlier than `{response}` within a time step")]
    NotPrior { term: String, response: String },
    #[error("term `{term}` needs lag {lag} but only {available} earlier time(s) exist at k={k}")]
    LagExceedsHistory { term: String, lag: usize, available: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Anchor {
    Lag(usize),
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Atom {
    Value {
        var: Var,
        anchor: Anchor,
    },
    Positive {
        var: Var,
        anchor: Anchor,
    },
    Time,
    /// Indicator of `k == s`, produced by expanding `factor(time)`.
    TimeIs(usize),
    /// `factor(time)` before expansion.
    TimeFactor,
}

impl Atom {
    fn var_anchor(&self) -> Option<(Var, Anchor)> {
        match *self {
            Atom::Value { var, anchor } | Atom::Positive { var, anchor } => Some((var, anchor)),
            _ => None,
        }
    }

    fn source_time(anchor: Anchor, k: usize) -> Option<usize> {
        match anchor {
            Anchor::Lag(d) => k.checked_sub(d),
            Anchor::Baseline => Some(0),
        }
    }

    pub fn eval<T: Scalar, H: History<T> + ?Sized>(&self, h: &H, k: usize) -> T {
        let flag = |b: bool| if b { T::one() } else { T::zero() };
        match *self {
            Atom::Value { var, anchor } => Self::source_time(anchor, k).map_or(T::nan(), |s| h.value(var, s)),
            Atom::Positive { var, anchor } => {
                let v = Self::source_time(anchor, k).map_or(T::nan(), |s| h.value(var, s));
                if v.is_nan() {
                    v
                } else {
                    flag(v > T::zero())
                }
            }
            Atom::Time => T::of_usize(k),
            Atom::TimeIs(s) => flag(k == s),
            Atom::TimeFactor => panic!("factor(time) must be expanded before evaluation"),
        }
    }

    fn render(&self, schema: &VariableSchema) -> String {
        let anchored = |var: Var, anchor: Anchor| match anchor {
            Anchor::Lag(0) => format!("{}[0]", schema.name(var)),
            Anchor::Lag(d) => format!("{}[-{d}]", schema.name(var)),
            Anchor::Baseline => format!("{}[@0]", schema.name(var)),
        };
        match *self {
            Atom::Value { var, anchor } => anchored(var, anchor),
            Atom::Positive { var, anchor } => format!("pos({})", anchored(var, anchor)),
            Atom::Time => "time".into(),
            Atom::TimeIs(s) => format!("time=={s}"),
            Atom::TimeFactor => "factor(time)".into(),
        }
    }
}

/// Product of atoms. The empty product is the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Term {
    pub atoms: Vec<Atom>,
}

impl Term {
    pub fn intercept() -> Self {
        Self::default()
    }

    pub fn is_intercept(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn eval<T: Scalar, H: History<T> + ?Sized>(&self, h: &H, k: usize) -> T {
        self.atoms.iter().fold(T::one(), |acc, a| acc * a.eval(h, k))
    }

    pub fn render(&self, schema: &VariableSchema) -> String {
        if self.atoms.is_empty() {
            return "(intercept)".into();
        }
        self.atoms.iter().map(|a| a.render(schema)).collect::<Vec<_>>().join(":")
    }

    fn has_time_factor(&self) -> bool {
        self.atoms.contains(&Atom::TimeFactor)
    }

    /// Checks that every atom refers to a variable available before `response` at `k`.
    pub fn check(&self, schema: &VariableSchema, response: Var, k: usize) -> Result<(), FormulaError> {
        for atom in &self.atoms {
            let Some((var, anchor)) = atom.var_anchor() else { continue };
            let same_time = match anchor {
                Anchor::Lag(0) => true,
                Anchor::Lag(d) => {
                    if d > k {
                        return Err(FormulaError::LagExceedsHistory {
                            term: atom.render(schema),
                            lag: d,
                            available: k,
                            k,
                        });
                    }
                    false
                }
                Anchor::Baseline => k == 0,
            };
            if same_time && var >= response {
                return Err(FormulaError::NotPrior {
                    term: atom.render(schema),
                    response: schema.name(response).to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Distribution family of a fitted conditional model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    Linear,
    Hurdle,
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" | "binomial" => Ok(Family::Logistic),
            "linear" | "gaussian" => Ok(Family::Linear),
            "hurdle" | "hurdle-dose" | "hurdle_dose" => Ok(Family::Hurdle),
            other => Err(format!("unknown family `{other}`")),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Logistic => "logistic",
            Family::Linear => "linear",
            Family::Hurdle => "hurdle",
        })
    }
}

/// A parsed model formula.
///
/// For the hurdle family a `|` splits the right-hand side into the terms of the
/// positive-dose probability and the terms of the log-dose mean:
/// `Y ~ L1*A[-1] | A[-1]`. Without `|` both parts share the same terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaSpec {
    pub response: Var,
    pub terms: Vec<Term>,
    pub dose_terms: Option<Vec<Term>>,
    pub family: Family,
    pub pooled: bool,
}

impl FormulaSpec {
    pub fn parse(text: &str, schema: &VariableSchema, family: Family, pooled: bool) -> Result<Self, FormulaError> {
        let syntax = |m: &str| FormulaError::Syntax { text: text.to_string(), message: m.to_string() };
        let (lhs, rhs) = text.split_once('~').ok_or_else(|| syntax("missing `~`"))?;
        let lhs = lhs.trim();
        let response = schema.var(lhs).ok_or_else(|| FormulaError::UnknownVariable(lhs.to_string()))?;
        let (main, dose) = match rhs.split_once('|') {
            Some(_) if family != Family::Hurdle => return Err(syntax("`|` is only allowed for the hurdle family")),
            Some((a, b)) => (a, Some(b)),
            None => (rhs, None),
        };
        let terms = parse_rhs(main, schema).map_err(|m| syntax(&m))?;
        let dose_terms = dose.map(|d| parse_rhs(d, schema).map_err(|m| syntax(&m))).transpose()?;
        Ok(Self { response, terms, dose_terms, family, pooled })
    }

    /// Terms of the log-dose part of a hurdle model.
    pub fn log_dose_terms(&self) -> &[Term] {
        self.dose_terms.as_deref().unwrap_or(&self.terms)
    }

    /// Columns of the design matrix for rows drawn from `times`: intercept first, then
    /// the terms in order with `factor(time)` expanded against the sorted time set.
    pub fn columns(&self, times: &[usize]) -> Vec<Term> {
        expand_columns(&self.terms, times)
    }

    pub fn log_dose_columns(&self, times: &[usize]) -> Vec<Term> {
        expand_columns(self.log_dose_terms(), times)
    }

    pub fn check_at(&self, schema: &VariableSchema, k: usize) -> Result<(), FormulaError> {
        self.terms.iter().chain(self.dose_terms.iter().flatten()).try_for_each(|t| t.check(schema, self.response, k))
    }

    /// Largest lag used by any term.
    pub fn max_lag(&self) -> usize {
        self.terms
            .iter()
            .chain(self.dose_terms.iter().flatten())
            .flat_map(|t| &t.atoms)
            .filter_map(|a| match a.var_anchor() {
                Some((_, Anchor::Lag(d))) => Some(d),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

fn expand_columns(terms: &[Term], times: &[usize]) -> Vec<Term> {
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut cols = vec![Term::intercept()];
    for term in terms {
        if term.has_time_factor() {
            for &s in sorted.iter().skip(1) {
                let atoms =
                    term.atoms.iter().map(|a| if *a == Atom::TimeFactor { Atom::TimeIs(s) } else { *a }).collect();
                cols.push(Term { atoms });
            }
        } else {
            cols.push(term.clone());
        }
    }
    cols
}

/// `intercept + sum(coef * term)`, the linear predictor of a structural equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor<T> {
    pub intercept: T,
    pub terms: Vec<(T, Term)>,
}

impl<T: Scalar> LinearPredictor<T> {
    pub fn constant(value: T) -> Self {
        Self { intercept: value, terms: Vec::new() }
    }

    pub fn eval<H: History<T> + ?Sized>(&self, h: &H, k: usize) -> T {
        self.terms.iter().fold(self.intercept, |acc, (c, t)| acc + *c * t.eval(h, k))
    }

    pub fn check(&self, schema: &VariableSchema, response: Var, k: usize) -> Result<(), FormulaError> {
        self.terms.iter().try_for_each(|(_, t)| t.check(schema, response, k))
    }

    pub fn parse(text: &str, schema: &VariableSchema) -> Result<Self, FormulaError> {
        let syntax = |m: &str| FormulaError::Syntax { text: text.to_string(), message: m.to_string() };
        let mut intercept = T::zero();
        let mut terms: Vec<(T, Term)> = Vec::new();
        for (negative, chunk) in split_signed(text).map_err(|m| syntax(&m))? {
            let mut coef = if negative { -T::one() } else { T::one() };
            let mut atoms = Vec::new();
            for factor in chunk.split('*').map(str::trim) {
                if factor.is_empty() {
                    return Err(syntax("empty factor"));
                }
                match factor.parse::<f64>() {
                    Ok(v) => coef = coef * T::of(v),
                    Err(_) => atoms.push(parse_atom(factor, schema).map_err(|m| syntax(&m))?),
                }
            }
            if atoms.contains(&Atom::TimeFactor) {
                return Err(syntax("factor(time) is only allowed in model formulas"));
            }
            if atoms.is_empty() {
                intercept = intercept + coef;
            } else {
                terms.push((coef, Term { atoms }));
            }
        }
        Ok(Self { intercept, terms })
    }

    pub fn render(&self, schema: &VariableSchema) -> String {
        let mut out = format!("{}", self.intercept);
        for (c, t) in &self.terms {
            let sign = if *c < T::zero() { '-' } else { '+' };
            out.push_str(&format!(" {sign} {}*{}", c.abs(), t.render(schema)));
        }
        out
    }
}

fn parse_rhs(rhs: &str, schema: &VariableSchema) -> Result<Vec<Term>, String> {
    let mut terms: Vec<Term> = Vec::new();
    for chunk in rhs.split('+').map(str::trim) {
        if chunk.is_empty() {
            return Err("empty term".into());
        }
        if chunk == "1" {
            continue;
        }
        let factors = chunk
            .split('*')
            .map(|f| f.split(':').map(|a| parse_atom(a.trim(), schema)).collect::<Result<Vec<Atom>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        // a*b*c expands to every non-empty sub-product, lower orders first
        let n = factors.len();
        let mut subsets: Vec<u32> = (1..(1u32 << n)).collect();
        subsets.sort_by_key(|m| (m.count_ones(), *m));
        for mask in subsets {
            let atoms: Vec<Atom> =
                (0..n).filter(|i| mask & (1 << i) != 0).flat_map(|i| factors[i].iter().copied()).collect();
            let term = Term { atoms };
            if !terms.contains(&term) {
                terms.push(term);
            }
        }
    }
    Ok(terms)
}

/// Splits `a - b + c` into signed chunks, ignoring signs inside brackets and exponents.
fn split_signed(text: &str) -> Result<Vec<(bool, &str)>, String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let mut negative = false;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'[' | b'(' => depth += 1,
            b']' | b')' => depth -= 1,
            b'+' | b'-' if depth == 0 => {
                let prev = text[..i].trim_end();
                let exponent = prev.ends_with(['e', 'E'])
                    && prev[..prev.len() - 1].ends_with(|c: char| c.is_ascii_digit() || c == '.');
                if exponent && prev.len() == text[..i].len() {
                    continue;
                }
                let chunk = text[start..i].trim();
                if chunk.is_empty() {
                    // unary sign, possibly right after a binary one: `a + -2*b`
                    negative ^= b == b'-';
                } else {
                    out.push((negative, chunk));
                    negative = b == b'-';
                }
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err("unbalanced brackets".into());
    }
    let chunk = text[start..].trim();
    if chunk.is_empty() {
        return Err("empty expression".into());
    }
    out.push((negative, chunk));
    Ok(out)
}

fn parse_atom(text: &str, schema: &VariableSchema) -> Result<Atom, String> {
    match text {
        "time" => return Ok(Atom::Time),
        "factor(time)" => return Ok(Atom::TimeFactor),
        _ => {}
    }
    if let Some(inner) = text.strip_prefix("pos(").and_then(|r| r.strip_suffix(')')) {
        let (var, anchor) = parse_anchored(inner.trim(), schema)?;
        return Ok(Atom::Positive { var, anchor });
    }
    let (var, anchor) = parse_anchored(text, schema)?;
    Ok(Atom::Value { var, anchor })
}

fn parse_anchored(text: &str, schema: &VariableSchema) -> Result<(Var, Anchor), String> {
    let (name, anchor) = match text.split_once('[') {
        None => (text, Anchor::Lag(0)),
        Some((name, rest)) => {
            let inner = rest.strip_suffix(']').ok_or_else(|| format!("`{text}`: missing `]`"))?.trim();
            let anchor = if inner == "@0" {
                Anchor::Baseline
            } else if inner == "0" {
                Anchor::Lag(0)
            } else if let Some(d) = inner.strip_prefix('-') {
                Anchor::Lag(d.trim().parse().map_err(|_| format!("`{text}`: bad lag"))?)
            } else {
                return Err(format!("`{text}`: expected [-d], [0] or [@0]"));
            };
            (name.trim(), anchor)
        }
    };
    let var = schema.var(name).ok_or_else(|| format!("unknown variable `{name}`"))?;
    Ok((var, anchor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{TimePoint, Trajectory};

    fn schema() -> VariableSchema {
        VariableSchema::new(vec!["L1".into()], "Y", "A", None, Some("D".into()), 3).unwrap()
    }

    #[test]
    fn parses_model_formula() {
        let s = schema();
        let f = FormulaSpec::parse("Y ~ Y[-1] + A[-1] + L1[0] + L1[@0] + time", &s, Family::Hurdle, true).unwrap();
        assert_eq!(f.response, Var::Dose);
        let names: Vec<String> = f.columns(&[1, 2]).iter().map(|t| t.render(&s)).collect();
        assert_eq!(names, ["(intercept)", "Y[-1]", "A[-1]", "L1[0]", "L1[@0]", "time"]);
        assert_eq!(f.max_lag(), 1);
    }

    #[test]
    fn star_expands_and_factor_time_binds() {
        let s = schema();
        let f = FormulaSpec::parse("A ~ L1*pos(Y[0]) + factor(time)", &s, Family::Logistic, true).unwrap();
        let names: Vec<String> = f.columns(&[3, 1, 2]).iter().map(|t| t.render(&s)).collect();
        assert_eq!(names, ["(intercept)", "L1[0]", "pos(Y[0])", "L1[0]:pos(Y[0])", "time==2", "time==3"]);
    }

    #[test]
    fn hurdle_split_terms() {
        let s = schema();
        let f = FormulaSpec::parse("Y ~ L1*A[-1] | A[-1]", &s, Family::Hurdle, false).unwrap();
        assert_eq!(f.columns(&[1]).len(), 4);
        let names: Vec<String> = f.log_dose_columns(&[1]).iter().map(|t| t.render(&s)).collect();
        assert_eq!(names, ["(intercept)", "A[-1]"]);
        assert!(FormulaSpec::parse("A ~ L1 | Y", &s, Family::Logistic, true).is_err());
        let same = FormulaSpec::parse("Y ~ L1", &s, Family::Hurdle, true).unwrap();
        assert_eq!(same.log_dose_terms(), same.terms.as_slice());
    }

    #[test]
    fn ordering_and_lag_checks() {
        let s = schema();
        let bad = FormulaSpec::parse("Y ~ A[0]", &s, Family::Hurdle, true).unwrap();
        assert!(matches!(bad.check_at(&s, 1), Err(FormulaError::NotPrior { .. })));
        let lag2 = FormulaSpec::parse("Y ~ Y[-2]", &s, Family::Hurdle, true).unwrap();
        assert!(matches!(lag2.check_at(&s, 1), Err(FormulaError::LagExceedsHistory { .. })));
        assert!(lag2.check_at(&s, 2).is_ok());
        let base = FormulaSpec::parse("L1 ~ Y[@0]", &s, Family::Linear, true).unwrap();
        assert!(base.check_at(&s, 0).is_err() && base.check_at(&s, 1).is_ok());
        assert!(matches!(FormulaSpec::parse("Q ~ A", &s, Family::Linear, true), Err(FormulaError::UnknownVariable(_))));
    }

    #[test]
    fn linear_predictor_parses_and_evaluates() {
        let s = schema();
        let lp: LinearPredictor<f64> =
            LinearPredictor::parse("-0.5 + 2*A[-1] - 1e-1*L1[0]*pos(Y[-1]) + 0.25", &s).unwrap();
        assert_eq!(lp.intercept, -0.25);
        assert_eq!(lp.terms.len(), 2);
        let t = Trajectory::new("x", vec![TimePoint::new(vec![1.0], 3.0, true), TimePoint::new(vec![4.0], 0.0, false)]);
        // -0.25 + 2*1 - 0.1*4*1
        assert!((lp.eval(&t, 1) - 1.35).abs() < 1e-12);
        assert!(LinearPredictor::<f64>::parse("1 + ", &s).is_err());
        let neg: LinearPredictor<f64> = LinearPredictor::parse("- 1 + -2*A[-1] - -1*Y[-1]", &s).unwrap();
        assert_eq!(neg.intercept, -1.0);
        assert_eq!((neg.terms[0].0, neg.terms[1].0), (-2.0, 1.0));
        assert!(LinearPredictor::<f64>::parse("1 + Z[-1]", &s).is_err());
    }

    #[test]
    fn out_of_range_lag_evaluates_to_nan() {
        let t = Trajectory::new("x", vec![TimePoint::new(vec![1.0], 3.0, true)]);
        let a = Atom::Value { var: Var::Dose, anchor: Anchor::Lag(1) };
        assert!(a.eval::<f64, _>(&t, 0).is_nan());
    }
}
