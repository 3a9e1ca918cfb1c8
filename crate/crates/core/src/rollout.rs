//! Forward simulation of one trajectory under a regime, shared by the structural-model
//! simulator and the g-formula Monte Carlo.
//!
//! Within a time step the order is censoring, competing event, covariates, dose,
//! natural treatment, then the regime-assigned treatment. The natural treatment is
//! always drawn, even when the regime overrides it, so that the random streams of
//! later nodes line up across regimes.

use thiserror::Error;

use crate::panel::{TimePoint, Trajectory, Var, VariableSchema};
use crate::regimes::RegimeSpec;
use crate::rng::{NodeDraws, Purpose};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrawError {
    #[error("{var} at time {k}: non-finite {what}")]
    NonFinite { var: String, k: usize, what: &'static str },
    #[error("{var} at time {k}: binary node produced {value}")]
    NotBinary { var: String, k: usize, value: f64 },
    #[error("{var} at time {k}: negative dose {value}")]
    NegativeDose { var: String, k: usize, value: f64 },
    #[error("no model for {var} at time {k}")]
    MissingModel { var: String, k: usize },
    #[error("{var} at time {k}: {message}")]
    Unsupported { var: String, k: usize, message: String },
}

/// Source of conditional draws for each node.
pub trait Generator<T: Scalar>: Sync {
    fn schema(&self) -> &VariableSchema;

    /// Draws `var` at time `k`. Entries of `h` before `(k, var)` in the topological
    /// order are final; later ones are placeholders.
    fn draw(&self, var: Var, k: usize, h: &Trajectory<T>, draws: &mut NodeDraws) -> Result<T, DrawError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rolled<T> {
    pub trajectory: Trajectory<T>,
    /// Natural treatment per time; `false` where undefined (after death or censoring).
    pub natural: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
pub struct RollSpec<'a, T> {
    pub regime: &'a RegimeSpec,
    /// Last time index simulated.
    pub until: usize,
    pub eliminate_censoring: bool,
    pub seed: u64,
    pub purpose: Purpose,
    pub unit: u64,
    /// Observed baseline `(L_0, Y_0, A_0)`; when absent time 0 is drawn too.
    pub baseline: Option<&'a TimePoint<T>>,
    /// Whether to draw the treatment at `until`; it cannot affect any simulated dose.
    pub treat_last: bool,
}

pub(crate) fn as_flag<T: Scalar>(schema: &VariableSchema, var: Var, k: usize, v: T) -> Result<bool, DrawError> {
    if v == T::zero() {
        Ok(false)
    } else if v == T::one() {
        Ok(true)
    } else {
        Err(DrawError::NotBinary { var: schema.name(var).to_string(), k, value: v.as_f64() })
    }
}

pub fn roll<T: Scalar, G: Generator<T> + ?Sized>(
    gen: &G,
    spec: &RollSpec<'_, T>,
    id: String,
) -> Result<Rolled<T>, DrawError> {
    let schema = gen.schema();
    let n_cov = schema.n_covariates();
    let mut h = Trajectory::new(id, vec![TimePoint::new(vec![T::zero(); n_cov], T::zero(), false); spec.until + 1]);
    let mut natural = vec![false; spec.until + 1];
    let draw = |var: Var, k: usize, h: &Trajectory<T>| {
        let mut d = NodeDraws::new(spec.seed, spec.purpose, spec.unit, var, k);
        let v = gen.draw(var, k, h, &mut d)?;
        if !v.is_finite() {
            return Err(DrawError::NonFinite { var: schema.name(var).to_string(), k, what: "draw" });
        }
        Ok(v)
    };

    for k in 0..=spec.until {
        if k > 0 {
            let prev_dead = h.points[k - 1].competing;
            if schema.has_censoring() && !spec.eliminate_censoring && !prev_dead {
                let c = draw(Var::Censor, k, &h)?;
                if as_flag(schema, Var::Censor, k, c)? {
                    for p in &mut h.points[k..] {
                        *p = TimePoint::missing(n_cov);
                    }
                    break;
                }
            }
            let dead = prev_dead
                || (schema.has_competing() && {
                    let d = draw(Var::Compete, k, &h)?;
                    as_flag(schema, Var::Compete, k, d)?
                });
            if dead {
                let carried = h.points[k - 1].covariates.clone();
                let p = &mut h.points[k];
                p.competing = true;
                p.covariates = carried;
                p.dose = T::zero();
                p.treatment = false;
                continue;
            }
        }
        let natural_a = match (k, spec.baseline) {
            (0, Some(b)) => {
                let p = &mut h.points[0];
                p.covariates.clone_from(&b.covariates);
                p.dose = b.dose;
                b.treatment
            }
            _ => {
                for i in 0..n_cov {
                    let v = draw(Var::Covariate(i), k, &h)?;
                    h.points[k].covariates[i] = v;
                }
                let y = draw(Var::Dose, k, &h)?;
                if y < T::zero() {
                    return Err(DrawError::NegativeDose { var: schema.dose_name().to_string(), k, value: y.as_f64() });
                }
                h.points[k].dose = y;
                if k == spec.until && !spec.treat_last {
                    break;
                }
                let a = draw(Var::Treatment, k, &h)?;
                as_flag(schema, Var::Treatment, k, a)?
            }
        };
        natural[k] = natural_a;
        let positive = h.points[k].dose > T::zero();
        h.points[k].treatment = spec.regime.assign(k, positive, natural_a);
    }
    Ok(Rolled { trajectory: h, natural })
}
