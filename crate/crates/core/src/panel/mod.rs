//! Longitudinal panel data: schema, trajectories, ingestion and validation.

mod io;
mod schema;
mod validate;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use io::{load_panel, read_panel_file, write_panel, write_panel_file, Delimiter};
pub use schema::{Var, VariableSchema};
pub use validate::{validate_panel, Rule, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),
    #[error("subject {id}: duplicate row for time {time}")]
    DuplicateRow { id: String, time: usize },
    #[error("subject {id}: time index {time} exceeds horizon {horizon}")]
    TimeOutOfRange { id: String, time: usize, horizon: usize },
    #[error("subject {id}, time {time}: non-binary {column} value `{value}`")]
    NonBinary { id: String, time: usize, column: String, value: String },
    #[error("subject {id}, time {time}: negative dose {value}")]
    NegativeDose { id: String, time: usize, value: f64 },
    #[error("subject {id}: gap at time {time}")]
    Gap { id: String, time: usize },
    #[error("subject {id}, time {time}: missing value in column `{column}`")]
    MissingValue { id: String, time: usize, column: String },
    #[error("line {line}: cannot parse `{value}` in column `{column}`")]
    Parse { line: u64, column: String, value: String },
    #[error("duplicate subject id `{0}`")]
    DuplicateSubject(String),
    #[error("subject {id} does not conform to the schema: {reason}")]
    Nonconforming { id: String, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The record of one subject at one time index.
///
/// `observed == false` marks the analysis fields as missing, which only happens at
/// and after censoring; the stored values are then placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint<T> {
    pub censored: bool,
    pub competing: bool,
    pub covariates: Vec<T>,
    pub dose: T,
    pub treatment: bool,
    pub observed: bool,
}

impl<T: Scalar> TimePoint<T> {
    pub fn new(covariates: Vec<T>, dose: T, treatment: bool) -> Self {
        Self { censored: false, competing: false, covariates, dose, treatment, observed: true }
    }

    /// Placeholder for a censored time point.
    pub fn missing(n_covariates: usize) -> Self {
        Self {
            censored: true,
            competing: false,
            covariates: vec![T::zero(); n_covariates],
            dose: T::zero(),
            treatment: false,
            observed: false,
        }
    }

    pub fn value(&self, var: Var) -> T {
        let flag = |b: bool| if b { T::one() } else { T::zero() };
        if var == Var::Censor {
            return flag(self.censored);
        }
        if !self.observed {
            return T::nan();
        }
        match var {
            Var::Censor => unreachable!(),
            Var::Compete => flag(self.competing),
            Var::Covariate(i) => self.covariates[i],
            Var::Dose => self.dose,
            Var::Treatment => flag(self.treatment),
        }
    }

    /// Uncensored and free of the competing event.
    pub fn at_risk(&self) -> bool {
        self.observed && !self.censored && !self.competing
    }
}

/// Random access to a (possibly simulated) history of time-indexed values.
pub trait History<T> {
    /// Value of `var` at `time`; binary variables as 0/1, missing values as NaN.
    fn value(&self, var: Var, time: usize) -> T;
}

/// One subject's records for times `0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub id: String,
    pub points: Vec<TimePoint<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(id: impl Into<String>, points: Vec<TimePoint<T>>) -> Self {
        Self { id: id.into(), points }
    }

    pub fn horizon(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn at(&self, k: usize) -> &TimePoint<T> {
        &self.points[k]
    }

    /// Last time index with `C = 0`, or `None` when censored at baseline.
    pub fn last_uncensored(&self) -> Option<usize> {
        self.points.iter().take_while(|p| !p.censored).count().checked_sub(1)
    }

    pub fn uncensored_through(&self, k: usize) -> bool {
        self.points[..=k].iter().all(|p| !p.censored && p.observed)
    }

    pub fn history(&self, cut: usize) -> HistoryView<'_, T> {
        assert!(cut <= self.horizon(), "cut {cut} beyond horizon {}", self.horizon());
        HistoryView { trajectory: self, cut }
    }

    pub fn doses(&self) -> impl Iterator<Item = T> + '_ {
        self.points.iter().map(|p| p.dose)
    }
}

impl<T: Scalar> History<T> for Trajectory<T> {
    fn value(&self, var: Var, time: usize) -> T {
        self.points.get(time).map_or(T::nan(), |p| p.value(var))
    }
}

/// Read-only split of a trajectory at time `cut`: the history `0..=cut` and the
/// future `cut..=K`. Both include the cut point.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a, T> {
    trajectory: &'a Trajectory<T>,
    cut: usize,
}

impl<'a, T> HistoryView<'a, T> {
    pub fn cut(&self) -> usize {
        self.cut
    }

    pub fn past(&self) -> &'a [TimePoint<T>] {
        &self.trajectory.points[..=self.cut]
    }

    pub fn future(&self) -> &'a [TimePoint<T>] {
        &self.trajectory.points[self.cut..]
    }
}

/// A collection of trajectories sharing a schema. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel<T> {
    schema: VariableSchema,
    trajectories: Vec<Trajectory<T>>,
}

impl<T: Scalar> Panel<T> {
    /// Checks structural conformance (lengths, covariate arity, unique ids).
    /// Semantic rules about censoring and competing events are left to
    /// [`validate_panel`].
    pub fn new(schema: VariableSchema, trajectories: Vec<Trajectory<T>>) -> Result<Self, PanelError> {
        let mut ids = HashSet::with_capacity(trajectories.len());
        let width = schema.horizon() + 1;
        for tr in &trajectories {
            if !ids.insert(tr.id.as_str()) {
                return Err(PanelError::DuplicateSubject(tr.id.clone()));
            }
            if tr.points.len() != width {
                return Err(PanelError::Nonconforming {
                    id: tr.id.clone(),
                    reason: format!("{} time points, expected {width}", tr.points.len()),
                });
            }
            if let Some(p) = tr.points.iter().find(|p| p.covariates.len() != schema.n_covariates()) {
                return Err(PanelError::Nonconforming {
                    id: tr.id.clone(),
                    reason: format!("{} covariates, expected {}", p.covariates.len(), schema.n_covariates()),
                });
            }
        }
        Ok(Self { schema, trajectories })
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn trajectories(&self) -> &[Trajectory<T>] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.schema.horizon()
    }

    pub fn into_trajectories(self) -> Vec<Trajectory<T>> {
        self.trajectories
    }

    /// Builds a panel from subjects drawn by index (with repetition). Repeated
    /// subjects get a `~<position>` suffix so ids stay unique.
    pub fn resample(&self, indices: &[usize]) -> Self {
        let trajectories = indices
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let src = &self.trajectories[i];
                Trajectory { id: format!("{}~{pos}", src.id), points: src.points.clone() }
            })
            .collect();
        Self { schema: self.schema.clone(), trajectories }
    }

    /// Mean of the dose at `k` over subjects observed at `k`.
    pub fn observed_mean_dose(&self, k: usize) -> Option<T> {
        let xs: Vec<T> =
            self.trajectories.iter().filter(|t| t.uncensored_through(k)).map(|t| t.points[k].dose).collect();
        (!xs.is_empty()).then(|| crate::scalar::pairwise_mean(&xs))
    }
}

/// Subject ordering used on load: numeric ids compare numerically, everything
/// else lexicographically, numbers first.
pub(crate) fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}
