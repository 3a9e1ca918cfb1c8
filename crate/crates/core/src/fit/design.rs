use crate::formula::{Family, FormulaSpec, Term};
use crate::panel::{Panel, Trajectory, Var};
use crate::scalar::Scalar;

use super::{FitError, Matrix};

/// Origin of a design row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowSource {
    pub subject: usize,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct Design<T> {
    pub times: Vec<usize>,
    pub columns: Vec<Term>,
    pub rows: Matrix<T>,
    /// Log-dose part of a hurdle formula.
    pub dose_columns: Vec<Term>,
    pub dose_rows: Option<Matrix<T>>,
    pub outcomes: Vec<T>,
    pub provenance: Vec<RowSource>,
}

/// Whether subject `t` contributes a row for `response` at `k`:
/// covariate, dose and treatment models use uncensored person-time free of the
/// competing event (the zero doses after it are deterministic); the competing-event
/// model uses uncensored times with no earlier event; the censoring model uses times
/// whose previous record was uncensored and event-free.
pub(crate) fn eligible<T: Scalar>(t: &Trajectory<T>, response: Var, k: usize) -> bool {
    let p = &t.points[k];
    match response {
        Var::Censor => k > 0 && t.points[k - 1].at_risk(),
        Var::Compete => k > 0 && p.observed && !p.censored && !t.points[k - 1].competing,
        _ => p.at_risk(),
    }
}

/// Stacks one row per eligible `(subject, k)`, `k` in `times`. A `factor(time)`
/// term expands against `times`.
pub fn build_design<T: Scalar>(
    panel: &Panel<T>,
    formula: &FormulaSpec,
    times: &[usize],
) -> Result<Design<T>, FitError> {
    let schema = panel.schema();
    let mut times = times.to_vec();
    times.sort_unstable();
    times.dedup();
    for &k in &times {
        if k > panel.horizon() {
            return Err(FitError::TimeOutOfRange { k, horizon: panel.horizon() });
        }
        formula
            .check_at(schema, k)
            .map_err(|source| FitError::Formula { var: schema.name(formula.response).to_string(), source })?;
    }
    let columns = formula.columns(&times);
    let hurdle = formula.family == Family::Hurdle;
    let dose_columns = if hurdle { formula.log_dose_columns(&times) } else { Vec::new() };
    let mut rows = Matrix::with_capacity(columns.len(), panel.len() * times.len());
    let mut dose_rows = hurdle.then(|| Matrix::with_capacity(dose_columns.len(), panel.len() * times.len()));
    let mut outcomes = Vec::new();
    let mut provenance = Vec::new();
    let mut buf = Vec::with_capacity(columns.len());
    for &k in &times {
        for (i, t) in panel.trajectories().iter().enumerate() {
            if !eligible(t, formula.response, k) {
                continue;
            }
            let fill = |cols: &[Term], buf: &mut Vec<T>| -> Result<(), FitError> {
                buf.clear();
                for c in cols {
                    let v = c.eval(t, k);
                    if !v.is_finite() {
                        return Err(FitError::NonFinite { subject: t.id.clone(), k, column: c.render(schema) });
                    }
                    buf.push(v);
                }
                Ok(())
            };
            fill(&columns, &mut buf)?;
            rows.push_row(&buf);
            if let Some(m) = dose_rows.as_mut() {
                fill(&dose_columns, &mut buf)?;
                m.push_row(&buf);
            }
            outcomes.push(t.points[k].value(formula.response));
            provenance.push(RowSource { subject: i, k });
        }
    }
    Ok(Design { times, columns, rows, dose_columns, dose_rows, outcomes, provenance })
}
