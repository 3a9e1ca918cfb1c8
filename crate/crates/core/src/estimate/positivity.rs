use serde::{Deserialize, Serialize};

use crate::panel::Panel;
use crate::regimes::RegimeSpec;
use crate::scalar::{quantile_sorted, Scalar};

use super::ipw::{ipw_weight, Propensity};

/// A person-time where the regime-required treatment has low estimated probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityFlag<T> {
    pub subject: String,
    pub t: usize,
    pub required: bool,
    pub probability: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport<T> {
    pub regime: String,
    pub threshold: T,
    /// Person-times at which the regime imposed a treatment.
    pub checked: usize,
    pub flags: Vec<PositivityFlag<T>>,
    /// Tail of the treatment weights through the end of the treatment period, over
    /// subjects whose weights are defined.
    pub weight_max: Option<T>,
    pub weight_p99: Option<T>,
}

/// Flags every uncensored, event-free `(subject, t <= kappa)` whose regime-required
/// treatment has estimated probability below `threshold`. Times where the regime
/// imposes nothing (no dose under an add-on regime, the natural regime) are skipped.
pub fn positivity_report<T: Scalar>(
    panel: &Panel<T>,
    propensity: &(impl Propensity<T> + ?Sized),
    regime: &RegimeSpec,
    threshold: T,
) -> PositivityReport<T> {
    let last = regime.kappa().min(panel.horizon().saturating_sub(1));
    let mut flags = Vec::new();
    let mut checked = 0;
    let mut weights = Vec::new();
    for traj in panel.trajectories() {
        for t in 0..=last {
            let p = &traj.points[t];
            if !p.at_risk() {
                if !p.observed || p.censored {
                    break;
                }
                continue;
            }
            let Some(required) = regime.required_treatment(t, p.dose > T::zero()) else { continue };
            checked += 1;
            let Some(p1) = propensity.probability(traj, t) else { continue };
            let probability = if required { p1 } else { T::one() - p1 };
            if probability < threshold {
                flags.push(PositivityFlag { subject: traj.id.clone(), t, required, probability });
            }
        }
        if traj.uncensored_through(last) {
            if let Ok(w) = ipw_weight(traj, propensity, regime, last) {
                weights.push(w.generic);
            }
        }
    }
    weights.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    PositivityReport {
        regime: regime.to_string(),
        threshold,
        checked,
        flags,
        weight_max: weights.last().copied(),
        weight_p99: (!weights.is_empty()).then(|| quantile_sorted(&weights, 0.99)),
    }
}
