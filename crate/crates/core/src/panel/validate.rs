use std::fmt;

use serde::{Deserialize, Serialize};

use super::Panel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    CensoredAtBaseline,
    CompetingAtBaseline,
    CensorNonMonotone,
    CompeteNonMonotone,
    PositiveDoseAfterCompetingEvent,
    PopulatedAfterCensoring,
    MissingWhileUncensored,
    NegativeDose,
    NonFiniteValue,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::CensoredAtBaseline => "C_0 must be 0",
            Rule::CompetingAtBaseline => "D_0 must be 0",
            Rule::CensorNonMonotone => "C non-monotone",
            Rule::CompeteNonMonotone => "D non-monotone",
            Rule::PositiveDoseAfterCompetingEvent => "positive dose after competing event",
            Rule::PopulatedAfterCensoring => "populated fields after censoring",
            Rule::MissingWhileUncensored => "missing fields while uncensored",
            Rule::NegativeDose => "negative dose",
            Rule::NonFiniteValue => "non-finite value",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub time: usize,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subject {}: {} at t={}", self.subject, self.rule, self.time)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every breach of the censoring and competing-event rules. Nothing is repaired.
pub fn validate_panel<T: Scalar>(panel: &Panel<T>) -> ValidationReport {
    let mut violations = Vec::new();
    for tr in panel.trajectories() {
        let mut push = |time, rule| violations.push(Violation { subject: tr.id.clone(), time, rule });
        let mut censored = false;
        let mut dead_since: Option<usize> = None;
        for (k, p) in tr.points.iter().enumerate() {
            if k == 0 && p.censored {
                push(0, Rule::CensoredAtBaseline);
            }
            if censored && !p.censored {
                push(k, Rule::CensorNonMonotone);
            }
            censored |= p.censored;

            if p.censored && p.observed {
                push(k, Rule::PopulatedAfterCensoring);
            }
            if !p.censored && !p.observed {
                push(k, Rule::MissingWhileUncensored);
            }
            if !p.observed {
                continue;
            }
            if !p.dose.is_finite() || p.covariates.iter().any(|c| !c.is_finite()) {
                push(k, Rule::NonFiniteValue);
            } else if p.dose < T::zero() {
                push(k, Rule::NegativeDose);
            }
            if k == 0 && p.competing {
                push(0, Rule::CompetingAtBaseline);
            }
            match (dead_since, p.competing) {
                (Some(_), false) => push(k, Rule::CompeteNonMonotone),
                (None, true) => dead_since = Some(k),
                _ => {}
            }
            if dead_since.is_some() && p.dose > T::zero() {
                push(k, Rule::PositiveDoseAfterCompetingEvent);
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{TimePoint, Trajectory, VariableSchema};

    fn schema() -> VariableSchema {
        VariableSchema::new(vec![], "Y", "A", Some("C".into()), Some("D".into()), 2).unwrap()
    }

    fn point(dose: f64, d: bool) -> TimePoint<f64> {
        let mut p = TimePoint::new(vec![], dose, false);
        p.competing = d;
        p
    }

    fn report(points: Vec<TimePoint<f64>>) -> ValidationReport {
        let panel = Panel::new(schema(), vec![Trajectory::new("s", points)]).unwrap();
        validate_panel(&panel)
    }

    #[test]
    fn non_monotone_competing_event() {
        let r = report(vec![point(1.0, false), point(0.0, true), point(0.0, false)]);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].to_string(), "subject s: D non-monotone at t=2");
    }

    #[test]
    fn positive_dose_after_competing_event() {
        let r = report(vec![point(1.0, false), point(0.0, true), point(3.0, true)]);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, Rule::PositiveDoseAfterCompetingEvent);
        assert_eq!(r.violations[0].time, 2);
    }

    #[test]
    fn conformant_panel_is_clean() {
        let r = report(vec![point(1.0, false), point(2.0, false), point(0.0, true)]);
        assert!(r.is_clean());
        let censored = vec![point(1.0, false), TimePoint::missing(0), TimePoint::missing(0)];
        assert!(report(censored).is_clean());
    }

    #[test]
    fn populated_after_censoring_and_baseline_rules() {
        let mut late = point(1.0, false);
        late.censored = true;
        let mut base = point(1.0, true);
        base.censored = true;
        let r = report(vec![base, late, TimePoint::missing(0)]);
        let rules: Vec<Rule> = r.violations.iter().map(|v| v.rule).collect();
        assert!(rules.contains(&Rule::CensoredAtBaseline));
        assert!(rules.contains(&Rule::CompetingAtBaseline));
        assert!(rules.contains(&Rule::PopulatedAfterCensoring));
    }

    #[test]
    fn validation_is_pure() {
        let pts = vec![point(1.0, false), point(0.0, true), point(3.0, false)];
        assert_eq!(report(pts.clone()), report(pts));
    }
}
