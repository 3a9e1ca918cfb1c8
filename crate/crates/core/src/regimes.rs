//! Treatment regimes and the regime-assigned treatment function.
//!
//! During the treatment period `0..=kappa` a regime maps the (natural) dose and the
//! natural treatment at time `k` to the treatment it imposes. After the period,
//! treatments are left at their natural values.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::Trajectory;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegimeError {
    #[error("time {k} is outside 0..={horizon}")]
    TimeOutOfRange { k: usize, horizon: usize },
    #[error("kappa {kappa} must be at most K-1 = {}", .horizon.saturating_sub(1))]
    KappaOutOfRange { kappa: usize, horizon: usize },
    #[error("static sequence has {len} entries, expected kappa+1 = {}", .kappa + 1)]
    SequenceLength { len: usize, kappa: usize },
    #[error("cannot parse regime `{0}`: {1}")]
    Parse(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    /// Fixed treatment sequence `a_0..a_kappa`.
    Static(Vec<bool>),
    /// Assign `j` whenever the dose is positive, otherwise keep the natural treatment.
    AddOn(bool),
    /// Treat if and only if the dose is positive.
    ThresholdDynamic,
    /// No intervention.
    Natural,
}

/// A validated regime: kind, end of treatment period `kappa` and follow-up horizon `K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegimeSpec {
    kind: RegimeKind,
    kappa: usize,
    horizon: usize,
}

/// Outcome of checking an observed trajectory against a regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compliance {
    pub compliant: bool,
    pub first_deviation: Option<usize>,
}

impl RegimeSpec {
    pub fn new(kind: RegimeKind, kappa: usize, horizon: usize) -> Result<Self, RegimeError> {
        if horizon == 0 || kappa > horizon - 1 {
            return Err(RegimeError::KappaOutOfRange { kappa, horizon });
        }
        if let RegimeKind::Static(seq) = &kind {
            if seq.len() != kappa + 1 {
                return Err(RegimeError::SequenceLength { len: seq.len(), kappa });
            }
        }
        Ok(Self { kind, kappa, horizon })
    }

    pub fn add_on(j: bool, kappa: usize, horizon: usize) -> Result<Self, RegimeError> {
        Self::new(RegimeKind::AddOn(j), kappa, horizon)
    }

    /// Static regime assigning `a` at every time of the period.
    pub fn constant(a: bool, kappa: usize, horizon: usize) -> Result<Self, RegimeError> {
        Self::new(RegimeKind::Static(vec![a; kappa + 1]), kappa, horizon)
    }

    pub fn natural(horizon: usize) -> Result<Self, RegimeError> {
        Self::new(RegimeKind::Natural, 0, horizon)
    }

    pub fn kind(&self) -> &RegimeKind {
        &self.kind
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_natural(&self) -> bool {
        self.kind == RegimeKind::Natural
    }

    /// Treatment imposed at time `k` given the dose `y` and natural treatment `a_natural`.
    pub fn assigned_treatment<T: Scalar>(&self, k: usize, y: T, a_natural: bool) -> Result<bool, RegimeError> {
        if k > self.horizon {
            return Err(RegimeError::TimeOutOfRange { k, horizon: self.horizon });
        }
        Ok(self.assign(k, y > T::zero(), a_natural))
    }

    /// Infallible core of [`assigned_treatment`](Self::assigned_treatment) for callers
    /// that already range-checked `k`.
    pub(crate) fn assign(&self, k: usize, dose_positive: bool, a_natural: bool) -> bool {
        if k > self.kappa {
            return a_natural;
        }
        match &self.kind {
            RegimeKind::Static(seq) => seq[k],
            RegimeKind::AddOn(j) => {
                if dose_positive {
                    *j
                } else {
                    a_natural
                }
            }
            RegimeKind::ThresholdDynamic => dose_positive,
            RegimeKind::Natural => a_natural,
        }
    }

    /// The treatment the regime demands at `k` regardless of the natural value, if any.
    pub fn required_treatment(&self, k: usize, dose_positive: bool) -> Option<bool> {
        if k > self.kappa {
            return None;
        }
        match &self.kind {
            RegimeKind::Static(seq) => Some(seq[k]),
            RegimeKind::AddOn(j) => dose_positive.then_some(*j),
            RegimeKind::ThresholdDynamic => Some(dose_positive),
            RegimeKind::Natural => None,
        }
    }

    /// Whether the observed treatments could have been produced by this regime for some
    /// natural treatment values. Times with a competing event are skipped and evaluation
    /// stops at censoring.
    pub fn follows<T: Scalar>(&self, trajectory: &Trajectory<T>) -> Compliance {
        let end = self.kappa.min(trajectory.horizon());
        for (t, p) in trajectory.points[..=end].iter().enumerate() {
            if !p.observed || p.censored {
                break;
            }
            if p.competing {
                continue;
            }
            let required = self.required_treatment(t, p.dose > T::zero());
            if required.is_some_and(|r| r != p.treatment) {
                return Compliance { compliant: false, first_deviation: Some(t) };
            }
        }
        Compliance { compliant: true, first_deviation: None }
    }

    /// Same regime with a different treatment period. Static sequences are truncated or
    /// padded with their last element.
    pub fn with_kappa(&self, kappa: usize) -> Result<Self, RegimeError> {
        let kind = match &self.kind {
            RegimeKind::Static(seq) => {
                let last = *seq.last().expect("static sequence is non-empty");
                RegimeKind::Static((0..=kappa).map(|i| seq.get(i).copied().unwrap_or(last)).collect())
            }
            other => other.clone(),
        };
        Self::new(kind, kappa, self.horizon)
    }

    /// Parses the configuration form, e.g. `kind=addon j=1 kappa=20`,
    /// `kind=static seq=0110 kappa=3`, `kind=static all=1 kappa=20`,
    /// `kind=threshold kappa=2` or `kind=natural`.
    pub fn parse(text: &str, horizon: usize) -> Result<Self, RegimeError> {
        let fail = |msg: &str| RegimeError::Parse(text.to_string(), msg.to_string());
        let mut fields = HashMap::new();
        for token in text.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let (key, value) = token.split_once('=').ok_or_else(|| fail("expected key=value"))?;
            if fields.insert(key, value).is_some() {
                return Err(fail(&format!("repeated key `{key}`")));
            }
        }
        let bit = |v: &str| match v {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(fail(&format!("`{v}` is not 0 or 1"))),
        };
        let kind_name = fields.remove("kind").ok_or_else(|| fail("missing `kind`"))?;
        let kappa = match fields.remove("kappa") {
            Some(v) => v.parse::<usize>().map_err(|_| fail("kappa must be a nonnegative integer"))?,
            None if kind_name == "natural" => 0,
            None => return Err(fail("missing `kappa`")),
        };
        let kind = match kind_name {
            "addon" | "add-on" => RegimeKind::AddOn(bit(fields.remove("j").ok_or_else(|| fail("missing `j`"))?)?),
            "static" => match (fields.remove("seq"), fields.remove("all")) {
                (Some(seq), None) => {
                    RegimeKind::Static(seq.chars().map(|c| bit(&c.to_string())).collect::<Result<_, _>>()?)
                }
                (None, Some(a)) => RegimeKind::Static(vec![bit(a)?; kappa + 1]),
                _ => return Err(fail("static regimes need exactly one of `seq` or `all`")),
            },
            "threshold" | "dynamic" => RegimeKind::ThresholdDynamic,
            "natural" => RegimeKind::Natural,
            other => return Err(fail(&format!("unknown kind `{other}`"))),
        };
        if let Some(key) = fields.keys().next() {
            return Err(fail(&format!("unexpected key `{key}`")));
        }
        Self::new(kind, kappa, horizon)
    }
}

impl fmt::Display for RegimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RegimeKind::Static(seq) => {
                let bits: String = seq.iter().map(|&b| if b { '1' } else { '0' }).collect();
                write!(f, "kind=static seq={bits} kappa={}", self.kappa)
            }
            RegimeKind::AddOn(j) => write!(f, "kind=addon j={} kappa={}", u8::from(*j), self.kappa),
            RegimeKind::ThresholdDynamic => write!(f, "kind=threshold kappa={}", self.kappa),
            RegimeKind::Natural => write!(f, "kind=natural"),
        }
    }
}
