use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PanelError;

/// A per-time variable slot. The derived ordering is the within-time topological
/// order: censoring, competing event, covariates (in declared order), dose, treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    Censor,
    Compete,
    Covariate(usize),
    Dose,
    Treatment,
}

/// Names and horizon of the longitudinal variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSchema {
    covariates: Vec<String>,
    dose: String,
    treatment: String,
    censor: Option<String>,
    compete: Option<String>,
    horizon: usize,
}

impl VariableSchema {
    pub fn new(
        covariates: Vec<String>,
        dose: impl Into<String>,
        treatment: impl Into<String>,
        censor: Option<String>,
        compete: Option<String>,
        horizon: usize,
    ) -> Result<Self, PanelError> {
        let schema = Self { covariates, dose: dose.into(), treatment: treatment.into(), censor, compete, horizon };
        if schema.horizon < 1 {
            return Err(PanelError::InvalidSchema("horizon K must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for name in schema.all_names() {
            if name.is_empty() || !is_identifier(name) {
                return Err(PanelError::InvalidSchema(format!("`{name}` is not a valid identifier")));
            }
            if matches!(name, "id" | "time") {
                return Err(PanelError::InvalidSchema(format!("`{name}` is a reserved column")));
            }
            if !seen.insert(name) {
                return Err(PanelError::InvalidSchema(format!("duplicate variable name `{name}`")));
            }
        }
        Ok(schema)
    }

    fn all_names(&self) -> impl Iterator<Item = &str> {
        self.covariates
            .iter()
            .map(String::as_str)
            .chain([self.dose.as_str(), self.treatment.as_str()])
            .chain(self.censor.as_deref())
            .chain(self.compete.as_deref())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn has_censoring(&self) -> bool {
        self.censor.is_some()
    }

    pub fn has_competing(&self) -> bool {
        self.compete.is_some()
    }

    pub fn censor_name(&self) -> Option<&str> {
        self.censor.as_deref()
    }

    pub fn compete_name(&self) -> Option<&str> {
        self.compete.as_deref()
    }

    pub fn dose_name(&self) -> &str {
        &self.dose
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment
    }

    /// Resolves a variable name.
    pub fn var(&self, name: &str) -> Option<Var> {
        if name == self.dose {
            return Some(Var::Dose);
        }
        if name == self.treatment {
            return Some(Var::Treatment);
        }
        if self.censor.as_deref() == Some(name) {
            return Some(Var::Censor);
        }
        if self.compete.as_deref() == Some(name) {
            return Some(Var::Compete);
        }
        self.covariates.iter().position(|c| c == name).map(Var::Covariate)
    }

    pub fn name(&self, var: Var) -> &str {
        match var {
            Var::Censor => self.censor.as_deref().unwrap_or("C"),
            Var::Compete => self.compete.as_deref().unwrap_or("D"),
            Var::Covariate(i) => &self.covariates[i],
            Var::Dose => &self.dose,
            Var::Treatment => &self.treatment,
        }
    }

    /// All variables present at a time index, in topological order.
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::with_capacity(self.covariates.len() + 4);
        if self.has_censoring() {
            v.push(Var::Censor);
        }
        if self.has_competing() {
            v.push(Var::Compete);
        }
        v.extend((0..self.covariates.len()).map(Var::Covariate));
        v.push(Var::Dose);
        v.push(Var::Treatment);
        v
    }

    pub fn contains(&self, var: Var) -> bool {
        match var {
            Var::Censor => self.has_censoring(),
            Var::Compete => self.has_competing(),
            Var::Covariate(i) => i < self.covariates.len(),
            Var::Dose | Var::Treatment => true,
        }
    }
}

impl fmt::Display for VariableSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.vars().into_iter().map(|v| self.name(v)).collect();
        write!(f, "({}) x K={}", names.join(", "), self.horizon)
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> VariableSchema {
        VariableSchema::new(vec!["L1".into(), "L2".into()], "Y", "A", Some("C".into()), Some("D".into()), 2).unwrap()
    }

    #[test]
    fn var_order_is_within_time_topological_order() {
        assert_eq!(
            schema().vars(),
            vec![Var::Censor, Var::Compete, Var::Covariate(0), Var::Covariate(1), Var::Dose, Var::Treatment]
        );
        assert!(Var::Compete < Var::Covariate(0));
        assert!(Var::Covariate(3) < Var::Dose);
    }

    #[test]
    fn resolves_names() {
        let s = schema();
        assert_eq!(s.var("L2"), Some(Var::Covariate(1)));
        assert_eq!(s.var("D"), Some(Var::Compete));
        assert_eq!(s.var("nope"), None);
        assert_eq!(s.name(Var::Dose), "Y");
    }

    #[test]
    fn rejects_duplicates_and_zero_horizon() {
        let dup = VariableSchema::new(vec!["Y".into()], "Y", "A", None, None, 2);
        assert!(matches!(dup, Err(PanelError::InvalidSchema(m)) if m.contains("duplicate")));
        let k0 = VariableSchema::new(vec![], "Y", "A", None, None, 0);
        assert!(k0.is_err());
        let reserved = VariableSchema::new(vec!["time".into()], "Y", "A", None, None, 1);
        assert!(reserved.is_err());
    }
}
