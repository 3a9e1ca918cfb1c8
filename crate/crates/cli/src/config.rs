//! Run configuration: one TOML file describing the schema, the data source (a panel
//! file or a structural model to simulate from), model formulas, regimes to compare
//! and estimator settings.
//!
//! ```toml
//! seed = 7
//!
//! [schema]
//! covariates = ["L"]
//! dose = "Y"
//! treatment = "A"
//! compete = "D"          # optional; also `censor`
//! horizon = 3
//!
//! [data]                 # exactly one of [data] and [sem]
//! path = "panel.csv"     # relative to the config file; .tsv is tab separated
//!
//! [sem]
//! n = 5000
//! [[sem.node]]
//! var = "Y"
//! times = "1.."          # "3", "1..4" (inclusive), ".." (default)
//! family = "hurdle"      # bernoulli | gaussian | hurdle | deterministic
//! positive = "0.2 + 0.6*L"
//! log_dose = "1.5"
//! sd = 0.4
//!
//! [formulas.Y]
//! formula = "Y ~ L + A[-1] | L"
//! family = "hurdle"      # logistic | linear | hurdle
//! pooled = true          # one model over all times (default) or one per time
//! overrides = { "0" = "Y ~ L" }
//!
//! [estimate]
//! estimators = ["gformula", "ipw"]
//! targets = [1, 2, 3]    # default 1..=horizon
//! n_mc = 10000
//! bootstrap = 500        # replicates; 0 disables
//!
//! [[comparison]]
//! label = "add-on"
//! treated = "kind=addon j=1 kappa=1"
//! control = "kind=addon j=0 kappa=1"
//! kappas = [1, 2]        # optional: repeat the comparison for each treatment period
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use addon_core::estimate::{
    AnalysisConfig, BaselineMode, BootstrapConfig, CensoringMode, Comparison, Estimator, ModelFormulas, Normalization,
    OutcomeMode,
};
use addon_core::fit::{FitOptions, FormulaSet};
use addon_core::formula::{Family, FormulaSpec, LinearPredictor};
use addon_core::panel::{Delimiter, Var, VariableSchema};
use addon_core::regimes::RegimeSpec;
use addon_core::sem::{NodeFamily, NodeSpec, StructuralModel, TimeRange};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub schema: SchemaConfig,
    pub data: Option<DataConfig>,
    pub sem: Option<SemConfig>,
    #[serde(default)]
    pub formulas: BTreeMap<String, FormulaConfig>,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub comparison: Vec<ComparisonConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default)]
    pub covariates: Vec<String>,
    pub dose: String,
    pub treatment: String,
    pub censor: Option<String>,
    pub compete: Option<String>,
    pub horizon: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub delimiter: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemConfig {
    pub n: usize,
    #[serde(default)]
    pub node: Vec<NodeConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub var: String,
    #[serde(default = "all_times")]
    pub times: String,
    pub family: String,
    pub eta: Option<String>,
    pub mean: Option<String>,
    pub positive: Option<String>,
    pub log_dose: Option<String>,
    pub value: Option<String>,
    pub sd: Option<f64>,
}

fn all_times() -> String {
    "..".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulaConfig {
    pub formula: String,
    pub family: Option<String>,
    #[serde(default = "yes")]
    pub pooled: bool,
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub estimators: Vec<Estimator>,
    pub targets: Option<Vec<usize>>,
    pub n_mc: usize,
    pub baseline: BaselineMode,
    pub outcome: OutcomeMode,
    pub normalization: Normalization,
    pub censoring: CensoringMode,
    pub truncation: Option<f64>,
    pub separation_ridge: Option<f64>,
    pub bootstrap: usize,
    pub level: f64,
    pub positivity_threshold: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            estimators: vec![Estimator::GFormula],
            targets: None,
            n_mc: 10_000,
            baseline: BaselineMode::Resample,
            outcome: OutcomeMode::Simulated,
            normalization: Normalization::Hajek,
            censoring: CensoringMode::Ipcw,
            truncation: None,
            separation_ridge: None,
            bootstrap: 0,
            level: 0.95,
            positivity_threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub label: String,
    pub treated: String,
    pub control: String,
    pub kappas: Option<Vec<usize>>,
}

/// Where the panel comes from.
pub enum Source {
    File { path: PathBuf, delimiter: Option<Delimiter> },
    Model { sem: StructuralModel<f64>, n: usize },
}

impl RunConfig {
    /// Reads and parses a config file; TOML errors carry line and column.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok((cfg, text))
    }

    pub fn schema(&self) -> Result<VariableSchema> {
        let s = &self.schema;
        VariableSchema::new(
            s.covariates.clone(),
            s.dose.clone(),
            s.treatment.clone(),
            s.censor.clone(),
            s.compete.clone(),
            s.horizon,
        )
        .context("[schema]")
    }

    /// The data source; `base` is the directory relative paths resolve against.
    pub fn source(&self, schema: &VariableSchema, base: &Path) -> Result<Source> {
        match (&self.data, &self.sem) {
            (Some(d), None) => {
                let delimiter = d
                    .delimiter
                    .as_deref()
                    .map(str::parse::<Delimiter>)
                    .transpose()
                    .map_err(anyhow::Error::msg)
                    .context("[data].delimiter")?;
                Ok(Source::File { path: base.join(&d.path), delimiter })
            }
            (None, Some(s)) => Ok(Source::Model { sem: self.structural_model(schema)?, n: s.n }),
            (Some(_), Some(_)) => bail!("configure exactly one data source: [data] or [sem], not both"),
            (None, None) => bail!("no data source: add a [data] or a [sem] section"),
        }
    }

    pub fn structural_model(&self, schema: &VariableSchema) -> Result<StructuralModel<f64>> {
        let sem = self.sem.as_ref().context("no [sem] section")?;
        let mut specs = Vec::with_capacity(sem.node.len());
        for (i, node) in sem.node.iter().enumerate() {
            let ctx = || format!("[[sem.node]] #{} (var = {:?})", i + 1, node.var);
            specs.push(node_spec(node, schema).with_context(ctx)?);
        }
        StructuralModel::new(schema.clone(), specs).context("[sem]")
    }

    pub fn formulas(&self, schema: &VariableSchema) -> Result<ModelFormulas> {
        let mut out = ModelFormulas::new();
        for (name, f) in &self.formulas {
            let ctx = || format!("[formulas.{name}]");
            let var = schema.var(name).with_context(|| format!("{}: unknown variable `{name}`", ctx()))?;
            let family = match &f.family {
                Some(text) => text.parse::<Family>().map_err(anyhow::Error::msg).with_context(ctx)?,
                None => default_family(var),
            };
            let parse = |text: &str| FormulaSpec::parse(text, schema, family, f.pooled);
            let default = parse(&f.formula).with_context(ctx)?;
            if default.response != var {
                bail!("{}: formula response `{}` does not match the section", ctx(), schema.name(default.response));
            }
            let mut set = FormulaSet::new(default);
            for (k, text) in &f.overrides {
                let k: usize = k.parse().with_context(|| format!("{}: override key `{k}` is not a time", ctx()))?;
                let spec = parse(text).with_context(|| format!("{}: override at time {k}", ctx()))?;
                set = set.with_override(k, spec);
            }
            out.insert(set);
        }
        Ok(out)
    }

    pub fn comparisons(&self, horizon: usize) -> Result<Vec<Comparison>> {
        if self.comparison.is_empty() {
            bail!("no [[comparison]] configured");
        }
        let mut out = Vec::new();
        for c in &self.comparison {
            let ctx = || format!("[[comparison]] {:?}", c.label);
            let treated = RegimeSpec::parse(&c.treated, horizon).with_context(ctx)?;
            let control = RegimeSpec::parse(&c.control, horizon).with_context(ctx)?;
            match &c.kappas {
                None => out.push(Comparison { label: c.label.clone(), treated, control }),
                Some(ks) => {
                    for &kappa in ks {
                        out.push(Comparison {
                            label: c.label.clone(),
                            treated: set_kappa(&treated, kappa).with_context(ctx)?,
                            control: set_kappa(&control, kappa).with_context(ctx)?,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn analysis(&self, schema: &VariableSchema, seed: u64) -> Result<AnalysisConfig<f64>> {
        let e = &self.estimate;
        if e.estimators.is_empty() {
            bail!("[estimate].estimators is empty");
        }
        let targets = e.targets.clone().unwrap_or_else(|| (1..=schema.horizon()).collect());
        let mut cfg = AnalysisConfig::new(e.estimators.clone(), targets, self.formulas(schema)?);
        let fit = FitOptions { separation_ridge: e.separation_ridge, ..FitOptions::default() };
        cfg.gformula.n_mc = e.n_mc;
        cfg.gformula.seed = seed;
        cfg.gformula.baseline = e.baseline;
        cfg.gformula.outcome = e.outcome;
        cfg.gformula.fit = fit;
        cfg.ipw.normalization = e.normalization;
        cfg.ipw.censoring = e.censoring;
        cfg.ipw.truncation = e.truncation;
        cfg.ipw.fit = fit;
        cfg.positivity_threshold = e.positivity_threshold;
        if e.bootstrap > 0 {
            cfg.bootstrap = Some(BootstrapConfig { replicates: e.bootstrap, seed: seed ^ 0xB007_5EED, level: e.level });
        }
        self.check_formulas(schema, &cfg)?;
        Ok(cfg)
    }

    /// Fails early, with the variable name, when an estimator lacks a formula.
    fn check_formulas(&self, schema: &VariableSchema, cfg: &AnalysisConfig<f64>) -> Result<()> {
        let mut needed = Vec::new();
        if cfg.estimators.contains(&Estimator::GFormula) {
            if schema.has_competing() {
                needed.push((Var::Compete, "gformula"));
            }
            needed.extend((0..schema.n_covariates()).map(|i| (Var::Covariate(i), "gformula")));
            needed.push((Var::Dose, "gformula"));
            if cfg.targets.iter().any(|&k| k > 1) {
                needed.push((Var::Treatment, "gformula"));
            }
        }
        if cfg.estimators.contains(&Estimator::Ipw) {
            needed.push((Var::Treatment, "ipw"));
            if schema.has_censoring() && cfg.ipw.censoring == CensoringMode::Ipcw {
                needed.push((Var::Censor, "ipw"));
            }
        }
        for (var, who) in needed {
            if cfg.formulas.get(var).is_none() {
                bail!(
                    "{who} needs a formula for `{}`: add a [formulas.{}] section",
                    schema.name(var),
                    schema.name(var)
                );
            }
        }
        Ok(())
    }
}

/// Natural regimes have no treatment period to change.
fn set_kappa(regime: &RegimeSpec, kappa: usize) -> Result<RegimeSpec, addon_core::regimes::RegimeError> {
    if regime.is_natural() {
        Ok(regime.clone())
    } else {
        regime.with_kappa(kappa)
    }
}

fn default_family(var: Var) -> Family {
    match var {
        Var::Dose => Family::Hurdle,
        _ => Family::Logistic,
    }
}

fn node_spec(node: &NodeConfig, schema: &VariableSchema) -> Result<NodeSpec<f64>> {
    let var = schema.var(&node.var).with_context(|| format!("unknown variable `{}`", node.var))?;
    let times: TimeRange = node.times.parse()?;
    let lp = |field: &Option<String>, name: &str| -> Result<LinearPredictor<f64>> {
        let text = field.as_deref().with_context(|| format!("family {} needs `{name}`", node.family))?;
        LinearPredictor::parse(text, schema).with_context(|| format!("`{name}`"))
    };
    let sd = || node.sd.with_context(|| format!("family {} needs `sd`", node.family));
    let family = match node.family.as_str() {
        "bernoulli" => NodeFamily::Bernoulli { eta: lp(&node.eta, "eta")? },
        "gaussian" => NodeFamily::Gaussian { mean: lp(&node.mean, "mean")?, sd: sd()? },
        "hurdle" => NodeFamily::Hurdle {
            positive: node.positive.as_ref().map(|_| lp(&node.positive, "positive")).transpose()?,
            log_dose: lp(&node.log_dose, "log_dose")?,
            sd: sd()?,
        },
        "deterministic" => NodeFamily::Deterministic { value: lp(&node.value, "value")? },
        other => bail!("unknown family `{other}` (bernoulli, gaussian, hurdle or deterministic)"),
    };
    Ok(NodeSpec { var, times, family })
}
