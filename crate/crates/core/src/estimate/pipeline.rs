//! End-to-end analysis: fit, estimate each regime pair, contrast, bootstrap and
//! collect diagnostics into an [`EstimateReport`].

use serde::{Deserialize, Serialize};

use crate::fit::{FitOptions, FittedSet, ModelKind, PositivePart};
use crate::panel::{Panel, Var, VariableSchema};
use crate::regimes::RegimeSpec;
use crate::scalar::Scalar;

use super::bootstrap::{bootstrap, BootstrapConfig};
use super::contrast::Direction;
use super::gformula::{gformula_models, rollout_means, GFormulaConfig};
use super::ipw::{ipw_weighted_mean, CensoringMode, IpwConfig, IpwModels, Propensity, WeightSummary};
use super::positivity::{positivity_report, PositivityReport};
use super::report::{
    BootstrapInfo, ComparisonEstimate, CumulativeRow, EstimateReport, Interval, ModelSummary, PerTimeRow, Provenance,
    ReportDiagnostics, WeightReport,
};
use super::{check_regime, check_targets, EstimateError, ModelFormulas};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[serde(rename = "gformula")]
    GFormula,
    Ipw,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GFormula => "gformula",
            Self::Ipw => "ipw",
        })
    }
}

/// A treated regime `g1` against a control regime `g0`; contrasts are `g1 - g0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub treated: RegimeSpec,
    pub control: RegimeSpec,
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig<T> {
    pub estimators: Vec<Estimator>,
    pub targets: Vec<usize>,
    pub formulas: ModelFormulas,
    /// Its seed drives the point-estimate rollouts.
    pub gformula: GFormulaConfig<T>,
    pub ipw: IpwConfig<T>,
    pub bootstrap: Option<BootstrapConfig>,
    pub positivity_threshold: T,
}

impl<T: Scalar> AnalysisConfig<T> {
    pub fn new(estimators: Vec<Estimator>, targets: Vec<usize>, formulas: ModelFormulas) -> Self {
        Self {
            estimators,
            targets,
            formulas,
            gformula: GFormulaConfig::default(),
            ipw: IpwConfig::default(),
            bootstrap: None,
            positivity_threshold: T::of(0.01),
        }
    }
}

/// Point estimates of one comparison under one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonValues<T> {
    pub treated: Vec<T>,
    pub control: Vec<T>,
    pub mc_se: Option<(Vec<T>, Vec<T>)>,
    pub weights: Option<(Vec<WeightSummary<T>>, Vec<WeightSummary<T>>)>,
}

impl<T: Scalar> ComparisonValues<T> {
    pub fn contrasts(&self) -> Vec<T> {
        self.treated.iter().zip(&self.control).map(|(a, b)| *a - *b).collect()
    }

    pub fn cumulative(&self) -> T {
        self.contrasts().into_iter().fold(T::zero(), |acc, d| acc + d)
    }

    /// Treated means, control means, per-time contrasts, then the cumulative contrast.
    fn flatten(&self, out: &mut Vec<T>) {
        out.extend(&self.treated);
        out.extend(&self.control);
        out.extend(self.contrasts());
        out.push(self.cumulative());
    }
}

/// Per-comparison point estimates, ordered by comparison and then by estimator.
pub type ComparisonEstimates<T> = Vec<ComparisonValues<T>>;

struct Evaluation<T> {
    values: ComparisonEstimates<T>,
    models: Vec<ModelSummary>,
    propensity: Option<FittedSet<T>>,
}

fn max_kappa(comparisons: &[Comparison]) -> usize {
    comparisons.iter().flat_map(|c| [c.treated.kappa(), c.control.kappa()]).max().unwrap_or(0)
}

fn evaluate<T: Scalar>(
    panel: &Panel<T>,
    cfg: &AnalysisConfig<T>,
    comparisons: &[Comparison],
    seed: u64,
) -> Result<Evaluation<T>, EstimateError> {
    let max_k = check_targets(&cfg.targets, panel.horizon())?;
    for c in comparisons {
        check_regime(panel, &c.treated)?;
        check_regime(panel, &c.control)?;
    }
    let schema = panel.schema();
    let mut models = Vec::new();
    let mut by_estimator = Vec::new();
    let mut propensity = None;
    for &est in &cfg.estimators {
        let per_comparison: Vec<ComparisonValues<T>> = match est {
            Estimator::GFormula => {
                let fitted = gformula_models(panel, &cfg.formulas, max_k, &cfg.gformula.fit)?;
                for set in fitted.sets() {
                    models.extend(summarize(schema, set, "gformula"));
                }
                let gcfg = GFormulaConfig { seed, keep_rollouts: false, ..cfg.gformula };
                let regimes: Vec<RegimeSpec> =
                    comparisons.iter().flat_map(|c| [c.treated.clone(), c.control.clone()]).collect();
                let est = rollout_means(panel, &fitted, &gcfg, &regimes, &cfg.targets)?;
                est.chunks(2)
                    .map(|pair| ComparisonValues {
                        treated: pair[0].means.clone(),
                        control: pair[1].means.clone(),
                        mc_se: Some((pair[0].mc_se.clone(), pair[1].mc_se.clone())),
                        weights: None,
                    })
                    .collect()
            }
            Estimator::Ipw => {
                let fitted = IpwModels::fit(panel, &cfg.formulas, max_k, max_kappa(comparisons), &cfg.ipw)?;
                models.extend(summarize(schema, &fitted.propensity, "ipw"));
                if let Some(c) = &fitted.censoring {
                    models.extend(summarize(schema, c, "ipw"));
                }
                let cens = fitted.censoring.as_ref().map(|c| c as &dyn Propensity<T>);
                let run =
                    |r: &RegimeSpec| ipw_weighted_mean(panel, &fitted.propensity, cens, r, &cfg.targets, &cfg.ipw);
                let values = comparisons
                    .iter()
                    .map(|c| {
                        let (t, u) = (run(&c.treated)?, run(&c.control)?);
                        Ok(ComparisonValues {
                            treated: t.means,
                            control: u.means,
                            mc_se: None,
                            weights: Some((t.weights, u.weights)),
                        })
                    })
                    .collect::<Result<Vec<_>, EstimateError>>()?;
                propensity = Some(fitted.propensity);
                values
            }
        };
        by_estimator.push(per_comparison);
    }
    let mut values = Vec::new();
    for i in 0..comparisons.len() {
        for per in &by_estimator {
            values.push(per[i].clone());
        }
    }
    Ok(Evaluation { values, models, propensity })
}

fn summarize<T: Scalar>(schema: &VariableSchema, set: &FittedSet<T>, purpose: &str) -> Vec<ModelSummary> {
    let f = |xs: &[T]| xs.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    let mut out = Vec::new();
    for m in &set.models {
        let dose_names: Vec<String> = m.dose_columns.iter().map(|t| t.render(schema)).collect();
        let parts: Vec<(&str, Vec<String>, Vec<f64>)> = match &m.kind {
            ModelKind::Logistic(l) => vec![("logistic", m.column_names.clone(), f(&l.coefficients))],
            ModelKind::Linear(l) => vec![("linear", m.column_names.clone(), f(&l.coefficients))],
            ModelKind::Hurdle(h) => {
                let mut v = Vec::new();
                if let PositivePart::Fitted(p) = &h.positive {
                    v.push(("positive", m.column_names.clone(), f(&p.coefficients)));
                }
                if let Some(l) = &h.log_dose {
                    v.push(("log_dose", dose_names.clone(), f(&l.coefficients)));
                }
                v
            }
        };
        let diags = m.diagnostics();
        for ((part, columns, coefficients), (_, d)) in parts.into_iter().zip(diags) {
            out.push(ModelSummary {
                var: schema.name(m.response).to_string(),
                times: m.times.clone(),
                family: format!("{} ({purpose})", m.family()),
                part: part.to_string(),
                columns,
                coefficients,
                iterations: d.iterations,
                converged: d.converged,
                deviance: d.deviance.as_f64(),
                rows: d.rows,
                ridge: d.ridge.map(Scalar::as_f64),
                note: d.note.clone().or_else(|| m.note().map(str::to_string)),
            });
        }
        if m.diagnostics().is_empty() {
            out.push(ModelSummary {
                var: schema.name(m.response).to_string(),
                times: m.times.clone(),
                family: format!("{} ({purpose})", m.family()),
                part: "constant".into(),
                columns: Vec::new(),
                coefficients: Vec::new(),
                iterations: 0,
                converged: true,
                deviance: 0.0,
                rows: 0,
                ridge: None,
                note: m.note().map(str::to_string),
            });
        }
    }
    out
}

/// Runs every configured estimator on every comparison and returns point estimates
/// without bootstrap or diagnostics.
pub fn point_estimates<T: Scalar>(
    panel: &Panel<T>,
    cfg: &AnalysisConfig<T>,
    comparisons: &[Comparison],
) -> Result<ComparisonEstimates<T>, EstimateError> {
    Ok(evaluate(panel, cfg, comparisons, cfg.gformula.seed)?.values)
}

/// Full analysis of `comparisons` on `panel`.
pub fn analyze<T: Scalar>(
    panel: &Panel<T>,
    cfg: &AnalysisConfig<T>,
    comparisons: &[Comparison],
) -> Result<EstimateReport, EstimateError> {
    let schema = panel.schema();
    let point = evaluate(panel, cfg, comparisons, cfg.gformula.seed)?;
    let boot = match &cfg.bootstrap {
        Some(b) => Some(bootstrap(panel, b, |p, seed| {
            let mut flat = Vec::new();
            for v in evaluate(p, cfg, comparisons, seed)?.values {
                v.flatten(&mut flat);
            }
            Ok::<_, EstimateError>(flat)
        })?),
        None => None,
    };
    let nk = cfg.targets.len();
    let ci =
        |offset: usize| boot.as_ref().map(|b| Interval { lo: b.lower[offset].as_f64(), hi: b.upper[offset].as_f64() });

    let mut estimates = Vec::new();
    let mut weights = Vec::new();
    let block = 3 * nk + 1;
    let per_comparison = cfg.estimators.len();
    for (i, v) in point.values.iter().enumerate() {
        let c = &comparisons[i / per_comparison];
        let estimator = cfg.estimators[i % per_comparison];
        let base = i * block;
        let contrasts = v.contrasts();
        let per_time = cfg
            .targets
            .iter()
            .enumerate()
            .map(|(j, &k)| PerTimeRow {
                k,
                treated: v.treated[j].as_f64(),
                control: v.control[j].as_f64(),
                contrast: contrasts[j].as_f64(),
                treated_ci: ci(base + j),
                control_ci: ci(base + nk + j),
                contrast_ci: ci(base + 2 * nk + j),
                treated_mc_se: v.mc_se.as_ref().map(|s| s.0[j].as_f64()),
                control_mc_se: v.mc_se.as_ref().map(|s| s.1[j].as_f64()),
            })
            .collect();
        let total = v.cumulative();
        estimates.push(ComparisonEstimate {
            label: c.label.clone(),
            estimator,
            treated: c.treated.to_string(),
            control: c.control.to_string(),
            kappa: c.treated.kappa(),
            per_time,
            cumulative: CumulativeRow {
                contrast: total.as_f64(),
                ci: ci(base + 3 * nk),
                direction: Direction::of(total),
            },
        });
        if let Some((tw, cw)) = &v.weights {
            for (regime, ws) in [(&c.treated, tw), (&c.control, cw)] {
                for w in ws {
                    weights.push(WeightReport {
                        comparison: c.label.clone(),
                        regime: regime.to_string(),
                        summary: weight_f64(w),
                    });
                }
            }
        }
    }

    let mut notes = Vec::new();
    let positivity = positivity_section(panel, cfg, comparisons, point.propensity.as_ref(), &mut notes);
    for m in &point.models {
        if let Some(n) = &m.note {
            notes.push(format!("{} model at times {:?}: {n}", m.var, m.times));
        }
        if let Some(r) = m.ridge {
            notes.push(format!("{} model at times {:?} refitted with ridge {r} after separation", m.var, m.times));
        }
    }
    if let Some(set) = cfg.formulas.get(Var::Dose) {
        notes.push(format!("dose model family: {}", set.family()));
    }
    let censoring = if !schema.has_censoring() {
        "none in schema".to_string()
    } else {
        let mut parts = Vec::new();
        if cfg.estimators.contains(&Estimator::GFormula) {
            parts.push("gformula: censoring eliminated by intervention in the rollout".to_string());
        }
        if cfg.estimators.contains(&Estimator::Ipw) {
            parts.push(format!("ipw: {}", cfg.ipw.censoring.label()));
        }
        parts.join("; ")
    };
    if cfg.ipw.censoring == CensoringMode::Ipcw && schema.has_censoring() && cfg.estimators.contains(&Estimator::Ipw) {
        notes.push("ipw censoring weights use the fitted censoring model at every k".into());
    }

    Ok(EstimateReport {
        comparisons: estimates,
        diagnostics: ReportDiagnostics {
            models: point.models,
            weights,
            positivity,
            bootstrap: boot.as_ref().map(|b| BootstrapInfo {
                replicates: b.replicates,
                successes: b.successes,
                failures: b.failures,
                first_failure: b.first_failure.clone(),
                level: b.level,
                seed: cfg.bootstrap.map_or(0, |c| c.seed),
            }),
            censoring,
            weight_truncation: cfg.ipw.truncation.filter(|_| cfg.estimators.contains(&Estimator::Ipw)),
            notes,
        },
        provenance: Provenance {
            seed: cfg.gformula.seed,
            subjects: panel.len(),
            n_mc: cfg.gformula.n_mc,
            baseline: cfg.gformula.baseline,
            bootstrap_seed: cfg.bootstrap.map(|b| b.seed),
            config_digest: String::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

fn weight_f64<T: Scalar>(w: &WeightSummary<T>) -> WeightSummary<f64> {
    WeightSummary {
        k: w.k,
        n: w.n,
        zeros: w.zeros,
        mean: w.mean.as_f64(),
        max: w.max.as_f64(),
        p99: w.p99.as_f64(),
        truncated_at: w.truncated_at.map(Scalar::as_f64),
    }
}

fn positivity_section<T: Scalar>(
    panel: &Panel<T>,
    cfg: &AnalysisConfig<T>,
    comparisons: &[Comparison],
    fitted: Option<&FittedSet<T>>,
    notes: &mut Vec<String>,
) -> Vec<PositivityReport<f64>> {
    let owned;
    let propensity = match fitted {
        Some(p) => p,
        None => {
            let Some(set) = cfg.formulas.get(Var::Treatment) else {
                notes.push("positivity diagnostics skipped: no treatment formula".into());
                return Vec::new();
            };
            let max_k = cfg.targets.iter().copied().max().unwrap_or(1);
            let last = max_kappa(comparisons).min(max_k.saturating_sub(1));
            let opts: FitOptions<T> = cfg.ipw.fit;
            match crate::fit::fit_formula_set(panel, set, &(0..=last).collect::<Vec<_>>(), &opts) {
                Ok(p) => {
                    owned = p;
                    &owned
                }
                Err(e) => {
                    notes.push(format!("positivity diagnostics skipped: {e}"));
                    return Vec::new();
                }
            }
        }
    };
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for r in comparisons.iter().flat_map(|c| [&c.treated, &c.control]) {
        if seen.contains(&r) {
            continue;
        }
        seen.push(r);
        let rep = positivity_report(panel, propensity, r, cfg.positivity_threshold);
        if !rep.flags.is_empty() {
            notes.push(format!("{}: {} person-times below positivity threshold", rep.regime, rep.flags.len()));
        }
        out.push(PositivityReport {
            regime: rep.regime,
            threshold: rep.threshold.as_f64(),
            checked: rep.checked,
            flags: rep
                .flags
                .into_iter()
                .map(|f| super::PositivityFlag {
                    subject: f.subject,
                    t: f.t,
                    required: f.required,
                    probability: f.probability.as_f64(),
                })
                .collect(),
            weight_max: rep.weight_max.map(Scalar::as_f64),
            weight_p99: rep.weight_p99.map(Scalar::as_f64),
        });
    }
    out
}
