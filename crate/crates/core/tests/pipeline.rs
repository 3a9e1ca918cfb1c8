use addon_core::estimate::{
    analyze, gformula, point_estimates, AnalysisConfig, Comparison, Estimator, GFormulaConfig, ModelFormulas,
};
use addon_core::fit::FormulaSet;
use addon_core::formula::{Family, FormulaSpec, LinearPredictor};
use addon_core::panel::{load_panel, write_panel, Delimiter, Panel, Var, VariableSchema};
use addon_core::regimes::RegimeSpec;
use addon_core::sem::{simulate_observed, NodeFamily, NodeSpec, StructuralModel};
use addon_core::Scalar;

fn sem<T: Scalar>() -> StructuralModel<T> {
    let s = VariableSchema::new(vec!["L".into()], "Y", "A", None, None, 2).unwrap();
    let lp = |t: &str| LinearPredictor::parse(t, &s).unwrap();
    let bern = |var, times: &str, eta: &str| NodeSpec {
        var,
        times: times.parse().unwrap(),
        family: NodeFamily::Bernoulli { eta: lp(eta) },
    };
    let dose = |times: &str, p: &str, m: &str| NodeSpec {
        var: Var::Dose,
        times: times.parse().unwrap(),
        family: NodeFamily::Hurdle { positive: Some(lp(p)), log_dose: lp(m), sd: T::of(0.5) },
    };
    let specs = vec![
        bern(Var::Covariate(0), "0", "-0.2"),
        bern(Var::Covariate(0), "1..", "-0.4 + 0.7*L[-1] - 0.5*A[-1]"),
        dose("0", "0.3 + 0.6*L", "2 + 0.3*L"),
        dose("1..", "0.1 + 0.6*L - 0.5*A[-1]", "2 + 0.3*L - 0.3*A[-1]"),
        bern(Var::Treatment, "..", "-0.6 + 0.5*L + 0.2*Y"),
    ];
    StructuralModel::new(s.clone(), specs).unwrap()
}

fn formulas(s: &VariableSchema) -> ModelFormulas {
    let f = |t: &str, fam| FormulaSpec::parse(t, s, fam, false).unwrap();
    ModelFormulas::new()
        .with(FormulaSet::new(f("L ~ L[-1] + A[-1]", Family::Logistic)).with_override(0, f("L ~ 1", Family::Logistic)))
        .with(
            FormulaSet::new(f("Y ~ L + A[-1] | L + A[-1]", Family::Hurdle))
                .with_override(0, f("Y ~ L | L", Family::Hurdle)),
        )
        .with(FormulaSet::new(FormulaSpec::parse("A ~ L + Y", s, Family::Logistic, true).unwrap()))
}

fn comparisons() -> Vec<Comparison> {
    vec![Comparison {
        label: "add-on".into(),
        treated: RegimeSpec::add_on(true, 1, 2).unwrap(),
        control: RegimeSpec::add_on(false, 1, 2).unwrap(),
    }]
}

#[test]
fn file_round_trip_preserves_estimates() {
    let panel: Panel<f64> = simulate_observed(&sem(), 2000, 4).unwrap();
    for delim in [Delimiter::Comma, Delimiter::Tab] {
        let mut bytes = Vec::new();
        write_panel(&panel, &mut bytes, delim).unwrap();
        let back: Panel<f64> = load_panel(bytes.as_slice(), panel.schema(), delim).unwrap();
        assert_eq!(back.len(), panel.len());

        let mut cfg =
            AnalysisConfig::new(vec![Estimator::GFormula, Estimator::Ipw], vec![1, 2], formulas(panel.schema()));
        cfg.gformula.n_mc = 3000;
        let a = serde_json::to_string(&analyze(&panel, &cfg, &comparisons()).unwrap()).unwrap();
        let b = serde_json::to_string(&analyze(&back, &cfg, &comparisons()).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn single_precision_tracks_double() {
    let p64: Panel<f64> = simulate_observed(&sem(), 3000, 9).unwrap();
    let p32: Panel<f32> = simulate_observed(&sem(), 3000, 9).unwrap();
    let regimes = [RegimeSpec::add_on(true, 1, 2).unwrap()];
    let g64 = gformula(
        &p64,
        &formulas(p64.schema()),
        &GFormulaConfig { n_mc: 5000, seed: 1, ..Default::default() },
        &regimes,
        &[1, 2],
    )
    .unwrap();
    let g32 = gformula(
        &p32,
        &formulas(p32.schema()),
        &GFormulaConfig { n_mc: 5000, seed: 1, ..Default::default() },
        &regimes,
        &[1, 2],
    )
    .unwrap();
    for (a, b) in g64.estimates[0].means.iter().zip(&g32.estimates[0].means) {
        // Same streams; differences come only from rounding in fits and draws.
        assert!((a - f64::from(*b)).abs() < 0.05 * a.abs().max(1.0), "{a} vs {b}");
    }
    let mut cfg = AnalysisConfig::<f32>::new(vec![Estimator::Ipw], vec![1, 2], formulas(p32.schema()));
    cfg.positivity_threshold = 0.01;
    let est = point_estimates(&p32, &cfg, &comparisons()).unwrap();
    assert!(est[0].treated.iter().all(|v| v.is_finite()));
}
