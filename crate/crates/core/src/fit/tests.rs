use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::panel::{TimePoint, Trajectory};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn within_3se(est: &[f64], se: &[f64], truth: &[f64]) {
    for ((e, s), t) in est.iter().zip(se).zip(truth) {
        assert!((e - t).abs() < 3.0 * s, "estimate {e} vs {t} (se {s})");
    }
}

fn logistic_data(n: usize, beta: [f64; 2], seed: u64) -> (Matrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::with_capacity(2, n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = normal(&mut rng);
        x.push_row(&[1.0, xi]);
        let p = logistic(beta[0] + beta[1] * xi);
        y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
    }
    (x, y)
}

#[test]
fn logistic_recovers_known_coefficients() {
    let (x, y) = logistic_data(100_000, [-0.5, 1.0], 1);
    let fit = fit_logistic(&x, &y, &vec![1.0; y.len()], None, &FitOptions::default()).unwrap();
    assert!(fit.diagnostics.converged);
    within_3se(&fit.coefficients, &fit.standard_errors(), &[-0.5, 1.0]);
}

#[test]
fn logistic_score_equation_and_invariances() {
    let (x, y) = logistic_data(2_000, [0.3, -0.8], 2);
    let w: Vec<f64> = (0..y.len()).map(|i| 0.5 + (i % 3) as f64).collect();
    let opts = FitOptions::default();
    let fit = fit_logistic(&x, &y, &w, None, &opts).unwrap();
    let (num, den) =
        (0..y.len()).fold((0.0, 0.0), |(a, b), i| (a + w[i] * (y[i] - fit.probability(x.row(i))), b + w[i]));
    assert!((num / den).abs() < 1e-6);

    let scaled: Vec<f64> = w.iter().map(|v| v * 7.5).collect();
    let fit2 = fit_logistic(&x, &y, &scaled, None, &opts).unwrap();
    let rev: Vec<usize> = (0..y.len()).rev().collect();
    let xr = Matrix::from_rows(&rev.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>());
    let yr: Vec<f64> = rev.iter().map(|&i| y[i]).collect();
    let wr: Vec<f64> = rev.iter().map(|&i| w[i]).collect();
    let fit3 = fit_logistic(&xr, &yr, &wr, None, &opts).unwrap();
    for j in 0..2 {
        assert!((fit.coefficients[j] - fit2.coefficients[j]).abs() < 1e-8);
        assert!((fit.coefficients[j] - fit3.coefficients[j]).abs() < 1e-8);
    }
}

#[test]
fn logistic_reports_separation_and_rank_deficiency() {
    let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]);
    let err = fit_logistic(&x, &[0.0; 3], &[1.0; 3], None, &FitOptions::default()).unwrap_err();
    assert!(matches!(err, FitError::Separation { .. }), "{err}");

    let sep = Matrix::<f64>::from_rows(&[vec![1.0, -2.0], vec![1.0, -1.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
    let y = [0.0, 0.0, 1.0, 1.0];
    let err = fit_logistic(&sep, &y, &[1.0; 4], None, &FitOptions::default()).unwrap_err();
    assert!(matches!(err, FitError::Separation { .. }), "{err}");
    let ridged =
        fit_logistic(&sep, &y, &[1.0; 4], None, &FitOptions { separation_ridge: Some(1e-6), ..FitOptions::default() })
            .unwrap();
    assert_eq!(ridged.diagnostics.ridge, Some(1e-6));
    assert!(ridged.coefficients.iter().all(|c| c.is_finite()));

    let (x, y) = logistic_data(200, [0.0, 1.0], 3);
    let dup = Matrix::from_rows(&(0..x.rows()).map(|i| vec![1.0, x.get(i, 1), x.get(i, 1)]).collect::<Vec<_>>());
    let names: Vec<String> = ["(intercept)", "L1[0]", "L1copy"].map(String::from).to_vec();
    let err = fit_logistic(&dup, &y, &vec![1.0; 200], Some(&names), &FitOptions::default()).unwrap_err();
    assert_eq!(err, FitError::RankDeficient { column: "L1copy".into() });
}

#[test]
fn linear_exact_and_scale_invariant() {
    let x = Matrix::from_rows(&(0..10).map(|i| vec![1.0, i as f64]).collect::<Vec<_>>());
    let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 1.0).collect();
    let fit = fit_linear(&x, &y, &[1.0; 10], None).unwrap();
    assert!((fit.coefficients[0] - 1.0).abs() < 1e-10 && (fit.coefficients[1] - 2.0).abs() < 1e-10);
    assert!(fit.sigma2 < 1e-20);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noisy: Vec<f64> = y.iter().map(|v| v + normal(&mut rng)).collect();
    let w: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
    let a = fit_linear(&x, &noisy, &w, None).unwrap();
    let b = fit_linear(&x, &noisy, &w.iter().map(|v| v * 2.0).collect::<Vec<_>>(), None).unwrap();
    for j in 0..2 {
        assert!((a.coefficients[j] - b.coefficients[j]).abs() < 1e-12);
        assert!((a.covariance[j][j] - b.covariance[j][j]).abs() < 1e-12);
    }
    assert!((a.sigma2 - b.sigma2).abs() < 1e-12);
}

#[test]
fn linear_recovers_known_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut x = Matrix::with_capacity(3, n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = (normal(&mut rng), rng.random::<f64>());
        x.push_row(&[1.0, a, b]);
        y.push(0.5 - 1.5 * a + 2.0 * b + 0.7 * normal(&mut rng));
    }
    let fit = fit_linear(&x, &y, &vec![1.0; n], None).unwrap();
    within_3se(&fit.coefficients, &fit.standard_errors(), &[0.5, -1.5, 2.0]);
    assert!((fit.sigma2 - 0.49).abs() < 0.01);
}

#[test]
fn hurdle_degenerate_cases() {
    let x = Matrix::<f64>::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]);
    let opts = FitOptions::default();
    let zero = fit_hurdle_dose(&x, &x, &[0.0; 4], &[1.0; 4], (None, None), &opts).unwrap();
    assert_eq!(zero.mean(&[1.0], &[1.0]), 0.0);
    assert!(zero.note.is_some());

    let one_level = fit_hurdle_dose(&x, &x, &[0.0, 8.0, 0.0, 8.0], &[1.0; 4], (None, None), &opts).unwrap();
    assert!((one_level.positive_mean(&[1.0]) - 8.0).abs() < 1e-12);
    assert!((one_level.mean(&[1.0], &[1.0]) - 4.0).abs() < 1e-9);

    let all_pos = fit_hurdle_dose(&x, &x, &[1.0, 2.0, 3.0, 4.0], &[1.0; 4], (None, None), &opts).unwrap();
    assert_eq!(all_pos.probability(&[1.0]), 1.0);
    assert!(fit_hurdle_dose(&x, &x, &[-1.0, 0.0, 0.0, 1.0], &[1.0; 4], (None, None), &opts).is_err());
}

#[test]
fn hurdle_recovers_both_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let mut x = Matrix::with_capacity(2, n);
    let mut d = Vec::with_capacity(n);
    for _ in 0..n {
        let a = if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
        x.push_row(&[1.0, a]);
        let positive = rng.random::<f64>() < logistic(0.2 - 0.9 * a);
        let z = normal(&mut rng);
        d.push(if positive { (1.0 + 0.5 * a + 0.6 * z).exp() } else { 0.0 });
    }
    let fit = fit_hurdle_dose(&x, &x, &d, &vec![1.0; n], (None, None), &FitOptions::default()).unwrap();
    let PositivePart::Fitted(p) = &fit.positive else { panic!("expected fitted positivity") };
    within_3se(&p.coefficients, &p.standard_errors(), &[0.2, -0.9]);
    let l = fit.log_dose.as_ref().unwrap();
    within_3se(&l.coefficients, &l.standard_errors(), &[1.0, 0.5]);
}

fn small_panel() -> Panel<f64> {
    let schema = VariableSchema::new(vec!["L".into()], "Y", "A", Some("C".into()), Some("D".into()), 2).unwrap();
    let pt = |l: f64, y: f64, a: bool| TimePoint::new(vec![l], y, a);
    let dead = {
        let mut p = pt(1.0, 0.0, false);
        p.competing = true;
        p
    };
    let trajectories = vec![
        Trajectory::new("1", vec![pt(0.0, 1.0, true), pt(1.0, 0.0, false), pt(0.0, 2.0, true)]),
        Trajectory::new("2", vec![pt(1.0, 0.0, false), TimePoint::missing(1), TimePoint::missing(1)]),
        Trajectory::new("3", vec![pt(1.0, 3.0, true), dead.clone(), dead]),
        Trajectory::new("4", vec![pt(0.0, 0.0, false), pt(0.0, 1.0, true), pt(1.0, 0.0, true)]),
    ];
    Panel::new(schema, trajectories).unwrap()
}

#[test]
fn design_rows_follow_the_filters() {
    let panel = small_panel();
    let s = panel.schema();
    let f = FormulaSpec::parse("Y ~ Y[-1] + factor(time)", s, Family::Hurdle, true).unwrap();
    let d = build_design(&panel, &f, &[1, 2]).unwrap();
    let sources: Vec<(usize, usize)> = d.provenance.iter().map(|r| (r.subject, r.k)).collect();
    // subject 2 censored at 1, subject 3 dead from 1
    assert_eq!(sources, [(0, 1), (3, 1), (0, 2), (3, 2)]);
    assert_eq!(d.rows.cols(), 3);
    assert_eq!(d.rows.row(2), [1.0, 0.0, 1.0]);

    let a0 = FormulaSpec::parse("A ~ L + Y", s, Family::Logistic, true).unwrap();
    let d0 = build_design(&panel, &a0, &[0]).unwrap();
    assert_eq!(d0.outcomes.len(), 4);

    let dm = FormulaSpec::parse("D ~ L[-1]", s, Family::Logistic, true).unwrap();
    let dd = build_design(&panel, &dm, &[1, 2]).unwrap();
    let sources: Vec<(usize, usize)> = dd.provenance.iter().map(|r| (r.subject, r.k)).collect();
    assert_eq!(sources, [(0, 1), (2, 1), (3, 1), (0, 2), (3, 2)]);

    let cm = FormulaSpec::parse("C ~ 1", s, Family::Logistic, true).unwrap();
    let cd = build_design(&panel, &cm, &[1]).unwrap();
    assert_eq!(cd.outcomes, [0.0, 1.0, 0.0, 0.0]);

    let lag2 = FormulaSpec::parse("Y ~ Y[-2]", s, Family::Hurdle, true).unwrap();
    assert!(matches!(build_design(&panel, &lag2, &[1]), Err(FitError::Formula { .. })));
}

#[test]
fn formula_sets_split_pooled_and_overridden_times() {
    let sem_panel = {
        let schema = VariableSchema::new(vec![], "Y", "A", None, None, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trajectories = (0..400)
            .map(|i| {
                let points = (0..=3)
                    .map(|_| {
                        TimePoint::new(
                            vec![],
                            if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 },
                            rng.random::<f64>() < 0.5,
                        )
                    })
                    .collect();
                Trajectory::new(i.to_string(), points)
            })
            .collect();
        Panel::new(schema, trajectories).unwrap()
    };
    let s = sem_panel.schema();
    let set = FormulaSet::new(FormulaSpec::parse("A ~ Y + A[-1]", s, Family::Logistic, true).unwrap())
        .with_override(0, FormulaSpec::parse("A ~ Y", s, Family::Logistic, true).unwrap());
    let fitted = fit_formula_set(&sem_panel, &set, &[0, 1, 2], &FitOptions::default()).unwrap();
    assert_eq!(fitted.models.len(), 2);
    assert_eq!(fitted.for_time(0).unwrap().times, [0]);
    assert_eq!(fitted.for_time(2).unwrap().times, [1, 2]);
    assert!(fitted.for_time(3).is_none());
    let per_time = FormulaSet::new(FormulaSpec::parse("A ~ Y", s, Family::Logistic, false).unwrap());
    assert_eq!(fit_formula_set(&sem_panel, &per_time, &[1, 2, 3], &FitOptions::default()).unwrap().models.len(), 3);
    let wrong = FormulaSpec::parse("A ~ Y", s, Family::Linear, true).unwrap();
    assert!(matches!(
        fit_formula(&sem_panel, &wrong, &[1], &FitOptions::default()),
        Err(FitError::FamilyMismatch { .. })
    ));
}
