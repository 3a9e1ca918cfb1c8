//! End-to-end acceptance checks. Runs as a plain binary (no libtest harness) and
//! prints one PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use addon_core::estimate::{
    analyze, gformula, ipw_mean, ipw_weight, point_estimates, AnalysisConfig, BootstrapConfig, Comparison,
    EstimateReport, Estimator, GFormulaConfig, Interval, IpwConfig, ModelFormulas,
};
use addon_core::fit::FormulaSet;
use addon_core::formula::{Family, FormulaSpec, LinearPredictor};
use addon_core::graph::{build_swit, check_exchangeability, d_separated, CausalGraph, Half, NodeLabel, Role};
use addon_core::panel::{Panel, TimePoint, Trajectory, Var, VariableSchema};
use addon_core::regimes::{RegimeKind, RegimeSpec};
use addon_core::sem::{
    oracle_mean, simulate_observed, simulate_regime, NodeFamily, NodeSpec, OracleMethod, StructuralModel,
};

type Outcome = (bool, String);

fn lp(text: &str, s: &VariableSchema) -> LinearPredictor<f64> {
    LinearPredictor::parse(text, s).unwrap()
}

fn bern(var: Var, times: &str, eta: &str, s: &VariableSchema) -> NodeSpec<f64> {
    NodeSpec { var, times: times.parse().unwrap(), family: NodeFamily::Bernoulli { eta: lp(eta, s) } }
}

fn hurdle(times: &str, positive: &str, log_dose: &str, sd: f64, s: &VariableSchema) -> NodeSpec<f64> {
    NodeSpec {
        var: Var::Dose,
        times: times.parse().unwrap(),
        family: NodeFamily::Hurdle { positive: Some(lp(positive, s)), log_dose: lp(log_dose, s), sd },
    }
}

/// Per-time formula set: `at0` at time 0 and `later` afterwards, fitted separately at each time.
fn per_time(at0: &str, later: &str, s: &VariableSchema, family: Family) -> FormulaSet {
    let f = |t: &str| FormulaSpec::parse(t, s, family, false).unwrap();
    FormulaSet::new(f(later)).with_override(0, f(at0))
}

fn addon(j: bool, kappa: usize, horizon: usize) -> RegimeSpec {
    RegimeSpec::add_on(j, kappa, horizon).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria 1 and 2: finite-support model against exact enumeration.

const DOSE: f64 = 10.0;

/// Binary L, Y in {0, DOSE}, binary A; first-order Markov in the observed history.
fn discrete_sem() -> StructuralModel<f64> {
    let s = VariableSchema::new(vec!["L".into()], "Y", "A", None, None, 3).unwrap();
    let log_d = DOSE.ln().to_string();
    let specs = vec![
        bern(Var::Covariate(0), "0", "-0.3", &s),
        bern(Var::Covariate(0), "1..", "-0.3 + 0.8*L[-1] - 0.6*A[-1] + 0.4*pos(Y[-1])", &s),
        hurdle("0", "-0.2 + 0.8*L", &log_d, 0.0, &s),
        hurdle("1..", "-0.2 + 0.8*L + 0.9*pos(Y[-1]) - 0.8*A[-1]", &log_d, 0.0, &s),
        bern(Var::Treatment, "0", "-0.5 + 0.7*L + 1.0*pos(Y)", &s),
        bern(Var::Treatment, "1..", "-0.5 + 0.7*L + 1.0*pos(Y) + 0.8*A[-1]", &s),
    ];
    StructuralModel::new(s, specs).unwrap()
}

/// Saturated in each variable's parents, which for this model carry all the
/// information the full history has about it.
fn discrete_formulas(s: &VariableSchema) -> ModelFormulas {
    ModelFormulas::new()
        .with(per_time("L ~ 1", "L ~ L[-1]*A[-1]*pos(Y[-1])", s, Family::Logistic))
        .with(per_time("Y ~ L | 1", "Y ~ L*pos(Y[-1])*A[-1] | 1", s, Family::Hurdle))
        .with(per_time("A ~ L*pos(Y)", "A ~ L*pos(Y)*A[-1]", s, Family::Logistic))
}

struct DiscreteRun {
    /// `(j, k, oracle, gformula, ipw)`.
    rows: Vec<(bool, usize, f64, f64, f64)>,
    gformula_secs: f64,
}

fn discrete_run() -> DiscreteRun {
    let sem = discrete_sem();
    let start = Instant::now();
    let panel = simulate_observed(&sem, 50_000, 101).unwrap();
    let f = discrete_formulas(panel.schema());
    let regimes = [addon(false, 1, 3), addon(true, 1, 3)];
    let cfg = GFormulaConfig { n_mc: 200_000, seed: 7, ..GFormulaConfig::default() };
    let g = gformula(&panel, &f, &cfg, &regimes, &[1, 2, 3]).unwrap();
    let gformula_secs = start.elapsed().as_secs_f64();
    let mut rows = Vec::new();
    for (r, est) in regimes.iter().zip(&g.estimates) {
        let ipw = ipw_mean(&panel, &f, r, &[1, 2, 3], &IpwConfig::default()).unwrap();
        let j = matches!(r.kind(), RegimeKind::AddOn(true));
        for (i, k) in [1, 2, 3].into_iter().enumerate() {
            let truth = oracle_mean(&sem, r, k, OracleMethod::Enumerate).unwrap().mean;
            rows.push((j, k, truth, est.means[i], ipw.means[i]));
        }
    }
    DiscreteRun { rows, gformula_secs }
}

fn criterion_1(run: &DiscreteRun) -> Outcome {
    let worst = run.rows.iter().map(|r| (r.3 - r.2).abs()).fold(0.0, f64::max);
    let ok = worst < 0.02 * DOSE && run.gformula_secs < 120.0;
    (
        ok,
        format!(
            "max |gformula - oracle| = {worst:.4} (< {}), simulate+fit+rollout {:.1}s",
            0.02 * DOSE,
            run.gformula_secs
        ),
    )
}

fn criterion_2(run: &DiscreteRun) -> Outcome {
    let vs_oracle = run.rows.iter().map(|r| (r.4 - r.2).abs()).fold(0.0, f64::max);
    let vs_g = run.rows.iter().map(|r| (r.4 - r.3).abs()).fold(0.0, f64::max);
    let ok = vs_oracle < 0.03 * DOSE && vs_g < 0.04 * DOSE;
    (
        ok,
        format!(
            "max |ipw - oracle| = {vs_oracle:.4} (< {}), max |ipw - gformula| = {vs_g:.4} (< {})",
            0.03 * DOSE,
            0.04 * DOSE
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 3: weight identity on random trajectories.

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_addon = 0.0f64;
    let mut worst_static = 0.0f64;
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    for i in 0..10_000 {
        let horizon = rng.random_range(1..=6usize);
        let kappa = rng.random_range(0..horizon);
        let points: Vec<TimePoint<f64>> = (0..=horizon)
            .map(|_| {
                let y = if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.01..200.0) };
                TimePoint::new(vec![], y, rng.random_bool(0.5))
            })
            .collect();
        let props: Vec<f64> = (0..=horizon).map(|_| rng.random_range(0.02..0.98)).collect();
        let traj = Trajectory::new(i.to_string(), points);
        let prop = |_: &Trajectory<f64>, t: usize| props[t];
        let f = |a: bool, t: usize| if a { props[t] } else { 1.0 - props[t] };

        for j in [false, true] {
            let w = ipw_weight(&traj, &prop, &addon(j, kappa, horizon), kappa).unwrap();
            // Closed form: 1{A_t = j} / f(j) at positive doses, 1 otherwise.
            let mut closed = 1.0;
            for t in 0..=kappa {
                let p = &traj.points[t];
                if p.dose > 0.0 {
                    closed *= if p.treatment == j { 1.0 / f(j, t) } else { 0.0 };
                }
            }
            worst_addon = worst_addon.max(rel(w.generic, w.simplified.unwrap())).max(rel(w.generic, closed));
        }

        let seq: Vec<bool> = (0..=kappa).map(|_| rng.random_bool(0.5)).collect();
        let st = RegimeSpec::new(RegimeKind::Static(seq.clone()), kappa, horizon).unwrap();
        let w = ipw_weight(&traj, &prop, &st, kappa).unwrap().generic;
        let classical: f64 =
            (0..=kappa).map(|t| if traj.points[t].treatment == seq[t] { 1.0 / f(seq[t], t) } else { 0.0 }).product();
        worst_static = worst_static.max(rel(w, classical));
    }
    let ok = worst_addon <= 1e-12 && worst_static <= 1e-12;
    (ok, format!("10000 trajectories: max rel. error add-on {worst_addon:.2e}, static {worst_static:.2e}"))
}

// ---------------------------------------------------------------------------
// Criteria 4 and 5: graphs against exhaustive path enumeration.

/// Measured covariates, no latent nodes.
const FIG_MEASURED: &str = "\
node L0\nnode Y0\nnode A0\nnode L1\nnode Y1\nnode A1\nnode Y2
edge L0 -> Y0\nedge L0 -> A0\nedge L0 -> L1\nedge L0 -> A1\nedge L0 -> Y1\nedge L0 -> Y2
edge L1 -> Y1\nedge L1 -> A1\nedge L1 -> Y2
edge Y0 -> A0\nedge Y0 -> L1\nedge Y0 -> A1\nedge Y0 -> Y1\nedge Y0 -> Y2
edge Y1 -> A1\nedge Y1 -> Y2
edge A0 -> L1\nedge A0 -> Y2\nedge A0 -> Y1\nedge A0 -> A1
edge A1 -> Y2
";

/// Latent U driving both treatments.
const FIG_LATENT: &str = "\
node U latent\nnode Y0\nnode A0\nnode Y1\nnode A1\nnode Y2
edge U -> A0\nedge U -> A1
edge Y0 -> A0\nedge Y0 -> A1\nedge Y0 -> Y1\nedge Y0 -> Y2
edge Y1 -> A1\nedge Y1 -> Y2
edge A0 -> Y2\nedge A0 -> Y1\nedge A0 -> A1
edge A1 -> Y2
";

/// Adjacency in plain vectors, independent of the library's traversal.
struct Dag {
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    fn of(g: &CausalGraph) -> Self {
        Self {
            parents: (0..g.len()).map(|v| g.parents(v).to_vec()).collect(),
            children: (0..g.len()).map(|v| g.children(v).to_vec()).collect(),
        }
    }

    fn has_descendant_in(&self, v: usize, z: &BTreeSet<usize>) -> bool {
        let mut stack = vec![v];
        let mut seen = BTreeSet::new();
        while let Some(u) = stack.pop() {
            if z.contains(&u) {
                return true;
            }
            if seen.insert(u) {
                stack.extend(&self.children[u]);
            }
        }
        false
    }

    fn edge(&self, a: usize, b: usize) -> bool {
        self.children[a].contains(&b)
    }

    /// Every simple path in the skeleton: open iff each collider is in `z` or has a
    /// descendant in `z`, and no other interior node is in `z`.
    fn is_open(&self, path: &[usize], z: &BTreeSet<usize>) -> bool {
        path.windows(3).all(|w| {
            let collider = self.edge(w[0], w[1]) && self.edge(w[2], w[1]);
            if collider {
                self.has_descendant_in(w[1], z)
            } else {
                !z.contains(&w[1])
            }
        })
    }

    fn open_path_exists(&self, x: &BTreeSet<usize>, y: &BTreeSet<usize>, z: &BTreeSet<usize>) -> bool {
        fn walk(d: &Dag, path: &mut Vec<usize>, y: &BTreeSet<usize>, z: &BTreeSet<usize>) -> bool {
            let v = *path.last().unwrap();
            if path.len() > 1 && y.contains(&v) && d.is_open(path, z) {
                return true;
            }
            let next: Vec<usize> = d.parents[v].iter().chain(&d.children[v]).copied().collect();
            for u in next {
                if path.contains(&u) {
                    continue;
                }
                path.push(u);
                // Prune prefixes that are already blocked at an interior node.
                let prefix_ok = path.len() < 3 || d.is_open(&path[path.len() - 3..], z);
                if prefix_ok && walk(d, path, y, z) {
                    return true;
                }
                path.pop();
            }
            false
        }
        x.iter().any(|&s| walk(self, &mut vec![s], y, z))
    }
}

fn fixed_nodes(g: &CausalGraph) -> BTreeSet<usize> {
    (0..g.len()).filter(|&v| g.node(v).half == Half::Fixed).collect()
}

fn criterion_4() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let latent = CausalGraph::parse(FIG_LATENT).unwrap();
    let r = check_exchangeability(&latent, 1, &BTreeSet::from([2])).unwrap();
    let w0 = &r.entry(1, 0, 2).unwrap().w_set;
    let w1 = &r.entry(1, 1, 2).unwrap().w_set;
    let w_ok = *w0 == ["Y1^{g}", "A1^{g}", "Y2^{g}"] && *w1 == ["Y2^{g}"];
    ok &= w_ok;
    notes.push(format!("W(0,2)={w0:?} W(1,2)={w1:?}"));

    let e = r.entry(1, 0, 2).unwrap();
    let witness = e.witness.clone().unwrap_or_default();
    let fail_ok = !r.passed && !e.separated && witness.contains('U') && e.treatment == "A0";
    ok &= fail_ok;
    notes.push(format!("latent graph {} via `{witness}`", if r.passed { "PASS" } else { "FAIL" }));

    // The measured graph must pass, and every verdict must agree with enumeration
    // on the static template (fixed halves are constants, i.e. conditioned on).
    let measured = CausalGraph::parse(FIG_MEASURED).unwrap();
    let r = check_exchangeability(&measured, 1, &BTreeSet::from([1, 2])).unwrap();
    ok &= r.passed;
    let mut agree = 0;
    for graph in [&measured, &latent] {
        let r = check_exchangeability(graph, 1, &BTreeSet::from([1, 2])).unwrap();
        for e in &r.entries {
            let swit = build_swit(graph, &(0..=(e.k - 1).min(1)).collect()).unwrap();
            let g = swit.graph();
            let index: BTreeMap<String, usize> = (0..g.len()).map(|v| (g.node(v).to_string(), v)).collect();
            let set = |names: &[String]| names.iter().map(|n| index[n]).collect::<BTreeSet<usize>>();
            let mut z = set(&e.conditioning);
            z.extend(fixed_nodes(g));
            let open = Dag::of(g).open_path_exists(&BTreeSet::from([index[&e.treatment]]), &set(&e.w_set_static), &z);
            if open == !e.separated {
                agree += 1;
            } else {
                ok = false;
            }
        }
    }
    notes.push(format!(
        "measured graph {}; {agree} verdicts agree with path enumeration",
        if r.passed { "PASS" } else { "FAIL" }
    ));
    (ok, notes.join("; "))
}

fn random_dag(rng: &mut ChaCha8Rng) -> CausalGraph {
    let n = rng.random_range(2..=8usize);
    let density = rng.random_range(0.15..0.7);
    let mut g = CausalGraph::new();
    for t in 0..n {
        g.add_node(NodeLabel::new(Role::L, t), false).unwrap();
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(density) {
                g.add_edge(a, b).unwrap();
            }
        }
    }
    g
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut queries, mut mismatches, mut bad_witness) = (0usize, 0usize, 0usize);
    for _ in 0..1000 {
        let g = random_dag(&mut rng);
        let d = Dag::of(&g);
        let n = g.len();
        for _ in 0..40 {
            // Random disjoint X, Y (non-empty) and Z.
            let mut role = vec![0u8; n];
            for r in role.iter_mut() {
                *r = rng.random_range(0..4);
            }
            role[rng.random_range(0..n)] = 1;
            let free: Vec<usize> = (0..n).filter(|&v| role[v] != 1).collect();
            if free.is_empty() {
                continue;
            }
            role[free[rng.random_range(0..free.len())]] = 2;
            let pick = |c: u8| (0..n).filter(|&v| role[v] == c).collect::<BTreeSet<usize>>();
            let (x, y, z) = (pick(1), pick(2), pick(3));
            let verdict = d_separated(&g, &x, &y, &z).unwrap();
            let open = d.open_path_exists(&x, &y, &z);
            queries += 1;
            if verdict.separated == open {
                mismatches += 1;
            }
            if let Some(w) = &verdict.witness {
                let ends = x.contains(&w[0]) && y.contains(w.last().unwrap());
                let simple = w.iter().collect::<BTreeSet<_>>().len() == w.len();
                let adjacent = w.windows(2).all(|p| d.edge(p[0], p[1]) || d.edge(p[1], p[0]));
                if !(ends && simple && adjacent && d.is_open(w, &z)) {
                    bad_witness += 1;
                }
            }
        }
    }
    (
        mismatches == 0 && bad_witness == 0,
        format!("1000 DAGs, {queries} queries: {mismatches} verdict mismatches, {bad_witness} invalid witness paths"),
    )
}

// ---------------------------------------------------------------------------
// Criteria 6 and 9: common random numbers and competing events.

/// Censoring, a competing event, a binary covariate and a continuous hurdle dose.
fn competing_sem() -> StructuralModel<f64> {
    let s = VariableSchema::new(vec!["L".into()], "Y", "A", Some("C".into()), Some("D".into()), 4).unwrap();
    let specs = vec![
        bern(Var::Censor, "..", "-3", &s),
        bern(Var::Compete, "..", "-2.2 + 0.8*L[-1]", &s),
        bern(Var::Covariate(0), "0", "-0.3", &s),
        bern(Var::Covariate(0), "1..", "-0.3 + 0.5*A[-1] + 0.3*pos(Y[-1])", &s),
        hurdle("0", "0.4 + 0.5*L", "1.5", 0.4, &s),
        hurdle("1..", "0.4 + 0.5*L - 0.4*A[-1]", "1.5 - 0.3*A[-1]", 0.4, &s),
        bern(Var::Treatment, "..", "-0.5 + 0.6*L + 0.3*Y", &s),
    ];
    StructuralModel::new(s, specs).unwrap()
}

fn competing_formulas(s: &VariableSchema) -> ModelFormulas {
    let pooled = |t: &str, fam| FormulaSpec::parse(t, s, fam, true).unwrap();
    ModelFormulas::new()
        .with(FormulaSet::new(pooled("C ~ 1", Family::Logistic)))
        .with(FormulaSet::new(pooled("D ~ L[-1]", Family::Logistic)))
        .with(per_time("L ~ 1", "L ~ A[-1] + pos(Y[-1])", s, Family::Logistic))
        .with(per_time("Y ~ L | 1", "Y ~ L + A[-1] | A[-1]", s, Family::Hurdle))
        .with(FormulaSet::new(pooled("A ~ L + Y", Family::Logistic)))
}

fn competing_violations(t: &Trajectory<f64>) -> usize {
    match t.points.iter().position(|p| p.competing) {
        Some(d) => t.points[d..].iter().filter(|p| !p.competing || p.dose != 0.0).count(),
        None => 0,
    }
}

fn criterion_6() -> Outcome {
    let sem = competing_sem();
    let (n, seed) = (20_000, 66);
    let observed = simulate_observed(&sem, n, seed).unwrap();
    let mut followers = 0;
    let mut mismatched = 0;
    for regime in [addon(true, 2, 4), addon(false, 2, 4), RegimeSpec::constant(true, 1, 4).unwrap()] {
        let cf = simulate_regime(&sem, &regime, n, seed, false).unwrap();
        for (o, c) in observed.trajectories().iter().zip(cf.panel.trajectories()) {
            if !regime.follows(o).compliant {
                continue;
            }
            followers += 1;
            let same = o.points.iter().zip(&c.points).all(|(a, b)| {
                a.covariates == b.covariates
                    && a.dose.to_bits() == b.dose.to_bits()
                    && a.censored == b.censored
                    && a.competing == b.competing
            });
            mismatched += usize::from(!same);
        }
    }
    (
        followers > 1000 && mismatched == 0,
        format!("{followers} regime followers, {mismatched} with differing (L, Y) paths"),
    )
}

fn criterion_9() -> Outcome {
    let sem = competing_sem();
    let mut checked = 0usize;
    let mut deaths = 0usize;
    let mut violations = 0usize;
    let mut tally = |panel: &Panel<f64>| {
        for t in panel.trajectories() {
            checked += 1;
            deaths += usize::from(t.points.iter().any(|p| p.competing));
            violations += competing_violations(t);
        }
    };
    let observed = simulate_observed(&sem, 10_000, 9).unwrap();
    tally(&observed);
    let regimes = [addon(true, 2, 4), addon(false, 2, 4)];
    for r in &regimes {
        tally(&simulate_regime(&sem, r, 10_000, 9, true).unwrap().panel);
        tally(&simulate_regime(&sem, r, 10_000, 9, false).unwrap().panel);
    }
    let cfg = GFormulaConfig { n_mc: 20_000, seed: 4, keep_rollouts: true, ..GFormulaConfig::default() };
    let g = gformula(&observed, &competing_formulas(observed.schema()), &cfg, &regimes, &[1, 2, 3, 4]).unwrap();
    for est in &g.estimates {
        let rollouts = est.rollouts.clone().unwrap();
        tally(&Panel::new(observed.schema().clone(), rollouts).unwrap());
    }
    (
        violations == 0 && deaths > 1000,
        format!(
            "{checked} simulated and rolled-out trajectories, {deaths} with a competing event, {violations} violations"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criteria 7, 8 and 10: bootstrap and degenerate regimes.

fn hurdle_sem(a_effect: f64, horizon: usize) -> StructuralModel<f64> {
    let s = VariableSchema::new(vec!["L".into()], "Y", "A", None, None, horizon).unwrap();
    let specs = vec![
        bern(Var::Covariate(0), "0", "-0.2", &s),
        bern(Var::Covariate(0), "1..", &format!("-0.4 + 0.7*L[-1] + {a_effect}*A[-1]"), &s),
        hurdle("0", "0.3 + 0.6*L", "2 + 0.3*L", 0.5, &s),
        hurdle("1..", &format!("0.1 + 0.6*L + {a_effect}*A[-1]"), &format!("2 + 0.3*L + {a_effect}*A[-1]"), 0.5, &s),
        bern(Var::Treatment, "..", "-0.6 + 0.5*L + 0.2*Y", &s),
    ];
    StructuralModel::new(s, specs).unwrap()
}

fn hurdle_formulas(s: &VariableSchema) -> ModelFormulas {
    ModelFormulas::new()
        .with(per_time("L ~ 1", "L ~ L[-1] + A[-1]", s, Family::Logistic))
        .with(per_time("Y ~ L | L", "Y ~ L + A[-1] | L + A[-1]", s, Family::Hurdle))
        .with(FormulaSet::new(FormulaSpec::parse("A ~ L + Y", s, Family::Logistic, true).unwrap()))
}

fn addon_comparison(kappa: usize, horizon: usize) -> Comparison {
    Comparison { label: "add-on".into(), treated: addon(true, kappa, horizon), control: addon(false, kappa, horizon) }
}

/// Whether every reported interval contains its point estimate.
fn intervals_contain_estimates(report: &EstimateReport) -> bool {
    let has = |ci: Option<Interval>, v: f64| ci.is_some_and(|i| i.contains(v));
    report.comparisons.iter().all(|c| {
        has(c.cumulative.ci, c.cumulative.contrast)
            && c.per_time
                .iter()
                .all(|r| has(r.treated_ci, r.treated) && has(r.control_ci, r.control) && has(r.contrast_ci, r.contrast))
    })
}

struct NullRuns {
    covered: usize,
    runs: usize,
    containing: usize,
}

fn null_runs() -> NullRuns {
    let sem = hurdle_sem(0.0, 2);
    let mut out = NullRuns { covered: 0, runs: 20, containing: 0 };
    for rep in 0..out.runs as u64 {
        let panel = simulate_observed(&sem, 400, 1000 + rep).unwrap();
        let mut cfg = AnalysisConfig::new(vec![Estimator::GFormula], vec![1, 2], hurdle_formulas(panel.schema()));
        cfg.gformula = GFormulaConfig { n_mc: 400, seed: 77 + rep, ..GFormulaConfig::default() };
        cfg.bootstrap = Some(BootstrapConfig { replicates: 500, seed: 500 + rep, level: 0.95 });
        let report = analyze(&panel, &cfg, &[addon_comparison(1, 2)]).unwrap();
        let ci = report.comparisons[0].cumulative.ci.unwrap();
        out.covered += usize::from(ci.contains(0.0));
        out.containing += usize::from(intervals_contain_estimates(&report));
    }
    out
}

fn criterion_7(null: &NullRuns) -> Outcome {
    (
        null.covered >= 18,
        format!("95% CI of the cumulative add-on contrast covers 0 in {}/{} seeded runs", null.covered, null.runs),
    )
}

fn criterion_8() -> Outcome {
    let s = VariableSchema::new(vec!["L".into()], "Y", "A", None, None, 3).unwrap();
    let always = |times: &str| NodeSpec {
        var: Var::Dose,
        times: times.parse().unwrap(),
        family: NodeFamily::Hurdle { positive: None, log_dose: lp("1 + 0.3*L - 0.2*A[-1]", &s), sd: 0.5 },
    };
    let sem = StructuralModel::new(
        s.clone(),
        vec![
            bern(Var::Covariate(0), "0", "-0.2", &s),
            bern(Var::Covariate(0), "1..", "-0.2 + 0.6*A[-1]", &s),
            NodeSpec {
                var: Var::Dose,
                times: "0".parse().unwrap(),
                family: NodeFamily::Hurdle { positive: None, log_dose: lp("1 + 0.3*L", &s), sd: 0.5 },
            },
            always("1"),
            hurdle("2..", "0.5*L - 0.8*A[-1]", "1 + 0.3*L", 0.5, &s),
            bern(Var::Treatment, "..", "-0.3 + 0.7*L", &s),
        ],
    )
    .unwrap();
    let panel = simulate_observed(&sem, 5000, 8).unwrap();
    let f = ModelFormulas::new()
        .with(per_time("L ~ 1", "L ~ L[-1] + A[-1]", &s, Family::Logistic))
        // Per-time dose models, so the fitted models inherit the always-positive doses.
        .with(per_time("Y ~ L | L", "Y ~ L + A[-1] | L + A[-1]", &s, Family::Hurdle))
        .with(FormulaSet::new(FormulaSpec::parse("A ~ L + Y", &s, Family::Logistic, true).unwrap()));
    let mut cfg = AnalysisConfig::new(vec![Estimator::GFormula, Estimator::Ipw], vec![1, 2, 3], f);
    cfg.gformula = GFormulaConfig { n_mc: 20_000, seed: 12, ..GFormulaConfig::default() };
    let comparisons: Vec<Comparison> = [false, true]
        .into_iter()
        .map(|j| Comparison {
            label: format!("j={}", u8::from(j)),
            treated: addon(j, 1, 3),
            control: RegimeSpec::constant(j, 1, 3).unwrap(),
        })
        .collect();
    let est = point_estimates(&panel, &cfg, &comparisons).unwrap();
    let mut identical = 0;
    let mut total = 0;
    for v in &est {
        for (a, b) in v.treated.iter().zip(&v.control) {
            total += 1;
            identical += usize::from(a.to_bits() == b.to_bits());
        }
    }
    (
        identical == total && total > 0,
        format!("{identical}/{total} add-on vs static estimates bit-identical (g-formula and IPW)"),
    )
}

fn criterion_10(null: &NullRuns) -> Outcome {
    let sem = hurdle_sem(-0.4, 3);
    let panel = simulate_observed(&sem, 1500, 10).unwrap();
    let mut cfg =
        AnalysisConfig::new(vec![Estimator::GFormula, Estimator::Ipw], vec![1, 2, 3], hurdle_formulas(panel.schema()));
    cfg.gformula = GFormulaConfig { n_mc: 1500, seed: 3, ..GFormulaConfig::default() };
    cfg.bootstrap = Some(BootstrapConfig { replicates: 500, seed: 2024, level: 0.95 });
    let comparisons = [addon_comparison(1, 3)];
    let a = serde_json::to_string(&analyze(&panel, &cfg, &comparisons).unwrap()).unwrap();
    let report = analyze(&panel, &cfg, &comparisons).unwrap();
    let b = serde_json::to_string(&report).unwrap();
    let bytes_ok = a == b;
    let contain_ok = intervals_contain_estimates(&report) && null.containing == null.runs;
    (
        bytes_ok && contain_ok,
        format!(
            "B=500 report {} across runs; intervals contain the point estimate in this run: {}, in null runs: {}/{}",
            if bytes_ok { "byte-identical" } else { "DIFFERS" },
            intervals_contain_estimates(&report),
            null.containing,
            null.runs
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, (ok, detail): Outcome| {
        println!("criterion {n:>2} {name:<28} {}  {detail}", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    };
    let discrete = discrete_run();
    report(1, "g-formula vs enumeration", criterion_1(&discrete));
    report(2, "IPW agreement", criterion_2(&discrete));
    report(3, "weight identity", criterion_3());
    report(4, "graph golden cases", criterion_4());
    report(5, "d-separation oracle", criterion_5());
    report(6, "CRN consistency", criterion_6());
    let null = null_runs();
    report(7, "null-effect coverage", criterion_7(&null));
    report(8, "degenerate equivalence", criterion_8());
    report(9, "competing-event conservation", criterion_9());
    report(10, "bootstrap determinism", criterion_10(&null));
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
