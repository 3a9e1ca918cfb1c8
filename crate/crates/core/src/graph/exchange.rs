use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    ancestors, build_dswit, build_swit, d_separated, CausalGraph, DSwit, GraphError, Half, NodeLabel, Role, Swit,
};

impl DSwit {
    /// Intermediate counterfactual doses and natural treatments `Y_{t+1..k'}`,
    /// `A_{t+1..k'}` together with `Y_k`, restricted to ancestors of `Y_k`
    /// (`k' = min(k-1, kappa)`). Sorted by node index.
    pub fn w_set(&self, t: usize, k: usize) -> Result<Vec<usize>, GraphError> {
        if k == 0 {
            return Err(GraphError::IndexConstraint("k must be at least 1".into()));
        }
        let k_prime = (k - 1).min(self.kappa());
        if t > k_prime {
            return Err(GraphError::IndexConstraint(format!("t = {t} exceeds k' = min(k-1, kappa) = {k_prime}")));
        }
        let g = self.graph();
        let target = g.find(&NodeLabel::new(Role::Y, k)).ok_or_else(|| GraphError::UnknownNode(format!("Y{k}")))?;
        let an = ancestors(g, [target]);
        let mut out = vec![target];
        for s in t + 1..=k_prime {
            for role in [Role::Y, Role::A] {
                if let Some(v) = g.find(&NodeLabel::new(role, s)) {
                    out.push(v);
                }
            }
        }
        out.retain(|&v| an[v]);
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Verdict for one `(j, t, k)` triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeabilityEntry {
    pub j: u8,
    pub t: usize,
    pub k: usize,
    /// W-set in the dynamic template.
    pub w_set: Vec<String>,
    /// The same vertices in the static template.
    pub w_set_static: Vec<String>,
    pub treatment: String,
    pub conditioning: Vec<String>,
    pub separated: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeabilityReport {
    pub kappa: usize,
    pub passed: bool,
    pub entries: Vec<ExchangeabilityEntry>,
}

impl ExchangeabilityReport {
    pub fn failures(&self) -> impl Iterator<Item = &ExchangeabilityEntry> {
        self.entries.iter().filter(|e| !e.separated)
    }

    pub fn entry(&self, j: u8, t: usize, k: usize) -> Option<&ExchangeabilityEntry> {
        self.entries.iter().find(|e| e.j == j && e.t == t && e.k == k)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "sequential exchangeability (kappa = {}): {}",
            self.kappa,
            if self.passed { "PASS" } else { "FAIL" }
        );
        for e in &self.entries {
            let _ = write!(
                out,
                "  j={} t={} k={}  W={{{}}}  {} _||_ {{{}}} | {{{}}}  ",
                e.j,
                e.t,
                e.k,
                e.w_set.join(", "),
                e.treatment,
                e.w_set_static.join(", "),
                e.conditioning.join(", ")
            );
            match &e.witness {
                None => out.push_str("ok\n"),
                Some(w) => {
                    let _ = writeln!(out, "FAIL via {w}");
                }
            }
        }
        out
    }

    /// Tab-separated rows with a header line.
    pub fn to_rows(&self) -> String {
        let mut out = String::from("j\tt\tk\tw_set\tw_set_static\ttreatment\tconditioning\tseparated\twitness\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.j,
                e.t,
                e.k,
                e.w_set.join(" "),
                e.w_set_static.join(" "),
                e.treatment,
                e.conditioning.join(" "),
                e.separated,
                e.witness.as_deref().unwrap_or("")
            );
        }
        out
    }
}

/// Runs the two-step graphical check of sequential exchangeability for an add-on
/// regime with treatment period `0..=kappa`, for each target time `k`.
///
/// The W-set is read off the dynamic template, mapped by label onto the static
/// template `G(a_0..a_k')`, and `A_t` must be d-separated from it given the observed
/// covariate, competing-event, censoring and dose history through `t` and the
/// treatment history through `t-1`. The templates do not depend on `j` or on the
/// fixed treatment values, so one test covers every arm.
pub fn check_exchangeability(
    dag: &CausalGraph,
    kappa: usize,
    k_targets: &BTreeSet<usize>,
) -> Result<ExchangeabilityReport, GraphError> {
    let dswit = build_dswit(dag, kappa)?;
    let mut swits: BTreeMap<usize, Swit> = BTreeMap::new();
    let mut entries = Vec::new();
    for &k in k_targets {
        if k == 0 {
            return Err(GraphError::IndexConstraint("target times must be at least 1".into()));
        }
        let k_prime = (k - 1).min(kappa);
        if !swits.contains_key(&k_prime) {
            swits.insert(k_prime, build_swit(dag, &(0..=k_prime).collect())?);
        }
        let swit = &swits[&k_prime];
        let sg = swit.graph();
        for t in 0..=k_prime {
            let w_dyn = dswit.w_set(t, k)?;
            let w_static: BTreeSet<usize> = w_dyn
                .iter()
                .map(|&v| {
                    let label = dswit.graph().node(v).label;
                    sg.find(&label).ok_or_else(|| GraphError::UnknownNode(label.to_string()))
                })
                .collect::<Result<_, _>>()?;
            let treatment = sg.find(&NodeLabel::new(Role::A, t)).ok_or(GraphError::MissingTreatment(t))?;
            let conditioning: BTreeSet<usize> = sg
                .nodes()
                .iter()
                .enumerate()
                .filter(|(_, n)| !n.latent && n.half != Half::Fixed)
                .filter(|(_, n)| match (n.label.role, n.label.time) {
                    (Role::L | Role::Y | Role::D | Role::C, Some(s)) => s <= t,
                    (Role::A, Some(s)) => s < t,
                    _ => false,
                })
                .map(|(v, _)| v)
                .collect();
            let verdict = d_separated(sg, &BTreeSet::from([treatment]), &w_static, &conditioning)?;
            let names = |g: &CausalGraph, vs: &mut dyn Iterator<Item = usize>| -> Vec<String> {
                vs.map(|v| g.node(v).to_string()).collect()
            };
            for j in 0..=1u8 {
                entries.push(ExchangeabilityEntry {
                    j,
                    t,
                    k,
                    w_set: names(dswit.graph(), &mut w_dyn.iter().copied()),
                    w_set_static: names(sg, &mut w_static.iter().copied()),
                    treatment: sg.node(treatment).to_string(),
                    conditioning: names(sg, &mut conditioning.iter().copied()),
                    separated: verdict.separated,
                    witness: verdict.witness.as_ref().map(|w| sg.render_path(w)),
                });
            }
        }
    }
    let passed = entries.iter().all(|e| e.separated);
    Ok(ExchangeabilityReport { kappa, passed, entries })
}
