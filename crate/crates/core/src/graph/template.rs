use std::collections::BTreeSet;

use super::{CausalGraph, GraphError, Half, Node, NodeLabel, Role, Superscript};

/// Single-world intervention template for static interventions on a set of treatments.
#[derive(Debug, Clone)]
pub struct Swit {
    graph: CausalGraph,
    treatment_times: BTreeSet<usize>,
}

impl Swit {
    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn treatment_times(&self) -> &BTreeSet<usize> {
        &self.treatment_times
    }

    /// The fixed half `a_t`.
    pub fn fixed(&self, t: usize) -> Option<usize> {
        self.graph.find_half(&NodeLabel::new(Role::A, t), Half::Fixed)
    }
}

/// Dynamic single-world intervention template for a regime acting on `A_0..A_kappa`.
#[derive(Debug, Clone)]
pub struct DSwit {
    graph: CausalGraph,
    kappa: usize,
}

impl DSwit {
    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// The regime-assigned half `A_t^{g+}`.
    pub fn assigned(&self, t: usize) -> Option<usize> {
        self.graph.find_half(&NodeLabel::new(Role::A, t), Half::Assigned)
    }
}

fn treatment(dag: &CausalGraph, t: usize) -> Result<usize, GraphError> {
    dag.find_half(&NodeLabel::new(Role::A, t), Half::Whole).ok_or(GraphError::MissingTreatment(t))
}

/// Moves every outgoing edge of `from` onto `to`.
fn move_children(g: &mut CausalGraph, from: usize, to: usize) {
    for c in g.children(from).to_vec() {
        g.unlink(from, c);
        g.link(to, c);
    }
}

/// Splits each `A_t` (t in `treatment_times`) into a random half that keeps the
/// incoming edges and a fixed half `a_t` that emits the outgoing ones, then tags every
/// node with the fixed halves among its ancestors.
pub fn build_swit(dag: &CausalGraph, treatment_times: &BTreeSet<usize>) -> Result<Swit, GraphError> {
    let mut g = dag.clone();
    for &t in treatment_times {
        let a = treatment(dag, t)?;
        g.node_mut(a).half = Half::Random;
        g.index.remove(&(NodeLabel::new(Role::A, t), Half::Whole));
        g.index.insert((NodeLabel::new(Role::A, t), Half::Random), a);
        let fixed = g.push_node(Node {
            label: NodeLabel::new(Role::A, t),
            latent: false,
            half: Half::Fixed,
            superscript: Superscript::Factual,
        })?;
        move_children(&mut g, a, fixed);
    }

    let order = topological_order(&g);
    let mut tags: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); g.len()];
    for &v in &order {
        let mut tag = BTreeSet::new();
        for &p in g.parents(v) {
            tag.extend(tags[p].iter().copied());
            if g.node(p).half == Half::Fixed {
                tag.insert(g.node(p).label.time.expect("treatments are timed"));
            }
        }
        tags[v] = tag;
    }
    for (v, tag) in tags.into_iter().enumerate() {
        if !tag.is_empty() {
            g.node_mut(v).superscript = Superscript::Static(tag.into_iter().collect());
        }
    }
    Ok(Swit { graph: g, treatment_times: treatment_times.clone() })
}

/// Splits each `A_t`, `t <= kappa`, into a natural half `A_t^g` (incoming edges) and a
/// regime-assigned half `A_t^{g+}` (outgoing edges), wires `Y_t -> A_t^{g+}` and
/// `A_t^g -> A_t^{g+}`, and tags descendants of the assigned halves with `g`.
pub fn build_dswit(dag: &CausalGraph, kappa: usize) -> Result<DSwit, GraphError> {
    let mut g = dag.clone();
    for t in 0..=kappa {
        let a = treatment(dag, t)?;
        let y = dag.find(&NodeLabel::new(Role::Y, t)).ok_or(GraphError::MissingTrigger(t))?;
        g.node_mut(a).half = Half::Natural;
        g.index.remove(&(NodeLabel::new(Role::A, t), Half::Whole));
        g.index.insert((NodeLabel::new(Role::A, t), Half::Natural), a);
        let assigned = g.push_node(Node {
            label: NodeLabel::new(Role::A, t),
            latent: false,
            half: Half::Assigned,
            superscript: Superscript::Regime,
        })?;
        move_children(&mut g, a, assigned);
        g.link(y, assigned);
        g.link(a, assigned);
    }

    let order = topological_order(&g);
    let mut tagged = vec![false; g.len()];
    for &v in &order {
        tagged[v] = g.parents(v).iter().any(|&p| tagged[p] || g.node(p).half == Half::Assigned);
    }
    for (v, t) in tagged.into_iter().enumerate() {
        if t && g.node(v).half != Half::Assigned {
            g.node_mut(v).superscript = Superscript::Regime;
        }
    }
    Ok(DSwit { graph: g, kappa })
}

/// Kahn's algorithm with smallest-index-first tie breaking.
pub(crate) fn topological_order(g: &CausalGraph) -> Vec<usize> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut indeg: Vec<usize> = (0..g.len()).map(|v| g.parents(v).len()).collect();
    let mut heap: BinaryHeap<Reverse<usize>> = (0..g.len()).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(g.len());
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &c in g.children(v) {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                heap.push(Reverse(c));
            }
        }
    }
    debug_assert_eq!(order.len(), g.len(), "graph has a cycle");
    order
}
