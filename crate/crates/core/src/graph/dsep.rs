use std::collections::{BTreeSet, VecDeque};

use super::{CausalGraph, GraphError, Half};

/// Verdict of a d-separation query. When the sets are d-connected, `witness` holds
/// one open path from a node of `X` to a node of `Y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DSeparation {
    pub separated: bool,
    pub witness: Option<Vec<usize>>,
}

/// Step budget for the simple-path witness search before falling back to the
/// (possibly non-simple) trail found by the reachability pass.
const WITNESS_BUDGET: usize = 2_000_000;

/// Membership mask of `seeds` and all their ancestors.
pub fn ancestors(g: &CausalGraph, seeds: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut mask = vec![false; g.len()];
    let mut stack: Vec<usize> = seeds.into_iter().collect();
    while let Some(v) = stack.pop() {
        if !std::mem::replace(&mut mask[v], true) {
            stack.extend(g.parents(v));
        }
    }
    mask
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// Arrived from a child.
    Up = 0,
    /// Arrived from a parent.
    Down = 1,
}

/// Tests whether `x` and `y` are d-separated given `z`.
///
/// Fixed halves of split treatments are constants: they always block the paths that
/// run through them, so they behave as if conditioned on.
pub fn d_separated(
    g: &CausalGraph,
    x: &BTreeSet<usize>,
    y: &BTreeSet<usize>,
    z: &BTreeSet<usize>,
) -> Result<DSeparation, GraphError> {
    for &v in x.iter().chain(y).chain(z) {
        if v >= g.len() {
            return Err(GraphError::UnknownNode(format!("#{v}")));
        }
    }
    for &v in x {
        if y.contains(&v) || z.contains(&v) {
            return Err(GraphError::NotDisjoint(g.node(v).to_string()));
        }
    }
    if let Some(&v) = y.intersection(z).next() {
        return Err(GraphError::NotDisjoint(g.node(v).to_string()));
    }

    let mut cond = vec![false; g.len()];
    for &v in z {
        cond[v] = true;
    }
    for (v, n) in g.nodes().iter().enumerate() {
        if n.half == Half::Fixed && !x.contains(&v) && !y.contains(&v) {
            cond[v] = true;
        }
    }
    let cond_set: Vec<usize> = (0..g.len()).filter(|&v| cond[v]).collect();
    let an_z = ancestors(g, cond_set.iter().copied());

    let Some(trail) = reachable_trail(g, x, y, &cond, &an_z) else {
        return Ok(DSeparation { separated: true, witness: None });
    };
    let relevant = ancestors(g, x.iter().chain(y).copied().chain(cond_set));
    let witness = simple_open_path(g, x, y, &cond, &an_z, &relevant).unwrap_or(trail);
    Ok(DSeparation { separated: false, witness: Some(witness) })
}

/// Breadth-first "Bayes ball" pass over (node, direction) states. Returns the first
/// active trail reaching `y`, or `None` if none exists.
fn reachable_trail(
    g: &CausalGraph,
    x: &BTreeSet<usize>,
    y: &BTreeSet<usize>,
    cond: &[bool],
    an_z: &[bool],
) -> Option<Vec<usize>> {
    let n = g.len();
    let mut pred: Vec<[Option<(usize, Dir)>; 2]> = vec![[None; 2]; n];
    let mut seen = vec![[false; 2]; n];
    let mut queue = VecDeque::new();
    for &s in x {
        seen[s][Dir::Up as usize] = true;
        queue.push_back((s, Dir::Up));
    }
    while let Some((v, d)) = queue.pop_front() {
        if y.contains(&v) {
            let mut trail = vec![v];
            let mut state = (v, d);
            while let Some(p) = pred[state.0][state.1 as usize] {
                trail.push(p.0);
                state = p;
            }
            trail.reverse();
            return Some(trail);
        }
        let mut visit = |next: usize, nd: Dir, queue: &mut VecDeque<(usize, Dir)>| {
            if !seen[next][nd as usize] {
                seen[next][nd as usize] = true;
                pred[next][nd as usize] = Some((v, d));
                queue.push_back((next, nd));
            }
        };
        match d {
            Dir::Up if !cond[v] => {
                for &p in g.parents(v) {
                    visit(p, Dir::Up, &mut queue);
                }
                for &c in g.children(v) {
                    visit(c, Dir::Down, &mut queue);
                }
            }
            Dir::Up => {}
            Dir::Down => {
                if !cond[v] {
                    for &c in g.children(v) {
                        visit(c, Dir::Down, &mut queue);
                    }
                }
                if an_z[v] {
                    for &p in g.parents(v) {
                        visit(p, Dir::Up, &mut queue);
                    }
                }
            }
        }
    }
    None
}

/// Depth-first search for an open simple path, visiting neighbours in index order so
/// the reported witness is reproducible.
fn simple_open_path(
    g: &CausalGraph,
    x: &BTreeSet<usize>,
    y: &BTreeSet<usize>,
    cond: &[bool],
    an_z: &[bool],
    relevant: &[bool],
) -> Option<Vec<usize>> {
    struct Search<'a> {
        g: &'a CausalGraph,
        y: &'a BTreeSet<usize>,
        cond: &'a [bool],
        an_z: &'a [bool],
        relevant: &'a [bool],
        on_path: Vec<bool>,
        path: Vec<usize>,
        budget: usize,
    }

    impl Search<'_> {
        fn neighbours(&self, v: usize) -> Vec<usize> {
            let mut ns: Vec<usize> = self.g.parents(v).iter().chain(self.g.children(v)).copied().collect();
            ns.sort_unstable();
            ns
        }

        fn extend(&mut self) -> Option<bool> {
            if self.budget == 0 {
                return None;
            }
            self.budget -= 1;
            let cur = *self.path.last().expect("path is non-empty");
            let prev = self.path.len().checked_sub(2).map(|i| self.path[i]);
            for next in self.neighbours(cur) {
                if self.on_path[next] || !self.relevant[next] {
                    continue;
                }
                if let Some(prev) = prev {
                    let collider = self.g.children(prev).contains(&cur) && self.g.children(next).contains(&cur);
                    let open = if collider { self.an_z[cur] } else { !self.cond[cur] };
                    if !open {
                        continue;
                    }
                }
                self.path.push(next);
                if self.y.contains(&next) {
                    return Some(true);
                }
                self.on_path[next] = true;
                match self.extend() {
                    Some(true) => return Some(true),
                    None => return None,
                    Some(false) => {}
                }
                self.on_path[next] = false;
                self.path.pop();
            }
            Some(false)
        }
    }

    let mut search =
        Search { g, y, cond, an_z, relevant, on_path: vec![false; g.len()], path: Vec::new(), budget: WITNESS_BUDGET };
    for &s in x {
        search.path = vec![s];
        search.on_path[s] = true;
        match search.extend() {
            Some(true) => return Some(search.path),
            None => return None,
            Some(false) => search.on_path[s] = false,
        }
    }
    None
}
