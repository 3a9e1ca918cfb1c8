//! Causal DAGs over time-indexed nodes and single-world intervention templates.
//!
//! Graph files are line oriented:
//!
//! ```text
//! # comment
//! node Y0
//! node A0
//! node U latent
//! node L1.2          # covariate component 2 at time 1
//! edge Y0 -> A0
//! edge U -> A0
//! ```
//!
//! A label is a role letter (`C`, `D`, `L`, `Y`, `A` or `U`), a time index and an
//! optional `.component`. Only `U` nodes may omit the time.

mod dsep;
mod exchange;
mod template;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dsep::{ancestors, d_separated, DSeparation};
pub use exchange::{check_exchangeability, ExchangeabilityEntry, ExchangeabilityReport};
pub use template::{build_dswit, build_swit, DSwit, Swit};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("edge {from} -> {to} would create a cycle")]
    Cycle { from: String, to: String },
    #[error("edge {from} -> {to} runs against the time ordering")]
    OrderViolation { from: String, to: String },
    #[error("treatment node A{0} is absent")]
    MissingTreatment(usize),
    #[error("regime trigger Y{0} is absent")]
    MissingTrigger(usize),
    #[error("index constraint violated: {0}")]
    IndexConstraint(String),
    #[error("node sets must be disjoint; `{0}` appears twice")]
    NotDisjoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    C,
    D,
    L,
    Y,
    A,
    U,
}

impl Role {
    /// Position inside a time slice; `None` for unmeasured `U` nodes, which sit outside it.
    fn rank(self) -> Option<u8> {
        match self {
            Role::C => Some(0),
            Role::D => Some(1),
            Role::L => Some(2),
            Role::Y => Some(3),
            Role::A => Some(4),
            Role::U => None,
        }
    }

    fn letter(self) -> char {
        match self {
            Role::C => 'C',
            Role::D => 'D',
            Role::L => 'L',
            Role::Y => 'Y',
            Role::A => 'A',
            Role::U => 'U',
        }
    }
}

/// Role, time and optional component of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeLabel {
    pub role: Role,
    pub time: Option<usize>,
    pub component: Option<u32>,
}

impl NodeLabel {
    pub fn new(role: Role, time: usize) -> Self {
        Self { role, time: Some(time), component: None }
    }

    fn order_key(&self) -> Option<(usize, u8, u32)> {
        Some((self.time?, self.role.rank()?, self.component.unwrap_or(0)))
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.role.letter())?;
        if let Some(t) = self.time {
            write!(f, "{t}")?;
        }
        if let Some(c) = self.component {
            write!(f, ".{c}")?;
        }
        Ok(())
    }
}

impl FromStr for NodeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let role = match chars.next() {
            Some('C') => Role::C,
            Some('D') => Role::D,
            Some('L') => Role::L,
            Some('Y') => Role::Y,
            Some('A') => Role::A,
            Some('U') => Role::U,
            _ => return Err(format!("`{s}`: label must start with one of C, D, L, Y, A, U")),
        };
        let rest = chars.as_str();
        let (time_part, comp_part) = match rest.split_once('.') {
            Some((t, c)) => (t, Some(c)),
            None => (rest, None),
        };
        let time = if time_part.is_empty() {
            None
        } else {
            Some(time_part.parse::<usize>().map_err(|_| format!("`{s}`: bad time index"))?)
        };
        if time.is_none() && role != Role::U {
            return Err(format!("`{s}`: only U nodes may omit the time index"));
        }
        let component = comp_part.map(|c| c.parse::<u32>().map_err(|_| format!("`{s}`: bad component"))).transpose()?;
        Ok(Self { role, time, component })
    }
}

/// Which part of a (possibly split) vertex a node represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Half {
    /// Unsplit vertex.
    Whole,
    /// Random half of a statically intervened treatment: keeps incoming edges.
    Random,
    /// Fixed value `a_t`: emits the outgoing edges, has no parents.
    Fixed,
    /// Natural half `A_t^g` under a dynamic regime: keeps incoming edges.
    Natural,
    /// Regime-assigned half `A_t^{g+}`: emits the outgoing edges.
    Assigned,
}

/// Counterfactual superscript attached during template construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Superscript {
    #[default]
    Factual,
    /// Times of the fixed treatments the node descends from.
    Static(Vec<usize>),
    Regime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub label: NodeLabel,
    pub latent: bool,
    pub half: Half,
    pub superscript: Superscript,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.half {
            Half::Fixed => {
                let t = self.label.time.unwrap_or(0);
                return write!(f, "a{t}");
            }
            Half::Assigned => return write!(f, "{}^{{g+}}", self.label),
            _ => {}
        }
        write!(f, "{}", self.label)?;
        match &self.superscript {
            Superscript::Factual => Ok(()),
            Superscript::Regime => write!(f, "^{{g}}"),
            Superscript::Static(times) => {
                let parts: Vec<String> = times.iter().map(|t| format!("a{t}")).collect();
                write!(f, "^{{{}}}", parts.join(","))
            }
        }
    }
}

/// Directed acyclic graph. Node indices are stable: construction order is preserved.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CausalGraph {
    nodes: Vec<Node>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    index: HashMap<(NodeLabel, Half), usize>,
}

impl CausalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, label: NodeLabel, latent: bool) -> Result<usize, GraphError> {
        self.push_node(Node { label, latent, half: Half::Whole, superscript: Superscript::Factual })
    }

    fn push_node(&mut self, node: Node) -> Result<usize, GraphError> {
        let key = (node.label, node.half);
        if self.index.contains_key(&key) {
            return Err(GraphError::DuplicateNode(node.to_string()));
        }
        let id = self.nodes.len();
        self.index.insert(key, id);
        self.nodes.push(node);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        Ok(id)
    }

    /// Adds `from -> to`, rejecting cycles and edges that go backwards in the
    /// (time, role, component) order. Edges touching `U` nodes are only cycle checked.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<(), GraphError> {
        let (a, b) = (&self.nodes[from], &self.nodes[to]);
        if let (Some(ka), Some(kb)) = (a.label.order_key(), b.label.order_key()) {
            if ka >= kb {
                return Err(GraphError::OrderViolation { from: a.to_string(), to: b.to_string() });
            }
        }
        if from == to || self.reaches(to, from) {
            return Err(GraphError::Cycle { from: a.to_string(), to: b.to_string() });
        }
        self.link(from, to);
        Ok(())
    }

    /// Inserts an edge without checks, keeping adjacency lists sorted.
    pub(crate) fn link(&mut self, from: usize, to: usize) {
        if let Err(pos) = self.children[from].binary_search(&to) {
            self.children[from].insert(pos, to);
        }
        if let Err(pos) = self.parents[to].binary_search(&from) {
            self.parents[to].insert(pos, from);
        }
    }

    pub(crate) fn unlink(&mut self, from: usize, to: usize) {
        self.children[from].retain(|&c| c != to);
        self.parents[to].retain(|&p| p != from);
    }

    fn reaches(&self, src: usize, dst: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![src];
        while let Some(v) = stack.pop() {
            if v == dst {
                return true;
            }
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend(&self.children[v]);
            }
        }
        false
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub(crate) fn node_mut(&mut self, id: usize) -> &mut Node {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn parents(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children.iter().enumerate().flat_map(|(u, cs)| cs.iter().map(move |&v| (u, v)))
    }

    /// Index of the unsplit or incoming-edge half carrying `label`.
    pub fn find(&self, label: &NodeLabel) -> Option<usize> {
        [Half::Whole, Half::Random, Half::Natural].iter().find_map(|h| self.index.get(&(*label, *h)).copied())
    }

    pub fn find_half(&self, label: &NodeLabel, half: Half) -> Option<usize> {
        self.index.get(&(*label, half)).copied()
    }

    /// Resolves a label string such as `Y2` to a node index.
    pub fn lookup(&self, label: &str) -> Result<usize, GraphError> {
        let parsed: NodeLabel = label.parse().map_err(|_| GraphError::UnknownNode(label.into()))?;
        self.find(&parsed).ok_or_else(|| GraphError::UnknownNode(label.into()))
    }

    pub fn lookup_all(&self, labels: &[&str]) -> Result<BTreeSet<usize>, GraphError> {
        labels.iter().map(|l| self.lookup(l)).collect()
    }

    /// Times `t` with a treatment node `A_t`.
    pub fn treatment_times(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter(|n| n.label.role == Role::A && n.label.component.is_none())
            .filter_map(|n| n.label.time)
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut g = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| GraphError::Parse { line, message };
            let mut words = content.split_whitespace();
            match words.next() {
                Some("node") => {
                    let label: NodeLabel =
                        words.next().ok_or_else(|| err("node line needs a label".into()))?.parse().map_err(err)?;
                    let latent = match words.next() {
                        None => label.role == Role::U,
                        Some("latent") => true,
                        Some(other) => return Err(err(format!("unexpected `{other}`"))),
                    };
                    if let Some(extra) = words.next() {
                        return Err(err(format!("unexpected `{extra}`")));
                    }
                    g.add_node(label, latent).map_err(|e| err(e.to_string()))?;
                }
                Some("edge") => {
                    let parts: Vec<&str> = words.collect();
                    let [from, "->", to] = parts.as_slice() else {
                        return Err(err("edge line must read `edge <from> -> <to>`".into()));
                    };
                    let u = g.lookup(from).map_err(|e| err(e.to_string()))?;
                    let v = g.lookup(to).map_err(|e| err(e.to_string()))?;
                    g.add_edge(u, v).map_err(|e| err(e.to_string()))?;
                }
                Some(other) => return Err(err(format!("unknown directive `{other}`"))),
                None => unreachable!(),
            }
        }
        Ok(g)
    }

    /// Serializes a factual DAG in the format [`CausalGraph::parse`] reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {}", n.label));
            if n.latent && n.label.role != Role::U {
                out.push_str(" latent");
            }
            out.push('\n');
        }
        for (u, v) in self.edges() {
            out.push_str(&format!("edge {} -> {}\n", self.nodes[u].label, self.nodes[v].label));
        }
        out
    }

    /// Renders a node sequence as a path with edge directions, e.g. `A0 <- U -> A1^{a0}`.
    pub fn render_path(&self, path: &[usize]) -> String {
        let mut out = String::new();
        for (i, &v) in path.iter().enumerate() {
            if i > 0 {
                let u = path[i - 1];
                out.push_str(if self.children[u].contains(&v) { " -> " } else { " <- " });
            }
            out.push_str(&self.nodes[v].to_string());
        }
        out
    }
}
