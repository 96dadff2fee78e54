//! Agents, topics, interaction graphs and coupling specifications.
//!
//! Agents and topics are indexed from zero in memory. Scenario files and
//! printed reports use one-based labels.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;

/// Undirected agent pair stored with a fixed orientation (`tail < head`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

impl Edge {
    /// Orients the pair so the lower index is the tail.
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Edge { tail: a, head: b }
        } else {
            Edge { tail: b, head: a }
        }
    }

    pub fn touches(&self, agent: usize) -> bool {
        self.tail == agent || self.head == agent
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.tail + 1, self.head + 1)
    }
}

/// Interaction graph over `n` agents, each holding `d` topics.
///
/// Fields are public so that externally supplied data can be checked with
/// [`validate`]; [`Topology::new`] only returns topologies that pass it.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n: usize,
    pub d: usize,
    pub edges: Vec<Edge>,
}

impl Topology {
    pub fn new(n: usize, d: usize, pairs: &[(usize, usize)]) -> Result<Self, ModelError> {
        // Keep the raw pairs so self-loops survive until validation.
        let edges = pairs.iter().map(|&(a, b)| Edge::new(a, b)).collect();
        let topology = Topology { n, d, edges };
        let violations = validate_topology(&topology);
        if violations.is_empty() {
            Ok(topology)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, agent: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e.tail == agent {
                    Some(e.head)
                } else if e.head == agent {
                    Some(e.tail)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let wanted = Edge::new(a, b);
        self.edges.iter().position(|e| *e == wanted)
    }
}

/// Coupling gains for one undirected edge: a `d x d` matrix of nonnegative
/// magnitudes with a per-entry anti-coupling flag.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    d: usize,
    gains: Vec<f64>,
    anti: Vec<bool>,
}

impl CouplingMatrix {
    /// Cooperative coupling from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.len();
        let gains: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                let mut r = r.clone();
                r.resize(d, 0.0);
                r
            })
            .collect();
        CouplingMatrix {
            d,
            gains,
            anti: vec![false; d * d],
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "coupling matrix must be square");
        let d = m.nrows();
        let mut gains = Vec::with_capacity(d * d);
        for p in 0..d {
            for q in 0..d {
                gains.push(m[(p, q)]);
            }
        }
        CouplingMatrix {
            d,
            gains,
            anti: vec![false; d * d],
        }
    }

    pub fn zeros(d: usize) -> Self {
        CouplingMatrix {
            d,
            gains: vec![0.0; d * d],
            anti: vec![false; d * d],
        }
    }

    /// Marks entry `(p, q)` as anti-coupled. Callers are expected to mark
    /// `(q, p)` as well.
    pub fn with_anti(mut self, p: usize, q: usize) -> Self {
        self.anti[p * self.d + q] = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn gain(&self, p: usize, q: usize) -> f64 {
        self.gains[p * self.d + q]
    }

    pub fn is_anti(&self, p: usize, q: usize) -> bool {
        self.anti[p * self.d + q]
    }

    /// Gain with the cooperation sign applied.
    pub fn signed_gain(&self, p: usize, q: usize) -> f64 {
        let g = self.gain(p, q);
        if self.is_anti(p, q) {
            -g
        } else {
            g
        }
    }

    pub fn is_coupled(&self, p: usize, q: usize) -> bool {
        self.gain(p, q) != 0.0
    }

    pub fn has_anti(&self) -> bool {
        self.anti
            .iter()
            .zip(&self.gains)
            .any(|(&a, &g)| a && g != 0.0)
    }

    /// Unsigned gain magnitudes as a matrix.
    pub fn gains(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, self.d, &self.gains)
    }

    pub fn signed(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |p, q| self.signed_gain(p, q))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.gains.chunks(self.d.max(1)).map(|r| r.to_vec()).collect()
    }

    /// One-based `(p, q)` labels of anti-flagged entries.
    pub fn anti_entries(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        for p in 0..self.d {
            for q in 0..self.d {
                if self.is_anti(p, q) {
                    out.push([p + 1, q + 1]);
                }
            }
        }
        out
    }

    fn pattern(&self) -> Vec<bool> {
        self.gains.iter().map(|&g| g != 0.0).collect()
    }
}

/// One coupling matrix per topology edge, in edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub edges: Vec<CouplingMatrix>,
}

impl CouplingSpec {
    pub fn new(topology: &Topology, edges: Vec<CouplingMatrix>) -> Result<Self, ModelError> {
        let spec = CouplingSpec { edges };
        let violations = validate(topology, &spec);
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// The same coupling matrix on every edge.
    pub fn homogeneous(topology: &Topology, k: CouplingMatrix) -> Result<Self, ModelError> {
        Self::new(topology, vec![k; topology.m()])
    }

    pub fn is_cooperative(&self) -> bool {
        !self.edges.iter().any(CouplingMatrix::has_anti)
    }
}

/// Opinion vector in agent-major, topic-minor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    n: usize,
    d: usize,
    x: DVector<f64>,
}

impl OpinionState {
    pub fn new(n: usize, d: usize, x: DVector<f64>) -> Result<Self, ModelError> {
        if x.len() != n * d {
            return Err(ModelError::StateLength {
                expected: n * d,
                found: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteState(i));
        }
        Ok(OpinionState { n, d, x })
    }

    /// Builds a state from per-agent opinion rows.
    pub fn from_agents(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(ModelError::RaggedOpinions { agent: bad + 1 });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(n, d, DVector::from_vec(flat))
    }

    /// Every agent holds the same opinion `v`.
    pub fn consensus(n: usize, v: &[f64]) -> Self {
        let d = v.len();
        let x = DVector::from_fn(n * d, |k, _| v[k % d]);
        OpinionState { n, d, x }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, agent: usize, topic: usize) -> f64 {
        self.x[agent * self.d + topic]
    }

    pub fn agent(&self, agent: usize) -> &[f64] {
        &self.x.as_slice()[agent * self.d..(agent + 1) * self.d]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.x
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.agent(i).to_vec()).collect()
    }

    /// `x_head - x_tail` across an edge.
    pub fn difference(&self, edge: &Edge) -> Vec<f64> {
        (0..self.d)
            .map(|p| self.get(edge.head, p) - self.get(edge.tail, p))
            .collect()
    }
}

/// Per-topic graph whose edges carry any coupling touching that topic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicConsensusGraph {
    pub topic: usize,
    pub n: usize,
    pub edges: Vec<Edge>,
}

impl TopicConsensusGraph {
    pub fn components(&self) -> Vec<Vec<usize>> {
        components(self.n, &self.edges)
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }
}

/// Per-topic agent groupings plus the global clusters of agents that agree
/// on every topic. Blocks are sorted and listed by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    pub per_topic: Vec<Vec<Vec<usize>>>,
    pub global: Vec<Vec<usize>>,
}

impl ClusterPartition {
    /// Global clusters are the common refinement of the per-topic blocks.
    pub fn from_topic_blocks(n: usize, per_topic: Vec<Vec<Vec<usize>>>) -> Self {
        let mut label = vec![Vec::with_capacity(per_topic.len()); n];
        for blocks in &per_topic {
            for (b, block) in blocks.iter().enumerate() {
                for &agent in block {
                    label[agent].push(b);
                }
            }
        }
        let mut global: Vec<Vec<usize>> = Vec::new();
        let mut seen: Vec<(Vec<usize>, usize)> = Vec::new();
        for (agent, l) in label.iter().enumerate() {
            match seen.iter().find(|(key, _)| key == l) {
                Some(&(_, idx)) => global[idx].push(agent),
                None => {
                    seen.push((l.clone(), global.len()));
                    global.push(vec![agent]);
                }
            }
        }
        ClusterPartition { per_topic, global }
    }
}

/// Which rule a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    EmptyDimension,
    AgentOutOfRange,
    SelfLoop,
    DuplicateEdge,
    EdgeCountMismatch,
    MatrixShape,
    NonFiniteGain,
    NegativeGain,
    IntraEdgeSymmetry,
    AntiFlagSymmetry,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::EmptyDimension => "empty dimension",
            Rule::AgentOutOfRange => "agent out of range",
            Rule::SelfLoop => "self-loop",
            Rule::DuplicateEdge => "duplicate edge",
            Rule::EdgeCountMismatch => "edge count mismatch",
            Rule::MatrixShape => "matrix shape",
            Rule::NonFiniteGain => "non-finite gain",
            Rule::NegativeGain => "negative gain",
            Rule::IntraEdgeSymmetry => "intra-edge symmetry",
            Rule::AntiFlagSymmetry => "anti-flag symmetry",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    /// Zero-based edge position, when the violation belongs to one edge.
    pub edge: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.edge {
            Some(k) => write!(f, "edge #{}: {}: {}", k + 1, self.rule, self.detail),
            None => write!(f, "{}: {}", self.rule, self.detail),
        }
    }
}

fn validate_topology(topology: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    if topology.n == 0 || topology.d == 0 {
        out.push(Violation {
            rule: Rule::EmptyDimension,
            edge: None,
            detail: format!("n = {}, d = {}", topology.n, topology.d),
        });
    }
    for (k, e) in topology.edges.iter().enumerate() {
        if e.head >= topology.n {
            out.push(Violation {
                rule: Rule::AgentOutOfRange,
                edge: Some(k),
                detail: format!("{e} references an agent beyond n = {}", topology.n),
            });
        }
        if e.tail == e.head {
            out.push(Violation {
                rule: Rule::SelfLoop,
                edge: Some(k),
                detail: format!("{e}"),
            });
        }
        if topology.edges[..k].contains(e) {
            out.push(Violation {
                rule: Rule::DuplicateEdge,
                edge: Some(k),
                detail: format!("{e} listed more than once"),
            });
        }
    }
    out
}

/// Checks every structural invariant of a topology and its coupling
/// specification. Returns an empty list iff the pair is well formed.
pub fn validate(topology: &Topology, spec: &CouplingSpec) -> Vec<Violation> {
    let mut out = validate_topology(topology);
    if spec.edges.len() != topology.m() {
        out.push(Violation {
            rule: Rule::EdgeCountMismatch,
            edge: None,
            detail: format!(
                "{} coupling matrices for {} edges",
                spec.edges.len(),
                topology.m()
            ),
        });
    }
    let d = topology.d;
    for (k, km) in spec.edges.iter().enumerate() {
        if km.d != d || km.gains.len() != d * d || km.anti.len() != d * d {
            out.push(Violation {
                rule: Rule::MatrixShape,
                edge: Some(k),
                detail: format!("expected {d}x{d}, found {}x{}", km.d, km.d),
            });
            continue;
        }
        for p in 0..d {
            for q in 0..d {
                let g = km.gain(p, q);
                if !g.is_finite() {
                    out.push(Violation {
                        rule: Rule::NonFiniteGain,
                        edge: Some(k),
                        detail: format!("k[{},{}] = {g}", p + 1, q + 1),
                    });
                } else if g < 0.0 {
                    out.push(Violation {
                        rule: Rule::NegativeGain,
                        edge: Some(k),
                        detail: format!(
                            "k[{},{}] = {g}; gains are magnitudes, flag the entry anti instead",
                            p + 1,
                            q + 1
                        ),
                    });
                }
                if q > p {
                    let h = km.gain(q, p);
                    if g != h && !(g.is_nan() && h.is_nan()) {
                        out.push(Violation {
                            rule: Rule::IntraEdgeSymmetry,
                            edge: Some(k),
                            detail: format!(
                                "k[{p1},{q1}] = {g} but k[{q1},{p1}] = {h}",
                                p1 = p + 1,
                                q1 = q + 1
                            ),
                        });
                    }
                    if km.is_anti(p, q) != km.is_anti(q, p) {
                        out.push(Violation {
                            rule: Rule::AntiFlagSymmetry,
                            edge: Some(k),
                            detail: format!(
                                "entry ({},{}) flagged anti without its mirror",
                                p + 1,
                                q + 1
                            ),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Oriented incidence matrix (`m x n`): `-1` at the tail, `+1` at the head.
pub fn incidence_matrix(topology: &Topology) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(topology.m(), topology.n);
    for (k, e) in topology.edges.iter().enumerate() {
        h[(k, e.tail)] = -1.0;
        h[(k, e.head)] = 1.0;
    }
    h
}

/// Incidence matrix lifted to `d` topics, `H ⊗ I_d`.
pub fn lifted_incidence(topology: &Topology) -> DMatrix<f64> {
    incidence_matrix(topology).kronecker(&DMatrix::identity(topology.d, topology.d))
}

/// Connected components by breadth-first search. Isolated vertices form
/// singleton components.
pub fn components(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.tail].push(e.head);
        adj[e.head].push(e.tail);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Structural flags of a coupled network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    /// `p_coupled[p]`: edges with a nonzero direct gain on topic `p` connect
    /// all agents.
    pub p_coupled: Vec<bool>,
    pub all_topic_coupled: bool,
    /// All edges share one zero/nonzero coupling pattern.
    pub homogeneous: bool,
    /// Every direct (diagonal) gain is zero on every edge.
    pub phi_zero: bool,
    /// Every cross (off-diagonal) gain is nonzero on every edge.
    pub complete_coupling_graphs: bool,
}

pub fn classify(topology: &Topology, spec: &CouplingSpec) -> Classification {
    let d = topology.d;
    let p_coupled: Vec<bool> = (0..d)
        .map(|p| {
            let direct: Vec<Edge> = topology
                .edges
                .iter()
                .zip(&spec.edges)
                .filter(|(_, k)| k.is_coupled(p, p))
                .map(|(e, _)| *e)
                .collect();
            components(topology.n, &direct).len() <= 1
        })
        .collect();
    let all_topic_coupled = p_coupled.iter().all(|&c| c);
    let homogeneous = spec
        .edges
        .split_first()
        .is_none_or(|(first, rest)| rest.iter().all(|k| k.pattern() == first.pattern()));
    let phi_zero = spec
        .edges
        .iter()
        .all(|k| (0..d).all(|p| !k.is_coupled(p, p)));
    let complete_coupling_graphs = spec
        .edges
        .iter()
        .all(|k| (0..d).all(|p| (0..d).all(|q| p == q || k.is_coupled(p, q))));
    Classification {
        p_coupled,
        all_topic_coupled,
        homogeneous,
        phi_zero,
        complete_coupling_graphs,
    }
}
