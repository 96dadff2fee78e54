//! Scenario files and the built-in example networks.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "pair"
//! agents = 2
//! topics = 1
//! initial = [[0.0], [1.0]]
//!
//! [feedback]
//! mode = "inverse-proportional"
//! smoothing = "sigmoid"
//! gain = 50.0
//!
//! [solver]
//! step = 0.001
//! horizon = 20.0
//!
//! [[edge]]
//! agents = [1, 2]
//! coupling = [[1.0]]
//! ```
//!
//! Agents and topics are 1-based in files. `coupling` holds nonnegative
//! magnitudes; entries listed in an edge's `anti` array are negated.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Issue, ScenarioError};
use crate::network::{validate, CouplingMatrix, CouplingSpec, Edge, OpinionState, Topology};
use crate::sim::{
    SolverSettings, DEFAULT_CLUSTER_TOL, DEFAULT_HORIZON, DEFAULT_STEADY_TOL, DEFAULT_STEP,
};
use crate::weights::{
    FeedbackConfig, FeedbackMode, SignSmoothing, DEFAULT_SIGMOID_GAIN, DEFAULT_SIGNUM_ALPHA,
};

/// Default CSV output stride, in integration steps.
pub const DEFAULT_STRIDE: usize = 100;
/// Horizon shipped with the built-in scenarios; long enough for
/// `|ẋ|_inf` to drop below the steady-state threshold.
pub const BUILTIN_HORIZON: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub step: f64,
    pub horizon: f64,
    pub cluster_tol: f64,
    pub steady_tol: f64,
    pub stride: usize,
    pub allow_unstable: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
            cluster_tol: DEFAULT_CLUSTER_TOL,
            steady_tol: DEFAULT_STEADY_TOL,
            stride: DEFAULT_STRIDE,
            allow_unstable: false,
        }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            step: self.step,
            horizon: self.horizon,
            allow_unstable: self.allow_unstable,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub topology: Topology,
    pub spec: CouplingSpec,
    pub feedback: FeedbackConfig,
    pub initial: OpinionState,
    pub solver: SolverConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    agents: usize,
    topics: usize,
    initial: Spanned<Vec<Vec<f64>>>,
    #[serde(default)]
    feedback: Option<Spanned<RawFeedback>>,
    #[serde(default)]
    solver: Option<Spanned<RawSolver>>,
    #[serde(default, rename = "edge")]
    edges: Vec<Spanned<RawEdge>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawMode {
    InverseProportional,
    Proportional,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawSmoothing {
    Exact,
    Sigmoid,
    Signum,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeedback {
    mode: RawMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c2: Option<f64>,
    smoothing: RawSmoothing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cluster_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    steady_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    allow_unstable: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    agents: Vec<usize>,
    coupling: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    anti: Vec<Vec<usize>>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn feedback_from_raw(raw: &RawFeedback) -> FeedbackConfig {
    let smoothing = match raw.smoothing {
        RawSmoothing::Exact => SignSmoothing::Exact,
        RawSmoothing::Sigmoid => SignSmoothing::Sigmoid {
            gain: raw.gain.unwrap_or(DEFAULT_SIGMOID_GAIN),
        },
        RawSmoothing::Signum => SignSmoothing::Signum {
            alpha: raw.alpha.unwrap_or(DEFAULT_SIGNUM_ALPHA),
        },
    };
    let base = FeedbackConfig::default();
    FeedbackConfig {
        mode: match raw.mode {
            RawMode::InverseProportional => FeedbackMode::InverseProportional,
            RawMode::Proportional => FeedbackMode::Proportional,
        },
        c0: raw.c0.unwrap_or(base.c0),
        c1: raw.c1.unwrap_or(base.c1),
        c2: raw.c2.unwrap_or(base.c2),
        smoothing,
    }
}

fn solver_from_raw(raw: &RawSolver) -> SolverConfig {
    let base = SolverConfig::default();
    SolverConfig {
        step: raw.step.unwrap_or(base.step),
        horizon: raw.horizon.unwrap_or(base.horizon),
        cluster_tol: raw.cluster_tol.unwrap_or(base.cluster_tol),
        steady_tol: raw.steady_tol.unwrap_or(base.steady_tol),
        stride: raw.stride.unwrap_or(base.stride),
        allow_unstable: raw.allow_unstable.unwrap_or(base.allow_unstable),
    }
}

fn check_solver(s: &SolverConfig) -> Vec<String> {
    let mut out = Vec::new();
    for (name, v) in [
        ("step", s.step),
        ("horizon", s.horizon),
        ("cluster_tol", s.cluster_tol),
        ("steady_tol", s.steady_tol),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            out.push(format!("solver.{name} must be positive and finite (got {v})"));
        }
    }
    if s.stride == 0 {
        out.push("solver.stride must be at least 1".to_string());
    }
    out
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn parse(src: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(src).map_err(|e| {
            ScenarioError::Parse(Issue {
                line: e.span().map(|s| line_of(src, s.start)),
                message: e.message().trim().to_string(),
            })
        })?;
        let mut issues = Vec::new();
        let mut push = |line: Option<usize>, message: String| issues.push(Issue { line, message });
        let (n, d) = (raw.agents, raw.topics);

        let init_line = Some(line_of(src, raw.initial.span().start));
        let rows = raw.initial.get_ref();
        if rows.len() != n {
            push(init_line, format!("initial has {} rows, expected {n} agents", rows.len()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                push(
                    init_line,
                    format!("initial row {} has {} values, expected {d} topics", i + 1, r.len()),
                );
            }
            if r.iter().any(|v| !v.is_finite()) {
                push(init_line, format!("initial row {} is not finite", i + 1));
            }
        }

        let mut edges = Vec::with_capacity(raw.edges.len());
        let mut couplings = Vec::with_capacity(raw.edges.len());
        let mut edge_lines = Vec::with_capacity(raw.edges.len());
        for (k, spanned) in raw.edges.iter().enumerate() {
            let line = Some(line_of(src, spanned.span().start));
            edge_lines.push(line);
            let e = spanned.get_ref();
            let label = format!("edge #{}", k + 1);
            let ends: Vec<usize> = e.agents.iter().map(|a| a.wrapping_sub(1)).collect();
            if ends.len() != 2 {
                push(line, format!("{label}: agents must list exactly two agents"));
                continue;
            }
            if e.agents.contains(&0) {
                push(line, format!("{label}: agents are numbered from 1"));
                continue;
            }
            if e.coupling.len() != d || e.coupling.iter().any(|r| r.len() != d) {
                push(line, format!("{label}: matrix shape: coupling must be {d}x{d}"));
                continue;
            }
            let mut matrix = CouplingMatrix::from_rows(&e.coupling);
            let mut bad_anti = false;
            for pair in &e.anti {
                match pair.as_slice() {
                    &[p, q] if (1..=d).contains(&p) && (1..=d).contains(&q) => {
                        matrix = matrix.with_anti(p - 1, q - 1);
                    }
                    _ => bad_anti = true,
                }
            }
            if bad_anti {
                push(line, format!("{label}: anti entries must be [p, q] with topics in 1..={d}"));
                continue;
            }
            edges.push(Edge::new(ends[0], ends[1]));
            couplings.push(matrix);
        }

        let feedback = raw
            .feedback
            .as_ref()
            .map_or_else(FeedbackConfig::default, |f| feedback_from_raw(f.get_ref()));
        if let Err(e) = feedback.check() {
            let line = raw.feedback.as_ref().map(|f| line_of(src, f.span().start));
            push(line, format!("feedback: {e}"));
        }
        let solver = raw
            .solver
            .as_ref()
            .map_or_else(SolverConfig::default, |s| solver_from_raw(s.get_ref()));
        let solver_line = raw.solver.as_ref().map(|s| line_of(src, s.span().start));
        for msg in check_solver(&solver) {
            push(solver_line, msg);
        }

        if !issues.is_empty() {
            return Err(ScenarioError::Invalid(issues));
        }
        let topology = Topology { n, d, edges };
        let spec = CouplingSpec { edges: couplings };
        let violations = validate(&topology, &spec);
        if !violations.is_empty() {
            return Err(ScenarioError::Invalid(
                violations
                    .into_iter()
                    .map(|v| Issue {
                        line: v.edge.and_then(|k| edge_lines.get(k).copied().flatten()),
                        message: v.to_string(),
                    })
                    .collect(),
            ));
        }
        let initial = OpinionState::from_agents(rows).map_err(|e| {
            ScenarioError::Invalid(vec![Issue {
                line: init_line,
                message: e.to_string(),
            }])
        })?;
        Ok(Scenario {
            name: raw.name,
            topology,
            spec,
            feedback,
            initial,
            solver,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let src = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&src)
    }

    /// Serializes to the scenario file format.
    pub fn to_toml(&self) -> String {
        let f = &self.feedback;
        let (smoothing, gain, alpha) = match f.smoothing {
            SignSmoothing::Exact => (RawSmoothing::Exact, None, None),
            SignSmoothing::Sigmoid { gain } => (RawSmoothing::Sigmoid, Some(gain), None),
            SignSmoothing::Signum { alpha } => (RawSmoothing::Signum, None, Some(alpha)),
        };
        let proportional = f.mode == FeedbackMode::Proportional;
        let s = &self.solver;
        let raw = RawScenario {
            name: self.name.clone(),
            agents: self.topology.n,
            topics: self.topology.d,
            initial: Spanned::new(0..0, self.initial.rows()),
            feedback: Some(Spanned::new(
                0..0,
                RawFeedback {
                    mode: if proportional {
                        RawMode::Proportional
                    } else {
                        RawMode::InverseProportional
                    },
                    c0: proportional.then_some(f.c0),
                    c1: proportional.then_some(f.c1),
                    c2: proportional.then_some(f.c2),
                    smoothing,
                    gain,
                    alpha,
                },
            )),
            solver: Some(Spanned::new(
                0..0,
                RawSolver {
                    step: Some(s.step),
                    horizon: Some(s.horizon),
                    cluster_tol: Some(s.cluster_tol),
                    steady_tol: Some(s.steady_tol),
                    stride: Some(s.stride),
                    allow_unstable: s.allow_unstable.then_some(true),
                },
            )),
            edges: self
                .topology
                .edges
                .iter()
                .zip(&self.spec.edges)
                .map(|(e, k)| {
                    Spanned::new(
                        0..0,
                        RawEdge {
                            agents: vec![e.tail + 1, e.head + 1],
                            coupling: k.rows(),
                            anti: k.anti_entries().iter().map(|a| a.to_vec()).collect(),
                        },
                    )
                })
                .collect(),
        };
        toml::to_string(&raw).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        fs::write(path, self.to_toml()).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Names of the built-in scenarios, in listing order.
pub const BUILTIN_NAMES: [&str; 7] = ["fig5", "fig6", "fig7", "fig7b", "fig8", "fig9", "homogeneous"];

/// One-line description of each built-in.
pub fn builtin_summary(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig5" => "PSD couplings, connected topic consensus graphs: complete consensus",
        "fig6" => "PSD couplings, topic 1 consensus graph cut between agents 3 and 4",
        "fig7" => "homogeneous base with zero diagonal on K34 topics 1 and 2",
        "fig7b" => "fig7 with K34 topic 1 restored: consensus without all-topic coupling",
        "fig8" => "zero diagonals on K13 and K23 topics 1 and 3",
        "fig9" => "zero diagonal, all-ones off-diagonal coupling on every edge",
        "homogeneous" => "indefinite homogeneous coupling, all-topic coupled",
        _ => return None,
    })
}

const AGENTS: usize = 5;
const TOPICS: usize = 3;
const EDGES: [(usize, usize); 5] = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)];
const INITIAL: [[f64; 3]; 5] = [
    [1.0, 2.0, 3.0],
    [2.0, 4.0, 4.0],
    [3.0, 1.0, 5.0],
    [4.0, 3.0, 2.0],
    [5.0, 6.0, 1.0],
];

fn k(rows: [[f64; 3]; 3]) -> CouplingMatrix {
    CouplingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn five_agent(name: &str, couplings: Vec<CouplingMatrix>) -> Scenario {
    let topology = Topology::new(AGENTS, TOPICS, &EDGES).expect("built-in topology");
    let spec = CouplingSpec::new(&topology, couplings).expect("built-in couplings");
    let initial =
        OpinionState::from_agents(&INITIAL.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .expect("built-in opinions");
    Scenario {
        name: name.to_string(),
        topology,
        spec,
        feedback: FeedbackConfig::default(),
        initial,
        solver: SolverConfig {
            horizon: BUILTIN_HORIZON,
            ..SolverConfig::default()
        },
    }
}

fn psd_couplings() -> Vec<CouplingMatrix> {
    vec![
        k([[1., 1., 0.], [1., 1., 0.], [0., 0., 0.]]),
        k([[1., 0., 0.], [0., 1., 1.], [0., 1., 1.]]),
        k([[2., 0., 1.], [0., 2., 1.], [1., 1., 2.]]),
        k([[1., 1., 1.], [1., 1., 1.], [1., 1., 1.]]),
        k([[1., 0., 1.], [0., 1., 0.], [1., 0., 1.]]),
    ]
}

fn general_couplings() -> Vec<CouplingMatrix> {
    vec![k([[1., 1., 0.], [1., 1., 1.], [0., 1., 1.]]); 5]
}

/// Built-in scenario by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    let mut couplings = match name {
        "fig5" | "fig6" => psd_couplings(),
        "fig7" | "fig7b" | "fig8" | "homogeneous" => general_couplings(),
        "fig9" => vec![k([[0., 1., 1.], [1., 0., 1.], [1., 1., 0.]]); 5],
        _ => return None,
    };
    match name {
        "fig6" => {
            let cut = k([[0., 0., 0.], [0., 1., 1.], [0., 1., 1.]]);
            couplings[1] = cut.clone();
            couplings[3] = cut;
        }
        "fig7" => couplings[3] = k([[0., 1., 0.], [1., 0., 1.], [0., 1., 1.]]),
        "fig7b" => couplings[3] = k([[1., 1., 0.], [1., 0., 1.], [0., 1., 1.]]),
        "fig8" => {
            let sparse = k([[0., 1., 0.], [1., 1., 1.], [0., 1., 0.]]);
            couplings[1] = sparse.clone();
            couplings[2] = sparse;
        }
        _ => {}
    }
    Some(five_agent(name, couplings))
}

pub fn builtins() -> Vec<Scenario> {
    BUILTIN_NAMES
        .iter()
        .map(|n| builtin(n).expect("listed built-in"))
        .collect()
}
