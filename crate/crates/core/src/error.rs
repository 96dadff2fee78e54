use thiserror::Error;

use crate::network::Violation;

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid network: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("opinion vector has length {found}, expected {expected}")]
    StateLength { expected: usize, found: usize },
    #[error("opinion entry {0} is not finite")]
    NonFiniteState(usize),
    #[error("agent {agent} has a different number of topics than agent 1")]
    RaggedOpinions { agent: usize },
    #[error("state describes {state_n} agents x {state_d} topics, network has {n} x {d}")]
    StateMismatch {
        n: usize,
        d: usize,
        state_n: usize,
        state_d: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("proportional feedback requires c0 > 0 (got {0})")]
    ZeroDenominator(f64),
    #[error("feedback constant {name} = {value} is out of range")]
    BadConstant { name: &'static str, value: f64 },
    #[error("factorization with nonnegative coupling gains is undefined for anti-coupled edges")]
    AntiCoupled,
    #[error("proportional factorization only covers c2 = 0 (got c2 = {0})")]
    QuadraticDenominator(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("matrix is not symmetric within {tol:e} (max asymmetry {asymmetry:e})")]
    NotSymmetric { tol: f64, asymmetry: f64 },
    #[error("structural prediction only covers cooperative couplings")]
    AntiCoupled,
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("step and horizon must be positive and finite (h = {h}, t_f = {t_final})")]
    BadSettings { h: f64, t_final: f64 },
    #[error("anti-coupled specification requires allow_unstable")]
    UnstableNotAllowed,
    #[error("divergence at t = {t}: |x|_inf = {magnitude:e} exceeds guard {limit:e}")]
    Diverged { t: f64, magnitude: f64, limit: f64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// One problem found while loading a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn join_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {}", join_issues(std::slice::from_ref(.0)))]
    Parse(Issue),
    #[error("invalid scenario:\n{}", join_issues(.0))]
    Invalid(Vec<Issue>),
}
