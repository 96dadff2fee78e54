//! Matrix-weighted opinion dynamics over multiple interdependent topics.
//!
//! Each agent holds an opinion vector over `d` topics. Neighbouring agents
//! pull on each other through a state-dependent `d x d` weight matrix built
//! from a constant coupling matrix, so one topic can drive agreement (or
//! clustering) on another. The crate
//!
//! * builds the stacked Laplacian `L(x)` and its incidence factorization
//!   ([`weights`]),
//! * predicts consensus and cluster structure from the coupling pattern
//!   alone ([`analysis`]),
//! * integrates `ẋ = -L(x) x`, tracks `V = ½‖x‖²` and detects clusters in
//!   the result ([`sim`]),
//! * reads and writes scenario files and ships the reference scenarios
//!   ([`scenario`]),
//! * exposes all of the above on the command line ([`cli`]).

pub mod analysis;
pub mod cli;
pub mod error;
pub mod network;
pub mod scenario;
pub mod sim;
pub mod weights;

pub use error::{AnalysisError, ModelError, ScenarioError, SimError, WeightError};
pub use network::{
    classify, incidence_matrix, lifted_incidence, validate, Classification, ClusterPartition,
    CouplingMatrix, CouplingSpec, Edge, OpinionState, TopicConsensusGraph, Topology,
};
pub use weights::{FeedbackConfig, FeedbackMode, SignSmoothing};
