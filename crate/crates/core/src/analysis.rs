//! Simulation-free predictions from the coupling structure.
//!
//! With every coupling matrix positive semidefinite, topic `p` reaches
//! consensus exactly when its topic consensus graph is connected, and the
//! per-topic component counts `c_p` bound the number of global clusters by
//! `Σ_p (c_p - 1) + 1`. Independently of definiteness, a network that is
//! p-coupled on every topic reaches complete consensus. Anything else is
//! reported as "no guarantee" together with the structural warnings that
//! apply.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::AnalysisError;
use crate::network::{
    classify, components, Classification, CouplingMatrix, CouplingSpec, OpinionState,
    TopicConsensusGraph, Topology,
};
use crate::weights::{assemble_laplacian, FeedbackConfig};

/// Eigenvalue tolerance for definiteness classes.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralClass {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
    NegativeSemidefinite,
}

impl SpectralClass {
    pub fn is_psd(self) -> bool {
        matches!(
            self,
            SpectralClass::PositiveDefinite | SpectralClass::PositiveSemidefinite
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            SpectralClass::PositiveDefinite => "PD",
            SpectralClass::PositiveSemidefinite => "PSD",
            SpectralClass::Indefinite => "indefinite",
            SpectralClass::NegativeSemidefinite => "NSD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCheck {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub class: SpectralClass,
}

/// Eigenvalues and definiteness class of a symmetric matrix.
pub fn psd_check(matrix: &DMatrix<f64>, tol: f64) -> Result<SpectralCheck, AnalysisError> {
    let asymmetry = (matrix - matrix.transpose()).amax();
    if !matrix.is_square() || asymmetry > tol {
        return Err(AnalysisError::NotSymmetric { tol, asymmetry });
    }
    if matrix.is_empty() {
        return Ok(SpectralCheck {
            eigenvalues: Vec::new(),
            class: SpectralClass::PositiveSemidefinite,
        });
    }
    let mut eigenvalues: Vec<f64> = matrix.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let min = eigenvalues[0];
    let max = eigenvalues[eigenvalues.len() - 1];
    let class = if min > tol {
        SpectralClass::PositiveDefinite
    } else if min >= -tol {
        SpectralClass::PositiveSemidefinite
    } else if max <= tol {
        SpectralClass::NegativeSemidefinite
    } else {
        SpectralClass::Indefinite
    };
    Ok(SpectralCheck { eigenvalues, class })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVerdict {
    pub per_edge: Vec<SpectralCheck>,
    pub all_psd: bool,
}

/// Classifies every edge's (signed) coupling matrix.
pub fn spectral_verdict(spec: &CouplingSpec, tol: f64) -> Result<SpectralVerdict, AnalysisError> {
    let per_edge = spec
        .edges
        .iter()
        .map(|k| psd_check(&k.signed(), tol))
        .collect::<Result<Vec<_>, _>>()?;
    let all_psd = per_edge.iter().all(|c| c.class.is_psd());
    Ok(SpectralVerdict { per_edge, all_psd })
}

/// Consensus matrix of one coupling: `c_pp = 1` iff topic `p` carries any
/// nonzero gain on this edge. Off-diagonal entries are zero.
pub fn consensus_matrix(k: &CouplingMatrix) -> DMatrix<f64> {
    let d = k.dim();
    DMatrix::from_fn(d, d, |p, q| {
        if p == q && (0..d).any(|r| k.is_coupled(p, r)) {
            1.0
        } else {
            0.0
        }
    })
}

pub fn topic_consensus_graphs(topology: &Topology, spec: &CouplingSpec) -> Vec<TopicConsensusGraph> {
    let consensus: Vec<DMatrix<f64>> = spec.edges.iter().map(consensus_matrix).collect();
    (0..topology.d)
        .map(|p| TopicConsensusGraph {
            topic: p,
            n: topology.n,
            edges: topology
                .edges
                .iter()
                .zip(&consensus)
                .filter(|(_, c)| c[(p, p)] == 1.0)
                .map(|(e, _)| *e)
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusBasis {
    /// All couplings PSD and every topic consensus graph connected.
    ConnectedConsensusGraphs,
    /// Every topic is p-coupled; holds for indefinite couplings too.
    AllTopicCoupled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Regime {
    CompleteConsensus(ConsensusBasis),
    PartialConsensus,
    NoGuarantee,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::CompleteConsensus(_) => "complete-consensus",
            Regime::PartialConsensus => "partial-consensus",
            Regime::NoGuarantee => "no-guarantee",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Warning {
    /// Zero direct gains with every cross pair coupled: `L(x)` has negative
    /// eigenvalues away from consensus.
    AdjacencyOnly,
    /// `phi = 0` with complete coupling graphs.
    PhiZeroComplete,
    /// Homogeneous pattern with some topic lacking a direct gain everywhere.
    HomogeneousMissingDirect,
    /// Heterogeneous pattern and not all-topic coupled.
    HeterogeneousNotCoupled,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Warning::AdjacencyOnly => "adjacency-only coupling ⇒ negative eigenvalues",
            Warning::PhiZeroComplete => {
                "φ=0 with complete coupling graphs ⇒ some topic may not converge"
            }
            Warning::HomogeneousMissingDirect => {
                "homogeneous, a topic without direct coupling ⇒ complete consensus not ensured"
            }
            Warning::HeterogeneousNotCoupled => {
                "heterogeneous, not p-coupled ⇒ complete consensus not ensured"
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub spectral: SpectralVerdict,
    pub classification: Classification,
    pub topic_graphs: Vec<TopicConsensusGraph>,
    /// Connected components of each topic consensus graph.
    pub topic_components: Vec<Vec<Vec<usize>>>,
    pub regime: Regime,
    /// Maximum number of global clusters; absent without a guarantee.
    pub cluster_bound: Option<usize>,
    pub warnings: Vec<Warning>,
}

/// Predicts the consensus regime of a cooperative network.
pub fn predict(topology: &Topology, spec: &CouplingSpec) -> Result<AnalysisReport, AnalysisError> {
    if !spec.is_cooperative() {
        return Err(AnalysisError::AntiCoupled);
    }
    let spectral = spectral_verdict(spec, PSD_TOL)?;
    let classification = classify(topology, spec);
    let topic_graphs = topic_consensus_graphs(topology, spec);
    let topic_components: Vec<Vec<Vec<usize>>> =
        topic_graphs.iter().map(TopicConsensusGraph::components).collect();
    let graphs_connected = topic_components.iter().all(|c| c.len() <= 1);

    let regime = if spectral.all_psd && graphs_connected {
        Regime::CompleteConsensus(ConsensusBasis::ConnectedConsensusGraphs)
    } else if classification.all_topic_coupled {
        Regime::CompleteConsensus(ConsensusBasis::AllTopicCoupled)
    } else if spectral.all_psd {
        Regime::PartialConsensus
    } else {
        Regime::NoGuarantee
    };

    let cluster_bound = match regime {
        Regime::CompleteConsensus(_) => Some(1),
        Regime::PartialConsensus => Some(
            topic_components
                .iter()
                .map(|c| c.len().saturating_sub(1))
                .sum::<usize>()
                + 1,
        ),
        Regime::NoGuarantee => None,
    };

    let mut warnings = Vec::new();
    if regime == Regime::NoGuarantee {
        let c = &classification;
        let structured = topology.m() > 0 && topology.d > 1;
        if structured && c.phi_zero && c.complete_coupling_graphs {
            warnings.push(Warning::AdjacencyOnly);
            warnings.push(Warning::PhiZeroComplete);
        }
        if structured && c.homogeneous && !c.phi_zero && !c.all_topic_coupled {
            warnings.push(Warning::HomogeneousMissingDirect);
        }
        if !c.homogeneous && !c.all_topic_coupled {
            warnings.push(Warning::HeterogeneousNotCoupled);
        }
    }

    Ok(AnalysisReport {
        spectral,
        classification,
        topic_graphs,
        topic_components,
        regime,
        cluster_bound,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct Nullspace {
    pub dimension: usize,
    /// Orthonormal kernel basis, one column per direction.
    pub basis: DMatrix<f64>,
    pub warnings: Vec<String>,
}

/// Numerical kernel of `L(x)` at one state. Eigenvalues with magnitude at
/// most `tol * max(1, |λ|_max)` count as zero.
pub fn laplacian_nullspace(
    state: &OpinionState,
    topology: &Topology,
    spec: &CouplingSpec,
    config: &FeedbackConfig,
    tol: f64,
) -> Result<Nullspace, AnalysisError> {
    if !spec.is_cooperative() {
        return Err(AnalysisError::AntiCoupled);
    }
    let mut warnings = Vec::new();
    let verdict = spectral_verdict(spec, PSD_TOL)?;
    for (k, check) in verdict.per_edge.iter().enumerate() {
        if !check.class.is_psd() {
            warnings.push(format!(
                "edge {} coupling is {}: kernel describes this state only",
                topology.edges[k],
                check.class.label()
            ));
        }
    }
    let l = assemble_laplacian(state, topology, spec, config)?;
    let size = l.nrows();
    if size == 0 {
        return Ok(Nullspace {
            dimension: 0,
            basis: DMatrix::zeros(0, 0),
            warnings,
        });
    }
    let eig = l.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let kernel: Vec<usize> = (0..size)
        .filter(|&i| eig.eigenvalues[i].abs() <= tol * scale)
        .collect();
    let mut basis = DMatrix::zeros(size, kernel.len());
    for (c, &i) in kernel.iter().enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(Nullspace {
        dimension: kernel.len(),
        basis,
        warnings,
    })
}

/// Connected components of every topic consensus graph.
pub fn predicted_components(topology: &Topology, spec: &CouplingSpec) -> Vec<Vec<Vec<usize>>> {
    topic_consensus_graphs(topology, spec)
        .iter()
        .map(|g| components(g.n, &g.edges))
        .collect()
}
