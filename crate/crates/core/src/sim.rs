//! Fixed-step integration of `ẋ = -L(x) x` and trajectory post-processing.

use nalgebra::DVector;

use crate::analysis::{AnalysisReport, Regime};
use crate::error::SimError;
use crate::network::{ClusterPartition, CouplingSpec, OpinionState, Topology};
use crate::weights::{BlockLaplacian, FeedbackConfig, QuadraticForm};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 20.0;
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-3;
pub const DEFAULT_STEADY_TOL: f64 = 1e-6;
/// Abort once `|x|_inf` exceeds this multiple of `max(|x0|_inf, 1)`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub step: f64,
    pub horizon: f64,
    pub allow_unstable: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
            allow_unstable: false,
        }
    }
}

impl SolverSettings {
    pub fn new(step: f64, horizon: f64) -> Self {
        SolverSettings {
            step,
            horizon,
            allow_unstable: false,
        }
    }
}

/// Integrated run sampled at every step `t_k = k h`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub d: usize,
    pub step: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `½ |x|²`.
    pub lyapunov: Vec<f64>,
    /// `-xᵀ L(x) x`.
    pub lyapunov_rate: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// `|ẋ|_inf` at the final state.
    pub final_rate: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> OpinionState {
        let x = self.states.last().expect("trajectory holds the initial state");
        OpinionState::new(self.n, self.d, x.clone()).expect("shape fixed at integration")
    }
}

fn rk4_step<F>(f: F, x: &DVector<f64>, k1: DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Classical RK4 with `L` rebuilt at every stage.
pub fn integrate(
    x0: &OpinionState,
    topology: &Topology,
    spec: &CouplingSpec,
    config: &FeedbackConfig,
    settings: &SolverSettings,
) -> Result<Trajectory, SimError> {
    let SolverSettings {
        step: h,
        horizon,
        allow_unstable,
    } = *settings;
    if !(h > 0.0 && h.is_finite() && horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::BadSettings { h, t_final: horizon });
    }
    if !spec.is_cooperative() && !allow_unstable {
        return Err(SimError::UnstableNotAllowed);
    }
    // Validates configuration and state shape once; the loop below skips it.
    BlockLaplacian::build(x0, topology, spec, config)?;

    let steps = ((horizon / h).round() as usize).max(1);
    let limit = DIVERGENCE_FACTOR * x0.as_vector().amax().max(1.0);
    let rhs = |x: &DVector<f64>| -BlockLaplacian::build_unchecked(x, topology, spec, config).apply(x);

    let mut traj = Trajectory {
        n: topology.n,
        d: topology.d,
        step: h,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        lyapunov: Vec::with_capacity(steps + 1),
        lyapunov_rate: Vec::with_capacity(steps + 1),
        phi: Vec::with_capacity(steps + 1),
        psi: Vec::with_capacity(steps + 1),
        final_rate: 0.0,
    };
    let record = |traj: &mut Trajectory, k: usize, x: DVector<f64>, q: QuadraticForm| {
        traj.times.push(k as f64 * h);
        traj.lyapunov.push(0.5 * x.norm_squared());
        traj.lyapunov_rate.push(-q.total);
        traj.phi.push(q.phi);
        traj.psi.push(q.psi);
        traj.states.push(x);
    };

    let mut x = x0.as_vector().clone();
    for k in 0..steps {
        let lap = BlockLaplacian::build_unchecked(&x, topology, spec, config);
        let lx = lap.apply(&x);
        let q = lap.quadratic_form(&x);
        let next = rk4_step(rhs, &x, -lx, h);
        record(&mut traj, k, x, q);
        let magnitude = next.amax();
        // Negated comparison also catches NaN.
        if !(magnitude <= limit) || next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Diverged {
                t: (k + 1) as f64 * h,
                magnitude,
                limit,
            });
        }
        x = next;
    }
    let lap = BlockLaplacian::build_unchecked(&x, topology, spec, config);
    traj.final_rate = lap.apply(&x).amax();
    let q = lap.quadratic_form(&x);
    record(&mut traj, steps, x, q);
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovTrace {
    pub values: Vec<f64>,
    pub rates: Vec<f64>,
    pub monotone: bool,
    /// Largest increase `V(t_{k+1}) - V(t_k)`, zero when none.
    pub max_violation: f64,
}

/// Checks `V(t_{k+1}) <= V(t_k) + 1e-9 V(t_0)` along the run.
pub fn lyapunov_trace(traj: &Trajectory) -> LyapunovTrace {
    let v0 = traj.lyapunov.first().copied().unwrap_or(0.0);
    let slack = 1e-9 * v0;
    let max_violation = traj
        .lyapunov
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    LyapunovTrace {
        values: traj.lyapunov.clone(),
        rates: traj.lyapunov_rate.clone(),
        monotone: max_violation <= slack,
        max_violation,
    }
}

fn topic_sums(x: &DVector<f64>, n: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|p| (0..n).map(|i| x[i * d + p]).sum())
        .collect()
}

/// `max_t |Σ_i x_i(t) - Σ_i x_i(0)|_inf`.
pub fn conservation_check(traj: &Trajectory) -> f64 {
    let Some(first) = traj.states.first() else {
        return 0.0;
    };
    let base = topic_sums(first, traj.n, traj.d);
    traj.states
        .iter()
        .flat_map(|x| {
            topic_sums(x, traj.n, traj.d)
                .into_iter()
                .zip(base.clone())
                .map(|(s, b)| (s - b).abs())
        })
        .fold(0.0, f64::max)
}

/// Groups indices by chaining sorted values whose neighbours differ by at
/// most `tol`. Blocks are sorted and ordered by smallest member.
pub fn group_values(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for i in order {
        match blocks.last_mut() {
            Some(block) if values[i] - prev <= tol => block.push(i),
            _ => blocks.push(vec![i]),
        }
        prev = values[i];
    }
    for block in &mut blocks {
        block.sort_unstable();
    }
    blocks.sort_by_key(|b| b[0]);
    blocks
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopicVerdict {
    Consensus,
    Clustered(Vec<Vec<usize>>),
}

impl TopicVerdict {
    pub fn is_consensus(&self) -> bool {
        matches!(self, TopicVerdict::Consensus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub settled: bool,
    pub final_rate: f64,
    pub verdicts: Vec<TopicVerdict>,
    pub partition: ClusterPartition,
    /// Mean final value of every block, per topic, in block order.
    pub cluster_values: Vec<Vec<f64>>,
    /// Largest final spread `max_i x_ip - min_i x_ip` per topic.
    pub spreads: Vec<f64>,
    /// Smallest distance between neighbouring blocks per topic.
    pub separations: Vec<Option<f64>>,
    pub lyapunov_monotone: bool,
    pub conservation_drift: f64,
}

/// Groups final values per topic with gap tolerance `tol`. The outcome is
/// marked unsettled when `|ẋ(t_f)|_inf >= steady_tol`.
pub fn detect_clusters(traj: &Trajectory, tol: f64, steady_tol: f64) -> SimOutcome {
    let x = traj.states.last().expect("trajectory holds the initial state");
    let (n, d) = (traj.n, traj.d);
    let mut per_topic = Vec::with_capacity(d);
    let mut cluster_values = Vec::with_capacity(d);
    let mut spreads = Vec::with_capacity(d);
    let mut separations = Vec::with_capacity(d);
    for p in 0..d {
        let values: Vec<f64> = (0..n).map(|i| x[i * d + p]).collect();
        let blocks = group_values(&values, tol);
        let means: Vec<f64> = blocks
            .iter()
            .map(|b| b.iter().map(|&i| values[i]).sum::<f64>() / b.len() as f64)
            .collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        spreads.push(if n == 0 { 0.0 } else { max - min });
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        separations.push(
            sorted
                .windows(2)
                .map(|w| w[1] - w[0])
                .filter(|g| *g > tol)
                .reduce(f64::min),
        );
        cluster_values.push(means);
        per_topic.push(blocks);
    }
    let verdicts = per_topic
        .iter()
        .map(|blocks| {
            if blocks.len() <= 1 {
                TopicVerdict::Consensus
            } else {
                TopicVerdict::Clustered(blocks.clone())
            }
        })
        .collect();
    SimOutcome {
        settled: traj.final_rate < steady_tol,
        final_rate: traj.final_rate,
        verdicts,
        partition: ClusterPartition::from_topic_blocks(n, per_topic),
        cluster_values,
        spreads,
        separations,
        lyapunov_monotone: lyapunov_trace(traj).monotone,
        conservation_drift: conservation_check(traj),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Informational,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Informational => "INFORMATIONAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconciliation {
    pub verdict: Verdict,
    pub regime: Regime,
    pub notes: Vec<String>,
}

fn one_based(blocks: &[Vec<usize>]) -> String {
    blocks
        .iter()
        .map(|b| {
            let members: Vec<String> = b.iter().map(|i| (i + 1).to_string()).collect();
            format!("{{{}}}", members.join(","))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Checks a simulated outcome against the structural prediction.
pub fn compare(report: &AnalysisReport, outcome: &SimOutcome) -> Reconciliation {
    let mut notes = Vec::new();
    let all_consensus = outcome.verdicts.iter().all(TopicVerdict::is_consensus);
    let verdict = match report.regime {
        Regime::CompleteConsensus(_) => {
            for (p, v) in outcome.verdicts.iter().enumerate() {
                if let TopicVerdict::Clustered(blocks) = v {
                    notes.push(format!(
                        "topic {} expected consensus, observed {}",
                        p + 1,
                        one_based(blocks)
                    ));
                }
            }
            if all_consensus {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        Regime::PartialConsensus => {
            let mut ok = true;
            for (p, (predicted, observed)) in report
                .topic_components
                .iter()
                .zip(&outcome.partition.per_topic)
                .enumerate()
            {
                if predicted != observed {
                    ok = false;
                    notes.push(format!(
                        "topic {} predicted {}, observed {}",
                        p + 1,
                        one_based(predicted),
                        one_based(observed)
                    ));
                }
            }
            let clusters = outcome.partition.global.len();
            if let Some(bound) = report.cluster_bound {
                if clusters > bound {
                    ok = false;
                    notes.push(format!("{clusters} global clusters exceed bound {bound}"));
                } else {
                    notes.push(format!("{clusters} global clusters within bound {bound}"));
                }
            }
            if ok {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        Regime::NoGuarantee => {
            if all_consensus {
                notes.push("consensus observed".to_string());
            } else {
                for (p, v) in outcome.verdicts.iter().enumerate() {
                    match v {
                        TopicVerdict::Consensus => notes.push(format!("topic {} consensus", p + 1)),
                        TopicVerdict::Clustered(b) => {
                            notes.push(format!("topic {} clusters {}", p + 1, one_based(b)))
                        }
                    }
                }
            }
            Verdict::Informational
        }
    };
    if !outcome.settled {
        notes.push(format!(
            "not settled: |dx/dt|_inf = {:e} at final time",
            outcome.final_rate
        ));
    }
    Reconciliation {
        verdict,
        regime: report.regime.clone(),
        notes,
    }
}
