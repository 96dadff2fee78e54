//! State-dependent edge weights and the stacked Laplacian built from them.
//!
//! For an edge `(i, j)` with opinion difference `Δ = x_j - x_i`, every topic
//! gets a scale factor
//!
//! ```text
//! inverse-proportional:  s_p = sgn(Δ_p)
//! proportional:          s_p = sgn(Δ_p) / (c1 |Δ_p| + c0)
//! ```
//!
//! where `sgn` is the configured (possibly smoothed) sign. Cross entries are
//! `a_pq = k_pq s_p s_q`. Direct entries keep their own law: `a_pp = k_pp`
//! (inverse-proportional) or `k_pp / (c2 Δ_p² + c1 |Δ_p| + c0)`
//! (proportional).

use nalgebra::{DMatrix, DVector};

use crate::error::{ModelError, WeightError};
use crate::network::{CouplingMatrix, CouplingSpec, Edge, OpinionState, Topology};

/// Default sigmoid gain `k_e`.
pub const DEFAULT_SIGMOID_GAIN: f64 = 50.0;
/// Default exponent for the signum-power smoothing.
pub const DEFAULT_SIGNUM_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    InverseProportional,
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignSmoothing {
    /// `+1` for `Δ >= 0`, `-1` otherwise. Discontinuous.
    Exact,
    /// `2 / (1 + exp(-gain Δ)) - 1`.
    Sigmoid { gain: f64 },
    /// Combined factor `sign(Δ) |Δ|^alpha`.
    Signum { alpha: f64 },
}

impl SignSmoothing {
    pub fn is_discontinuous(&self) -> bool {
        matches!(self, SignSmoothing::Exact)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackConfig {
    pub mode: FeedbackMode,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub smoothing: SignSmoothing,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            mode: FeedbackMode::InverseProportional,
            c0: 1.0,
            c1: 1.0,
            c2: 0.0,
            smoothing: SignSmoothing::Sigmoid {
                gain: DEFAULT_SIGMOID_GAIN,
            },
        }
    }
}

impl FeedbackConfig {
    pub fn inverse(smoothing: SignSmoothing) -> Self {
        FeedbackConfig {
            smoothing,
            ..Default::default()
        }
    }

    pub fn proportional(c0: f64, c1: f64, c2: f64, smoothing: SignSmoothing) -> Self {
        FeedbackConfig {
            mode: FeedbackMode::Proportional,
            c0,
            c1,
            c2,
            smoothing,
        }
    }

    pub fn check(&self) -> Result<(), WeightError> {
        match self.smoothing {
            SignSmoothing::Exact => {}
            SignSmoothing::Sigmoid { gain } => {
                if !(gain.is_finite() && gain > 0.0) {
                    return Err(WeightError::BadConstant {
                        name: "k_e",
                        value: gain,
                    });
                }
            }
            SignSmoothing::Signum { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(WeightError::BadConstant {
                        name: "alpha",
                        value: alpha,
                    });
                }
            }
        }
        if self.mode == FeedbackMode::Proportional {
            if !(self.c0 > 0.0) {
                return Err(WeightError::ZeroDenominator(self.c0));
            }
            for (name, value) in [("c1", self.c1), ("c2", self.c2)] {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(WeightError::BadConstant { name, value });
                }
            }
        }
        Ok(())
    }
}

/// Smoothed sign of an opinion difference.
pub fn smoothed_sign(delta: f64, smoothing: SignSmoothing) -> f64 {
    match smoothing {
        SignSmoothing::Exact => {
            if delta >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
        // 2/(1+e^{-kΔ}) - 1 == tanh(kΔ/2), without the overflow of exp.
        SignSmoothing::Sigmoid { gain } => (0.5 * gain * delta).tanh(),
        SignSmoothing::Signum { alpha } => {
            if delta == 0.0 {
                0.0
            } else {
                delta.signum() * delta.abs().powf(alpha)
            }
        }
    }
}

/// Per-topic scale factor entering the cross terms and the sign matrix.
fn topic_scale(delta: f64, config: &FeedbackConfig) -> f64 {
    let s = smoothed_sign(delta, config.smoothing);
    match config.mode {
        FeedbackMode::InverseProportional => s,
        FeedbackMode::Proportional => s / (config.c1 * delta.abs() + config.c0),
    }
}

fn direct_weight(gain: f64, delta: f64, config: &FeedbackConfig) -> f64 {
    match config.mode {
        FeedbackMode::InverseProportional => gain,
        FeedbackMode::Proportional => {
            let a = delta.abs();
            gain / (config.c2 * a * a + config.c1 * a + config.c0)
        }
    }
}

/// `A^{ij}` for one edge at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightMatrix(pub DMatrix<f64>);

impl EdgeWeightMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Weight matrix from an opinion difference `Δ = x_head - x_tail`.
/// The configuration must already have passed [`FeedbackConfig::check`].
pub fn weights_from_difference(
    delta: &[f64],
    k: &CouplingMatrix,
    config: &FeedbackConfig,
) -> DMatrix<f64> {
    let d = delta.len();
    let scale: Vec<f64> = delta.iter().map(|&v| topic_scale(v, config)).collect();
    DMatrix::from_fn(d, d, |p, q| {
        let g = k.signed_gain(p, q);
        if g == 0.0 {
            0.0
        } else if p == q {
            direct_weight(g, delta[p], config)
        } else {
            g * (scale[p] * scale[q])
        }
    })
}

fn check_state(topology: &Topology, state: &OpinionState) -> Result<(), ModelError> {
    if state.n() != topology.n || state.d() != topology.d {
        return Err(ModelError::StateMismatch {
            n: topology.n,
            d: topology.d,
            state_n: state.n(),
            state_d: state.d(),
        });
    }
    Ok(())
}

/// Weight matrix of the `edge`-th topology edge.
pub fn edge_weight_matrix(
    edge: usize,
    state: &OpinionState,
    topology: &Topology,
    spec: &CouplingSpec,
    config: &FeedbackConfig,
) -> Result<EdgeWeightMatrix, WeightError> {
    config.check()?;
    check_state(topology, state)?;
    let e = &topology.edges[edge];
    Ok(EdgeWeightMatrix(weights_from_difference(
        &state.difference(e),
        &spec.edges[edge],
        config,
    )))
}

/// Stacked Laplacian kept in block form: one weight matrix per edge.
#[derive(Debug, Clone)]
pub struct BlockLaplacian {
    n: usize,
    d: usize,
    edges: Vec<Edge>,
    weights: Vec<DMatrix<f64>>,
}

impl BlockLaplacian {
    pub fn build(
        state: &OpinionState,
        topology: &Topology,
        spec: &CouplingSpec,
        config: &FeedbackConfig,
    ) -> Result<Self, WeightError> {
        config.check()?;
        check_state(topology, state)?;
        Ok(Self::build_unchecked(state.as_vector(), topology, spec, config))
    }

    /// Skips configuration and shape checks; used on the integrator hot path.
    pub(crate) fn build_unchecked(
        x: &DVector<f64>,
        topology: &Topology,
        spec: &CouplingSpec,
        config: &FeedbackConfig,
    ) -> Self {
        let d = topology.d;
        let mut delta = vec![0.0; d];
        let weights = topology
            .edges
            .iter()
            .zip(&spec.edges)
            .map(|(e, k)| {
                for (p, slot) in delta.iter_mut().enumerate() {
                    *slot = x[e.head * d + p] - x[e.tail * d + p];
                }
                weights_from_difference(&delta, k, config)
            })
            .collect();
        BlockLaplacian {
            n: topology.n,
            d,
            edges: topology.edges.clone(),
            weights,
        }
    }

    pub fn edge_weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    /// `L y` without forming the dense matrix.
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let d = self.d;
        let mut out = DVector::zeros(self.n * d);
        let mut diff = DVector::zeros(d);
        for (e, a) in self.edges.iter().zip(&self.weights) {
            for p in 0..d {
                diff[p] = y[e.tail * d + p] - y[e.head * d + p];
            }
            let f = a * &diff;
            for p in 0..d {
                out[e.tail * d + p] += f[p];
                out[e.head * d + p] -= f[p];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.d;
        let mut l = DMatrix::zeros(self.n * d, self.n * d);
        for (e, a) in self.edges.iter().zip(&self.weights) {
            let (i, j) = (e.tail * d, e.head * d);
            let mut ii = l.view_mut((i, i), (d, d));
            ii += a;
            let mut jj = l.view_mut((j, j), (d, d));
            jj += a;
            let mut ij = l.view_mut((i, j), (d, d));
            ij -= a;
            let mut ji = l.view_mut((j, i), (d, d));
            ji -= a;
        }
        l
    }

    /// Direct and cross parts of `yᵀ L y`.
    pub fn quadratic_form(&self, y: &DVector<f64>) -> QuadraticForm {
        let d = self.d;
        let mut phi = 0.0;
        let mut psi = 0.0;
        for (e, a) in self.edges.iter().zip(&self.weights) {
            let delta: Vec<f64> = (0..d)
                .map(|p| y[e.head * d + p] - y[e.tail * d + p])
                .collect();
            for p in 0..d {
                phi += a[(p, p)] * delta[p] * delta[p];
                for q in 0..d {
                    if q != p {
                        psi += a[(p, q)] * delta[p] * delta[q];
                    }
                }
            }
        }
        QuadraticForm {
            total: phi + psi,
            phi,
            psi,
        }
    }
}

/// Dense `(n d) x (n d)` Laplacian at `state`.
pub fn assemble_laplacian(
    state: &OpinionState,
    topology: &Topology,
    spec: &CouplingSpec,
    config: &FeedbackConfig,
) -> Result<DMatrix<f64>, WeightError> {
    Ok(BlockLaplacian::build(state, topology, spec, config)?.to_dense())
}

/// `L = H̄ᵀ (S K S + R) H̄` with block-diagonal `S`, `K`, `R`.
///
/// `S` holds the per-topic scale factors of every edge and `K` the coupling
/// gains. `R` is the diagonal direct-coupling residual `a_pp - k_pp s_p²`; it
/// vanishes for inverse-proportional feedback with the exact sign, where the
/// product reduces to `H̄ᵀ S K S H̄`.
#[derive(Debug, Clone)]
pub struct LaplacianFactors {
    pub incidence: DMatrix<f64>,
    pub signs: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub direct_residual: DMatrix<f64>,
}

impl LaplacianFactors {
    pub fn product(&self) -> DMatrix<f64> {
        let inner = &self.signs * &self.coupling * &self.signs + &self.direct_residual;
        self.incidence.transpose() * inner * &self.incidence
    }
}

pub fn factorize_laplacian(
    state: &OpinionState,
    topology: &Topology,
    spec: &CouplingSpec,
    config: &FeedbackConfig,
) -> Result<LaplacianFactors, WeightError> {
    config.check()?;
    check_state(topology, state)?;
    if !spec.is_cooperative() {
        return Err(WeightError::AntiCoupled);
    }
    if config.mode == FeedbackMode::Proportional && config.c2 != 0.0 {
        return Err(WeightError::QuadraticDenominator(config.c2));
    }
    let d = topology.d;
    let md = topology.m() * d;
    let mut signs = DMatrix::zeros(md, md);
    let mut coupling = DMatrix::zeros(md, md);
    let mut direct_residual = DMatrix::zeros(md, md);
    for (k, (e, km)) in topology.edges.iter().zip(&spec.edges).enumerate() {
        let delta = state.difference(e);
        let base = k * d;
        for p in 0..d {
            let s = topic_scale(delta[p], config);
            signs[(base + p, base + p)] = s;
            let kpp = km.gain(p, p);
            direct_residual[(base + p, base + p)] = direct_weight(kpp, delta[p], config) - kpp * s * s;
            for q in 0..d {
                coupling[(base + p, base + q)] = km.gain(p, q);
            }
        }
    }
    Ok(LaplacianFactors {
        incidence: crate::network::lifted_incidence(topology),
        signs,
        coupling,
        direct_residual,
    })
}

/// `xᵀ L(x) x` split into its direct part `phi` and cross part `psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticForm {
    pub total: f64,
    pub phi: f64,
    pub psi: f64,
}

pub fn quadratic_form(
    state: &OpinionState,
    topology: &Topology,
    spec: &CouplingSpec,
    config: &FeedbackConfig,
) -> Result<QuadraticForm, WeightError> {
    let lap = BlockLaplacian::build(state, topology, spec, config)?;
    Ok(lap.quadratic_form(state.as_vector()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Topology;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const SIGMOID: SignSmoothing = SignSmoothing::Sigmoid { gain: 50.0 };

    fn sigmoid_oracle(delta: f64, gain: f64) -> f64 {
        2.0 / (1.0 + (-gain * delta).exp()) - 1.0
    }

    fn fig3() -> Topology {
        Topology::new(5, 3, &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)]).unwrap()
    }

    fn eq31(t: &Topology) -> CouplingSpec {
        let rows = [
            vec![vec![1., 1., 0.], vec![1., 1., 0.], vec![0., 0., 0.]],
            vec![vec![1., 0., 0.], vec![0., 1., 1.], vec![0., 1., 1.]],
            vec![vec![2., 0., 1.], vec![0., 2., 1.], vec![1., 1., 2.]],
            vec![vec![1., 1., 1.], vec![1., 1., 1.], vec![1., 1., 1.]],
            vec![vec![1., 0., 1.], vec![0., 1., 0.], vec![1., 0., 1.]],
        ];
        CouplingSpec::new(t, rows.iter().map(|r| CouplingMatrix::from_rows(r)).collect()).unwrap()
    }

    fn fig5_state() -> OpinionState {
        OpinionState::from_agents(&[
            vec![1., 2., 3.],
            vec![2., 4., 4.],
            vec![3., 1., 5.],
            vec![4., 3., 2.],
            vec![5., 6., 1.],
        ])
        .unwrap()
    }

    #[test]
    fn sign_conventions() {
        assert_eq!(smoothed_sign(0.0, SignSmoothing::Sigmoid { gain: 7.0 }), 0.0);
        assert_eq!(smoothed_sign(0.0, SignSmoothing::Exact), 1.0);
        assert_eq!(smoothed_sign(-1e-300, SignSmoothing::Exact), -1.0);
        let s = smoothed_sign(0.1, SignSmoothing::Sigmoid { gain: 100.0 });
        assert_abs_diff_eq!(s, sigmoid_oracle(0.1, 100.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.9999092, epsilon = 1e-7);
        assert_abs_diff_eq!(
            smoothed_sign(-0.25, SignSmoothing::Signum { alpha: 0.5 }),
            -0.5,
            epsilon = 1e-15
        );
        // Saturates instead of overflowing.
        assert_eq!(smoothed_sign(-1e6, SignSmoothing::Sigmoid { gain: 50.0 }), -1.0);
    }

    #[test]
    fn k45_weight_matrix_at_initial_state() {
        let t = fig3();
        let spec = eq31(&t);
        let a = edge_weight_matrix(4, &fig5_state(), &t, &spec, &FeedbackConfig::inverse(SignSmoothing::Exact))
            .unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1., 0., -1., 0., 1., 0., -1., 0., 1.]);
        assert_eq!(a.0, expected);
    }

    #[test]
    fn sigmoid_at_consensus_keeps_only_direct_gains() {
        let k = CouplingMatrix::from_rows(&[
            vec![2., 1., 3.],
            vec![1., 0., 1.],
            vec![3., 1., 5.],
        ]);
        let a = weights_from_difference(&[0.0; 3], &k, &FeedbackConfig::inverse(SIGMOID));
        assert_eq!(a, DMatrix::from_diagonal(&DVector::from_vec(vec![2., 0., 5.])));
    }

    #[test]
    fn unit_proportional_matches_inverse() {
        let k = CouplingMatrix::from_rows(&[
            vec![2., 1., 3.],
            vec![1., 0., 1.],
            vec![3., 1., 5.],
        ]);
        let delta = [0.3, -1.2, 2.0];
        for smoothing in [SignSmoothing::Exact, SIGMOID] {
            let inv = weights_from_difference(&delta, &k, &FeedbackConfig::inverse(smoothing));
            let prop = weights_from_difference(
                &delta,
                &k,
                &FeedbackConfig::proportional(1.0, 0.0, 0.0, smoothing),
            );
            assert_eq!(inv, prop);
        }
    }

    #[test]
    fn proportional_rejects_zero_c0() {
        let t = fig3();
        let cfg = FeedbackConfig::proportional(0.0, 1.0, 0.0, SignSmoothing::Exact);
        assert_eq!(
            edge_weight_matrix(0, &fig5_state(), &t, &eq31(&t), &cfg),
            Err(WeightError::ZeroDenominator(0.0))
        );
    }

    #[test]
    fn anti_entries_are_negated() {
        let k = CouplingMatrix::from_rows(&[vec![1., 2.], vec![2., 1.]])
            .with_anti(0, 1)
            .with_anti(1, 0);
        let a = weights_from_difference(&[1.0, 1.0], &k, &FeedbackConfig::inverse(SignSmoothing::Exact));
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1., -2., -2., 1.]));
    }

    #[test]
    fn two_agent_laplacian_blocks() {
        let t = Topology::new(2, 2, &[(0, 1)]).unwrap();
        let spec = CouplingSpec::new(
            &t,
            vec![CouplingMatrix::from_rows(&[vec![1., 1.], vec![1., 3.]])],
        )
        .unwrap();
        let x = OpinionState::from_agents(&[vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let cfg = FeedbackConfig::inverse(SignSmoothing::Exact);
        let a = edge_weight_matrix(0, &x, &t, &spec, &cfg).unwrap().0;
        let l = assemble_laplacian(&x, &t, &spec, &cfg).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected.view_mut((0, 0), (2, 2)).copy_from(&a);
        expected.view_mut((2, 2), (2, 2)).copy_from(&a);
        expected.view_mut((0, 2), (2, 2)).copy_from(&(-&a));
        expected.view_mut((2, 0), (2, 2)).copy_from(&(-&a));
        assert_eq!(l, expected);
    }

    #[test]
    fn scalar_factorization_matches_assembly() {
        let t = Topology::new(2, 1, &[(0, 1)]).unwrap();
        let spec = CouplingSpec::new(&t, vec![CouplingMatrix::from_rows(&[vec![2.5]])]).unwrap();
        let x = OpinionState::from_agents(&[vec![3.0], vec![-1.0]]).unwrap();
        let cfg = FeedbackConfig::inverse(SignSmoothing::Exact);
        let l = assemble_laplacian(&x, &t, &spec, &cfg).unwrap();
        let f = factorize_laplacian(&x, &t, &spec, &cfg).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.5, -2.5, -2.5, 2.5]);
        assert_eq!(l, expected);
        assert_eq!(f.product(), expected);
        assert_eq!(f.direct_residual, DMatrix::zeros(1, 1));
    }

    #[test]
    fn fig5_factorization_identity() {
        let t = fig3();
        let spec = eq31(&t);
        for cfg in [
            FeedbackConfig::inverse(SignSmoothing::Exact),
            FeedbackConfig::inverse(SIGMOID),
            FeedbackConfig::proportional(1.0, 1.0, 0.0, SIGMOID),
        ] {
            let l = assemble_laplacian(&fig5_state(), &t, &spec, &cfg).unwrap();
            let f = factorize_laplacian(&fig5_state(), &t, &spec, &cfg).unwrap();
            assert!((f.product() - l).amax() < 1e-12);
        }
    }

    #[test]
    fn proportional_sign_matrix_entries() {
        let t = fig3();
        let spec = eq31(&t);
        let x = fig5_state();
        let cfg = FeedbackConfig::proportional(1.0, 1.0, 0.0, SIGMOID);
        let f = factorize_laplacian(&x, &t, &spec, &cfg).unwrap();
        for (k, e) in t.edges.iter().enumerate() {
            for (p, delta) in x.difference(e).into_iter().enumerate() {
                let expected = sigmoid_oracle(delta, 50.0) / (delta.abs() + 1.0);
                assert_abs_diff_eq!(f.signs[(3 * k + p, 3 * k + p)], expected, epsilon = 1e-14);
            }
        }
        let quad = FeedbackConfig::proportional(1.0, 1.0, 0.5, SIGMOID);
        assert!(matches!(
            factorize_laplacian(&x, &t, &spec, &quad),
            Err(WeightError::QuadraticDenominator(_))
        ));
    }

    #[test]
    fn factorization_refuses_anti_coupling() {
        let t = Topology::new(2, 2, &[(0, 1)]).unwrap();
        let k = CouplingMatrix::from_rows(&[vec![1., 1.], vec![1., 1.]])
            .with_anti(0, 1)
            .with_anti(1, 0);
        let spec = CouplingSpec::new(&t, vec![k]).unwrap();
        let x = OpinionState::from_agents(&[vec![0., 0.], vec![1., 1.]]).unwrap();
        assert_eq!(
            factorize_laplacian(&x, &t, &spec, &FeedbackConfig::default()).unwrap_err(),
            WeightError::AntiCoupled
        );
    }

    #[test]
    fn eq20_coupling_hides_a_free_topic() {
        // Topics 1-2 and 4-5 coupled in PSD blocks, topic 3 uncoupled.
        let k = CouplingMatrix::from_rows(&[
            vec![1., 1., 0., 0., 0.],
            vec![1., 1., 0., 0., 0.],
            vec![0., 0., 0., 0., 0.],
            vec![0., 0., 0., 1., 1.],
            vec![0., 0., 0., 1., 1.],
        ]);
        let t = Topology::new(2, 5, &[(0, 1)]).unwrap();
        let spec = CouplingSpec::new(&t, vec![k]).unwrap();
        let x = OpinionState::from_agents(&[vec![0.0; 5], vec![0., 0., 1.7, 0., 0.]]).unwrap();
        for cfg in [FeedbackConfig::inverse(SignSmoothing::Exact), FeedbackConfig::default()] {
            let q = quadratic_form(&x, &t, &spec, &cfg).unwrap();
            assert_eq!(q.total, 0.0);
        }
    }

    #[test]
    fn indefinite_matrix_has_zero_form_without_zero_image() {
        // diag(1, 1, -4, -4): the two negative entries are anti-flagged gains.
        let k = CouplingMatrix::from_rows(&[
            vec![1., 0., 0., 0.],
            vec![0., 1., 0., 0.],
            vec![0., 0., 4., 0.],
            vec![0., 0., 0., 4.],
        ])
        .with_anti(2, 2)
        .with_anti(3, 3);
        let t = Topology::new(2, 4, &[(0, 1)]).unwrap();
        let spec = CouplingSpec::new(&t, vec![k]).unwrap();
        let x = OpinionState::from_agents(&[vec![0.0; 4], vec![1., 1., 0.5, 0.5]]).unwrap();
        let cfg = FeedbackConfig::inverse(SignSmoothing::Exact);
        let q = quadratic_form(&x, &t, &spec, &cfg).unwrap();
        assert_eq!(q.total, 0.0);
        let lx = assemble_laplacian(&x, &t, &spec, &cfg).unwrap() * x.as_vector();
        assert!(lx.amax() > 1.0);
    }

    #[test]
    fn consensus_state_has_zero_form() {
        let t = fig3();
        let spec = eq31(&t);
        let x = OpinionState::consensus(5, &[0.3, -2.0, 7.0]);
        let q = quadratic_form(&x, &t, &spec, &FeedbackConfig::default()).unwrap();
        assert_eq!((q.total, q.phi, q.psi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn phi_vanishes_without_direct_gains() {
        let t = fig3();
        let k = CouplingMatrix::from_rows(&[
            vec![0., 1., 1.],
            vec![1., 0., 1.],
            vec![1., 1., 0.],
        ]);
        let spec = CouplingSpec::homogeneous(&t, k).unwrap();
        let q = quadratic_form(&fig5_state(), &t, &spec, &FeedbackConfig::default()).unwrap();
        assert_eq!(q.phi, 0.0);
        assert!(q.psi > 0.0);
    }

    // Random cooperative networks over a connected-ish random graph.
    fn arb_case(psd: bool) -> impl Strategy<Value = (Topology, CouplingSpec, OpinionState)> {
        (2usize..6, 1usize..4).prop_flat_map(move |(n, d)| {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .collect();
            let np = pairs.len();
            (
                Just((n, d, pairs)),
                proptest::collection::vec(any::<bool>(), np),
                proptest::collection::vec(0.0f64..2.0, np * d * d),
                proptest::collection::vec(-3.0f64..3.0, n * d),
            )
                .prop_map(move |((n, d, pairs), keep, raw, x)| {
                    let chosen: Vec<(usize, usize)> = pairs
                        .iter()
                        .zip(&keep)
                        .filter(|(_, &k)| k)
                        .map(|(p, _)| *p)
                        .collect();
                    let t = Topology::new(n, d, &chosen).unwrap();
                    let edges = (0..t.m())
                        .map(|k| {
                            let b = DMatrix::from_row_slice(d, d, &raw[k * d * d..(k + 1) * d * d]);
                            let m = if psd {
                                b.transpose() * &b
                            } else {
                                DMatrix::from_fn(d, d, |p, q| b[(p.min(q), p.max(q))])
                            };
                            CouplingMatrix::from_matrix(&m)
                        })
                        .collect();
                    let spec = CouplingSpec::new(&t, edges).unwrap();
                    let state = OpinionState::new(n, d, DVector::from_vec(x)).unwrap();
                    (t, spec, state)
                })
        })
    }

    fn arb_config() -> impl Strategy<Value = FeedbackConfig> {
        prop_oneof![
            Just(FeedbackConfig::inverse(SignSmoothing::Exact)),
            Just(FeedbackConfig::inverse(SIGMOID)),
            Just(FeedbackConfig::proportional(1.0, 1.0, 0.0, SIGMOID)),
            Just(FeedbackConfig::proportional(1.0, 0.5, 0.0, SignSmoothing::Exact)),
        ]
    }

    proptest! {
        #[test]
        fn laplacian_is_symmetric_with_consensus_kernel(
            (t, spec, x) in arb_case(false),
            cfg in arb_config(),
            v in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let l = assemble_laplacian(&x, &t, &spec, &cfg).unwrap();
            prop_assert_eq!(&l, &l.transpose());
            let ones_v = OpinionState::consensus(t.n, &v[..t.d]);
            prop_assert!((&l * ones_v.as_vector()).amax() < 1e-12);
            for k in 0..t.m() {
                let a = edge_weight_matrix(k, &x, &t, &spec, &cfg).unwrap().0;
                prop_assert_eq!(&a, &a.transpose());
            }
        }

        #[test]
        fn factorization_reproduces_assembly(
            (t, spec, x) in arb_case(false),
            cfg in arb_config(),
        ) {
            let l = assemble_laplacian(&x, &t, &spec, &cfg).unwrap();
            let f = factorize_laplacian(&x, &t, &spec, &cfg).unwrap();
            prop_assert!((f.product() - l).amax() < 1e-12);
        }

        #[test]
        fn quadratic_form_matches_dense_product(
            (t, spec, x) in arb_case(false),
            cfg in arb_config(),
        ) {
            let l = assemble_laplacian(&x, &t, &spec, &cfg).unwrap();
            let direct = x.as_vector().dot(&(&l * x.as_vector()));
            let q = quadratic_form(&x, &t, &spec, &cfg).unwrap();
            prop_assert!((q.total - direct).abs() < 1e-10);
            prop_assert!((q.total - q.phi - q.psi).abs() < 1e-12);
            // Nonnegative gains keep the form nonnegative at the state itself.
            prop_assert!(q.total >= -1e-12);
            let block = BlockLaplacian::build(&x, &t, &spec, &cfg).unwrap();
            prop_assert!((block.apply(x.as_vector()) - &l * x.as_vector()).amax() < 1e-12);
        }

        #[test]
        fn psd_couplings_give_psd_laplacian(
            (t, spec, x) in arb_case(true),
            cfg in arb_config(),
        ) {
            let l = assemble_laplacian(&x, &t, &spec, &cfg).unwrap();
            let lambda_min = l.symmetric_eigenvalues().min();
            prop_assert!(lambda_min >= -1e-9, "lambda_min = {}", lambda_min);
        }
    }
}
