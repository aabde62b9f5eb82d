//! Ring networks of identical forced Duffing oscillators.
//!
//! The network obeys `ẋ = f(x, t) + α (G ⊗ H) x` where `G` is a symmetric
//! Laplacian-type connectivity matrix built from a coupling radius and `H`
//! selects which node variables take part in the coupling. With the default
//! `H = [[0, 0], [1, 0]]` the position of each neighbour enters the velocity
//! equation.
//!
//! Time is integrated with the classical fixed-step fourth-order Runge-Kutta
//! scheme.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State dimension of a single node.
pub const NODE_DIM: usize = 2;

/// Any entry above this magnitude marks a run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

pub type NodeVec = [f64; NODE_DIM];
pub type NodeMat = [[f64; NODE_DIM]; NODE_DIM];

/// Intrinsic dynamics of one node.
pub trait NodeModel: Sync {
    fn rhs(&self, x: NodeVec, t: f64) -> NodeVec;

    fn jacobian(&self, x: NodeVec, t: f64) -> NodeMat;

    /// Natural time unit of the node (the forcing period for driven nodes).
    fn period(&self) -> f64;
}

/// Forced Duffing oscillator `ẍ + 2h ẋ + k x³ = F cos(ω t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub h: f64,
    pub k: f64,
    pub f: f64,
    pub omega: f64,
}

impl Default for NodeParams {
    /// Ueda's chaotic regime (`2h = 0.05`, `k = 1`, `F = 7.5`, `ω = 1`).
    fn default() -> Self {
        NodeParams {
            h: 0.025,
            k: 1.0,
            f: 7.5,
            omega: 1.0,
        }
    }
}

impl NodeParams {
    pub fn new(h: f64, k: f64, f: f64, omega: f64) -> Result<Self> {
        let p = NodeParams { h, k, f, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, v: f64, ok: bool, what: &str| {
            if v.is_finite() && ok {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be {what}")))
            }
        };
        check("h", self.h, self.h >= 0.0, "finite and >= 0")?;
        check("k", self.k, self.k > 0.0, "finite and > 0")?;
        check("f", self.f, self.f >= 0.0, "finite and >= 0")?;
        check("omega", self.omega, self.omega > 0.0, "finite and > 0")
    }
}

/// Derivative of a single Duffing node: `(v, -2hv - kx³ + F cos ωt)`.
#[inline]
pub fn node_rhs(state: NodeVec, t: f64, p: &NodeParams) -> NodeVec {
    let [x, v] = state;
    [v, -2.0 * p.h * v - p.k * x * x * x + p.f * (p.omega * t).cos()]
}

impl NodeModel for NodeParams {
    #[inline]
    fn rhs(&self, x: NodeVec, t: f64) -> NodeVec {
        node_rhs(x, t, self)
    }

    #[inline]
    fn jacobian(&self, x: NodeVec, _t: f64) -> NodeMat {
        [[0.0, 1.0], [-3.0 * self.k * x[0] * x[0], -2.0 * self.h]]
    }

    fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// Symmetric ring connectivity with coupling radius `radius`.
///
/// Off-diagonal entries are 1 when the circular distance
/// `min(|i-j|, n-|i-j|)` is at most `radius`; the diagonal is
/// `max(-(n-1), -2 radius)` so every row sums to zero.
pub fn build_connectivity(n: usize, radius: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::invalid("n", format!("node count {n} must be >= 2")));
    }
    if radius < 1 || radius > n / 2 {
        return Err(Error::invalid(
            "radius",
            format!("coupling radius {radius} must lie in 1..={} for n = {n}", n / 2),
        ));
    }
    let diag = -((n - 1).min(2 * radius) as f64);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag
        } else {
            let d = i.abs_diff(j);
            if d.min(n - d) <= radius {
                1.0
            } else {
                0.0
            }
        }
    }))
}

/// Eigenvalues of a symmetric connectivity matrix, sorted descending.
pub fn laplacian_eigenvalues(g: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(g)?;
    let mut eig: Vec<f64> = SymmetricEigen::new(g.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

fn check_symmetric(g: &DMatrix<f64>) -> Result<()> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch {
            expected: g.nrows(),
            got: g.ncols(),
        });
    }
    let scale = g.amax().max(1.0);
    for i in 0..g.nrows() {
        for j in (i + 1)..g.ncols() {
            let diff = (g[(i, j)] - g[(j, i)]).abs();
            if diff > 1e-12 * scale {
                return Err(Error::NotSymmetric { i, j, diff });
            }
        }
    }
    Ok(())
}

/// The Duffing inner-coupling matrix: neighbour positions drive the velocity equation.
pub const DUFFING_COUPLING: NodeMat = [[0.0, 0.0], [1.0, 0.0]];

/// A fully specified network: topology, coupling and node dynamics.
#[derive(Debug, Clone)]
pub struct NetworkSpec<M = NodeParams> {
    pub n: usize,
    pub radius: usize,
    pub alpha: f64,
    pub g: DMatrix<f64>,
    pub h: NodeMat,
    pub node: M,
    rows: Vec<SparseRow>,
}

impl<M: NodeModel> NetworkSpec<M> {
    /// Ring of `n` identical nodes with coupling radius `radius`.
    pub fn ring(n: usize, radius: usize, alpha: f64, node: M) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::invalid("alpha", format!("{alpha} is not finite")));
        }
        let g = build_connectivity(n, radius)?;
        let rows = sparse_rows(&g);
        Ok(NetworkSpec {
            n,
            radius,
            alpha,
            g,
            h: DUFFING_COUPLING,
            node,
            rows,
        })
    }

    /// Same topology and node, different coupling coefficient.
    pub fn with_alpha(&self, alpha: f64) -> Self
    where
        M: Clone,
    {
        NetworkSpec {
            alpha,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.n * NODE_DIM
    }

    pub fn period(&self) -> f64 {
        self.node.period()
    }

    /// Writes `f(x, t) + α (G ⊗ H) x` into `out`. Slices must have length `dim()`.
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let [[h00, h01], [h10, h11]] = self.h;
        for (j, row) in self.rows.iter().enumerate() {
            let xj = [x[NODE_DIM * j], x[NODE_DIM * j + 1]];
            let fj = self.node.rhs(xj, t);
            let [y0, y1] = row.apply(x, j);
            out[NODE_DIM * j] = fj[0] + self.alpha * (h00 * y0 + h01 * y1);
            out[NODE_DIM * j + 1] = fj[1] + self.alpha * (h10 * y0 + h11 * y1);
        }
    }

    /// Only the coupling term `α (G ⊗ H) x`.
    pub fn coupling_term(&self, state: &NetworkState) -> Result<Vec<f64>> {
        self.check_dim(state)?;
        let mut out = vec![0.0; self.dim()];
        let [[h00, h01], [h10, h11]] = self.h;
        for (j, row) in self.rows.iter().enumerate() {
            let [y0, y1] = row.apply(&state.x, j);
            out[NODE_DIM * j] = self.alpha * (h00 * y0 + h01 * y1);
            out[NODE_DIM * j + 1] = self.alpha * (h10 * y0 + h11 * y1);
        }
        Ok(out)
    }

    fn check_dim(&self, state: &NetworkState) -> Result<()> {
        if state.x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: state.x.len(),
            });
        }
        Ok(())
    }
}

/// Row `j` of `G` in difference form: `Σ_l G_jl x_l = Σ_{l≠j} G_jl (x_l - x_j) + (Σ_l G_jl) x_j`.
/// The sum vanishes exactly on the synchronization manifold.
#[derive(Debug, Clone)]
struct SparseRow {
    off_diag: Vec<(usize, f64)>,
    row_sum: f64,
}

impl SparseRow {
    #[inline]
    fn apply(&self, x: &[f64], j: usize) -> NodeVec {
        let (xj0, xj1) = (x[NODE_DIM * j], x[NODE_DIM * j + 1]);
        let (mut y0, mut y1) = (self.row_sum * xj0, self.row_sum * xj1);
        for &(l, w) in &self.off_diag {
            y0 += w * (x[NODE_DIM * l] - xj0);
            y1 += w * (x[NODE_DIM * l + 1] - xj1);
        }
        [y0, y1]
    }
}

fn sparse_rows(g: &DMatrix<f64>) -> Vec<SparseRow> {
    (0..g.nrows())
        .map(|i| SparseRow {
            off_diag: (0..g.ncols())
                .filter(|&j| j != i && g[(i, j)] != 0.0)
                .map(|j| (j, g[(i, j)]))
                .collect(),
            row_sum: g.row(i).sum(),
        })
        .collect()
}

/// Network state at time `t`; node `j` occupies `x[2j..2j+2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    pub x: Vec<f64>,
}

impl NetworkState {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        NetworkState { t, x }
    }

    pub fn node_count(&self) -> usize {
        self.x.len() / NODE_DIM
    }

    pub fn node(&self, j: usize) -> NodeVec {
        [self.x[NODE_DIM * j], self.x[NODE_DIM * j + 1]]
    }

    /// Every node at the same point.
    pub fn uniform(t: f64, n: usize, node: NodeVec) -> Self {
        NetworkState {
            t,
            x: (0..n).flat_map(|_| node).collect(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.x
            .iter()
            .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT)
    }
}

/// Derivative of the whole network at `state`.
pub fn network_rhs<M: NodeModel>(state: &NetworkState, spec: &NetworkSpec<M>) -> Result<Vec<f64>> {
    spec.check_dim(state)?;
    let mut out = vec![0.0; spec.dim()];
    spec.eval(state.t, &state.x, &mut out);
    Ok(out)
}

/// Scratch space for repeated classical RK4 steps on a system of fixed dimension.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` from `t` to `t + dt` for `ẋ = f(t, x)`.
    pub fn step<F>(&mut self, mut f: F, t: f64, x: &mut [f64], dt: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let half = 0.5 * dt;
        f(t, x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        f(t + half, &self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        f(t + half, &self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(t + dt, &self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }

    /// Derivative evaluated at the start of the most recent step.
    pub fn start_derivative(&self) -> &[f64] {
        &self.k1
    }
}

/// One RK4 step of the network. Diverged or non-finite results are errors.
pub fn rk4_step<M: NodeModel>(
    state: &NetworkState,
    dt: f64,
    spec: &NetworkSpec<M>,
) -> Result<NetworkState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("step {dt} must be > 0")));
    }
    spec.check_dim(state)?;
    let mut next = state.clone();
    Rk4::new(spec.dim()).step(|t, x, out| spec.eval(t, x, out), state.t, &mut next.x, dt);
    next.t = state.t + dt;
    if !next.is_bounded() {
        return Err(Error::Diverged { t: next.t });
    }
    Ok(next)
}

/// Range `[lo, hi]` from which each initial position and velocity is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for IcRange {
    fn default() -> Self {
        IcRange { lo: -1.0, hi: 1.0 }
    }
}

impl IcRange {
    pub fn validate(&self) -> Result<()> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(Error::invalid(
                "ic_range",
                format!("[{}, {}] is not a finite interval", self.lo, self.hi),
            ))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

/// Independent uniform initial conditions for every node, reproducible from `seed`.
pub fn random_initial_state(n: usize, range: IcRange, seed: u64) -> NetworkState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NetworkState::new(0.0, (0..n * NODE_DIM).map(|_| range.draw(&mut rng)).collect())
}

/// A common random base point with each node offset by at most `spread` per coordinate.
pub fn near_manifold_state(n: usize, range: IcRange, spread: f64, seed: u64) -> NetworkState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = [range.draw(&mut rng), range.draw(&mut rng)];
    let x = (0..n)
        .flat_map(|_| base)
        .map(|b| b + spread * rng.gen_range(-1.0..=1.0))
        .collect();
    NetworkState::new(0.0, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_of_six_matches_printed_matrix() {
        let g = build_connectivity(6, 1).unwrap();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(6, 6, &[
            -2., 1., 0., 0., 0., 1.,
            1., -2., 1., 0., 0., 0.,
            0., 1., -2., 1., 0., 0.,
            0., 0., 1., -2., 1., 0.,
            0., 0., 0., 1., -2., 1.,
            1., 0., 0., 0., 1., -2.,
        ]);
        assert_eq!(g, expected);
    }

    #[test]
    fn four_ring() {
        let g = build_connectivity(4, 1).unwrap();
        for i in 0..4 {
            assert_eq!(g[(i, i)], -2.0);
            assert_eq!(g[(i, (i + 1) % 4)], 1.0);
            assert_eq!(g[(i, (i + 3) % 4)], 1.0);
            assert_eq!(g[(i, (i + 2) % 4)], 0.0);
        }
    }

    #[test]
    fn radius_clamp_gives_complete_graph() {
        let g = build_connectivity(8, 4).unwrap();
        for i in 0..8 {
            assert_eq!(g[(i, i)], -7.0);
            assert_eq!(g.row(i).sum(), 0.0);
            for j in 0..8 {
                if i != j {
                    assert_eq!(g[(i, j)], 1.0);
                }
            }
        }
    }

    #[test]
    fn radius_out_of_range_is_rejected() {
        assert!(matches!(
            build_connectivity(6, 0),
            Err(Error::InvalidParameter { name: "radius", .. })
        ));
        assert!(matches!(
            build_connectivity(6, 4),
            Err(Error::InvalidParameter { name: "radius", .. })
        ));
        assert!(build_connectivity(1, 1).is_err());
    }

    #[test]
    fn node_rhs_examples() {
        let p = NodeParams { f: 0.0, ..NodeParams::default() };
        assert_eq!(node_rhs([0.0, 0.0], 3.7, &p), [0.0, 0.0]);
        let p = NodeParams { h: 0.3, k: 1.0, f: 0.0, omega: 1.0 };
        assert_eq!(node_rhs([1.0, 0.0], 0.0, &p), [0.0, -1.0]);
    }

    #[test]
    fn node_params_validation() {
        assert!(NodeParams::new(0.0, 1.0, 0.0, 1.0).is_ok());
        assert!(NodeParams::new(-0.1, 1.0, 0.0, 1.0).is_err());
        assert!(NodeParams::new(0.1, 0.0, 0.0, 1.0).is_err());
        assert!(NodeParams::new(0.1, 1.0, -1.0, 1.0).is_err());
        assert!(NodeParams::new(0.1, 1.0, 1.0, 0.0).is_err());
        assert!(NodeParams::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ring_six_eigenvalues() {
        let g = build_connectivity(6, 1).unwrap();
        let eig = laplacian_eigenvalues(&g).unwrap();
        let expected = [0.0, -1.0, -1.0, -3.0, -3.0, -4.0];
        for (a, b) in eig.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{eig:?}");
        }
    }

    #[test]
    fn complete_graph_eigenvalues() {
        for n in [5, 8, 9] {
            let g = build_connectivity(n, n / 2).unwrap();
            let eig = laplacian_eigenvalues(&g).unwrap();
            assert!(eig[0].abs() < 1e-10);
            assert!(eig[1..].iter().all(|l| (l + n as f64).abs() < 1e-10), "{eig:?}");
        }
    }

    #[test]
    fn non_symmetric_matrix_rejected() {
        let mut g = build_connectivity(5, 1).unwrap();
        g[(0, 2)] = 0.5;
        assert!(matches!(laplacian_eigenvalues(&g), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn decoupled_network_is_independent_nodes() {
        let p = NodeParams::default();
        let spec = NetworkSpec::ring(5, 2, 0.0, p).unwrap();
        let s = random_initial_state(5, IcRange::default(), 11).with_time(1.3);
        let d = network_rhs(&s, &spec).unwrap();
        for j in 0..5 {
            let expected = node_rhs(s.node(j), 1.3, &p);
            assert_eq!([d[2 * j], d[2 * j + 1]], expected);
        }
    }

    #[test]
    fn coupling_enters_velocity_only() {
        let spec = NetworkSpec::ring(6, 1, 0.7, NodeParams::default()).unwrap();
        let s = random_initial_state(6, IcRange::default(), 5);
        let c = spec.coupling_term(&s).unwrap();
        for j in 0..6 {
            assert_eq!(c[2 * j], 0.0);
            let mut expected = 0.0;
            for l in 0..6 {
                expected += spec.g[(j, l)] * s.x[2 * l];
            }
            assert!((c[2 * j + 1] - 0.7 * expected).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let spec = NetworkSpec::ring(4, 1, 0.1, NodeParams::default()).unwrap();
        let s = NetworkState::new(0.0, vec![0.0; 6]);
        assert_eq!(
            network_rhs(&s, &spec),
            Err(Error::DimensionMismatch { expected: 8, got: 6 })
        );
        assert!(rk4_step(&s, 0.01, &spec).is_err());
    }

    #[test]
    fn rk4_linear_decay_local_error() {
        let mut rk = Rk4::new(1);
        for dt in [0.1, 0.05] {
            let mut x = [1.0];
            rk.step(|_, x, out| out[0] = -x[0], 0.0, &mut x, dt);
            let err = (x[0] - (-dt).exp()).abs();
            // local truncation error of classical RK4 on ẋ = -x is dt⁵/120
            assert!(err < dt.powi(5) / 100.0, "dt={dt} err={err}");
        }
    }

    #[test]
    fn rk4_keeps_unforced_origin() {
        let p = NodeParams { f: 0.0, ..NodeParams::default() };
        let spec = NetworkSpec::ring(4, 1, 0.5, p).unwrap();
        let mut s = NetworkState::uniform(0.0, 4, [0.0, 0.0]);
        for _ in 0..100 {
            s = rk4_step(&s, 0.05, &spec).unwrap();
        }
        assert!(s.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rk4_rejects_bad_step_and_flags_divergence() {
        let spec = NetworkSpec::ring(4, 1, 0.5, NodeParams::default()).unwrap();
        let s = NetworkState::uniform(0.0, 4, [0.1, 0.0]);
        assert!(rk4_step(&s, 0.0, &spec).is_err());
        let huge = NetworkState::uniform(0.0, 4, [1e5, 0.0]);
        assert!(matches!(rk4_step(&huge, 0.1, &spec), Err(Error::Diverged { .. })));
    }

    #[test]
    fn initial_conditions_are_seeded() {
        let a = random_initial_state(6, IcRange::default(), 3);
        let b = random_initial_state(6, IcRange::default(), 3);
        let c = random_initial_state(6, IcRange::default(), 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.x.iter().all(|v| (-1.0..=1.0).contains(v)));

        let m = near_manifold_state(6, IcRange::default(), 1e-6, 9);
        for j in 1..6 {
            for c in 0..2 {
                assert!((m.node(j)[c] - m.node(0)[c]).abs() <= 2e-6);
            }
        }
    }

    impl NetworkState {
        fn with_time(mut self, t: f64) -> Self {
            self.t = t;
            self
        }
    }
}
