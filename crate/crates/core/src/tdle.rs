//! Transversely directed Lyapunov exponents.
//!
//! Every unordered node pair `(i, j)`, `i < j`, carries the difference vector
//! `z_ij = x_i - x_j`, which lies transversal to the synchronization manifold.
//! The exponent of a pair is the time-averaged exponential growth rate of
//! `|z_ij|`, so that `|z_ij(t)| = |z_ij(t0)| exp(DLE_ij (t - t0))`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{NetworkSpec, NetworkState, NodeModel, NodeVec, Rk4, NODE_DIM};

/// Pair norm below which two nodes count as synchronized.
pub const SYNC_THRESHOLD: f64 = 1e-15;

/// Number of unordered pairs among `n` nodes.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Flat index of the unordered pair `{i, j}`; `(j, i)` resolves to `(i, j)`.
///
/// Pairs are numbered row by row through the strict upper triangle.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    assert!(i != j && i < n && j < n, "invalid pair ({i}, {j}) for n = {n}");
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// All pairs `(i, j)` with `i < j` in index order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

#[inline]
fn norm(v: NodeVec) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Upper-triangular matrix of pairwise difference vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMatrix {
    n: usize,
    z: Vec<NodeVec>,
}

impl PerturbationMatrix {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// `x_i - x_j` for `i < j`; for `i > j` the stored pair `(j, i)` is returned.
    pub fn get(&self, i: usize, j: usize) -> NodeVec {
        self.z[pair_index(self.n, i, j)]
    }

    pub fn norm(&self, i: usize, j: usize) -> f64 {
        norm(self.get(i, j))
    }

    pub fn norms(&self) -> Vec<f64> {
        self.z.iter().map(|&v| norm(v)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), NodeVec)> + '_ {
        pairs(self.n).zip(self.z.iter().copied())
    }
}

/// Differences `z_ij = x_i - x_j` for every pair of nodes in `state`.
pub fn perturbations(state: &NetworkState) -> PerturbationMatrix {
    let n = state.node_count();
    let z = pairs(n)
        .map(|(i, j)| {
            let (a, b) = (state.node(i), state.node(j));
            [a[0] - b[0], a[1] - b[1]]
        })
        .collect();
    PerturbationMatrix { n, z }
}

/// Instantaneous exponential growth rate `(z·ż)/(z·z)` of `|z|`.
///
/// Undefined for `z = 0`; such pairs are synchronized and must be frozen instead.
pub fn instantaneous_rate(z: NodeVec, zdot: NodeVec) -> Option<f64> {
    let zz = z[0] * z[0] + z[1] * z[1];
    if zz > 0.0 {
        Some((z[0] * zdot[0] + z[1] * zdot[1]) / zz)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStatus {
    Active,
    /// `|z_ij|` fell below the synchronization threshold; the exponent is final.
    Frozen,
}

/// Fixed-capacity window of recent exponent samples.
#[derive(Debug, Clone)]
pub struct StabilizationBuffer {
    capacity: usize,
    values: VecDeque<f64>,
}

impl StabilizationBuffer {
    pub fn new(capacity: usize) -> Self {
        StabilizationBuffer {
            capacity: capacity.max(2),
            values: VecDeque::with_capacity(capacity.max(2)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() >= self.capacity
    }

    /// Appends a sample; once full, the oldest sample is dropped.
    pub fn push(&mut self, v: f64) {
        if self.is_full() {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    /// Population standard deviation of the stored samples.
    pub fn std_dev(&self) -> f64 {
        let n = self.values.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = self.values.iter().sum::<f64>() / n;
        (self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
    }
}

/// Stabilization test on a full buffer: `std < std_threshold`.
///
/// A buffer that is not yet full yields [`Error::BufferNotFull`] and no decision.
pub fn check_stabilization(buffer: &StabilizationBuffer, std_threshold: f64) -> Result<bool> {
    if !buffer.is_full() {
        return Err(Error::BufferNotFull {
            len: buffer.len(),
            capacity: buffer.capacity(),
        });
    }
    Ok(buffer.std_dev() < std_threshold)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdleOptions {
    /// Samples kept per pair for the stabilization test.
    pub buffer_capacity: usize,
    /// Standard deviation (in units of the exponent) below which a pair counts as stabilized.
    pub std_threshold: f64,
    /// Push one buffer sample every `decimation` updates.
    pub decimation: usize,
    /// Averaging starts once this much time has elapsed.
    pub warmup: f64,
    pub sync_threshold: f64,
}

impl Default for TdleOptions {
    fn default() -> Self {
        TdleOptions {
            buffer_capacity: 200,
            std_threshold: 1e-3,
            decimation: 1,
            warmup: 0.0,
            sync_threshold: SYNC_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairTdle {
    /// Running time-average of the growth rate (1 / time units).
    pub dle: f64,
    /// Accumulated `∫ rate dt`, equal to `ln(|z(t)| / |z(t0)|)`.
    pub log_growth: f64,
    pub elapsed: f64,
    pub status: PairStatus,
    /// Time at which the stabilization test first passed.
    pub stabilized_at: Option<f64>,
    pub buffer: StabilizationBuffer,
    updates: usize,
}

/// Exponent estimates for every pair of a network.
#[derive(Debug, Clone)]
pub struct TdleSpectrum {
    n: usize,
    opts: TdleOptions,
    pairs: Vec<PairTdle>,
}

impl TdleSpectrum {
    pub fn new(n: usize, opts: TdleOptions) -> Self {
        let pair = PairTdle {
            dle: 0.0,
            log_growth: 0.0,
            elapsed: 0.0,
            status: PairStatus::Active,
            stabilized_at: None,
            buffer: StabilizationBuffer::new(opts.buffer_capacity),
            updates: 0,
        };
        TdleSpectrum {
            n,
            opts,
            pairs: vec![pair; pair_count(n)],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn options(&self) -> &TdleOptions {
        &self.opts
    }

    pub fn pair(&self, i: usize, j: usize) -> &PairTdle {
        &self.pairs[pair_index(self.n, i, j)]
    }

    pub fn pairs(&self) -> &[PairTdle] {
        &self.pairs
    }

    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.dle).collect()
    }

    /// Exponents of pairs that have not synchronized yet.
    pub fn active_values(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .filter(|p| p.status == PairStatus::Active)
            .map(|p| p.dle)
            .collect()
    }

    pub fn frozen_count(&self) -> usize {
        self.pairs
            .iter()
            .filter(|p| p.status == PairStatus::Frozen)
            .count()
    }

    pub fn all_frozen(&self) -> bool {
        self.frozen_count() == self.pairs.len()
    }

    /// Folds one step of per-pair growth rates into the running averages.
    ///
    /// `rates[k]` is ignored for frozen pairs and may be `None` for them.
    /// Each update appends the new average to the pair's stabilization buffer
    /// (subject to decimation); a full buffer is tested and, when it fails,
    /// cleared to be refilled.
    pub fn update(&mut self, t: f64, rates: &[Option<f64>], dt: f64) {
        debug_assert_eq!(rates.len(), self.pairs.len());
        let opts = self.opts;
        for (p, rate) in self.pairs.iter_mut().zip(rates) {
            if p.status == PairStatus::Frozen {
                continue;
            }
            let Some(rate) = *rate else { continue };
            p.log_growth += rate * dt;
            p.elapsed += dt;
            p.dle = p.log_growth / p.elapsed;
            p.updates += 1;
            if p.stabilized_at.is_some() || p.updates % opts.decimation.max(1) != 0 {
                continue;
            }
            p.buffer.push(p.dle);
            if let Ok(stable) = check_stabilization(&p.buffer, opts.std_threshold) {
                if stable {
                    p.stabilized_at = Some(t);
                } else {
                    p.buffer.clear();
                }
            }
        }
    }

    /// Marks every pair with `|z_ij| < sync_threshold` as frozen. Returns how many froze now.
    pub fn freeze_synchronized(&mut self, z: &PerturbationMatrix) -> usize {
        let norms = z.norms();
        self.freeze_below(&norms)
    }

    fn freeze_below(&mut self, norms: &[f64]) -> usize {
        let thr = self.opts.sync_threshold;
        let mut newly = 0;
        for (p, &nz) in self.pairs.iter_mut().zip(norms) {
            if p.status == PairStatus::Active && nz < thr {
                p.status = PairStatus::Frozen;
                newly += 1;
            }
        }
        newly
    }
}

/// Pure form of [`TdleSpectrum::update`].
pub fn update_spectrum(spectrum: &TdleSpectrum, t: f64, rates: &[Option<f64>], dt: f64) -> TdleSpectrum {
    let mut next = spectrum.clone();
    next.update(t, rates, dt);
    next
}

/// Pure form of [`TdleSpectrum::freeze_synchronized`].
pub fn freeze_synchronized(spectrum: &TdleSpectrum, z: &PerturbationMatrix) -> TdleSpectrum {
    let mut next = spectrum.clone();
    next.freeze_synchronized(z);
    next
}

/// Time-stepping driver that integrates a network and keeps its exponent spectrum current.
///
/// The growth rate fed to the spectrum on each step is the step average
/// `ln(|z(t+dt)| / |z(t)|) / dt`, which is the exact integral of
/// [`instantaneous_rate`] along the discrete trajectory.
pub struct Simulation<'a, M = crate::model::NodeParams> {
    spec: &'a NetworkSpec<M>,
    state: NetworkState,
    dt: f64,
    t_start: f64,
    steps: u64,
    rk: Rk4,
    spectrum: TdleSpectrum,
    norms: Vec<f64>,
    next_norms: Vec<f64>,
    rates: Vec<Option<f64>>,
    // Time since each pair's norm has stayed below the classification tolerance.
    below_since: Vec<Option<f64>>,
    settle_tolerance: f64,
}

impl<'a, M: NodeModel> Simulation<'a, M> {
    pub fn new(
        spec: &'a NetworkSpec<M>,
        initial: NetworkState,
        dt: f64,
        opts: TdleOptions,
    ) -> Result<Self> {
        if initial.x.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: initial.x.len(),
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("step {dt} must be > 0")));
        }
        if !initial.is_bounded() {
            return Err(Error::Diverged { t: initial.t });
        }
        let mut spectrum = TdleSpectrum::new(spec.n, opts);
        let z = perturbations(&initial);
        let norms = z.norms();
        spectrum.freeze_below(&norms);
        let np = norms.len();
        let t_start = initial.t;
        let mut sim = Simulation {
            spec,
            state: initial,
            dt,
            t_start,
            steps: 0,
            rk: Rk4::new(spec.dim()),
            spectrum,
            next_norms: vec![0.0; np],
            rates: vec![None; np],
            below_since: vec![None; np],
            norms,
            settle_tolerance: 1e-12,
        };
        sim.track_settling();
        Ok(sim)
    }

    /// Tolerance used by [`Simulation::settled_for`] (default `1e-12`).
    pub fn with_settle_tolerance(mut self, tol: f64) -> Self {
        self.settle_tolerance = tol;
        self.below_since.iter_mut().for_each(|b| *b = None);
        self.track_settling();
        self
    }

    pub fn spec(&self) -> &NetworkSpec<M> {
        self.spec
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn spectrum(&self) -> &TdleSpectrum {
        &self.spectrum
    }

    /// Current `|z_ij|` in pair order.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn perturbations(&self) -> PerturbationMatrix {
        perturbations(&self.state)
    }

    /// `(z·ż)/|z|²` for every pair at the current state; `None` where `z = 0`.
    pub fn instantaneous_rates(&self) -> Vec<Option<f64>> {
        let mut d = vec![0.0; self.spec.dim()];
        self.spec.eval(self.state.t, &self.state.x, &mut d);
        let s = &self.state.x;
        pairs(self.spec.n)
            .map(|(i, j)| {
                let (a, b) = (NODE_DIM * i, NODE_DIM * j);
                instantaneous_rate(
                    [s[a] - s[b], s[a + 1] - s[b + 1]],
                    [d[a] - d[b], d[a + 1] - d[b + 1]],
                )
            })
            .collect()
    }

    /// How long pair `k` has continuously stayed below the settle tolerance.
    pub fn settled_for(&self, k: usize) -> Option<f64> {
        self.below_since[k].map(|since| self.state.t - since)
    }

    /// Advances one RK4 step and updates the spectrum. Returns the number of pairs that froze.
    pub fn step(&mut self) -> Result<usize> {
        let spec = self.spec;
        let t0 = self.state.t;
        self.rk
            .step(|t, x, out| spec.eval(t, x, out), t0, &mut self.state.x, self.dt);
        self.steps += 1;
        // Recomputed from the step count to avoid drift from repeated addition.
        self.state.t = self.t_start + self.steps as f64 * self.dt;
        if !self.state.is_bounded() {
            return Err(Error::Diverged { t: self.state.t });
        }

        let x = &self.state.x;
        for ((k, (i, j)), nz) in pairs(spec.n).enumerate().zip(self.next_norms.iter_mut()) {
            let (a, b) = (NODE_DIM * i, NODE_DIM * j);
            let (d0, d1) = (x[a] - x[b], x[a + 1] - x[b + 1]);
            *nz = (d0 * d0 + d1 * d1).sqrt();
            let prev = self.norms[k];
            self.rates[k] = if prev > 0.0 && *nz > 0.0 {
                Some((*nz / prev).ln() / self.dt)
            } else {
                None
            };
        }
        std::mem::swap(&mut self.norms, &mut self.next_norms);

        let t = self.state.t;
        if t > self.spectrum.opts.warmup {
            self.spectrum.update(t, &self.rates, self.dt);
        }
        let frozen = self.spectrum.freeze_below(&self.norms);
        self.track_settling();
        Ok(frozen)
    }

    fn track_settling(&mut self) {
        let t = self.state.t;
        for (b, &nz) in self.below_since.iter_mut().zip(&self.norms) {
            if nz < self.settle_tolerance {
                b.get_or_insert(t);
            } else {
                *b = None;
            }
        }
    }
}
