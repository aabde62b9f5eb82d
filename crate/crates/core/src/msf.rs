//! Master stability function.
//!
//! On the synchronization manifold the coupling term vanishes, so every node
//! follows the isolated node dynamics. Block-diagonalizing the variational
//! equation along `G`'s eigenvectors gives one 2×2 system per eigenvalue
//! `λ_i`: `ż = (Df + α λ_i DH) z`. Its largest Lyapunov exponent depends on
//! `α` and `λ_i` only through `β = α λ_i`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    laplacian_eigenvalues, NetworkSpec, NodeMat, NodeModel, NodeParams, NodeVec, Rk4,
};

/// Eigenvalues closer than this are treated as one degenerate mode.
const EIGEN_TOL: f64 = 1e-9;

/// Transverse modes must all fall below this exponent for a stable verdict.
pub const STABILITY_MARGIN: f64 = -1e-4;

pub fn node_jacobian(state: NodeVec, t: f64, p: &NodeParams) -> NodeMat {
    p.jacobian(state, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TleOptions {
    /// Total integration horizon in node periods.
    pub periods: usize,
    pub steps_per_period: usize,
    /// Reference trajectory start.
    pub initial_state: NodeVec,
    /// Variational vector start; normalized internally.
    pub initial_perturbation: NodeVec,
}

impl Default for TleOptions {
    fn default() -> Self {
        TleOptions {
            periods: 2000,
            steps_per_period: 200,
            initial_state: [0.1, 0.0],
            initial_perturbation: [1.0, 0.0],
        }
    }
}

/// Largest exponent of `ż = (Df(s(t)) + β DH) z` along the isolated node trajectory `s(t)`.
///
/// `z` is renormalized once per period; the log growths of the second half of
/// the horizon are averaged.
pub fn largest_tle<M: NodeModel>(beta: f64, node: &M, dh: NodeMat, opts: &TleOptions) -> Result<f64> {
    if opts.periods < 2 || opts.steps_per_period == 0 {
        return Err(Error::invalid("periods", "horizon needs at least two periods"));
    }
    let [p0, p1] = opts.initial_perturbation;
    let pn = p0.hypot(p1);
    if !(pn > 0.0 && pn.is_finite()) {
        return Err(Error::invalid("initial_perturbation", "must be a nonzero finite vector"));
    }
    let period = node.period();
    let dt = period / opts.steps_per_period as f64;
    let mut y = [opts.initial_state[0], opts.initial_state[1], p0 / pn, p1 / pn];
    let mut rk = Rk4::new(4);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut step = 0u64;
    let rhs = |t: f64, y: &[f64], out: &mut [f64]| {
        let s = [y[0], y[1]];
        let d = node.rhs(s, t);
        let j = node.jacobian(s, t);
        out[0] = d[0];
        out[1] = d[1];
        out[2] = (j[0][0] + beta * dh[0][0]) * y[2] + (j[0][1] + beta * dh[0][1]) * y[3];
        out[3] = (j[1][0] + beta * dh[1][0]) * y[2] + (j[1][1] + beta * dh[1][1]) * y[3];
    };
    for per in 0..opts.periods {
        for _ in 0..opts.steps_per_period {
            let t = step as f64 * dt;
            rk.step(rhs, t, &mut y, dt);
            step += 1;
        }
        let g = y[2].hypot(y[3]);
        if !(g.is_finite() && g > 0.0) || !y[0].is_finite() || !y[1].is_finite() {
            return Err(Error::Diverged { t: step as f64 * dt });
        }
        y[2] /= g;
        y[3] /= g;
        if per >= opts.periods / 2 {
            sum += g.ln();
            count += 1;
        }
    }
    Ok(sum / (count as f64 * period))
}

/// One `(α, λ)` evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsfEntry {
    pub alpha: f64,
    pub lambda: f64,
    pub beta: f64,
    /// `None` when the integration failed at this point.
    pub tle: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsfPoint {
    pub alpha: f64,
    /// Largest exponent over the transverse (nonzero-eigenvalue) modes.
    pub max_transverse_tle: Option<f64>,
    pub stable: bool,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsfCurve {
    /// Distinct eigenvalues of `G`, descending; the first is the longitudinal mode 0.
    pub eigenvalues: Vec<f64>,
    /// `(β, TLE)` for every distinct β evaluated, sorted by β ascending.
    pub betas: Vec<(f64, Option<f64>)>,
    /// One entry per `(α, distinct λ)` in grid order.
    pub entries: Vec<MsfEntry>,
    pub points: Vec<MsfPoint>,
    /// Maximal runs of consecutive stable grid points as `(α_lo, α_hi)`.
    pub stable_intervals: Vec<(f64, f64)>,
}

impl MsfCurve {
    pub fn is_stable(&self, alpha: f64) -> bool {
        self.stable_intervals
            .iter()
            .any(|&(lo, hi)| alpha >= lo - 1e-12 && alpha <= hi + 1e-12)
    }
}

/// Distinct values of a sorted spectrum, merging near-degenerate eigenvalues.
fn distinct_eigenvalues(eig: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &l in eig {
        match out.last() {
            Some(&prev) if (prev - l).abs() <= EIGEN_TOL * prev.abs().max(1.0) => {}
            _ => out.push(l),
        }
    }
    // the zero mode is exact by construction
    if let Some(first) = out.first_mut() {
        if first.abs() <= EIGEN_TOL {
            *first = 0.0;
        }
    }
    out
}

/// Evaluates the master stability function of `spec`'s topology over `alpha_grid`.
///
/// β values shared between grid points or degenerate modes are computed once;
/// the evaluations run in parallel.
pub fn master_stability<M: NodeModel>(
    spec: &NetworkSpec<M>,
    alpha_grid: &[f64],
    opts: &TleOptions,
) -> Result<MsfCurve> {
    if alpha_grid.is_empty() {
        return Err(Error::invalid("alpha_grid", "grid is empty"));
    }
    if alpha_grid.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("alpha_grid", "grid holds non-finite values"));
    }
    let eigenvalues = distinct_eigenvalues(&laplacian_eigenvalues(&spec.g)?);

    let mut betas: Vec<f64> = alpha_grid
        .iter()
        .flat_map(|&a| eigenvalues.iter().map(move |&l| a * l))
        .map(|b| if b == 0.0 { 0.0 } else { b })
        .collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();

    let tles: Vec<Option<f64>> = betas
        .par_iter()
        .map(|&b| largest_tle(b, &spec.node, spec.h, opts).ok())
        .collect();
    let lookup = |b: f64| -> Option<f64> {
        let b = if b == 0.0 { 0.0 } else { b };
        let k = betas.binary_search_by(|x| x.total_cmp(&b)).ok()?;
        tles[k]
    };

    let mut entries = Vec::with_capacity(alpha_grid.len() * eigenvalues.len());
    let mut points = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let mut max_t: Option<f64> = None;
        let mut valid = true;
        for (k, &lambda) in eigenvalues.iter().enumerate() {
            let beta = alpha * lambda;
            let tle = lookup(beta);
            entries.push(MsfEntry {
                alpha,
                lambda,
                beta,
                tle,
            });
            if k == 0 && lambda == 0.0 {
                continue;
            }
            match tle {
                Some(v) => max_t = Some(max_t.map_or(v, |m| m.max(v))),
                None => valid = false,
            }
        }
        let stable = valid && max_t.is_some_and(|m| m < STABILITY_MARGIN);
        points.push(MsfPoint {
            alpha,
            max_transverse_tle: max_t,
            stable,
            valid,
        });
    }

    let mut stable_intervals = Vec::new();
    let mut run: Option<(f64, f64)> = None;
    for p in &points {
        if p.stable {
            run = Some(run.map_or((p.alpha, p.alpha), |(lo, _)| (lo, p.alpha)));
        } else if let Some(r) = run.take() {
            stable_intervals.push(r);
        }
    }
    stable_intervals.extend(run);

    Ok(MsfCurve {
        eigenvalues,
        betas: betas.into_iter().zip(tles).collect(),
        entries,
        points,
        stable_intervals,
    })
}
