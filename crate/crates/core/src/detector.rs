//! Early detection of partial synchronization.
//!
//! The exponent spectrum is sorted in descending order and its largest
//! consecutive gap is compared against a calibrated time-dependent threshold
//! once per forcing period. A run is flagged as soon as the gap stays above
//! the threshold for `confirm_samples` consecutive samples.
//!
//! The baseline detector used for timing comparisons ignores the exponents and
//! waits until the first pair's difference vector has decayed to the
//! synchronization threshold.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{NetworkSpec, NetworkState, NodeModel, Rk4, NODE_DIM};
use crate::tdle::{pair_count, pairs, Simulation, TdleOptions, TdleSpectrum, SYNC_THRESHOLD};
use crate::threshold::ThresholdFunction;

/// Largest difference between consecutive values of the descending-sorted list.
pub fn delta_dle_max(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max))
}

/// Gap of the pairs that are still active; frozen pairs are left out.
pub fn spectrum_gap(spectrum: &TdleSpectrum) -> Result<f64> {
    delta_dle_max(&spectrum.active_values())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOptions {
    pub steps_per_period: usize,
    /// Hard cap on simulated time, in forcing periods.
    pub time_limit: f64,
    /// Consecutive above-threshold samples required to flag.
    pub confirm_samples: usize,
    pub tdle: TdleOptions,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        DetectorOptions {
            steps_per_period: 200,
            time_limit: 2000.0,
            confirm_samples: 5,
            tdle: TdleOptions::default(),
        }
    }
}

impl DetectorOptions {
    pub fn dt<M: NodeModel>(&self, spec: &NetworkSpec<M>) -> f64 {
        spec.period() / self.steps_per_period as f64
    }

    fn validate(&self) -> Result<()> {
        if self.steps_per_period == 0 {
            return Err(Error::invalid("dt_per_period", "must be >= 1"));
        }
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(Error::invalid("time_limit", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Termination {
    ThresholdCrossed,
    PairSynchronized,
    TimeLimit,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ThresholdCrossed => "threshold-crossed",
            Termination::PairSynchronized => "pair-synchronized",
            Termination::TimeLimit => "time-limit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "threshold-crossed" => Some(Termination::ThresholdCrossed),
            "pair-synchronized" => Some(Termination::PairSynchronized),
            "time-limit" => Some(Termination::TimeLimit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub flagged: bool,
    /// First sample (in periods) of the confirmed above-threshold run.
    pub crossing_time: Option<f64>,
    pub termination: Termination,
    pub elapsed_periods: f64,
    pub wall_time: Duration,
    /// `(t in periods, ΔDLE_max)` once per period.
    pub gap_series: Vec<(f64, f64)>,
}

/// Drives `sim` period by period until a decision is reached.
///
/// With no threshold the run only stops on pair synchronization or the time
/// limit, which is how calibration traces are recorded. Within a period, a
/// threshold crossing confirmed at the period's sample takes precedence over a
/// pair freezing on that same final step.
pub fn detect_on<M: NodeModel>(
    sim: &mut Simulation<'_, M>,
    threshold: Option<&ThresholdFunction>,
    opts: &DetectorOptions,
) -> Result<DetectionResult> {
    opts.validate()?;
    if pair_count(sim.spec().n) < 2 {
        return Err(Error::TooFewValues(pair_count(sim.spec().n)));
    }
    let start = Instant::now();
    let period = sim.spec().period();
    let t0 = sim.time();
    let periods = opts.time_limit.ceil() as u64;
    let mut gap_series = Vec::new();
    let mut run_start: Option<f64> = None;
    let mut run_len = 0usize;

    let finish = |sim: &Simulation<'_, M>, termination, crossing: Option<f64>, gaps| {
        Ok(DetectionResult {
            flagged: crossing.is_some(),
            crossing_time: crossing,
            termination,
            elapsed_periods: (sim.time() - t0) / period,
            wall_time: start.elapsed(),
            gap_series: gaps,
        })
    };

    if sim.spectrum().frozen_count() > 0 {
        return finish(sim, Termination::PairSynchronized, None, gap_series);
    }

    for k in 1..=periods {
        let mut froze_last = false;
        for s in 0..opts.steps_per_period {
            let froze = sim.step()?;
            if froze > 0 {
                if s + 1 < opts.steps_per_period {
                    return finish(sim, Termination::PairSynchronized, None, gap_series);
                }
                froze_last = true;
            }
        }
        let t = (sim.time() - t0) / period;
        debug_assert!((t - k as f64).abs() < 1e-6);
        let t = k as f64;
        // Frozen pairs are dropped from the gap; if every pair froze the sample is skipped.
        if let Ok(gap) = spectrum_gap(sim.spectrum()) {
            gap_series.push((t, gap));
            if let Some(thr) = threshold {
                if gap > thr.eval(t) {
                    run_len += 1;
                    let first = *run_start.get_or_insert(t);
                    if run_len >= opts.confirm_samples.max(1) {
                        return finish(sim, Termination::ThresholdCrossed, Some(first), gap_series);
                    }
                } else {
                    run_len = 0;
                    run_start = None;
                }
            }
        }
        if froze_last {
            return finish(sim, Termination::PairSynchronized, None, gap_series);
        }
        if t >= opts.time_limit {
            break;
        }
    }
    finish(sim, Termination::TimeLimit, None, gap_series)
}

/// Runs the fast detector on `spec` from `initial`.
pub fn detect<M: NodeModel>(
    spec: &NetworkSpec<M>,
    initial: NetworkState,
    threshold: &ThresholdFunction,
    opts: &DetectorOptions,
) -> Result<DetectionResult> {
    let mut sim = Simulation::new(spec, initial, opts.dt(spec), opts.tdle)?;
    detect_on(&mut sim, Some(threshold), opts)
}

/// Gap series of an unthresholded run, used to calibrate thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTrace {
    pub times: Vec<f64>,
    pub gaps: Vec<f64>,
    /// True when the run reached the time limit with no pair synchronized.
    pub incoherent: bool,
}

pub fn trace_gaps<M: NodeModel>(
    spec: &NetworkSpec<M>,
    initial: NetworkState,
    opts: &DetectorOptions,
) -> Result<GapTrace> {
    let mut sim = Simulation::new(spec, initial, opts.dt(spec), opts.tdle)?;
    let res = detect_on(&mut sim, None, opts)?;
    let (times, gaps) = res.gap_series.into_iter().unzip();
    Ok(GapTrace {
        times,
        gaps,
        incoherent: res.termination == Termination::TimeLimit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions {
    pub steps_per_period: usize,
    pub time_limit: f64,
    pub sync_threshold: f64,
    /// Pair norms below this are eligible for sync-time extrapolation.
    pub decay_floor: f64,
    /// Relative change between consecutive per-period sync-time estimates that confirms sync.
    pub rel_change: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            steps_per_period: 200,
            time_limit: 2000.0,
            sync_threshold: SYNC_THRESHOLD,
            decay_floor: 1e-12,
            rel_change: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineResult {
    /// Time (in periods) at which the first pair is confirmed synchronized, or the time limit.
    pub time: f64,
    pub synchronized: bool,
    pub wall_time: Duration,
}

/// Reference detector: waits for the first pair to synchronize by perturbation decay.
///
/// A pair is confirmed when its norm drops below the sync threshold, or
/// earlier when its norm is below `decay_floor`, still decaying, and the
/// extrapolated time to reach the sync threshold changes by less than
/// `rel_change` (relative) between consecutive periods.
pub fn run_baseline<M: NodeModel>(
    spec: &NetworkSpec<M>,
    initial: NetworkState,
    opts: &BaselineOptions,
) -> Result<BaselineResult> {
    if initial.x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: initial.x.len(),
        });
    }
    if opts.steps_per_period == 0 || !(opts.time_limit > 0.0) {
        return Err(Error::invalid("time_limit", "needs a positive step count and limit"));
    }
    let start = Instant::now();
    let n = spec.n;
    let period = spec.period();
    let dt = period / opts.steps_per_period as f64;
    let t0 = initial.t;
    let mut x = initial.x;
    let mut rk = Rk4::new(spec.dim());
    let np = pair_count(n);
    let pair_list: Vec<(usize, usize)> = pairs(n).collect();
    let norm = |x: &[f64], (i, j): (usize, usize)| {
        let (a, b) = (NODE_DIM * i, NODE_DIM * j);
        (x[a] - x[b]).hypot(x[a + 1] - x[b + 1])
    };
    let done = |time: f64, synchronized| BaselineResult {
        time,
        synchronized,
        wall_time: start.elapsed(),
    };
    if pair_list.iter().any(|&p| norm(&x, p) < opts.sync_threshold) {
        return Ok(done(0.0, true));
    }
    let mut last_norm: Vec<f64> = pair_list.iter().map(|&p| norm(&x, p)).collect();
    let mut estimate: Vec<Option<f64>> = vec![None; np];
    let ln_sync = opts.sync_threshold.ln();
    let periods = opts.time_limit.ceil() as u64;
    let mut step = 0u64;
    for k in 1..=periods {
        for _ in 0..opts.steps_per_period {
            let t = t0 + step as f64 * dt;
            rk.step(|t, x, out| spec.eval(t, x, out), t, &mut x, dt);
            step += 1;
            if x.iter().any(|v| !v.is_finite() || v.abs() > crate::model::DIVERGENCE_LIMIT) {
                return Err(Error::Diverged { t: t0 + step as f64 * dt });
            }
            if pair_list.iter().any(|&p| norm(&x, p) < opts.sync_threshold) {
                return Ok(done(step as f64 * dt / period, true));
            }
        }
        let t = k as f64;
        let mut confirmed: Option<f64> = None;
        for (q, &p) in pair_list.iter().enumerate() {
            let now = norm(&x, p);
            let prev = std::mem::replace(&mut last_norm[q], now);
            if now < opts.decay_floor && now < prev {
                let slope = (now / prev).ln(); // per period, negative
                let est = t + (ln_sync - now.ln()) / slope;
                if let Some(old) = estimate[q] {
                    if (est - old).abs() <= opts.rel_change * est.abs() {
                        confirmed = Some(confirmed.map_or(est, |c: f64| c.min(est)));
                    }
                }
                estimate[q] = Some(est);
            } else {
                estimate[q] = None;
            }
        }
        if let Some(est) = confirmed {
            return Ok(done(est, true));
        }
        if t >= opts.time_limit {
            break;
        }
    }
    Ok(done(opts.time_limit, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(delta_dle_max(&[-0.1, -0.1, -0.1]).unwrap(), 0.0);
        let g = delta_dle_max(&[0.0, -0.001, -0.002, -0.05, -0.051]).unwrap();
        assert!((g - 0.048).abs() < 1e-12);
        assert_eq!(delta_dle_max(&[0.3]), Err(Error::TooFewValues(1)));
        assert_eq!(delta_dle_max(&[]), Err(Error::TooFewValues(0)));
    }

    #[test]
    fn gap_ignores_order() {
        let g1 = delta_dle_max(&[-0.051, 0.0, -0.05, -0.002, -0.001]).unwrap();
        assert!((g1 - 0.048).abs() < 1e-12);
    }

    #[test]
    fn termination_names_round_trip() {
        for t in [
            Termination::ThresholdCrossed,
            Termination::PairSynchronized,
            Termination::TimeLimit,
        ] {
            assert_eq!(Termination::parse(t.as_str()), Some(t));
        }
        assert_eq!(Termination::parse("done"), None);
    }
}
