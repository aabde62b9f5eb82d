//! Time-dependent detection threshold `a · t^(-b) + c`.
//!
//! The threshold is calibrated on networks known to stay incoherent: at every
//! sample time the chosen percentile of their maximal exponent gaps forms an
//! envelope, and the power-law form is least-squares fitted to that envelope
//! on log-spaced sample times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of log-spaced envelope samples used by the fit.
const FIT_SAMPLES: usize = 80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFunction {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub percentile: f64,
    /// Node count of the networks the threshold was calibrated on.
    pub source_n: usize,
    /// Number of incoherent runs behind the envelope.
    #[serde(default)]
    pub runs: usize,
    #[serde(default)]
    pub created: String,
    /// `(t, percentile value)` samples the fit was made to.
    #[serde(skip)]
    pub envelope: Vec<(f64, f64)>,
}

impl ThresholdFunction {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let thr = ThresholdFunction {
            a,
            b,
            c,
            percentile: f64::NAN,
            source_n: 0,
            runs: 0,
            created: String::new(),
            envelope: Vec::new(),
        };
        thr.validate()?;
        Ok(thr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::invalid("a", format!("{} must be finite and > 0", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::invalid("b", format!("{} must be finite and > 0", self.b)));
        }
        if !self.c.is_finite() {
            return Err(Error::invalid("c", "must be finite"));
        }
        Ok(())
    }

    /// Threshold at `t > 0` (in forcing periods).
    pub fn eval(&self, t: f64) -> f64 {
        self.a * t.powf(-self.b) + self.c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("threshold serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let thr: ThresholdFunction =
            toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        thr.validate()?;
        Ok(thr)
    }
}

/// Percentile with linear interpolation between closest ranks (`p` in percent).
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    values.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

/// Per-time percentile of a set of equally sampled series.
pub fn percentile_envelope(runs: &[Vec<f64>], p: f64) -> Vec<f64> {
    let len = runs.first().map_or(0, Vec::len);
    let mut column = vec![0.0; runs.len()];
    (0..len)
        .map(|k| {
            for (c, r) in column.iter_mut().zip(runs) {
                *c = r[k];
            }
            percentile(&mut column, p)
        })
        .collect()
}

/// Fitted `(a, b, c)` and residual sum of squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sse: f64,
}

// Best (a, c) for a fixed exponent under weights `w`; `None` if the amplitude is not positive.
fn fit_fixed_exponent(t: &[f64], y: &[f64], w: &[f64], b: f64) -> Option<PowerLawFit> {
    let (mut sw, mut su, mut suu, mut sy, mut suy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&ti, &yi), &wi) in t.iter().zip(y).zip(w) {
        let u = ti.powf(-b);
        sw += wi;
        su += wi * u;
        suu += wi * u * u;
        sy += wi * yi;
        suy += wi * u * yi;
    }
    let det = sw * suu - su * su;
    if det.abs() <= 1e3 * f64::EPSILON * sw * suu {
        return None;
    }
    let a = (sw * suy - su * sy) / det;
    let c = (sy - a * su) / sw;
    if !(a > 0.0) {
        return None;
    }
    let sse = t
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&ti, &yi), &wi)| {
            let r = a * ti.powf(-b) + c - yi;
            wi * r * r
        })
        .sum();
    Some(PowerLawFit { a, b, c, sse })
}

/// Least-squares fit of `a · t^(-b) + c` with `a > 0`, `b > 0`, minimizing
/// relative residuals `(model - y) / y` so that every decade of `t` carries
/// equal weight.
///
/// The exponent is located on a coarse logarithmic grid over `[1e-3, 8]` and
/// refined by golden-section search; `a` and `c` are linear given `b`.
/// `sse` is the weighted residual sum.
pub fn fit_power_law(t: &[f64], y: &[f64]) -> Result<PowerLawFit> {
    if t.len() != y.len() || t.len() < 3 {
        return Err(Error::Calibration("need at least three samples to fit".into()));
    }
    if t.iter().any(|&v| !(v > 0.0)) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Calibration("samples must have t > 0 and finite values".into()));
    }
    // Non-positive samples get the weight of a value 1000 times below the largest.
    let floor = 1e-3 * y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if floor == 0.0 {
        return Err(Error::Calibration("all samples are zero".into()));
    }
    let w: Vec<f64> = y.iter().map(|&v| v.max(floor).powi(-2)).collect();
    let sse = |b: f64| fit_fixed_exponent(t, y, &w, b).map_or(f64::INFINITY, |f| f.sse);

    let grid: Vec<f64> = (0..=400)
        .map(|k| 1e-3 * (8.0f64 / 1e-3).powf(k as f64 / 400.0))
        .collect();
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(k, &b)| (k, sse(b)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is nonempty");
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (sse(x1), sse(x2));
    for _ in 0..100 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sse(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sse(x2);
        }
    }
    let candidates = [0.5 * (lo + hi), grid[best]];
    candidates
        .iter()
        .filter_map(|&b| fit_fixed_exponent(t, y, &w, b))
        .min_by(|a, b| a.sse.total_cmp(&b.sse))
        .ok_or_else(|| Error::Calibration("no decaying power law fits the envelope".into()))
}

/// Indices of roughly log-uniformly spaced samples of an increasing time grid.
fn log_spaced_indices(times: &[f64], count: usize) -> Vec<usize> {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mut idx: Vec<usize> = (0..count)
        .map(|k| {
            let target = t0 * (t1 / t0).powf(k as f64 / (count - 1).max(1) as f64);
            times.partition_point(|&t| t < target).min(times.len() - 1)
        })
        .collect();
    idx.dedup();
    idx
}

/// Calibrates a threshold from gap series of incoherent runs sampled at `times`.
pub fn calibrate_threshold(times: &[f64], runs: &[Vec<f64>], p: f64) -> Result<ThresholdFunction> {
    if runs.is_empty() {
        return Err(Error::Calibration("no incoherent runs to calibrate from".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Calibration(format!("percentile {p} outside [0, 100]")));
    }
    if times.len() < 3 || times.windows(2).any(|w| !(w[1] > w[0])) || times[0] <= 0.0 {
        return Err(Error::Calibration("time grid must be positive and increasing".into()));
    }
    if let Some(r) = runs.iter().find(|r| r.len() != times.len()) {
        return Err(Error::Calibration(format!(
            "run has {} samples, time grid has {}",
            r.len(),
            times.len()
        )));
    }
    let envelope = percentile_envelope(runs, p);
    if envelope.iter().all(|&v| v <= 0.0) {
        return Err(Error::Calibration("percentile envelope is non-positive everywhere".into()));
    }
    let idx = log_spaced_indices(times, FIT_SAMPLES);
    let ts: Vec<f64> = idx.iter().map(|&k| times[k]).collect();
    let ys: Vec<f64> = idx.iter().map(|&k| envelope[k]).collect();
    let fit = fit_power_law(&ts, &ys)?;
    Ok(ThresholdFunction {
        a: fit.a,
        b: fit.b,
        c: fit.c,
        percentile: p,
        source_n: 0,
        runs: runs.len(),
        created: String::new(),
        envelope: times.iter().copied().zip(envelope).collect(),
    })
}

/// Whole-curve variant of [`calibrate_threshold`].
///
/// The per-time fit fixes the shape; its scale is then raised so that `p`
/// percent of the calibration runs never stay above it for `confirm`
/// consecutive samples. This bounds the fraction of flagged calibration runs
/// by `100 - p` percent, which the per-time envelope does not.
pub fn calibrate_threshold_whole_curve(
    times: &[f64],
    runs: &[Vec<f64>],
    p: f64,
    confirm: usize,
) -> Result<ThresholdFunction> {
    let mut thr = calibrate_threshold(times, runs, p)?;
    let confirm = confirm.max(1);
    if confirm > times.len() {
        return Err(Error::Calibration(format!(
            "confirmation window {confirm} exceeds {} samples",
            times.len()
        )));
    }
    let shape: Vec<f64> = times.iter().map(|&t| thr.eval(t)).collect();
    if shape.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Calibration("fitted shape is not positive on the time grid".into()));
    }
    // Largest factor by which each run exceeds the shape over a full window.
    let mut scales: Vec<f64> = runs
        .iter()
        .map(|r| {
            let ratio: Vec<f64> = r.iter().zip(&shape).map(|(g, s)| g / s).collect();
            ratio
                .windows(confirm)
                .map(|w| w.iter().copied().fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let k = percentile(&mut scales, p).max(f64::MIN_POSITIVE);
    thr.a *= k;
    thr.c *= k;
    thr.envelope = times.iter().zip(&shape).map(|(&t, &s)| (t, k * s)).collect();
    Ok(thr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_linear_interpolation() {
        let mut v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((percentile(&mut v, 90.0) - 9.1).abs() < 1e-12);
        assert_eq!(percentile(&mut v, 0.0), 1.0);
        assert_eq!(percentile(&mut v, 100.0), 10.0);
        assert_eq!(percentile(&mut [4.0], 37.0), 4.0);
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let t: Vec<f64> = (1..200).map(|k| k as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * t.powf(-0.7) + 0.03).collect();
        let f = fit_power_law(&t, &y).unwrap();
        assert!((f.a - 2.5).abs() < 1e-6, "{f:?}");
        assert!((f.b - 0.7).abs() < 1e-6, "{f:?}");
        assert!((f.c - 0.03).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn identical_runs_give_their_common_curve() {
        let times: Vec<f64> = (1..=300).map(f64::from).collect();
        let curve: Vec<f64> = times.iter().map(|t| 0.4 / t + 0.002).collect();
        let runs = vec![curve.clone(); 7];
        for p in [90.0, 92.5, 95.0] {
            let thr = calibrate_threshold(&times, &runs, p).unwrap();
            for (k, &(_, e)) in thr.envelope.iter().enumerate() {
                assert_eq!(e, curve[k]);
            }
        }
    }

    #[test]
    fn calibration_failures() {
        let times: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!(matches!(calibrate_threshold(&times, &[], 90.0), Err(Error::Calibration(_))));
        let runs = vec![vec![0.0; 10], vec![-1.0; 10]];
        assert!(matches!(calibrate_threshold(&times, &runs, 90.0), Err(Error::Calibration(_))));
        let runs = vec![vec![1.0; 9]];
        assert!(calibrate_threshold(&times, &runs, 90.0).is_err());
    }

    #[test]
    fn whole_curve_bounds_flagged_runs() {
        let times: Vec<f64> = (1..=100).map(f64::from).collect();
        let runs: Vec<Vec<f64>> = (1..=20)
            .map(|k| times.iter().map(|t| k as f64 / t).collect())
            .collect();
        let thr = calibrate_threshold_whole_curve(&times, &runs, 90.0, 1).unwrap();
        let above = runs
            .iter()
            .filter(|r| r.iter().zip(&times).any(|(g, &t)| *g > thr.eval(t)))
            .count();
        assert!(above <= 2, "{above}");
    }

    #[test]
    fn toml_round_trip() {
        let mut thr = ThresholdFunction::new(0.8, 0.9, 0.001).unwrap();
        thr.percentile = 92.5;
        thr.source_n = 4;
        thr.runs = 12;
        thr.created = "1700000000".into();
        let back = ThresholdFunction::from_toml(&thr.to_toml()).unwrap();
        assert_eq!(back, thr);
        assert!(ThresholdFunction::from_toml("a = -1.0\nb = 1.0\nc = 0.0\npercentile = 90.0\nsource_n = 4").is_err());
    }
}
