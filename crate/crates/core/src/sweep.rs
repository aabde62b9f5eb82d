//! Parameter scans over coupling strength, coupling radius and initial conditions.
//!
//! Every grid point runs the fast detector, then keeps integrating the same
//! trajectory until complete synchronization or the time limit so that its
//! final synchronization pattern can be classified. Optionally the baseline
//! detector runs on identical initial conditions for timing comparisons.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::time::Duration;

use rayon::prelude::*;

use crate::detector::{
    detect_on, run_baseline, BaselineOptions, DetectionResult, DetectorOptions, Termination,
};
use crate::dpi::{classify, SyncConfiguration, SyncTriplet};
use crate::error::{Error, Result};
use crate::model::{random_initial_state, IcRange, NetworkSpec, NetworkState, NodeModel, NodeParams};
use crate::msf::{master_stability, TleOptions};
use crate::tdle::Simulation;
use crate::threshold::ThresholdFunction;

/// Exact header of the results file.
pub const CSV_HEADER: &str =
    "n,radius,alpha,seed,dt,flagged,crossing_time,termination,baseline_time,dpi,n_sync,n_unsync,n_groups,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordStatus {
    Ok,
    Diverged,
    Invalid,
}

impl RecordStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Diverged => "diverged",
            RecordStatus::Invalid => "invalid",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(RecordStatus::Ok),
            "diverged" => Some(RecordStatus::Diverged),
            "invalid" => Some(RecordStatus::Invalid),
            _ => None,
        }
    }
}

/// Outcome of one `(n, radius, alpha, seed)` experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub n: usize,
    pub radius: usize,
    pub alpha: f64,
    pub seed: u64,
    pub dt: f64,
    pub flagged: Option<bool>,
    pub crossing_time: Option<f64>,
    pub termination: Option<Termination>,
    pub baseline_time: Option<f64>,
    pub baseline_synchronized: Option<bool>,
    pub dpi: Option<f64>,
    pub config: Option<SyncTriplet>,
    pub wall_time_detect: Duration,
    pub wall_time_baseline: Duration,
    pub status: RecordStatus,
}

impl SweepRecord {
    fn failed(n: usize, radius: usize, alpha: f64, seed: u64, dt: f64, status: RecordStatus) -> Self {
        SweepRecord {
            n,
            radius,
            alpha,
            seed,
            dt,
            flagged: None,
            crossing_time: None,
            termination: None,
            baseline_time: None,
            baseline_synchronized: None,
            dpi: None,
            config: None,
            wall_time_detect: Duration::ZERO,
            wall_time_baseline: Duration::ZERO,
            status,
        }
    }

    fn sort_key(&self) -> (usize, usize, u64, u64) {
        (self.n, self.radius, order_bits(self.alpha), self.seed)
    }

    /// One results-file line (no trailing newline).
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
        let cfg = self.config;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.radius,
            fmt_sig9(self.alpha),
            self.seed,
            fmt_sig9(self.dt),
            self.flagged.map(|f| f.to_string()).unwrap_or_default(),
            opt(self.crossing_time),
            self.termination.map(|t| t.as_str()).unwrap_or_default(),
            opt(self.baseline_time),
            opt(self.dpi),
            cfg.map(|c| c.n_sync.to_string()).unwrap_or_default(),
            cfg.map(|c| c.n_unsync.to_string()).unwrap_or_default(),
            cfg.map(|c| c.n_groups.to_string()).unwrap_or_default(),
            self.status.as_str(),
        )
    }

    /// Parses one results-file line. Wall times are not stored and read back as zero.
    pub fn from_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 14 {
            return Err(Error::Parse(format!("expected 14 fields, got {}: `{line}`", f.len())));
        }
        let bad = |what: &str, v: &str| Error::Parse(format!("bad {what} `{v}`"));
        let uint = |k: usize, what: &str| f[k].parse::<usize>().map_err(|_| bad(what, f[k]));
        let float = |k: usize, what: &str| f[k].parse::<f64>().map_err(|_| bad(what, f[k]));
        let opt_float = |k: usize, what: &str| -> Result<Option<f64>> {
            if f[k].is_empty() {
                Ok(None)
            } else {
                float(k, what).map(Some)
            }
        };
        let n = uint(0, "n")?;
        let config = if f[10].is_empty() {
            None
        } else {
            Some(SyncTriplet::new(n, uint(10, "n_sync")?, uint(11, "n_unsync")?, uint(12, "n_groups")?))
        };
        Ok(SweepRecord {
            n,
            radius: uint(1, "radius")?,
            alpha: float(2, "alpha")?,
            seed: f[3].parse().map_err(|_| bad("seed", f[3]))?,
            dt: float(4, "dt")?,
            flagged: match f[5] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("flagged", s))?),
            },
            crossing_time: opt_float(6, "crossing_time")?,
            termination: match f[7] {
                "" => None,
                s => Some(Termination::parse(s).ok_or_else(|| bad("termination", s))?),
            },
            baseline_time: opt_float(8, "baseline_time")?,
            baseline_synchronized: None,
            dpi: opt_float(9, "dpi")?,
            config,
            wall_time_detect: Duration::ZERO,
            wall_time_baseline: Duration::ZERO,
            status: RecordStatus::parse(f[13]).ok_or_else(|| bad("status", f[13]))?,
        })
    }
}

/// Total order on floats that agrees with numeric order (for sort keys).
fn order_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Formats with 9 significant digits, `%.9g` style.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // Round first so the exponent reflects the rounded mantissa.
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

pub fn write_csv(records: &[SweepRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn read_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "unexpected header `{}`",
                other.unwrap_or_default()
            )))
        }
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(SweepRecord::from_csv_line)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub node: NodeParams,
    pub ic_range: IcRange,
    pub detector: DetectorOptions,
    /// Run the baseline detector on the same initial conditions.
    pub baseline: Option<BaselineOptions>,
    /// Pair norm below which a pair counts as settled for classification.
    pub settle_tolerance: f64,
    /// How long (in periods) a pair must stay settled to count as synchronized.
    pub settle_periods: f64,
    /// Skip α values inside stable complete-synchronization ranges.
    pub exclude_msf_stable: Option<TleOptions>,
    /// Worker threads; 0 uses all logical CPUs.
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            node: NodeParams::default(),
            ic_range: IcRange::default(),
            detector: DetectorOptions::default(),
            baseline: None,
            settle_tolerance: 1e-12,
            settle_periods: 10.0,
            exclude_msf_stable: None,
            workers: 0,
        }
    }
}

/// Executes detection, classification and (optionally) the baseline for one grid point.
pub fn run_point(spec: &NetworkSpec, seed: u64, thr: &ThresholdFunction, opts: &SweepOptions) -> SweepRecord {
    let dt = opts.detector.dt(spec);
    let initial = random_initial_state(spec.n, opts.ic_range, seed);
    match evaluate_point(spec, &initial, thr, opts) {
        Ok((det, triplet, dpi)) => {
            let mut rec = SweepRecord {
                n: spec.n,
                radius: spec.radius,
                alpha: spec.alpha,
                seed,
                dt,
                flagged: Some(det.flagged),
                crossing_time: det.crossing_time,
                termination: Some(det.termination),
                baseline_time: None,
                baseline_synchronized: None,
                dpi: Some(dpi),
                config: Some(triplet),
                wall_time_detect: det.wall_time,
                wall_time_baseline: Duration::ZERO,
                status: RecordStatus::Ok,
            };
            if let Some(bopts) = &opts.baseline {
                match run_baseline(spec, initial, bopts) {
                    Ok(b) => {
                        rec.baseline_time = Some(b.time);
                        rec.baseline_synchronized = Some(b.synchronized);
                        rec.wall_time_baseline = b.wall_time;
                    }
                    Err(e) => {
                        return SweepRecord::failed(spec.n, spec.radius, spec.alpha, seed, dt, status_of(&e))
                    }
                }
            }
            rec
        }
        Err(e) => SweepRecord::failed(spec.n, spec.radius, spec.alpha, seed, dt, status_of(&e)),
    }
}

fn status_of(e: &Error) -> RecordStatus {
    match e {
        Error::Diverged { .. } => RecordStatus::Diverged,
        _ => RecordStatus::Invalid,
    }
}

fn evaluate_point(
    spec: &NetworkSpec,
    initial: &NetworkState,
    thr: &ThresholdFunction,
    opts: &SweepOptions,
) -> Result<(DetectionResult, SyncTriplet, f64)> {
    let (det, _, config) = detect_and_classify(spec, initial.clone(), thr, opts)?;
    Ok((det, config.triplet(), config.dpi().value))
}

/// Runs the detector, then continues the same trajectory until complete
/// synchronization or the time limit and classifies the final pattern.
pub fn detect_and_classify<'a>(
    spec: &'a NetworkSpec,
    initial: NetworkState,
    thr: &ThresholdFunction,
    opts: &SweepOptions,
) -> Result<(DetectionResult, Simulation<'a>, SyncConfiguration)> {
    let d = &opts.detector;
    let mut sim = Simulation::new(spec, initial, d.dt(spec), d.tdle)?
        .with_settle_tolerance(opts.settle_tolerance);
    let det = detect_on(&mut sim, Some(thr), d)?;
    let cap = (d.time_limit * d.steps_per_period as f64).round() as u64;
    while sim.steps() < cap && !sim.spectrum().all_frozen() {
        sim.step()?;
    }
    let config = classify(&sim, opts.settle_periods * spec.period())?;
    Ok((det, sim, config))
}

/// Grid of experiments: every combination of node count, radius, coupling and replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub ns: Vec<usize>,
    pub radii: Vec<usize>,
    pub alphas: Vec<f64>,
    pub replicates: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub radius: usize,
    pub alpha: f64,
    pub replicate: usize,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Initial-condition seed of a grid point, derived from the point's identity and
/// the master seed so that adding points leaves existing seeds untouched.
pub fn point_seed(master: u64, n: usize, radius: usize, alpha: f64, replicate: usize) -> u64 {
    [n as u64, radius as u64, alpha.to_bits(), replicate as u64]
        .iter()
        .fold(splitmix64(master), |h, &v| splitmix64(h ^ v))
}

impl SweepGrid {
    /// Valid points (radius within `1..=n/2`).
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.ns {
            for &radius in &self.radii {
                if radius < 1 || radius > n / 2 {
                    continue;
                }
                for &alpha in &self.alphas {
                    for replicate in 0..self.replicates {
                        out.push(GridPoint {
                            n,
                            radius,
                            alpha,
                            replicate,
                            seed: point_seed(self.master_seed, n, radius, alpha, replicate),
                        });
                    }
                }
            }
        }
        out
    }
}

/// Runs every grid point and returns the records sorted by `(n, radius, alpha, seed)`.
pub fn sweep(grid: &SweepGrid, thr: &ThresholdFunction, opts: &SweepOptions) -> Result<Vec<SweepRecord>> {
    let mut points = grid.points();
    if let Some(tle) = &opts.exclude_msf_stable {
        let mut stable: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
        for &n in &grid.ns {
            for &radius in &grid.radii {
                if radius < 1 || radius > n / 2 {
                    continue;
                }
                let spec = NetworkSpec::ring(n, radius, 0.0, opts.node)?;
                let curve = master_stability(&spec, &grid.alphas, tle)?;
                let bits = curve
                    .points
                    .iter()
                    .filter(|p| p.stable)
                    .map(|p| p.alpha.to_bits())
                    .collect();
                stable.insert((n, radius), bits);
            }
        }
        points.retain(|p| !stable[&(p.n, p.radius)].contains(&p.alpha.to_bits()));
    }

    let run = |p: &GridPoint| -> SweepRecord {
        match NetworkSpec::ring(p.n, p.radius, p.alpha, opts.node) {
            Ok(spec) => run_point(&spec, p.seed, thr, opts),
            Err(_) => SweepRecord::failed(
                p.n,
                p.radius,
                p.alpha,
                p.seed,
                opts.node.period() / opts.detector.steps_per_period as f64,
                RecordStatus::Invalid,
            ),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    let mut records: Vec<SweepRecord> = pool.install(|| points.par_iter().map(run).collect());
    records.sort_by_key(|r| r.sort_key());
    Ok(records)
}

/// Timing ratio summary for one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    pub label: String,
    /// Flagged runs with a baseline time.
    pub runs: usize,
    pub mean_ratio: f64,
    /// Largest ratio, i.e. the least efficient case.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EfficiencyReport {
    pub rows: Vec<EfficiencyRow>,
    pub warnings: Vec<String>,
}

/// Crossing time over baseline time for every flagged run with a paired baseline.
///
/// Runs whose baseline is known to have hit the time limit without a
/// synchronized pair carry no timing comparison and are skipped.
pub fn efficiency_ratios(records: &[SweepRecord]) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.status == RecordStatus::Ok && r.flagged == Some(true))
        .filter(|r| r.baseline_synchronized != Some(false))
        .filter_map(|r| match (r.crossing_time, r.baseline_time) {
            (Some(c), Some(b)) if b > 0.0 => Some(c / b),
            _ => None,
        })
        .collect()
}

/// Summarizes detection-vs-baseline time ratios per threshold.
pub fn efficiency_report(groups: &[(String, Vec<SweepRecord>)]) -> EfficiencyReport {
    let mut report = EfficiencyReport::default();
    for (label, records) in groups {
        let ratios = efficiency_ratios(records);
        if ratios.is_empty() {
            report
                .warnings
                .push(format!("{label}: no flagged runs with paired baseline times"));
            continue;
        }
        report.rows.push(EfficiencyRow {
            label: label.clone(),
            runs: ratios.len(),
            mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
            worst_ratio: ratios.iter().copied().fold(f64::MIN, f64::max),
        });
    }
    report
}

impl fmt::Display for EfficiencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        writeln!(s, "{:<20} {:>6} {:>28} {:>27}", "Threshold function", "runs", "Average efficiency-case[%]", "Lowest efficiency-case[%]")?;
        for r in &self.rows {
            writeln!(
                s,
                "{:<20} {:>6} {:>28.2} {:>27.2}",
                r.label,
                r.runs,
                100.0 * r.mean_ratio,
                100.0 * r.worst_ratio
            )?;
        }
        for w in &self.warnings {
            writeln!(s, "warning: {w}")?;
        }
        f.write_str(&s)
    }
}
