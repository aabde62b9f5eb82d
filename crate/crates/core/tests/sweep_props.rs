use proptest::prelude::*;

use tdle::detector::{BaselineOptions, DetectorOptions, Termination};
use tdle::dpi::SyncTriplet;
use tdle::model::{IcRange, NetworkSpec, NodeParams};
use tdle::sweep::{
    fmt_sig9, point_seed, read_csv, run_point, sweep, write_csv, RecordStatus, SweepGrid,
    SweepOptions, SweepRecord, CSV_HEADER,
};
use tdle::threshold::ThresholdFunction;

fn threshold() -> ThresholdFunction {
    ThresholdFunction::new(0.3, 0.95, 4e-4).unwrap()
}

fn short_opts(limit: f64) -> SweepOptions {
    SweepOptions {
        detector: DetectorOptions {
            time_limit: limit,
            ..DetectorOptions::default()
        },
        baseline: Some(BaselineOptions {
            time_limit: limit,
            ..BaselineOptions::default()
        }),
        ..SweepOptions::default()
    }
}

fn without_wall_times(r: &SweepRecord) -> SweepRecord {
    let mut r = r.clone();
    r.wall_time_detect = Default::default();
    r.wall_time_baseline = Default::default();
    r
}

#[test]
fn worker_count_does_not_change_results() {
    let grid = SweepGrid {
        ns: vec![4, 5],
        radii: vec![1, 2, 3],
        alphas: vec![0.9, 0.1, 0.5],
        replicates: 2,
        master_seed: 17,
    };
    let thr = threshold();
    let mut opts = short_opts(60.0);
    opts.workers = 1;
    let one = sweep(&grid, &thr, &opts).unwrap();
    opts.workers = 3;
    let three = sweep(&grid, &thr, &opts).unwrap();
    assert_eq!(one.len(), 2 * 2 * 3 * 2);
    assert_eq!(write_csv(&one), write_csv(&three));
    let keys: Vec<_> = one.iter().map(|r| (r.n, r.radius, r.alpha, r.seed)).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)).then(a.3.cmp(&b.3)));
    assert_eq!(keys, sorted);
    let back = read_csv(&write_csv(&one)).unwrap();
    assert_eq!(write_csv(&back), write_csv(&one));
}

#[test]
fn empty_grid_gives_a_header_only_file() {
    let grid = SweepGrid {
        ns: vec![6],
        radii: vec![1],
        alphas: vec![0.5],
        replicates: 0,
        master_seed: 1,
    };
    let records = sweep(&grid, &threshold(), &short_opts(10.0)).unwrap();
    assert!(records.is_empty());
    let csv = write_csv(&records);
    assert_eq!(csv.trim_end(), CSV_HEADER);
    assert!(read_csv(&csv).unwrap().is_empty());
}

#[test]
fn stable_coupling_from_near_manifold_start_synchronizes_completely() {
    let spec = NetworkSpec::ring(6, 1, 10.0, NodeParams::default()).unwrap();
    let mut opts = short_opts(2000.0);
    opts.ic_range = IcRange { lo: 0.3, hi: 0.3 + 1e-6 };
    let rec = run_point(&spec, 5, &threshold(), &opts);
    assert_eq!(rec.status, RecordStatus::Ok);
    assert_eq!(rec.config, Some(SyncTriplet::new(6, 15, 0, 1)));
    assert_eq!(rec.dpi, Some(1.0));
    assert_eq!(rec.baseline_synchronized, Some(true));
}

#[test]
fn uncoupled_nodes_stay_incoherent() {
    let spec = NetworkSpec::ring(4, 1, 0.0, NodeParams::default()).unwrap();
    let thr = ThresholdFunction::new(100.0, 0.5, 10.0).unwrap();
    let rec = run_point(&spec, 8, &thr, &short_opts(80.0));
    assert_eq!(rec.flagged, Some(false));
    assert_eq!(rec.crossing_time, None);
    assert_eq!(rec.termination, Some(Termination::TimeLimit));
    assert_eq!(rec.dpi, Some(0.0));
    assert_eq!(rec.config, Some(SyncTriplet::new(4, 0, 4, 0)));
    assert_eq!(rec.baseline_time, Some(80.0));
    assert_eq!(rec.baseline_synchronized, Some(false));
}

#[test]
fn divergent_start_is_recorded_without_results() {
    let spec = NetworkSpec::ring(4, 1, 0.5, NodeParams::default()).unwrap();
    let mut opts = short_opts(50.0);
    opts.ic_range = IcRange { lo: 1e5, hi: 2e5 };
    let rec = run_point(&spec, 1, &threshold(), &opts);
    assert_eq!(rec.status, RecordStatus::Diverged);
    assert!(rec.flagged.is_none() && rec.crossing_time.is_none() && rec.termination.is_none());
    assert!(rec.baseline_time.is_none() && rec.dpi.is_none() && rec.config.is_none());
    let line = rec.to_csv_line();
    assert!(line.ends_with(",,,,,,,,,diverged"), "{line}");
}

#[test]
fn repeated_points_are_identical() {
    let spec = NetworkSpec::ring(6, 2, 0.8, NodeParams::default()).unwrap();
    let opts = short_opts(150.0);
    let a = run_point(&spec, 42, &threshold(), &opts);
    let b = run_point(&spec, 42, &threshold(), &opts);
    assert_eq!(without_wall_times(&a), without_wall_times(&b));
    assert_eq!(a.to_csv_line(), b.to_csv_line());
}

#[test]
fn flagged_records_carry_a_crossing_time() {
    let grid = SweepGrid {
        ns: vec![6],
        radii: vec![1, 2, 3],
        alphas: vec![0.4, 0.8, 1.2],
        replicates: 2,
        master_seed: 3,
    };
    let records = sweep(&grid, &threshold(), &short_opts(300.0)).unwrap();
    for r in &records {
        assert_eq!(r.flagged == Some(true), r.crossing_time.is_some(), "{r:?}");
        if r.flagged == Some(true) {
            assert_eq!(r.termination, Some(Termination::ThresholdCrossed));
        }
    }
}

#[test]
fn adding_points_keeps_existing_seeds() {
    let small = SweepGrid {
        ns: vec![6],
        radii: vec![1],
        alphas: vec![0.1, 0.2],
        replicates: 2,
        master_seed: 9,
    };
    let big = SweepGrid {
        ns: vec![4, 6, 8],
        radii: vec![1, 2],
        alphas: vec![0.05, 0.1, 0.15, 0.2],
        replicates: 5,
        master_seed: 9,
    };
    let bigger = big.points();
    for p in small.points() {
        assert!(bigger.iter().any(|q| q == &p), "{p:?}");
    }
}

proptest! {
    #[test]
    fn nine_digit_formatting_round_trips(x in prop::num::f64::NORMAL) {
        let s = fmt_sig9(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-9 * x.abs(), "{} -> {}", x, s);
    }

    #[test]
    fn seeds_depend_on_every_coordinate(master: u64, n in 2usize..100, r in 1usize..50, a in -5.0f64..5.0, k in 0usize..100) {
        let s = point_seed(master, n, r, a, k);
        prop_assert_eq!(s, point_seed(master, n, r, a, k));
        prop_assert_ne!(s, point_seed(master.wrapping_add(1), n, r, a, k));
        prop_assert_ne!(s, point_seed(master, n + 1, r, a, k));
        prop_assert_ne!(s, point_seed(master, n, r + 1, a, k));
        prop_assert_ne!(s, point_seed(master, n, r, a + 0.5, k));
        prop_assert_ne!(s, point_seed(master, n, r, a, k + 1));
    }
}
