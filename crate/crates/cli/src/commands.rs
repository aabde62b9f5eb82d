use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use toml::{Table, Value};

use tdle::config::{parse_counts, parse_range, RunConfig};
use tdle::detector::{run_baseline, trace_gaps, BaselineOptions};
use tdle::dpi::{
    dpi_equal_groups, dpi_two_groups, enumerate_configurations, sync_groups, synchronized_pairs,
    two_group_sizes,
};
use tdle::model::{random_initial_state, NetworkSpec};
use tdle::msf::{master_stability, TleOptions};
use tdle::sweep::{
    detect_and_classify, efficiency_report, fmt_sig9, point_seed, read_csv, sweep, write_csv,
    SweepGrid, SweepOptions,
};
use tdle::tdle::{pair_count, pair_index, pairs, PairStatus};
use tdle::threshold::{calibrate_threshold, calibrate_threshold_whole_curve, ThresholdFunction};

use crate::output::{read_text, sha256_hex, CliError, CliResult, Outputs};
use crate::{
    CalibrateArgs, ClassifyArgs, Command, DetectArgs, DpiCommand, EnumerateArgs, Family, MsfArgs,
    NetworkArgs, ReportArgs, SurfaceArgs, SweepArgs,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Msf(a) => cmd_msf(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Dpi { command } => match command {
            DpiCommand::Classify(a) => cmd_classify(a),
            DpiCommand::Surface(a) => cmd_surface(a),
            DpiCommand::Enumerate(a) => cmd_enumerate(a),
        },
        Command::Report(a) => cmd_report(a),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Configuration file (or defaults) with flag overrides applied; not yet validated.
fn resolve_config(net: &NetworkArgs) -> CliResult<RunConfig> {
    let mut cfg = match &net.config {
        Some(path) => RunConfig::from_toml(&read_text(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = net.$field {
                cfg.$field = v;
            }
        )*};
    }
    set!(h, k, f, omega, dt_per_period, time_limit, confirm_samples, std_threshold, buffer_capacity, sync_threshold);
    if let Some(text) = &net.ic_range {
        let v = parse_range(text).map_err(|e| usage(format!("--ic-range: {e}")))?;
        match v[..] {
            [lo, hi] => cfg.ic_range = [lo, hi],
            _ => return Err(usage("--ic-range expects LO,HI")),
        }
    }
    Ok(cfg)
}

fn tle_options(cfg: &RunConfig, periods: usize) -> TleOptions {
    TleOptions {
        periods,
        steps_per_period: cfg.dt_per_period,
        ..TleOptions::default()
    }
}

fn sweep_options(cfg: &RunConfig, baseline: bool, workers: usize) -> CliResult<SweepOptions> {
    let detector = cfg.detector();
    Ok(SweepOptions {
        node: cfg.node()?,
        ic_range: cfg.ic_range(),
        detector,
        baseline: baseline.then(|| BaselineOptions {
            steps_per_period: detector.steps_per_period,
            time_limit: detector.time_limit,
            sync_threshold: detector.tdle.sync_threshold,
            ..BaselineOptions::default()
        }),
        workers,
        ..SweepOptions::default()
    })
}

fn load_threshold(path: &Path) -> CliResult<(ThresholdFunction, String)> {
    let text = read_text(path)?;
    let thr = ThresholdFunction::from_toml(&text)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok((thr, sha256_hex(text.as_bytes())))
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn opt_sig9(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

fn cmd_msf(a: MsfArgs) -> CliResult {
    let mut cfg = resolve_config(&a.net)?;
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.radius = a.radius.unwrap_or(cfg.radius);
    cfg.validate()?;
    let alphas = parse_range(&a.alpha).map_err(|e| usage(format!("--alpha: {e}")))?;
    if alphas.is_empty() {
        return Err(usage("--alpha: empty grid"));
    }
    let out = Outputs::in_dir(&a.out, &["msf_curve.csv", "msf_stable.csv"], a.out_args.force)?;
    let spec = cfg.network()?;
    let curve = master_stability(&spec, &alphas, &tle_options(&cfg, a.periods))?;

    let mut csv = String::from("alpha,lambda,beta,tle\n");
    for e in &curve.entries {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_sig9(e.alpha),
            fmt_sig9(e.lambda),
            fmt_sig9(e.beta),
            opt_sig9(e.tle)
        );
    }
    out.write(0, &csv)?;
    let mut csv = String::from("alpha_lo,alpha_hi\n");
    for &(lo, hi) in &curve.stable_intervals {
        let _ = writeln!(csv, "{},{}", fmt_sig9(lo), fmt_sig9(hi));
    }
    out.write(1, &csv)?;

    let eig: Vec<String> = curve.eigenvalues.iter().map(|&l| fmt_sig9(l)).collect();
    println!("eigenvalues = [{}]", eig.join(", "));
    println!("stable_intervals = {}", curve.stable_intervals.len());
    for &(lo, hi) in &curve.stable_intervals {
        println!("  [{}, {}]", fmt_sig9(lo), fmt_sig9(hi));
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> CliResult {
    let mut cfg = resolve_config(&a.net)?;
    cfg.n = a.n;
    cfg.radius = 1;
    cfg.validate()?;
    let radii = match &a.radius {
        Some(text) => parse_counts(text).map_err(|e| usage(format!("--radius: {e}")))?,
        None => (1..=a.n / 2).collect(),
    };
    if let Some(r) = radii.iter().find(|&&r| r < 1 || r > a.n / 2) {
        return Err(usage(format!("--radius: {r} must lie in 1..={}", a.n / 2)));
    }
    let alphas = parse_range(&a.alpha).map_err(|e| usage(format!("--alpha: {e}")))?;
    if !(0.0..=100.0).contains(&a.percentile) {
        return Err(usage(format!("--percentile: {} outside [0, 100]", a.percentile)));
    }
    if a.runs == 0 || alphas.is_empty() {
        return Err(usage("calibration grid is empty"));
    }
    let sidecar = {
        let mut name = a.out.as_os_str().to_owned();
        name.push(".envelope.csv");
        std::path::PathBuf::from(name)
    };
    let out = Outputs::files(vec![a.out.clone(), sidecar], a.out_args.force)?;

    let node = cfg.node()?;
    let opts = cfg.detector();
    let jobs: Vec<(usize, f64, usize)> = radii
        .iter()
        .flat_map(|&r| alphas.iter().flat_map(move |&al| (0..a.runs).map(move |k| (r, al, k))))
        .collect();
    let traces = pool(a.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(r, alpha, k)| {
                let spec = NetworkSpec::ring(a.n, r, alpha, node)?;
                let seed = point_seed(a.seed, a.n, r, alpha, k);
                trace_gaps(&spec, random_initial_state(a.n, cfg.ic_range(), seed), &opts)
            })
            .collect::<Vec<_>>()
    });
    let mut times = Vec::new();
    let mut runs = Vec::new();
    let mut diverged = 0;
    for tr in traces {
        match tr {
            Ok(t) if t.incoherent => {
                times = t.times;
                runs.push(t.gaps);
            }
            Ok(_) => {}
            Err(tdle::Error::Diverged { .. }) => diverged += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let calibrate = |p| {
        if a.whole_curve {
            calibrate_threshold_whole_curve(&times, &runs, p, opts.confirm_samples)
        } else {
            calibrate_threshold(&times, &runs, p)
        }
    };
    let mut thr = calibrate(a.percentile).map_err(|e| CliError::Calibration(e.to_string()))?;
    thr.source_n = a.n;
    thr.created = format!("tdle {VERSION}, seed {}", a.seed);
    out.write(0, &thr.to_toml())?;
    let mut csv = String::from("t,envelope,threshold\n");
    for &(t, e) in &thr.envelope {
        let _ = writeln!(csv, "{},{},{}", fmt_sig9(t), fmt_sig9(e), fmt_sig9(thr.eval(t)));
    }
    out.write(1, &csv)?;
    println!(
        "runs = {} incoherent of {} ({} diverged)",
        runs.len(),
        jobs.len(),
        diverged
    );
    println!("a = {}\nb = {}\nc = {}", fmt_sig9(thr.a), fmt_sig9(thr.b), fmt_sig9(thr.c));
    Ok(())
}

fn cmd_detect(a: DetectArgs) -> CliResult {
    let mut cfg = resolve_config(&a.net)?;
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.radius = a.radius.unwrap_or(cfg.radius);
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.ic_seed = Some(a.seed);
    cfg.validate()?;
    let (thr, _) = load_threshold(&a.threshold)?;
    let out = match &a.out {
        Some(dir) => Some(Outputs::in_dir(dir, &["run.csv", "gaps.csv"], a.out_args.force)?),
        None => None,
    };
    let spec = cfg.network()?;
    let opts = sweep_options(&cfg, a.baseline, 1)?;
    let initial = random_initial_state(spec.n, opts.ic_range, a.seed);
    let (det, sim, config) = detect_and_classify(&spec, initial.clone(), &thr, &opts)?;

    println!("flagged = {}", det.flagged);
    println!("crossing_time = {}", opt_sig9(det.crossing_time));
    println!("termination = {}", det.termination.as_str());
    println!("elapsed_periods = {}", fmt_sig9(det.elapsed_periods));
    let t = config.triplet();
    println!("n_sync = {}\nn_unsync = {}\nn_groups = {}", t.n_sync, t.n_unsync, t.n_groups);
    println!("dpi = {}", fmt_sig9(config.dpi().value));
    if let Some(b) = &opts.baseline {
        let res = run_baseline(&spec, initial, b)?;
        println!("baseline_time = {}", fmt_sig9(res.time));
        println!("baseline_synchronized = {}", res.synchronized);
    }

    if let Some(out) = out {
        let synced = synchronized_pairs(&sim, opts.settle_periods * spec.period());
        let mut csv = String::from("i,j,dle,norm,status,synced\n");
        for (k, (i, j)) in pairs(spec.n).enumerate() {
            let p = &sim.spectrum().pairs()[k];
            let status = match p.status {
                PairStatus::Active => "active",
                PairStatus::Frozen => "frozen",
            };
            let _ = writeln!(
                csv,
                "{i},{j},{},{},{status},{}",
                fmt_sig9(p.dle),
                fmt_sig9(sim.norms()[k]),
                synced[k]
            );
        }
        out.write(0, &csv)?;
        let mut csv = String::from("t,gap,threshold\n");
        for &(t, g) in &det.gap_series {
            let _ = writeln!(csv, "{},{},{}", fmt_sig9(t), fmt_sig9(g), fmt_sig9(thr.eval(t)));
        }
        out.write(1, &csv)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let cfg = resolve_config(&a.net)?;
    cfg.validate_common()?;
    let ns = match &a.n {
        Some(t) => parse_counts(t).map_err(|e| usage(format!("--n: {e}")))?,
        None => vec![cfg.n],
    };
    if let Some(n) = ns.iter().find(|&&n| n < 2) {
        return Err(usage(format!("--n: {n} must be >= 2")));
    }
    let radii = match &a.radius {
        Some(t) => parse_counts(t).map_err(|e| usage(format!("--radius: {e}")))?,
        None => vec![cfg.radius],
    };
    let alphas = parse_range(&a.alpha).map_err(|e| usage(format!("--alpha: {e}")))?;
    let (thr, thr_hash) = load_threshold(&a.threshold)?;
    let out = Outputs::in_dir(&a.out, &["results.csv", "manifest.toml"], a.out_args.force)?;

    let grid = SweepGrid {
        ns: ns.clone(),
        radii: radii.clone(),
        alphas: alphas.clone(),
        replicates: a.seeds,
        master_seed: a.seed,
    };
    let mut opts = sweep_options(&cfg, a.baseline, a.workers)?;
    if a.exclude_msf {
        opts.exclude_msf_stable = Some(tle_options(&cfg, TleOptions::default().periods));
    }
    let records = sweep(&grid, &thr, &opts)?;
    out.write(0, &write_csv(&records))?;

    let mut manifest = Table::new();
    let mut tool = Table::new();
    tool.insert("name".into(), "tdle".into());
    tool.insert("version".into(), VERSION.into());
    manifest.insert("tool".into(), tool.into());
    let config: Table = cfg.to_toml().parse().expect("config table");
    manifest.insert("config".into(), config.into());
    let mut t = Table::new();
    t.insert("path".into(), a.threshold.display().to_string().into());
    t.insert("sha256".into(), thr_hash.into());
    t.insert("a".into(), thr.a.into());
    t.insert("b".into(), thr.b.into());
    t.insert("c".into(), thr.c.into());
    t.insert("percentile".into(), thr.percentile.into());
    t.insert("source_n".into(), (thr.source_n as i64).into());
    manifest.insert("threshold".into(), t.into());
    let ints = |v: &[usize]| Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect());
    let mut g = Table::new();
    g.insert("n".into(), ints(&ns));
    g.insert("radius".into(), ints(&radii));
    g.insert("alpha".into(), Value::Array(alphas.iter().map(|&x| x.into()).collect()));
    g.insert("seeds".into(), (a.seeds as i64).into());
    g.insert("master_seed".into(), a.seed.to_string().into());
    manifest.insert("grid".into(), g.into());
    let mut o = Table::new();
    o.insert("baseline".into(), a.baseline.into());
    o.insert("exclude_msf".into(), a.exclude_msf.into());
    o.insert("settle_periods".into(), opts.settle_periods.into());
    o.insert("settle_tolerance".into(), opts.settle_tolerance.into());
    manifest.insert("options".into(), o.into());
    out.write(1, &toml::to_string(&manifest).expect("manifest serializes"))?;

    let ok = records.iter().filter(|r| r.status == tdle::sweep::RecordStatus::Ok).count();
    let flagged = records.iter().filter(|r| r.flagged == Some(true)).count();
    println!("records = {}\nok = {ok}\nflagged = {flagged}", records.len());
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> CliResult {
    let text = read_text(&a.run)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| usage(format!("{}: missing column `{name}`", a.run.display())))
    };
    let (ci, cj, cs) = (col("i")?, col("j")?, col("synced")?);
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || usage(format!("{}: malformed row {}", a.run.display(), k + 2));
        let get = |c: usize| f.get(c).copied().ok_or_else(bad);
        let i: usize = get(ci)?.parse().map_err(|_| bad())?;
        let j: usize = get(cj)?.parse().map_err(|_| bad())?;
        let s: bool = get(cs)?.parse().map_err(|_| bad())?;
        if i == j {
            return Err(bad());
        }
        rows.push((i, j, s));
    }
    let n = rows.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
    if n < 2 {
        return Err(usage(format!("{}: no pairs", a.run.display())));
    }
    let mut synced = vec![false; pair_count(n)];
    for (i, j, s) in rows {
        synced[pair_index(n, i, j)] = s;
    }
    let config = sync_groups(n, &synced)?;
    let t = config.triplet();
    let sizes: Vec<String> = config.group_sizes().iter().map(|s| s.to_string()).collect();
    println!("n = {n}");
    println!("groups = [{}]", sizes.join(", "));
    println!("n_sync = {}\nn_unsync = {}\nn_groups = {}", t.n_sync, t.n_unsync, t.n_groups);
    println!("dpi = {}", fmt_sig9(config.dpi().value));
    Ok(())
}

fn cmd_surface(a: SurfaceArgs) -> CliResult {
    if a.n < 2 {
        return Err(usage("--n must be >= 2"));
    }
    let out = Outputs::files(vec![a.out.clone()], a.out_args.force)?;
    let mut csv = String::new();
    match a.family {
        Family::Equal => {
            csv.push_str("group_size,n_groups,n_sync,n_unsync,dpi\n");
            for g in 2..=a.n {
                for m in 1..=a.n / g {
                    let n_sync = m * g * (g - 1) / 2;
                    let v = dpi_equal_groups(a.n, g as f64, n_sync as f64)?;
                    let _ = writeln!(csv, "{g},{m},{n_sync},{},{}", a.n - m * g, fmt_sig9(v.value));
                }
            }
        }
        Family::Two => {
            csv.push_str("size1,groups1,size2,groups2,n_unsync,dpi\n");
            for s in 2..=a.n {
                for g1 in 1..=a.n / s {
                    let sizes = two_group_sizes(a.n, s, g1)?;
                    let g2 = sizes.len() - g1;
                    let used: usize = sizes.iter().sum();
                    let v = dpi_two_groups(a.n, s, g1)?;
                    let _ = writeln!(csv, "{s},{g1},{},{g2},{},{}", s + 1, a.n - used, fmt_sig9(v.value));
                }
            }
        }
    }
    out.write(0, &csv)
}

fn cmd_enumerate(a: EnumerateArgs) -> CliResult {
    let configs = enumerate_configurations(a.n)?;
    let mut csv = String::from("rank,groups,n_sync,n_unsync,n_groups,dpi\n");
    for (k, c) in configs.iter().enumerate() {
        let t = c.triplet();
        let sizes: Vec<String> = c.group_sizes().iter().map(|s| s.to_string()).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            k + 1,
            sizes.join("+"),
            t.n_sync,
            t.n_unsync,
            t.n_groups,
            fmt_sig9(c.dpi().value)
        );
    }
    match &a.out {
        Some(path) => Outputs::files(vec![path.clone()], a.out_args.force)?.write(0, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn manifest_label(results: &Path) -> Option<String> {
    let manifest = results.parent()?.join("manifest.toml");
    let table: Table = std::fs::read_to_string(manifest).ok()?.parse().ok()?;
    let p = table.get("threshold")?.get("percentile")?.as_float()?;
    Some(format!("{}-PCTL", fmt_sig9(p)))
}

fn cmd_report(a: ReportArgs) -> CliResult {
    let out = match &a.out {
        Some(path) => Some(Outputs::files(vec![path.clone()], a.out_args.force)?),
        None => None,
    };
    let mut groups = Vec::new();
    for spec in &a.results {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (Some(l.to_string()), Path::new(p)),
            None => (None, Path::new(spec.as_str())),
        };
        let mut records = read_csv(&read_text(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        for r in &mut records {
            r.baseline_synchronized = r.baseline_time.map(|b| b < a.time_limit);
        }
        let label = label
            .or_else(|| manifest_label(path))
            .unwrap_or_else(|| path.display().to_string());
        groups.push((label, records));
    }
    let report = efficiency_report(&groups).to_string();
    print!("{report}");
    if let Some(out) = out {
        out.write(0, &report)?;
    }
    Ok(())
}
