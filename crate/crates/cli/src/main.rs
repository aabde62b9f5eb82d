//! `tdle` command-line front end.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Early detection of partial synchronization in ring networks of coupled Duffing oscillators.
#[derive(Debug, Parser)]
#[command(name = "tdle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Master stability function over a coupling grid; writes the TLE curve and stable intervals.
    Msf(MsfArgs),
    /// Fits a detection threshold to incoherent runs of a small network.
    Calibrate(CalibrateArgs),
    /// Runs the fast detector on one network and classifies its final state.
    Detect(DetectArgs),
    /// Scans node counts, radii, couplings and initial conditions.
    Sweep(SweepArgs),
    /// Dynamical phenomena indicator analytics.
    Dpi {
        #[command(subcommand)]
        command: DpiCommand,
    },
    /// Summarizes detection-vs-baseline timing of sweep results.
    Report(ReportArgs),
}

/// Node, integrator and detector settings shared by the simulation commands.
#[derive(Debug, Clone, Args)]
struct NetworkArgs {
    /// Configuration file (TOML); flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<std::path::PathBuf>,
    /// Damping parameter h of the node equation x'' + 2h x' + k x^3 = F cos(omega t).
    #[arg(long)]
    h: Option<f64>,
    /// Cubic stiffness k.
    #[arg(long)]
    k: Option<f64>,
    /// Forcing amplitude F.
    #[arg(long)]
    f: Option<f64>,
    /// Forcing frequency omega.
    #[arg(long)]
    omega: Option<f64>,
    /// RK4 steps per forcing period.
    #[arg(long, value_name = "STEPS")]
    dt_per_period: Option<usize>,
    /// Initial-condition interval as LO,HI.
    #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
    ic_range: Option<String>,
    /// Simulation cap in forcing periods.
    #[arg(long, value_name = "PERIODS")]
    time_limit: Option<f64>,
    /// Consecutive above-threshold samples required to flag.
    #[arg(long, value_name = "COUNT")]
    confirm_samples: Option<usize>,
    /// Standard deviation below which a pair exponent counts as stabilized.
    #[arg(long)]
    std_threshold: Option<f64>,
    /// Samples in each pair's stabilization buffer.
    #[arg(long, value_name = "COUNT")]
    buffer_capacity: Option<usize>,
    /// Pair distance below which two nodes count as synchronized.
    #[arg(long)]
    sync_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
struct OutArgs {
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct MsfArgs {
    #[command(flatten)]
    net: NetworkArgs,
    /// Number of nodes.
    #[arg(long)]
    n: Option<usize>,
    /// Coupling radius.
    #[arg(long)]
    radius: Option<usize>,
    /// Coupling grid: LO:HI:STEP (HI excluded), a comma list, or one value.
    #[arg(long, allow_hyphen_values = true)]
    alpha: String,
    /// Integration horizon per exponent, in forcing periods.
    #[arg(long, default_value_t = 2000)]
    periods: usize,
    /// Output directory for msf_curve.csv and msf_stable.csv.
    #[arg(long, value_name = "DIR")]
    out: std::path::PathBuf,
    #[command(flatten)]
    out_args: OutArgs,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    net: NetworkArgs,
    /// Number of nodes of the calibration networks.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Coupling radii as a comma list; defaults to every valid radius.
    #[arg(long)]
    radius: Option<String>,
    /// Coupling grid: LO:HI:STEP (HI excluded), a comma list, or one value.
    #[arg(long, default_value = "0:2:0.05", allow_hyphen_values = true)]
    alpha: String,
    /// Random initial conditions per (radius, alpha) point.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Percentile of the incoherent gap envelope.
    #[arg(long, default_value_t = 90.0)]
    percentile: f64,
    /// Master seed for the initial conditions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale the fit so the percentile applies to whole runs instead of each time sample.
    #[arg(long)]
    whole_curve: bool,
    /// Worker threads; 0 uses all logical CPUs.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Threshold file to write; the envelope goes to <FILE>.envelope.csv.
    #[arg(long, value_name = "FILE")]
    out: std::path::PathBuf,
    #[command(flatten)]
    out_args: OutArgs,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    net: NetworkArgs,
    /// Number of nodes.
    #[arg(long)]
    n: Option<usize>,
    /// Coupling radius.
    #[arg(long)]
    radius: Option<usize>,
    /// Coupling strength.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Threshold file written by `calibrate`.
    #[arg(long, value_name = "FILE")]
    threshold: std::path::PathBuf,
    /// Initial-condition seed.
    #[arg(long)]
    seed: u64,
    /// Also run the baseline detector on the same initial conditions.
    #[arg(long)]
    baseline: bool,
    /// Output directory for run.csv (per-pair state) and gaps.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<std::path::PathBuf>,
    #[command(flatten)]
    out_args: OutArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    net: NetworkArgs,
    /// Node counts as a comma list.
    #[arg(long)]
    n: Option<String>,
    /// Coupling radii as a comma list; radii above n/2 are skipped.
    #[arg(long)]
    radius: Option<String>,
    /// Coupling grid: LO:HI:STEP (HI excluded), a comma list, or one value.
    #[arg(long, allow_hyphen_values = true)]
    alpha: String,
    /// Random initial conditions per grid point.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Master seed; every point's seed is derived from it and the point's coordinates.
    #[arg(long)]
    seed: u64,
    /// Threshold file written by `calibrate`.
    #[arg(long, value_name = "FILE")]
    threshold: std::path::PathBuf,
    /// Pair every run with the baseline detector.
    #[arg(long)]
    baseline: bool,
    /// Skip couplings inside stable complete-synchronization ranges.
    #[arg(long)]
    exclude_msf: bool,
    /// Worker threads; 0 uses all logical CPUs.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory for results.csv and manifest.toml.
    #[arg(long, value_name = "DIR")]
    out: std::path::PathBuf,
    #[command(flatten)]
    out_args: OutArgs,
}

#[derive(Debug, Subcommand)]
enum DpiCommand {
    /// Configuration triplet and DPI of a run file written by `detect --out`.
    Classify(ClassifyArgs),
    /// Analytic DPI over a family of group configurations.
    Surface(SurfaceArgs),
    /// Every group configuration of an n-node network, sorted by DPI.
    Enumerate(EnumerateArgs),
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// run.csv with columns i,j,dle,norm,status,synced.
    #[arg(long, value_name = "FILE")]
    run: std::path::PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    /// Groups of one common size.
    Equal,
    /// Groups of size g plus packed groups of size g + 1.
    Two,
}

#[derive(Debug, Args)]
struct SurfaceArgs {
    /// Group family.
    #[arg(long, value_enum)]
    family: Family,
    /// Number of nodes.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// CSV file to write.
    #[arg(long, value_name = "FILE")]
    out: std::path::PathBuf,
    #[command(flatten)]
    out_args: OutArgs,
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    /// Number of nodes (at most 12).
    #[arg(long)]
    n: usize,
    /// CSV file to write instead of printing.
    #[arg(long, value_name = "FILE")]
    out: Option<std::path::PathBuf>,
    #[command(flatten)]
    out_args: OutArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Sweep results as [LABEL=]PATH; repeatable. Without a label the percentile
    /// from the sibling manifest.toml is used.
    #[arg(long, value_name = "[LABEL=]PATH", required = true)]
    results: Vec<String>,
    /// Time cap of the sweeps; baseline times at the cap mean no pair synchronized.
    #[arg(long, default_value_t = 2000.0)]
    time_limit: f64,
    /// Text file to write in addition to printing.
    #[arg(long, value_name = "FILE")]
    out: Option<std::path::PathBuf>,
    #[command(flatten)]
    out_args: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
