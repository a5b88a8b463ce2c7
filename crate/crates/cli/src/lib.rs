//! `uwbtrack` subcommands, callable in-process for tests.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use uwbtrack_core::format::fmt_sig9;
use uwbtrack_core::io::{self as tio, DataError};
use uwbtrack_core::rf::{self, ChannelParams, SPEED_OF_LIGHT};
use uwbtrack_core::sim::FixAccumulator;
use uwbtrack_core::tdma::{build_schedule, slot_demand, ScheduleError, SuperframeConfig};
use uwbtrack_core::{
    align, error_stats, percent_distance_error, simulate, trilaterate_literal, ErrorStats,
    GroundTruthTrack, LoadError, PctNorm, Point2, PositionFix, RunConfig, SolveMethod,
};

pub const GENERATOR: &str = concat!("uwbtrack ", env!("CARGO_PKG_VERSION"));

/// Exit status contract.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { .. } => CliError::Io(e.to_string()),
            LoadError::Invalid(_) => CliError::Invalid(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "uwbtrack", version, about = "UWB RTLS simulator, localizer and evaluator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configured scenario and write measurement, fix, truth and stats files.
    Simulate(SimulateArgs),
    /// Solve fixes from a measurements.csv.
    Localize(LocalizeArgs),
    /// Compare fixes.csv against truth.csv.
    Evaluate(EvaluateArgs),
    /// Print the radio link budget for one link.
    Linkbudget(LinkBudgetArgs),
    /// Build a TDMA schedule and print it as CSV.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON run configuration (path)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (path)
    #[arg(long)]
    pub out: PathBuf,
    /// Run seeds `a..b` (exclusive) or `a..=b` instead of the config seed, one subdirectory `seed_<n>` each [count]
    #[arg(long, value_parser = parse_seed_range)]
    pub seeds: Option<RangeInclusive<u64>>,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// JSON run configuration providing anchors and fix policy (path)
    #[arg(long)]
    pub config: PathBuf,
    /// Measurements CSV (path)
    #[arg(long)]
    pub measurements: PathBuf,
    /// Output directory (path)
    #[arg(long)]
    pub out: PathBuf,
    /// Also write fixes_literal.csv from the uncorrected closed form with its extra -x² term [flag]
    #[arg(long)]
    pub paper_literal: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Fixes CSV (path)
    #[arg(long)]
    pub fixes: PathBuf,
    /// Ground-truth CSV `t,x_m,y_m[,label]` (path)
    #[arg(long)]
    pub truth: PathBuf,
    /// Output directory (path)
    #[arg(long)]
    pub out: PathBuf,
    /// Largest allowed time between a fix and the nearest truth sample [s]
    #[arg(long, default_value_t = 1.0)]
    pub max_gap: f64,
    /// Percentage-error normalisation: path_scale or truth_distance [dimensionless]
    #[arg(long, default_value = "path_scale")]
    pub pct_norm: PctNorm,
}

#[derive(Debug, Args)]
pub struct LinkBudgetArgs {
    /// Tag-anchor distance [m]
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub distance: f64,
    /// Obstacles crossed by the link [count]
    #[arg(long, default_value_t = 0)]
    pub obstacles: u32,
    /// Channel bandwidth [Hz]
    #[arg(long, default_value_t = rf::DEFAULT_BANDWIDTH_HZ, allow_negative_numbers = true)]
    pub bandwidth: f64,
    /// Carrier frequency [Hz]
    #[arg(long, default_value_t = rf::DEFAULT_CARRIER_HZ, allow_negative_numbers = true)]
    pub freq: f64,
    /// Use this linear SNR for the capacity instead of the link budget [dimensionless]
    #[arg(long, allow_negative_numbers = true)]
    pub snr_linear: Option<f64>,
    /// Transmit power [W]
    #[arg(long, default_value_t = rf::DEFAULT_TX_POWER_W, allow_negative_numbers = true)]
    pub tx_power: f64,
    /// Transmit antenna gain, linear [dimensionless]
    #[arg(long, allow_negative_numbers = true)]
    pub tx_gain: Option<f64>,
    /// Receive antenna gain, linear [dimensionless]
    #[arg(long, allow_negative_numbers = true)]
    pub rx_gain: Option<f64>,
    /// Per-obstacle loss coefficient L [dimensionless]
    #[arg(long, allow_negative_numbers = true)]
    pub loss_l: Option<f64>,
    /// Per-obstacle frequency factor F [dimensionless]
    #[arg(long, allow_negative_numbers = true)]
    pub loss_f: Option<f64>,
    /// Propagation speed for the penetration depth [m/s]
    #[arg(long, default_value_t = SPEED_OF_LIGHT, allow_negative_numbers = true)]
    pub velocity: f64,
    /// Propagation delay for the penetration depth [s]
    #[arg(long, default_value_t = 1e-9, allow_negative_numbers = true)]
    pub delay: f64,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Number of tags [count]
    #[arg(long)]
    pub tags: u32,
    /// Update rate per tag [Hz]
    #[arg(long, allow_negative_numbers = true)]
    pub rate: f64,
    /// Anchors in the round-robin rotation [count]
    #[arg(long, default_value_t = 8)]
    pub anchors: u32,
    /// Superframe duration [s]
    #[arg(long, default_value_t = uwbtrack_core::tdma::DEFAULT_SUPERFRAME_S)]
    pub superframe: f64,
    /// Ranging slots per superframe [count]
    #[arg(long, default_value_t = uwbtrack_core::tdma::DEFAULT_SLOTS_PER_SUPERFRAME)]
    pub slots: u32,
}

fn parse_seed_range(s: &str) -> Result<RangeInclusive<u64>, String> {
    let bad = || format!("expected `a..b` or `a..=b`, got `{s}`");
    let (a, rest) = s.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let range = match rest.strip_prefix('=') {
        Some(b) => a..=b.trim().parse::<u64>().map_err(|_| bad())?,
        None => {
            let b: u64 = rest.trim().parse().map_err(|_| bad())?;
            if b == 0 {
                return Err(format!("empty seed range `{s}`"));
            }
            a..=b - 1
        }
    };
    if range.is_empty() {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(range)
}

/// Parse `args` (program name first) and run; returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Localize(a) => cmd_localize(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Linkbudget(a) => cmd_linkbudget(a, out),
        Command::Schedule(a) => cmd_schedule(a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> CliResult {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn print(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = tio::stable_json(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Serialize)]
struct RegimeSummary {
    n: usize,
    mean_m: f64,
    sigma_m: f64,
}

impl RegimeSummary {
    fn of(errors: &[f64]) -> Option<Self> {
        ErrorStats::from_errors(errors).ok().map(|s| Self {
            n: s.n,
            mean_m: s.mean_m,
            sigma_m: s.sigma_m,
        })
    }
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    generator: &'static str,
    seed: u64,
    measurements: usize,
    attempts: usize,
    success_ratio: f64,
    #[serde(flatten)]
    stats: ErrorStats,
    los: Option<RegimeSummary>,
    nlos: Option<RegimeSummary>,
}

/// Run one seed into `dir`; returns the headline line for stdout.
fn simulate_one(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<String, CliError> {
    let schedule = cfg.schedule().map_err(|e| CliError::Invalid(e.to_string()))?;
    let scenario = cfg.scenario();
    let out = simulate(&scenario, &schedule, seed).map_err(|e| CliError::Invalid(e.to_string()))?;
    if out.fixes.is_empty() {
        return Err(CliError::Invalid(
            "simulation produced no fixes; lengthen the trajectory or raise superframe.update_rate_hz".into(),
        ));
    }
    create_dir(dir)?;
    tio::write_file(&dir.join("measurements.csv"), |w| tio::write_measurements(w, &out.measurements))?;
    tio::write_file(&dir.join("fixes.csv"), |w| tio::write_fixes(w, &out.fixes))?;
    let truth: Vec<_> = out
        .fixes
        .iter()
        .zip(&out.truth)
        .map(|(f, p)| uwbtrack_core::TruthPoint {
            t: f.t_s,
            position: *p,
            label: None,
        })
        .collect();
    tio::write_file(&dir.join("truth.csv"), |w| tio::write_truth(w, &truth))?;

    let errors: Vec<f64> = out.fixes.iter().zip(&out.truth).map(|(f, t)| f.position.distance(*t)).collect();
    let split = |los: bool| -> Vec<f64> {
        errors
            .iter()
            .zip(&out.fix_los)
            .filter(|(_, l)| **l == los)
            .map(|(e, _)| *e)
            .collect()
    };
    let stats = ErrorStats::from_errors(&errors).map_err(|e| CliError::Invalid(e.to_string()))?;
    let report = SimulateReport {
        generator: GENERATOR,
        seed,
        measurements: out.measurements.len(),
        attempts: out.attempts,
        success_ratio: out.success_ratio(),
        los: RegimeSummary::of(&split(true)),
        nlos: RegimeSummary::of(&split(false)),
        stats,
    };
    write_json(&dir.join("stats.json"), &report)?;
    Ok(format!(
        "seed {seed}: {} fixes, mean {} m, sigma {} m, max {} m, success ratio {}\n",
        report.stats.n,
        fmt_sig9(report.stats.mean_m),
        fmt_sig9(report.stats.sigma_m),
        fmt_sig9(report.stats.max_m),
        fmt_sig9(report.success_ratio)
    ))
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::load(&args.config)?;
    let Some(seeds) = args.seeds.clone() else {
        let line = simulate_one(&cfg, cfg.seed, &args.out)?;
        return print(out, &line);
    };
    create_dir(&args.out)?;
    let seeds: Vec<u64> = seeds.collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len());
    let mut results: Vec<(u64, Result<String, CliError>)> = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(workers.max(1)) {
        let cfg = &cfg;
        let done: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let dir = args.out.join(format!("seed_{seed}"));
                    scope.spawn(move || (seed, simulate_one(cfg, seed, &dir)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
        });
        results.extend(done);
    }
    let mut first_error = None;
    for (_, r) in results {
        match r {
            Ok(line) => print(out, &line)?,
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

pub fn cmd_localize(args: &LocalizeArgs, out: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::load(&args.config)?;
    let measurements = tio::read_measurements(&args.measurements)?;
    let tags: BTreeSet<u32> = measurements.iter().map(|m| m.tag_id).collect();
    if tags.len() > 1 {
        return Err(CliError::Invalid(format!(
            "{}: measurements from {} tags; fixes.csv holds a single tag",
            args.measurements.display(),
            tags.len()
        )));
    }
    let scenario = cfg.scenario();
    let anchors = cfg.arena.anchor_set().map_err(|e| CliError::Invalid(e.to_string()))?;
    let n_anchors = anchors.len() as u32;
    if let Some(m) = measurements.iter().find(|m| m.anchor_id >= n_anchors) {
        return Err(CliError::Invalid(format!(
            "{}: anchor {} at t = {} is not in the configured arena",
            args.measurements.display(),
            m.anchor_id,
            m.t_s
        )));
    }
    let mut acc = FixAccumulator::new(anchors, cfg.superframe.ranges_per_fix);
    let sigma = scenario.fix_sigma_m();
    let (mut fixes, mut literal, mut attempts) = (Vec::new(), Vec::new(), 0usize);
    for m in measurements.iter().filter(|m| m.valid) {
        let Some(attempt) = acc.push(m.anchor_id, m.distance_m, m.los) else {
            continue;
        };
        attempts += 1;
        if let Some(fix) = attempt.succeeded() {
            fixes.push(fix.at(m.t_s).with_uncertainty(sigma));
        }
        if args.paper_literal {
            if let Some(p) = literal_fix(&cfg, &attempt.ranges) {
                literal.push(PositionFix {
                    t_s: m.t_s,
                    position: p,
                    sigma_pos_m: sigma,
                    residual_rms_m: 0.0,
                    n_ranges_used: 3,
                    method: SolveMethod::ClosedForm,
                    converged: true,
                });
            }
        }
    }
    create_dir(&args.out)?;
    tio::write_file(&args.out.join("fixes.csv"), |w| tio::write_fixes(w, &fixes))?;
    if args.paper_literal {
        tio::write_file(&args.out.join("fixes_literal.csv"), |w| tio::write_fixes(w, &literal))?;
    }
    print(
        out,
        &format!(
            "{} fixes from {} attempts ({} measurements)\n",
            fixes.len(),
            attempts,
            measurements.len()
        ),
    )
}

/// Literal closed form on the first three non-collinear anchors of an attempt.
fn literal_fix(cfg: &RunConfig, ranges: &[(u32, f64)]) -> Option<Point2> {
    let pos = |id: u32| cfg.arena.anchors[id as usize];
    for i in 0..ranges.len() {
        for j in i + 1..ranges.len() {
            for k in j + 1..ranges.len() {
                let (a, b, c) = (ranges[i], ranges[j], ranges[k]);
                if let Ok(p) = trilaterate_literal([pos(a.0), pos(b.0), pos(c.0)], [a.1, b.1, c.1]) {
                    return Some(p);
                }
            }
        }
    }
    None
}

#[derive(Debug, Serialize)]
struct PercentError {
    norm: &'static str,
    mean_pct: f64,
    sigma_pct: f64,
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    generator: &'static str,
    #[serde(flatten)]
    stats: ErrorStats,
    dropped: usize,
    percent_error: Option<PercentError>,
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> CliResult {
    if !(args.max_gap > 0.0) {
        return Err(CliError::Invalid(format!("--max-gap must be positive, got {}", args.max_gap)));
    }
    let fixes = tio::read_fixes(&args.fixes)?;
    let truth: GroundTruthTrack = tio::read_truth(&args.truth)?;
    let alignment = align(&fixes, &truth, args.max_gap).map_err(|e| CliError::Invalid(e.to_string()))?;
    let stats = error_stats(&alignment.pairs).map_err(|e| CliError::Invalid(e.to_string()))?;
    let percent_error = percent_distance_error(&alignment.pairs, args.pct_norm)
        .ok()
        .map(|(mean_pct, sigma_pct)| PercentError {
            norm: args.pct_norm.as_str(),
            mean_pct,
            sigma_pct,
        });
    create_dir(&args.out)?;
    tio::write_file(&args.out.join("histogram.csv"), |w| tio::write_histogram(w, &stats))?;
    let report = EvaluateReport {
        generator: GENERATOR,
        stats,
        dropped: alignment.dropped,
        percent_error,
    };
    write_json(&args.out.join("stats.json"), &report)?;

    let s = &report.stats;
    let mut table = String::new();
    let rows = [
        ("n", s.n.to_string(), ""),
        ("dropped", report.dropped.to_string(), ""),
        ("mean", fmt_sig9(s.mean_m), "m"),
        ("sigma", fmt_sig9(s.sigma_m), "m"),
        ("max", fmt_sig9(s.max_m), "m"),
    ];
    for (name, value, unit) in rows {
        table.push_str(&format!("{name:<8} {value:>14} {unit}\n"));
    }
    match &report.percent_error {
        Some(p) => table.push_str(&format!(
            "{:<8} {:>14} % ({}, sigma {} %)\n",
            "pct",
            fmt_sig9(p.mean_pct),
            p.norm,
            fmt_sig9(p.sigma_pct)
        )),
        None => table.push_str(&format!("{:<8} {:>14}\n", "pct", "n/a")),
    }
    print(out, &table)
}

pub fn cmd_linkbudget(args: &LinkBudgetArgs, out: &mut dyn Write) -> CliResult {
    let invalid = |e: rf::RfError| CliError::Invalid(e.to_string());
    if !(args.distance > 0.0) {
        return Err(CliError::Invalid(format!("--distance must be positive, got {}", args.distance)));
    }
    if !(args.bandwidth > 0.0) {
        return Err(CliError::Invalid(format!("--bandwidth must be positive, got {}", args.bandwidth)));
    }
    let defaults = ChannelParams::default();
    let params = ChannelParams {
        carrier_frequency_hz: args.freq,
        bandwidth_hz: args.bandwidth,
        tx_power_w: args.tx_power,
        tx_gain_linear: args.tx_gain.unwrap_or(defaults.tx_gain_linear),
        rx_gain_linear: args.rx_gain.unwrap_or(defaults.rx_gain_linear),
        path_loss_coeff_l: args.loss_l.unwrap_or(defaults.path_loss_coeff_l),
        freq_loss_factor_f: args.loss_f.unwrap_or(defaults.freq_loss_factor_f),
        noise_power_w: rf::thermal_noise_w(args.bandwidth, rf::REFERENCE_TEMPERATURE_K),
    };
    params.validate().map_err(invalid)?;
    let budget = params.link_budget(args.distance, args.obstacles).map_err(invalid)?;
    let (snr_db, capacity) = match args.snr_linear {
        Some(snr) => {
            let capacity = rf::channel_capacity_bps(args.bandwidth, snr).map_err(invalid)?;
            (rf::linear_to_db(snr), capacity)
        }
        None => (budget.snr_db, budget.capacity_bps),
    };
    let resolution = rf::range_resolution_m(args.bandwidth).map_err(invalid)?;
    let depth = rf::penetration_depth_m(args.velocity, args.delay).map_err(invalid)?;
    let rows = [
        ("attenuation_db", budget.attenuation_db, "dB"),
        ("snr_db", snr_db, "dB"),
        ("capacity_bps", capacity, "bit/s"),
        ("range_resolution_m", resolution, "m"),
        ("penetration_depth_m", depth, "m"),
    ];
    let mut table = String::new();
    for (name, value, unit) in rows {
        table.push_str(&format!("{name:<20} {:>16} {unit}\n", fmt_sig9(value)));
    }
    print(out, &table)
}

pub fn cmd_schedule(args: &ScheduleArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let cfg = SuperframeConfig {
        superframe_s: args.superframe,
        slots_per_superframe: args.slots,
    };
    match build_schedule(args.tags, args.rate, &cfg, args.anchors) {
        Ok(s) => {
            print(out, &s.to_csv())?;
            let _ = writeln!(
                err,
                "{} tags @ {} Hz: demand {} of {} slots per superframe, period {} superframe(s), {} assignments",
                args.tags,
                fmt_sig9(args.rate),
                fmt_sig9(slot_demand(args.tags, args.rate, &cfg)),
                args.slots,
                s.period_superframes,
                s.assignments.len()
            );
            Ok(())
        }
        Err(ScheduleError::CapacityExceeded {
            demand_slots_per_superframe,
            capacity,
        }) => Err(CliError::Invalid(format!(
            "capacity exceeded: {} tags @ {} Hz need {} slots per superframe, capacity is {} ({} ranging events/s)",
            args.tags,
            fmt_sig9(args.rate),
            fmt_sig9(demand_slots_per_superframe),
            capacity,
            fmt_sig9(f64::from(capacity) / args.superframe)
        ))),
        Err(e) => Err(CliError::Invalid(e.to_string())),
    }
}
