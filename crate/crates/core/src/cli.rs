//! The `posefuse` command line: simulate, fuse, evaluate and bench.
//!
//! Exit codes: 0 success, 1 usage or invalid parameters, 2 data errors
//! (unreadable or malformed files, missing ground truth).
//!
//! Every subcommand prints a `config:` line holding a command that
//! reproduces the run with all parameters spelled out.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{Category, FrameObservation, FusionConfig, FusionEngine, FusionOutput};
use crate::geometry::RigidTransform;
use crate::io::{self, LoggedOutput, ReportFile, StampedPose};
use crate::metrics::{self, ErrorStats};
use crate::synth::{AprNoiseModel, Scenario, TrajectoryKind, TrajectorySpec, VioDriftModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl ToString) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "posefuse", version, about = "APR + VIO pose fusion toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic observation stream.
    Simulate(SimulateArgs),
    /// Run the fusion engine over an observation file.
    Fuse(FuseArgs),
    /// Score fused (or freshly fused) estimates against ground truth.
    Evaluate(EvaluateArgs),
    /// Simulate, fuse and evaluate over several seeds.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrajectoryArg {
    RandomWaypoint,
    CircularArc,
    StraightLine,
}

impl From<TrajectoryArg> for TrajectoryKind {
    fn from(t: TrajectoryArg) -> Self {
        match t {
            TrajectoryArg::RandomWaypoint => TrajectoryKind::RandomWaypoint,
            TrajectoryArg::CircularArc => TrajectoryKind::CircularArc,
            TrajectoryArg::StraightLine => TrajectoryKind::StraightLine,
        }
    }
}

impl TrajectoryArg {
    fn name(&self) -> &'static str {
        match self {
            TrajectoryArg::RandomWaypoint => "random-waypoint",
            TrajectoryArg::CircularArc => "circular-arc",
            TrajectoryArg::StraightLine => "straight-line",
        }
    }
}

/// Scenario parameters shared by `simulate` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 300)]
    pub frames: usize,
    /// Falls back to POSEFUSE_SEED, then 0.
    #[arg(long, env = "POSEFUSE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = TrajectoryArg::RandomWaypoint)]
    pub trajectory: TrajectoryArg,
    #[arg(long, default_value_t = TrajectorySpec::default().extent)]
    pub extent: f64,
    #[arg(long, default_value_t = TrajectorySpec::default().interval)]
    pub interval: f64,
    #[arg(long, default_value_t = TrajectorySpec::default().speed)]
    pub speed: f64,

    #[arg(long, default_value_t = AprNoiseModel::default().trans_sigma)]
    pub apr_trans_sigma: f64,
    #[arg(long, default_value_t = AprNoiseModel::default().rot_sigma)]
    pub apr_rot_sigma: f64,
    #[arg(long, alias = "outlier-prob", default_value_t = AprNoiseModel::default().outlier_prob)]
    pub apr_outlier_prob: f64,
    #[arg(long, default_value_t = AprNoiseModel::default().outlier_trans_range[0])]
    pub apr_outlier_trans_min: f64,
    #[arg(long, default_value_t = AprNoiseModel::default().outlier_trans_range[1])]
    pub apr_outlier_trans_max: f64,
    #[arg(long, default_value_t = AprNoiseModel::default().outlier_rot_range[0])]
    pub apr_outlier_rot_min: f64,
    #[arg(long, default_value_t = AprNoiseModel::default().outlier_rot_range[1])]
    pub apr_outlier_rot_max: f64,

    #[arg(long, default_value_t = VioDriftModel::default().trans_noise_sigma)]
    pub vio_trans_noise: f64,
    #[arg(long, default_value_t = VioDriftModel::default().rot_noise_sigma)]
    pub vio_rot_noise: f64,
    #[arg(long, default_value_t = VioDriftModel::default().trans_bias_walk_sigma)]
    pub vio_trans_bias_walk: f64,
    #[arg(long, default_value_t = VioDriftModel::default().rot_bias_walk_sigma)]
    pub vio_rot_bias_walk: f64,
    /// Yaw of the VIO frame relative to the world, degrees.
    #[arg(long, default_value_t = 35.0, allow_negative_numbers = true)]
    pub vio_offset_yaw: f64,
    #[arg(long, default_value_t = 12.0, allow_negative_numbers = true)]
    pub vio_offset_x: f64,
    #[arg(long, default_value_t = -7.0, allow_negative_numbers = true)]
    pub vio_offset_y: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub vio_offset_z: f64,
}

impl SimArgs {
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn scenario(&self, seed: u64) -> Scenario {
        let offset = RigidTransform::new(
            nalgebra::UnitQuaternion::from_axis_angle(
                &nalgebra::Vector3::z_axis(),
                self.vio_offset_yaw.to_radians(),
            ),
            nalgebra::Vector3::new(self.vio_offset_x, self.vio_offset_y, self.vio_offset_z),
        );
        Scenario {
            trajectory: TrajectorySpec {
                kind: self.trajectory.into(),
                frames: self.frames,
                interval: self.interval,
                extent: self.extent,
                speed: self.speed,
                seed,
            },
            apr: AprNoiseModel {
                trans_sigma: self.apr_trans_sigma,
                rot_sigma: self.apr_rot_sigma,
                outlier_prob: self.apr_outlier_prob,
                outlier_trans_range: [self.apr_outlier_trans_min, self.apr_outlier_trans_max],
                outlier_rot_range: [self.apr_outlier_rot_min, self.apr_outlier_rot_max],
            },
            vio: VioDriftModel {
                trans_noise_sigma: self.vio_trans_noise,
                rot_noise_sigma: self.vio_rot_noise,
                trans_bias_walk_sigma: self.vio_trans_bias_walk,
                rot_bias_walk_sigma: self.vio_rot_bias_walk,
                initial_offset: offset,
            },
        }
    }

    fn echo(&self, out: &mut Vec<String>, include_seed: bool) {
        let mut push = |flag: &str, v: String| {
            out.push(format!("--{flag}"));
            out.push(v);
        };
        push("frames", self.frames.to_string());
        if include_seed {
            push("seed", self.effective_seed().to_string());
        }
        push("trajectory", self.trajectory.name().to_string());
        for (flag, v) in [
            ("extent", self.extent),
            ("interval", self.interval),
            ("speed", self.speed),
            ("apr-trans-sigma", self.apr_trans_sigma),
            ("apr-rot-sigma", self.apr_rot_sigma),
            ("apr-outlier-prob", self.apr_outlier_prob),
            ("apr-outlier-trans-min", self.apr_outlier_trans_min),
            ("apr-outlier-trans-max", self.apr_outlier_trans_max),
            ("apr-outlier-rot-min", self.apr_outlier_rot_min),
            ("apr-outlier-rot-max", self.apr_outlier_rot_max),
            ("vio-trans-noise", self.vio_trans_noise),
            ("vio-rot-noise", self.vio_rot_noise),
            ("vio-trans-bias-walk", self.vio_trans_bias_walk),
            ("vio-rot-bias-walk", self.vio_rot_bias_walk),
            ("vio-offset-yaw", self.vio_offset_yaw),
            ("vio-offset-x", self.vio_offset_x),
            ("vio-offset-y", self.vio_offset_y),
            ("vio-offset-z", self.vio_offset_z),
        ] {
            push(flag, v.to_string());
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FusionArgs {
    /// RPE threshold, metres.
    #[arg(long, default_value_t = FusionConfig::default().d_th)]
    pub d_th: f64,
    /// ROE threshold, degrees.
    #[arg(long, default_value_t = FusionConfig::default().o_th)]
    pub o_th: f64,
    #[arg(long, default_value_t = FusionConfig::default().n_pairs)]
    pub n_pairs: usize,
    #[arg(long, default_value_t = FusionConfig::default().gamma, allow_negative_numbers = true)]
    pub gamma: f64,
    /// Defaults to --n-pairs.
    #[arg(long)]
    pub drift_streak: Option<usize>,
    /// Never re-enter alignment after the first one.
    #[arg(long)]
    pub no_realign: bool,
}

impl FusionArgs {
    pub fn config(&self) -> FusionConfig {
        let c = FusionConfig {
            d_th: self.d_th,
            o_th: self.o_th,
            n_pairs: self.n_pairs,
            gamma: self.gamma,
            drift_streak: self.drift_streak.unwrap_or(self.n_pairs),
        };
        if self.no_realign {
            c.without_realignment()
        } else {
            c
        }
    }

    fn echo(&self, out: &mut Vec<String>) {
        let c = self.config();
        for (flag, v) in [
            ("d-th", c.d_th.to_string()),
            ("o-th", c.o_th.to_string()),
            ("n-pairs", c.n_pairs.to_string()),
            ("gamma", c.gamma.to_string()),
        ] {
            out.push(format!("--{flag}"));
            out.push(v);
        }
        if c.realignment_enabled() {
            out.push("--drift-streak".into());
            out.push(c.drift_streak.to_string());
        } else {
            out.push("--no-realign".into());
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Observation CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// Observation CSV to read.
    #[arg(long)]
    pub input: PathBuf,
    /// Fused trajectory to write (frames with an estimate only).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-frame fusion log (category, stage, similarity, pose).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Observation CSV with ground truth.
    #[arg(long)]
    pub input: PathBuf,
    /// Fusion log from `fuse`; when absent the input is fused here.
    #[arg(long)]
    pub fused: Option<PathBuf>,
    /// JSON report to write.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-frame error CSV for plotting.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// JSON summary to write.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

impl Command {
    /// Arguments that reproduce this invocation, without the program name.
    pub fn echo(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Command::Simulate(a) => {
                out.extend(["simulate".into(), "--out".into(), path_str(&a.out)]);
                a.sim.echo(&mut out, true);
            }
            Command::Fuse(a) => {
                out.extend(["fuse".into(), "--input".into(), path_str(&a.input)]);
                out.extend(["--out".into(), path_str(&a.out)]);
                if let Some(l) = &a.log {
                    out.extend(["--log".into(), path_str(l)]);
                }
                a.fusion.echo(&mut out);
            }
            Command::Evaluate(a) => {
                out.extend(["evaluate".into(), "--input".into(), path_str(&a.input)]);
                for (flag, p) in [("--fused", &a.fused), ("--report", &a.report), ("--series", &a.series)] {
                    if let Some(p) = p {
                        out.extend([flag.to_string(), path_str(p)]);
                    }
                }
                a.fusion.echo(&mut out);
            }
            Command::Bench(a) => {
                out.extend(["bench".into(), "--seeds".into(), a.seeds.to_string()]);
                if let Some(p) = &a.report {
                    out.extend(["--report".into(), path_str(p)]);
                }
                a.sim.echo(&mut out, true);
                a.fusion.echo(&mut out);
            }
        }
        out
    }

    pub fn echo_line(&self) -> String {
        std::iter::once("posefuse".to_string())
            .chain(self.echo())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = if code == EXIT_OK {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let _ = writeln!(out, "config: {}", command.echo_line());
    match command {
        Command::Simulate(a) => run_simulate(a, out, err),
        Command::Fuse(a) => run_fuse(a, out),
        Command::Evaluate(a) => run_evaluate(a, command.echo_line(), out).map(|_| ()),
        Command::Bench(a) => run_bench(a, command.echo_line(), out).map(|_| ()),
    }
}

pub fn run_simulate(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let seed = args.sim.effective_seed();
    let scenario = args.sim.scenario(seed);
    let mut probe = scenario;
    probe.trajectory.frames = probe.trajectory.frames.max(1);
    probe.validate().map_err(usage)?;
    let stream = if args.sim.frames == 0 {
        let _ = writeln!(err, "warning: --frames 0 writes an empty observation file");
        Vec::new()
    } else {
        scenario.generate().map_err(usage)?
    };
    io::write_observations(&args.out, &stream).map_err(data)?;

    let t = &scenario.trajectory;
    let _ = writeln!(
        out,
        "frames {} | trajectory {} extent {} m, {} m/frame | apr σ {} m / {}°, outliers {} | vio bias walk {} m, {}° | seed {}",
        stream.len(),
        args.sim.trajectory.name(),
        t.extent,
        t.step(),
        scenario.apr.trans_sigma,
        scenario.apr.rot_sigma,
        scenario.apr.outlier_prob,
        scenario.vio.trans_bias_walk_sigma,
        scenario.vio.rot_bias_walk_sigma,
        seed
    );
    Ok(())
}

fn fuse_stream(
    config: FusionConfig,
    stream: &[FrameObservation],
) -> Result<(Vec<FusionOutput>, FusionEngine), CliError> {
    let mut engine = FusionEngine::new(config).map_err(usage)?;
    let outputs = engine.run(stream).map_err(data)?;
    Ok((outputs, engine))
}

fn category_counts(outputs: &[FusionOutput]) -> String {
    Category::ALL
        .iter()
        .map(|c| {
            let n = outputs.iter().filter(|o| o.category == *c).count();
            format!("{} {n}", c.as_str())
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn run_fuse(args: &FuseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = args.fusion.config();
    config.validate().map_err(usage)?;
    let stream = io::read_observations(&args.input).map_err(data)?;
    let (outputs, engine) = fuse_stream(config, &stream)?;

    let trajectory: Vec<StampedPose> = stream
        .iter()
        .zip(&outputs)
        .filter_map(|(o, f)| f.pose.map(|pose| StampedPose { timestamp: o.timestamp, pose }))
        .collect();
    io::write_trajectory(&args.out, &trajectory).map_err(data)?;
    if let Some(log) = &args.log {
        io::write_fusion_log(log, &logged(&stream, &outputs)).map_err(data)?;
    }
    let _ = writeln!(
        out,
        "frames {} | {} | alignments {}",
        outputs.len(),
        category_counts(&outputs),
        engine.telemetry().alignments
    );
    Ok(())
}

fn logged(stream: &[FrameObservation], outputs: &[FusionOutput]) -> Vec<LoggedOutput> {
    stream
        .iter()
        .zip(outputs)
        .map(|(o, f)| LoggedOutput {
            timestamp: o.timestamp,
            output: *f,
        })
        .collect()
}

pub fn run_evaluate(
    args: &EvaluateArgs,
    command: String,
    out: &mut dyn Write,
) -> Result<ReportFile, CliError> {
    let config = args.fusion.config();
    config.validate().map_err(usage)?;
    let stream = io::read_observations(&args.input).map_err(data)?;
    if let Some(o) = stream.iter().find(|o| o.gt.is_none()) {
        return Err(data(format!(
            "{}: frame {} has no ground truth columns",
            args.input.display(),
            o.frame_id
        )));
    }
    let outputs: Vec<FusionOutput> = match &args.fused {
        Some(path) => io::read_fusion_log(path)
            .map_err(data)?
            .into_iter()
            .map(|l| l.output)
            .collect(),
        None => fuse_stream(config, &stream)?.0,
    };
    let report = metrics::evaluate(&outputs, &stream).map_err(data)?;
    let raw = metrics::raw_errors(&stream).map_err(data)?;
    let file = ReportFile {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        seed: None,
        config,
        raw_apr: ErrorStats::compute(&raw),
        report,
    };
    if let Some(path) = &args.report {
        io::write_report(path, &file).map_err(data)?;
    }
    if let Some(path) = &args.series {
        let text = series_csv(&stream, &outputs);
        std::fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))?;
    }
    print_report(out, &file);
    Ok(file)
}

fn print_report(out: &mut dyn Write, file: &ReportFile) {
    let row = |out: &mut dyn Write, name: &str, s: &Option<ErrorStats>| {
        match s {
            Some(s) => writeln!(
                out,
                "{name:<12} n={:<5} mean {:.3} m / {:.3}°  median {:.3} m / {:.3}°  high {:.1}%  medium {:.1}%  low {:.1}%",
                s.count, s.mean_ape, s.mean_aoe, s.median_ape, s.median_aoe, s.pct_high, s.pct_medium, s.pct_low
            ),
            None => writeln!(out, "{name:<12} n=0"),
        }
    };
    let r = &file.report;
    let _ = row(out, "raw apr", &file.raw_apr);
    let _ = row(out, "fused", &Some(r.overall));
    let _ = row(out, "rps+opt", &r.rps_plus_opt);
    let _ = row(out, "only rps", &r.only_rps);
    let _ = row(out, "only opt", &r.only_opt);
    let _ = row(out, "bridge", &r.bridge);
    let _ = writeln!(
        out,
        "ratios: reliable {:.1}%  optimized {:.1}%  bridge {:.1}%  pending {:.1}%",
        r.ratios.reliable, r.ratios.optimized, r.ratios.bridge, r.ratios.pending
    );
}

pub const SERIES_HEADER: &str = "frame_id,timestamp,category,ape,aoe,apr_ape,apr_aoe";

/// Per-frame errors of the fused estimate and of the raw APR prediction.
pub fn series_csv(stream: &[FrameObservation], outputs: &[FusionOutput]) -> String {
    use std::fmt::Write as _;
    let mut s = format!("{SERIES_HEADER}\n");
    for (o, f) in stream.iter().zip(outputs) {
        let gt = o.gt.expect("checked by caller");
        let (ape, aoe) = match &f.pose {
            Some(p) => (
                crate::geometry::relative_translation(p, &gt).to_string(),
                crate::geometry::relative_rotation_deg(p, &gt).to_string(),
            ),
            None => (String::new(), String::new()),
        };
        writeln!(
            s,
            "{},{},{},{ape},{aoe},{},{}",
            o.frame_id,
            o.timestamp,
            f.category.as_str(),
            crate::geometry::relative_translation(&o.apr, &gt),
            crate::geometry::relative_rotation_deg(&o.apr, &gt)
        )
        .unwrap();
    }
    s
}

/// One seed of a bench run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub seed: u64,
    pub raw: ErrorStats,
    pub fused: ErrorStats,
    /// fused / raw mean APE.
    pub ape_ratio: f64,
    /// fused / raw mean AOE.
    pub aoe_ratio: f64,
    /// fused / raw share of frames outside the low-accuracy bucket; `None`
    /// when the raw share is zero.
    pub miss_ratio: Option<f64>,
    pub alignments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: String,
    pub command: String,
    pub config: FusionConfig,
    pub rows: Vec<BenchRow>,
    pub mean_ape_ratio: f64,
    pub mean_aoe_ratio: f64,
    pub mean_miss_ratio: Option<f64>,
}

/// Simulates, fuses and evaluates one scenario.
pub fn bench_seed(scenario: &Scenario, config: FusionConfig) -> Result<BenchRow, CliError> {
    let stream = scenario.generate().map_err(usage)?;
    let (outputs, engine) = fuse_stream(config, &stream)?;
    bench_row(scenario.trajectory.seed, &stream, &outputs, engine.telemetry().alignments)
}

pub fn bench_row(
    seed: u64,
    stream: &[FrameObservation],
    outputs: &[FusionOutput],
    alignments: usize,
) -> Result<BenchRow, CliError> {
    let raw = ErrorStats::compute(&metrics::raw_errors(stream).map_err(data)?)
        .ok_or_else(|| data("empty stream"))?;
    let fused = metrics::evaluate(outputs, stream).map_err(data)?.overall;
    let raw_miss = raw.pct_miss();
    Ok(BenchRow {
        seed,
        raw,
        fused,
        ape_ratio: fused.mean_ape / raw.mean_ape,
        aoe_ratio: fused.mean_aoe / raw.mean_aoe,
        miss_ratio: (raw_miss > 0.0).then(|| fused.pct_miss() / raw_miss),
        alignments,
    })
}

pub fn run_bench(args: &BenchArgs, command: String, out: &mut dyn Write) -> Result<BenchReport, CliError> {
    let config = args.fusion.config();
    config.validate().map_err(usage)?;
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let base = args.sim.effective_seed();
    args.sim.scenario(base).validate().map_err(usage)?;

    let rows = (0..args.seeds)
        .into_par_iter()
        .map(|i| bench_seed(&args.sim.scenario(base.wrapping_add(i)), config))
        .collect::<Result<Vec<_>, _>>()?;

    let n = rows.len() as f64;
    let misses: Vec<f64> = rows.iter().filter_map(|r| r.miss_ratio).collect();
    let report = BenchReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        config,
        mean_ape_ratio: rows.iter().map(|r| r.ape_ratio).sum::<f64>() / n,
        mean_aoe_ratio: rows.iter().map(|r| r.aoe_ratio).sum::<f64>() / n,
        mean_miss_ratio: (!misses.is_empty()).then(|| misses.iter().sum::<f64>() / misses.len() as f64),
        rows,
    };

    let _ = writeln!(
        out,
        "{:>6} {:>9} {:>9} {:>7} {:>9} {:>9} {:>7} {:>8} {:>8} {:>7} {:>5}",
        "seed", "raw_ape", "fused_ape", "ape_r", "raw_aoe", "fused_aoe", "aoe_r", "raw_miss", "fus_miss", "miss_r", "align"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:>6} {:>9.3} {:>9.3} {:>7.3} {:>9.3} {:>9.3} {:>7.3} {:>7.1}% {:>7.1}% {:>7} {:>5}",
            r.seed,
            r.raw.mean_ape,
            r.fused.mean_ape,
            r.ape_ratio,
            r.raw.mean_aoe,
            r.fused.mean_aoe,
            r.aoe_ratio,
            r.raw.pct_miss(),
            r.fused.pct_miss(),
            r.miss_ratio.map_or("-".to_string(), |m| format!("{m:.3}")),
            r.alignments
        );
    }
    let _ = writeln!(
        out,
        "mean ratios: ape {:.3}  aoe {:.3}  miss {}",
        report.mean_ape_ratio,
        report.mean_aoe_ratio,
        report.mean_miss_ratio.map_or("-".to_string(), |m| format!("{m:.3}"))
    );
    if let Some(path) = &args.report {
        io::write_json(path, &report).map_err(data)?;
    }
    Ok(report)
}
