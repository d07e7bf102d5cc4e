//! `cfbound` — dataset generation, oracle queries, BGM curves, bound
//! estimation and plots.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod apid;
mod commands;
mod failure;
mod grid;
mod manifest;
mod plot;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "cfbound",
    version,
    about = "Partial counterfactual identification with curvature-penalized flows"
)]
struct Cli {
    /// Worker threads for grid sweeps (one worker per y′); defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Upper limit on worker threads, whatever --jobs says.
    #[arg(long, global = true, env = "CF_BOUNDS_THREADS", hide_env_values = true)]
    max_threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset and write it as `a,y` CSV.
    GenData(GenDataArgs),
    /// Exact counterfactual query and observational density of an analytic SCM.
    Oracle(OracleArgs),
    /// Point-identified counterfactual curves of monotone mechanisms.
    Bgm(BgmArgs),
    /// Train the curvature-penalized model and report lower and upper bounds.
    Apid(ApidArgs),
    /// Render bound curves or a curvature heatmap as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug, serde::Serialize)]
pub struct GenDataArgs {
    /// Benchmark to draw: 1 (both arms standard normal) or 2 (Gaussian mixtures).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub dataset: u8,
    /// Samples drawn for each arm.
    #[arg(long)]
    pub n_per_arm: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScmName {
    M1,
    M2,
    Boxmuller,
    Mperp,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub scm: ScmName,
    /// Factual arm a′.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub aprime: u8,
    /// Factual outcome y′.
    #[arg(long, allow_hyphen_values = true)]
    pub yprime: f64,
    /// Counterfactual arm a.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub a: u8,
    /// Marching-squares grid resolution.
    #[arg(long, default_value_t = 512)]
    pub grid_res: usize,
    /// Outcome grid `lo:hi:n` for the density curve of arm a′; defaults to
    /// 101 points over its support clipped to [−4, 4].
    #[arg(long, allow_hyphen_values = true)]
    pub density_grid: Option<String>,
    /// Write JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
pub enum DirectionArg {
    #[value(name = "0to1")]
    #[serde(rename = "0to1")]
    ZeroToOne,
    #[value(name = "1to0")]
    #[serde(rename = "1to0")]
    OneToZero,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct BgmArgs {
    /// Dataset CSV with header `a,y`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "0to1")]
    pub direction: DirectionArg,
    /// Factual outcome grid `lo:hi:n`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    Desk,
    Paper,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct ApidArgs {
    /// Dataset CSV with header `a,y`.
    #[arg(long)]
    pub data: PathBuf,
    /// Factual arm a′.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub aprime: u8,
    /// Factual outcomes, comma-separated or repeated; several values train in parallel.
    #[arg(
        long,
        required = true,
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub yprime: Vec<f64>,
    /// Counterfactual arm a.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub a: u8,
    /// Weight of the query loss pushing each copy toward its bound.
    #[arg(long, default_value_t = 2.0)]
    pub lambda_q: f64,
    /// Weight of the level-set curvature penalty.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_kappa: f64,
    /// Seed for initialization, minibatches and Monte-Carlo draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `paper`: the published schedule; `desk`: batch 16 and a 100-step curvature stage.
    #[arg(long, value_enum, default_value = "paper")]
    pub preset: PresetArg,
    /// Bounds JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines training log; defaults to the output path with extension `jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Directory receiving the EMA-smoothed upper and lower model checkpoints.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Report training progress on standard error.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct PlotArgs {
    /// Bounds JSON and BGM CSV files (curves), or a single model checkpoint (heatmap).
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Arm whose flow the curvature heatmap shows.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1), default_value_t = 1)]
    pub arm: u8,
    /// Heatmap cells per side.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Number of level sets drawn over the heatmap.
    #[arg(long, default_value_t = 7)]
    pub levels: usize,
    #[arg(long)]
    pub title: Option<String>,
}

fn threads(jobs: Option<usize>, cap: Option<usize>) -> usize {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n = jobs.unwrap_or(all).max(1);
    cap.map_or(n, |c| n.min(c.max(1)))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let n = threads(cli.jobs, cli.max_threads);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot start {n} worker threads: {e}")))?;
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Bgm(a) => commands::bgm(&a),
        Command::Apid(a) => apid::run(&a),
        Command::Plot(a) => plot::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
