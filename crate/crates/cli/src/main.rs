//! Command-line pipeline: synthesize scenes, cluster tracking files into
//! centroid trajectories, evaluate the clustering, and compare prediction
//! sources.
//!
//! All file outputs are deterministic given identical inputs, config, and
//! seed. Wall-clock and memory figures go to stderr and to `*_perf.txt`
//! sidecars, which are measurements of the run rather than part of it.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(
    name = "dyncrowd",
    version,
    about = "Streaming dynamic clustering of dense pedestrian tracks"
)]
struct Cli {
    /// Worker threads for metric and scoring stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a MOT tracking file into centroid trajectories.
    Cluster(ClusterArgs),
    /// Score a clustering run against ground truth (CMDD, CTEO, CTEL, counts).
    Evaluate(EvaluateArgs),
    /// Compare prediction sources (gt, cluster, tracking, random) end-to-end.
    Predict(PredictArgs),
    /// Generate a synthetic crowd scene with tracker noise.
    Synth(SynthArgs),
    /// Consolidate a run directory into plot-data files and a summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct ClusterArgs {
    /// Input MOT tracking file.
    #[arg(long)]
    input: PathBuf,
    /// Output run directory.
    #[arg(long)]
    output: PathBuf,
    /// Engine config file (flat key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Centroid MOT file produced by `cluster`.
    #[arg(long)]
    centroids: PathBuf,
    /// Event log produced by `cluster`.
    #[arg(long)]
    events: PathBuf,
    /// Ground-truth (or original input) MOT file.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for the report tables.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Tracking MOT file fed to the pipeline.
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth MOT file for evaluation targets (defaults to --input).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory for the comparison table.
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated sources, or "all": gt,cluster,tracking,random.
    #[arg(long, default_value = "all")]
    source: String,
    /// Prediction horizon in frames.
    #[arg(long, default_value_t = 12)]
    horizon: usize,
    /// Trailing observations fed to the predictor per node.
    #[arg(long, default_value_t = 8)]
    history: usize,
    /// Keep fraction for the random baseline; defaults to the cluster
    /// compression ratio.
    #[arg(long)]
    keep_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec file (TOML); defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    /// Override the spec seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory written by `cluster`.
    #[arg(long)]
    run: PathBuf,
    /// Output directory for plot-data files.
    #[arg(long)]
    output: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DYNCROWD_LOG")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Cluster(args) => commands::cluster(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Predict(args) => commands::predict(args),
        Command::Synth(args) => commands::synth(args),
        Command::Report(args) => commands::report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

pub(crate) fn load_config(path: &Option<PathBuf>) -> Result<dyncrowd_core::Config64> {
    match path {
        Some(p) => dyncrowd_core::io::read_config_path(p)
            .with_context(|| format!("reading config {}", p.display())),
        None => Ok(dyncrowd_core::Config64::default()),
    }
}

pub(crate) fn ensure_dir(path: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(())
}

pub(crate) fn parse_sources(s: &str) -> Result<Vec<dyncrowd_core::predictor::PredictionSource>> {
    use dyncrowd_core::predictor::PredictionSource;
    if s == "all" {
        return Ok(PredictionSource::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.parse::<PredictionSource>() {
            Ok(src) => {
                if !out.contains(&src) {
                    out.push(src);
                }
            }
            Err(e) => bail!(e),
        }
    }
    if out.is_empty() {
        bail!("no prediction sources selected");
    }
    Ok(out)
}
