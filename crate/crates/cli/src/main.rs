//! `sscprune`: prune, evaluate, inspect and compare channel selectors.
//!
//! Exit codes: 0 success, 2 bad input or file, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sscprune::RunConfig;

mod commands;

#[derive(Parser)]
#[command(name = "sscprune", version, about = "Filter pruning by subspace clustering of feature maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prune a model with a strategy file and write the pruned model and a report.
    Prune(PruneArgs),
    /// Print top-k accuracy of a model on a labelled tensor directory.
    Eval(EvalArgs),
    /// Print per-layer output shapes, parameters and FLOPs.
    Inspect(InspectArgs),
    /// Prune one layer pair with several selectors and ratios.
    Compare(CompareArgs),
    /// Write a reference model and optionally a labelled synthetic dataset.
    Synth(SynthArgs),
}

/// Options shared by commands that run the solvers.
#[derive(Args)]
struct RunOptions {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker bound. Work currently runs on one thread regardless.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Maximum number of calibration tensors to load.
    #[arg(long, default_value_t = 64)]
    limit: usize,
}

impl RunOptions {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        if self.threads == 0 {
            bail!(sscprune::Error::Parameter("--threads must be at least 1".into()));
        }
        let mut cfg = match &self.config {
            Some(path) => sscprune::io::load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory of calibration tensors.
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    strategy: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    run: RunOptions,
    /// Labelled tensor directory; records accuracy before and after in the report.
    #[arg(long, requires = "labels")]
    eval_data: Option<PathBuf>,
    #[arg(long, requires = "eval_data")]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    topk: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 1)]
    topk: usize,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    /// Conv layer whose input channels are pruned.
    #[arg(long)]
    layer: String,
    /// Comma-separated speed-up ratios.
    #[arg(long, value_delimiter = ',', required = true)]
    ratios: Vec<f64>,
    /// Comma-separated selectors: firstk, random, maxresponse, kmeans, ssc.
    #[arg(long, value_delimiter = ',', required = true)]
    selectors: Vec<String>,
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    run: RunOptions,
    /// Labelled held-out tensor directory for output error and accuracy.
    #[arg(long, requires = "labels")]
    eval_data: Option<PathBuf>,
    #[arg(long, requires = "eval_data")]
    labels: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    /// VGG-16 at 224×224 with zero weights, for cost accounting.
    Vgg16,
    /// Four-conv VGG-style net on 3×16×16 inputs.
    ToyVgg,
    /// Three-conv net whose middle layer holds 8 duplicated filter pairs.
    Planted,
    /// Two bottleneck residual blocks on 3×8×8 inputs.
    ToyResnet,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    arch: Arch,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Size of the perturbation applied to each planted duplicate.
    #[arg(long, default_value_t = 1e-3)]
    perturbation: f32,
    /// Also write labelled inputs here, labelled by the model's own predictions.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<sscprune::Error>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prune(a) => commands::prune(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Inspect(a) => commands::inspect(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Synth(a) => commands::synth(&a).context("synth failed"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
