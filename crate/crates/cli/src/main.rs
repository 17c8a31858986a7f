use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use kronfeat::harness::{self, config::ExperimentConfig, config::ExperimentKind};

#[derive(Parser)]
#[command(name = "kronfeat", version, about = "Layer-wise preconditioned feature learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Subspace distance and losses over training, one trace per method.
    Headtohead(RunArgs),
    /// Final subspace distance over a learning-rate grid.
    #[command(name = "lr_sweep", alias = "lr-sweep")]
    LrSweep(RunArgs),
    /// AMGD with and without batch whitening against KFAC.
    Batchnorm(RunArgs),
    /// Single-index alignment over lambda, with theory.
    #[command(name = "single_index_lambda", alias = "single-index-lambda")]
    SingleIndexLambda(RunArgs),
    /// Single-index alignment over the spike strength, with theory.
    #[command(name = "single_index_epsilon", alias = "single-index-epsilon")]
    SingleIndexEpsilon(RunArgs),
    /// Population AMGD on the hard instance against its envelope.
    #[command(name = "lower_bound", alias = "lower-bound")]
    LowerBound(RunArgs),
    /// Pretraining on several tasks, transfer to a new head.
    Multitask(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `trials`.
    #[arg(long)]
    trials: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Headtohead(a) => (ExperimentKind::Headtohead, a),
            Command::LrSweep(a) => (ExperimentKind::LrSweep, a),
            Command::Batchnorm(a) => (ExperimentKind::Batchnorm, a),
            Command::SingleIndexLambda(a) => (ExperimentKind::SingleIndexLambda, a),
            Command::SingleIndexEpsilon(a) => (ExperimentKind::SingleIndexEpsilon, a),
            Command::LowerBound(a) => (ExperimentKind::LowerBound, a),
            Command::Multitask(a) => (ExperimentKind::Multitask, a),
        }
    }
}

fn main() -> anyhow::Result<()> {
    let (kind, args) = Cli::parse().command.split();
    let mut cfg = ExperimentConfig::from_path(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    if cfg.experiment != kind {
        bail!("config {} is for `{}`, not `{}`", args.config.display(), cfg.experiment, kind);
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    let out = match (args.out, &cfg.output_dir) {
        (Some(p), _) => p,
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => bail!("no --out given and the config has no output_dir"),
    };
    let record = harness::run(&cfg)?;
    let files = harness::write_outputs(&record, &out, args.svg)?;
    eprintln!("{kind}: {} trials in {:.1}s, {} files in {}", cfg.trials, record.wall_clock_secs, files.len(), out.display());
    Ok(())
}
