//! Command-line front end: dataset generation, training, evaluation,
//! rate studies and the self-test suite.
//!
//! Worker count is controlled by `RAYON_NUM_THREADS` (builds with the
//! default `parallel` feature); results are bit-identical across worker
//! counts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cblab_core::contrastive::ContrastiveTarget;
use cblab_core::erm::{train_global_erm, train_local_erm, LocalizationSpec, TrainConfig};
use cblab_core::evaluation::{excess_misclassification, l2_risk, risk_report};
use cblab_core::harness::{run_rate_study, selftest::selftest, ExperimentConfig};
use cblab_core::pairgen::{generate, GeneratorConfig, PairwiseDataset};
use cblab_core::partition::{BaseDensity, SmoothPartition};
use cblab_core::simplexnet::{load_checkpoint, save_checkpoint};

#[derive(Parser)]
#[command(
    name = "cblab",
    about = "Contrastive estimation of smooth decision boundaries from pairwise data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a pairwise dataset (CSV plus a JSON sidecar).
    Gen(GenArgs),
    /// Train a single run (global ERM, optionally localized) and write a
    /// checkpoint.
    Train(TrainArgs),
    /// Evaluate the risks of a checkpoint against a ground-truth partition.
    Eval(EvalArgs),
    /// Run a full convergence-rate study from a config file.
    RateStudy(RateStudyArgs),
    /// Run every invariant suite; nonzero exit status on any failure.
    Selftest,
}

#[derive(Args)]
struct GenArgs {
    /// Partition JSON document.
    #[arg(long)]
    partition: PathBuf,
    /// Similarity probability of the generator.
    #[arg(long)]
    c: f64,
    /// Number of pairs.
    #[arg(long)]
    n: usize,
    /// Output CSV path (a .json sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo points for estimating part probabilities.
    #[arg(long, default_value_t = 200_000)]
    probs_mc: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV (from `gen`).
    #[arg(long)]
    data: PathBuf,
    /// Partition JSON document (ground truth; defines the frame and the
    /// localization oracle).
    #[arg(long)]
    partition: PathBuf,
    /// Trainer config JSON; see README for the schema.
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Training-trace CSV output path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint JSON (from `train`).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Partition JSON document.
    #[arg(long)]
    partition: PathBuf,
    /// Quadrature nodes for the L² and misclassification risks.
    #[arg(long, default_value_t = 65_536)]
    nodes: usize,
    /// Generator similarity probability; when set, the excess hinge risk is
    /// estimated as well.
    #[arg(long)]
    c: Option<f64>,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RateStudyArgs {
    /// Experiment config JSON; see README for the schema.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

/// Trainer config file: the optimizer settings plus an optional
/// localization block (presence selects the local ERM).
#[derive(serde::Deserialize)]
struct TrainFileConfig {
    train: TrainConfig,
    #[serde(default)]
    localization: Option<LocalizationSpec>,
}

fn load_partition(path: &Path) -> Result<SmoothPartition> {
    let json = std::fs::read_to_string(path)
        .with_context(|| format!("reading partition {}", path.display()))?;
    Ok(SmoothPartition::from_json(&json)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::RateStudy(args) => cmd_rate_study(args),
        Command::Selftest => cmd_selftest(),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let partition = load_partition(&args.partition)?;
    let density = BaseDensity::uniform(partition.d0());
    let probs = partition
        .part_probabilities(&density, args.probs_mc, args.seed ^ 0x70726f62)?
        .probs;
    let cfg = GeneratorConfig::new(partition, density, args.c, probs, args.seed)?;
    let ds = generate(&cfg, args.n)?;
    ds.save(&args.out)?;
    println!(
        "wrote {} pairs to {} (fingerprint {:016x})",
        ds.len(),
        args.out.display(),
        ds.fingerprint
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let partition = load_partition(&args.partition)?;
    let target = ContrastiveTarget::new(partition)?;
    let ds = PairwiseDataset::load(&args.data)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;
    let raw = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading trainer config {}", args.config.display()))?;
    let mut cfg: TrainFileConfig = serde_json::from_str(&raw)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }

    let outcome = match &cfg.localization {
        Some(spec) => {
            let (outcome, report) =
                train_local_erm(&cfg.train, &ds, target.frame(), &target, spec)?;
            println!("pool report:\n{}", report.to_json());
            outcome
        }
        None => train_global_erm(&cfg.train, &ds, target.frame())?,
    };
    save_checkpoint(&outcome.net, &args.out)?;
    if let Some(trace_path) = &args.trace {
        std::fs::write(trace_path, outcome.trace.to_csv_string())?;
    }
    println!(
        "best empirical risk {} at epoch {}; checkpoint written to {}",
        outcome.best_risk,
        outcome.best_epoch,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let partition = load_partition(&args.partition)?;
    let target = ContrastiveTarget::new(partition.clone())?;
    let net = load_checkpoint(&args.checkpoint)?;
    let density = BaseDensity::uniform(partition.d0());

    let report = match args.c {
        Some(c) => {
            let probs = partition
                .part_probabilities(&density, 200_000, args.seed ^ 0x70726f62)?
                .probs;
            let gen_cfg = GeneratorConfig::new(partition, density, c, probs, args.seed)?;
            risk_report(&net, &target, &gen_cfg, &density, args.nodes, 20_000, args.seed)?
        }
        None => {
            let mut report = l2_risk(&net, &target, &density, args.nodes, args.seed)?;
            report.excess_misclass = Some(excess_misclassification(
                &net,
                &target,
                &density,
                args.nodes,
                args.seed,
            )?);
            report
        }
    };
    let json = report.to_json();
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)?;
            println!("report written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_rate_study(args: RateStudyArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading study config {}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&raw)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let result = run_rate_study(&cfg)?;
    for (n, median) in &result.medians {
        println!("n = {n}: median total_l2 = {median}");
    }
    match &result.slope {
        Some(fit) => println!(
            "fitted log-log slope {:.4} (95% CI [{:.4}, {:.4}], {} points)",
            fit.slope, fit.ci95.0, fit.ci95.1, fit.used
        ),
        None => println!("slope: not fitted (fewer than 3 positive medians)"),
    }
    if let Some(dir) = &cfg.output_dir {
        println!("rows written to {}", dir.join("results.csv").display());
    }
    let failed: Vec<_> = result.cells.iter().filter(|c| c.error.is_some()).collect();
    if !failed.is_empty() {
        bail!("{} of {} cells failed", failed.len(), result.cells.len());
    }
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let report = selftest()?;
    print!("{}", report.render());
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}
