use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use stance_cli::commands::{self, PREDICTIONS_FILE};
use stance_cli::config::{parse_fallback_spec, Overrides, RunConfig};
use stance_cli::synth::synthetic_corpus;
use stance_core::Execution;

/// Headline/body stance detection: featurize, train, evaluate, score.
#[derive(Parser)]
#[command(name = "stance", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated feature branches, e.g. `neural,stat,ext`.
    #[arg(long, global = true, value_delimiter = ',')]
    branches: Option<Vec<String>>,
    /// Use the hashed fallback embedder instead of an embedding store.
    #[arg(long, global = true, value_name = "seed=<int>", value_parser = parse_fallback_spec)]
    fallback_embedder: Option<u64>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Run single-threaded. Results are identical either way.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the training corpus and write feature caches.
    Featurize,
    /// Train on the feature caches and write a checkpoint.
    Train,
    /// Predict the test files and write predictions and reports.
    Evaluate {
        /// Report on a stored 4x4 confusion matrix instead (gold rows,
        /// predicted columns, order agree/disagree/discuss/unrelated).
        #[arg(long)]
        confusion_matrix: Option<PathBuf>,
    },
    /// Score a prediction CSV against a gold CSV.
    Score { gold: PathBuf, predicted: PathBuf },
    /// Write a synthetic labeled corpus (stances and bodies CSVs).
    Synth {
        #[arg(long, default_value_t = 500)]
        pairs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration.
    Config,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        seed: cli.seed,
        branches: cli.branches.clone(),
        fallback_seed: cli.fallback_embedder,
        cache_dir: cli.cache_dir.clone(),
        checkpoint: cli.checkpoint.clone(),
        output_dir: cli.output_dir.clone(),
    });
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };

    match cli.command {
        Command::Featurize => {
            let s = commands::featurize(&config, exec)?;
            let dims: Vec<String> = s.dims.iter().map(|(b, w)| format!("{b}={w}")).collect();
            println!(
                "featurized {} train / {} validation pairs [{}] into {}",
                s.train_pairs,
                s.validation_pairs,
                dims.join(" "),
                config.paths.cache_dir.display()
            );
        }
        Command::Train => {
            let s = commands::train(&config, exec)?;
            for r in &s.history {
                let score = r.validation_score.map_or_else(|| "-".into(), |v| format!("{v:.2}"));
                println!("epoch {:>3}  loss {:.4}  validation {score}", r.epoch, r.train_loss);
            }
            println!("best epoch {}; checkpoint {}", s.best_epoch, s.checkpoint.display());
        }
        Command::Evaluate { confusion_matrix } => {
            let rep = match confusion_matrix {
                Some(path) => commands::report_from_confusion(&path, Some(&config.paths.output_dir))?,
                None => {
                    let rep = commands::evaluate(&config, exec)?;
                    println!("predictions: {}", config.paths.output_dir.join(PREDICTIONS_FILE).display());
                    rep
                }
            };
            print!("{}", rep.to_table());
        }
        Command::Score { gold, predicted } => {
            let rep = commands::score(&gold, &predicted, cli.output_dir.as_deref())?;
            print!("{}", rep.to_table());
        }
        Command::Synth { pairs, out } => {
            let corpus = synthetic_corpus(pairs, config.seed);
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let (s, b) = (out.join("stances.csv"), out.join("bodies.csv"));
            corpus.write_csv(&s, &b)?;
            println!("wrote {} and {}", s.display(), b.display());
        }
        Command::Config => print!("{}", config.to_toml()),
    }
    Ok(())
}
