use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stance_core::embedding::Embedder;
use stance_core::eval::{report, ConfusionMatrix, EvalReport};
use stance_core::nn::{load_checkpoint, save_checkpoint, train as train_model, Dataset, EpochRecord, MlpModel};
use stance_core::predictions::{align, read_predictions, write_predictions};
use stance_core::statistical::build_vocabulary;
use stance_core::{load_corpus, split, Block, Execution, FeatureSet, Featurizer, Vocabulary};

use crate::config::{require_file, RunConfig, EFFECTIVE_CONFIG_FILE};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRAIN_CACHE: &str = "train.feat";
pub const VALIDATION_CACHE: &str = "validation.feat";
pub const HISTORY_FILE: &str = "history.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const REPORT_KV_FILE: &str = "report.kv";

#[derive(Debug, Clone)]
pub struct FeaturizeSummary {
    pub train_pairs: usize,
    pub validation_pairs: usize,
    pub dims: Vec<(Block, usize)>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub checkpoint: PathBuf,
}

/// Splits the training corpus by body, fits the vocabulary on the training
/// split, and writes both feature caches plus the effective config.
pub fn featurize(config: &RunConfig, exec: Execution) -> Result<FeaturizeSummary> {
    config.validate()?;
    let (stances, bodies) = config.train_files()?;
    let corpus = load_corpus(stances, bodies)?;
    if corpus.is_empty() {
        bail!("{} has no pairs", stances.display());
    }
    let (train, validation) = split(&corpus, config.validation_fraction, config.seed)?;
    let vocab = build_vocabulary(&train, config.features.vocab_capacity)?;

    let blocks = config.blocks()?;
    let embedder = embedder_for(config, &blocks)?;
    let lexicon = config.lexicon()?;
    let featurizer = Featurizer::new(&blocks, &vocab, &lexicon, &embedder)?;
    let train_set = featurizer.featurize(&train, exec)?;
    let validation_set = featurizer.featurize(&validation, exec)?;

    let dir = &config.paths.cache_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    vocab.save(&dir.join(VOCAB_FILE))?;
    train_set.save(&dir.join(TRAIN_CACHE))?;
    validation_set.save(&dir.join(VALIDATION_CACHE))?;
    write(&dir.join(EFFECTIVE_CONFIG_FILE), &config.absolutized()?.to_toml())?;

    Ok(FeaturizeSummary {
        train_pairs: train_set.len(),
        validation_pairs: validation_set.len(),
        dims: train_set.layout.entries().to_vec(),
    })
}

/// Trains on the cached features (building them first if absent) and
/// writes the best-validation checkpoint and the epoch history.
pub fn train(config: &RunConfig, exec: Execution) -> Result<TrainSummary> {
    config.validate()?;
    let dir = &config.paths.cache_dir;
    let (train_path, validation_path) = (dir.join(TRAIN_CACHE), dir.join(VALIDATION_CACHE));
    if !train_path.is_file() || !validation_path.is_file() {
        featurize(config, exec)?;
    }
    let blocks = config.blocks()?;
    let train_set = FeatureSet::load(&train_path)?;
    let cached: Vec<Block> = train_set.layout.blocks().collect();
    if cached != blocks {
        bail!(
            "feature cache {} holds branches [{}] but the config enables [{}]; re-run featurize",
            train_path.display(),
            join(&cached),
            join(&blocks)
        );
    }
    let validation_set = FeatureSet::load(&validation_path)?;
    if validation_set.layout != train_set.layout {
        bail!("{} and {} disagree on block layout", train_path.display(), validation_path.display());
    }

    let arch = config.architecture(&train_set.layout)?;
    // Weight init draws from its own stream so it never overlaps the
    // shuffling sequence seeded from the same value.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let model = MlpModel::init(&arch, &mut rng)?;
    let train_data = Dataset::from_features(&train_set)?;
    let validation_data = Dataset::from_features(&validation_set)?;
    drop((train_set, validation_set));
    let outcome = train_model(model, &train_data, &validation_data, &config.train_config(), exec)?;

    let checkpoint = config.checkpoint_path();
    if let Some(parent) = checkpoint.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    save_checkpoint(&outcome.model, &checkpoint)?;
    write(&dir.join(HISTORY_FILE), &history_text(&outcome.history, outcome.best_epoch))?;
    Ok(TrainSummary {
        best_epoch: outcome.best_epoch,
        history: outcome.history,
        checkpoint,
    })
}

pub fn history_text(history: &[EpochRecord], best_epoch: usize) -> String {
    let mut out = String::from("epoch\ttrain_loss\tvalidation_score\n");
    for r in history {
        let score = r.validation_score.map_or_else(|| "-".to_string(), |s| s.to_string());
        let _ = writeln!(out, "{}\t{}\t{}", r.epoch, r.train_loss, score);
    }
    let _ = writeln!(out, "# best_epoch {best_epoch}");
    out
}

/// Featurizes the labeled test files with the cached vocabulary, predicts
/// with the checkpoint, and writes predictions and both report files.
pub fn evaluate(config: &RunConfig, exec: Execution) -> Result<EvalReport> {
    config.validate()?;
    let checkpoint = config.checkpoint_path();
    require_file(&checkpoint)?;
    let (stances, bodies) = config.test_files()?;
    let corpus = load_corpus(stances, bodies)?;
    if corpus.is_empty() {
        bail!("test file {} has no pairs; nothing to evaluate", stances.display());
    }
    let model = load_checkpoint(&checkpoint)?;
    let vocab = Vocabulary::load(&config.paths.cache_dir.join(VOCAB_FILE))?;
    let blocks = config.blocks()?;
    let embedder = embedder_for(config, &blocks)?;
    let lexicon = config.lexicon()?;
    let featurizer = Featurizer::new(&blocks, &vocab, &lexicon, &embedder)?;
    if featurizer.layout != model.layout() {
        bail!(
            "checkpoint {} expects features [{}] but the config produces [{}]",
            checkpoint.display(),
            describe(model.layout().entries()),
            describe(featurizer.layout.entries())
        );
    }
    let features = featurizer.featurize(&corpus, exec)?;
    let matrices = features.matrices();
    let views: Vec<_> = matrices.iter().map(|m| m.view()).collect();
    let preds = model.predict(&views, exec)?;
    let golds = corpus.golds().expect("labeled corpus");
    let rep = report(&golds, &preds)?;

    let out = &config.paths.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_predictions(&out.join(PREDICTIONS_FILE), corpus.pairs(), &preds)?;
    write_reports(&rep, out)?;
    Ok(rep)
}

/// Reports on a stored 4×4 confusion matrix without any model.
pub fn report_from_confusion(path: &Path, output_dir: Option<&Path>) -> Result<EvalReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rep = EvalReport::from_confusion(ConfusionMatrix::parse(&text)?)?;
    if let Some(dir) = output_dir {
        write_reports(&rep, dir)?;
    }
    Ok(rep)
}

/// Scores `predicted` against `gold`; both are CSVs with Headline, Body ID
/// and Stance columns in the same row order.
pub fn score(gold: &Path, predicted: &Path, output_dir: Option<&Path>) -> Result<EvalReport> {
    let g = read_predictions(gold)?;
    let p = read_predictions(predicted)?;
    if g.is_empty() {
        bail!("{} has no rows", gold.display());
    }
    let (golds, preds) = align(&g, &p)?;
    let rep = report(&golds, &preds)?;
    if let Some(dir) = output_dir {
        write_reports(&rep, dir)?;
    }
    Ok(rep)
}

pub fn write_reports(rep: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join(REPORT_TABLE_FILE), &rep.to_table())?;
    write(&dir.join(REPORT_KV_FILE), &rep.to_key_values())
}

fn embedder_for(config: &RunConfig, blocks: &[Block]) -> Result<Embedder> {
    if blocks.contains(&Block::Neural) {
        config.embedder()
    } else {
        // Never queried; only its width is read, and only for the neural block.
        Ok(Embedder::Fallback {
            dim: config.embedder.fallback_dim,
            seed: 0,
        })
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn join(blocks: &[Block]) -> String {
    blocks.iter().map(|b| b.name()).collect::<Vec<_>>().join(",")
}

fn describe(entries: &[(Block, usize)]) -> String {
    entries.iter().map(|(b, w)| format!("{b}:{w}")).collect::<Vec<_>>().join(", ")
}
