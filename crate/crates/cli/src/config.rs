//! Declarative run configuration: one TOML file, every field optional,
//! command-line flags applied on top.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stance_core::embedding::{load_embeddings, Embedder, DEFAULT_EMBEDDING_DIM};
use stance_core::external::PolarityLexicon;
use stance_core::nn::{Activation, Architecture, BranchHyper, TrainConfig};
use stance_core::statistical::DEFAULT_VOCAB_CAPACITY;
use stance_core::{Block, BlockLayout};

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Share of training pairs (split by body) held out for early stopping.
    pub validation_fraction: f64,
    /// Enabled feature branches: any of `neural`, `stat`, `ext`.
    pub branches: Vec<String>,
    pub paths: Paths,
    pub embedder: EmbedderConfig,
    pub features: FeatureConfig,
    pub training: TrainingConfig,
    pub neural: BranchConfig,
    pub stat: BranchConfig,
    pub ext: BranchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train_stances: Option<PathBuf>,
    pub train_bodies: Option<PathBuf>,
    pub test_stances: Option<PathBuf>,
    pub test_bodies: Option<PathBuf>,
    /// Sentence-vector store (binary or text). Unused with a fallback seed.
    pub embeddings: Option<PathBuf>,
    /// Refuting-word list, one word per line. Built-in list if absent.
    pub lexicon: Option<PathBuf>,
    /// Feature caches, vocabulary and training history.
    pub cache_dir: PathBuf,
    /// Defaults to `model.ckpt` inside the cache directory.
    pub checkpoint: Option<PathBuf>,
    /// Predictions and reports.
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    /// When set, sentences are embedded by the hashed fallback instead of
    /// looked up in the store.
    pub fallback_seed: Option<u64>,
    pub fallback_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub vocab_capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub widths: Vec<usize>,
    pub activation: String,
    /// Fraction of first-layer units dropped during training.
    pub dropout: f64,
    /// L2 coefficient on the first layer's weights.
    pub l2: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            validation_fraction: 0.1,
            branches: Block::ALL.iter().map(|b| b.name().to_string()).collect(),
            paths: Paths::default(),
            embedder: EmbedderConfig::default(),
            features: FeatureConfig::default(),
            training: TrainingConfig::default(),
            neural: BranchHyper::neural_default().into(),
            stat: BranchHyper::statistical_default().into(),
            ext: BranchHyper::external_default().into(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            train_stances: None,
            train_bodies: None,
            test_stances: None,
            test_bodies: None,
            embeddings: None,
            lexicon: None,
            cache_dir: PathBuf::from("cache"),
            checkpoint: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            fallback_seed: None,
            fallback_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            vocab_capacity: DEFAULT_VOCAB_CAPACITY,
        }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingConfig {
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            learning_rate: t.learning_rate,
        }
    }
}

impl From<BranchHyper> for BranchConfig {
    fn from(h: BranchHyper) -> Self {
        BranchConfig {
            widths: h.widths,
            activation: h.activation.to_string(),
            dropout: h.first_dropout_rate,
            l2: h.first_l2,
        }
    }
}

impl BranchConfig {
    fn hyper(&self) -> Result<BranchHyper> {
        let activation: Activation = self
            .activation
            .parse()
            .map_err(|_| anyhow::anyhow!("unknown activation `{}`", self.activation))?;
        if !(0.0..1.0).contains(&self.dropout) {
            bail!("dropout rate {} outside [0, 1)", self.dropout);
        }
        Ok(BranchHyper {
            widths: self.widths.clone(),
            activation,
            first_dropout_rate: self.dropout,
            first_l2: self.l2,
        })
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub branches: Option<Vec<String>>,
    pub fallback_seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path`; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(base) = path.parent() {
            config.paths.rebase(base);
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(b) = &o.branches {
            self.branches = b.clone();
        }
        if let Some(seed) = o.fallback_seed {
            self.embedder.fallback_seed = Some(seed);
        }
        if let Some(dir) = &o.cache_dir {
            self.paths.cache_dir = dir.clone();
        }
        if let Some(p) = &o.checkpoint {
            self.paths.checkpoint = Some(p.clone());
        }
        if let Some(dir) = &o.output_dir {
            self.paths.output_dir = dir.clone();
        }
    }

    /// Copy with every relative path made absolute against the working
    /// directory, so the written config works from wherever it is stored.
    pub fn absolutized(&self) -> Result<Self> {
        let cwd = std::env::current_dir().context("reading the working directory")?;
        let mut c = self.clone();
        c.paths.rebase(&cwd);
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Enabled branches in canonical order, duplicates rejected.
    pub fn blocks(&self) -> Result<Vec<Block>> {
        let mut blocks = Vec::new();
        for name in &self.branches {
            let block: Block = name.trim().parse().map_err(|_| anyhow::anyhow!("unknown branch `{name}`"))?;
            if blocks.contains(&block) {
                bail!("branch `{name}` listed twice");
            }
            blocks.push(block);
        }
        if blocks.is_empty() {
            bail!("at least one feature branch must be enabled");
        }
        blocks.sort();
        Ok(blocks)
    }

    pub fn validate(&self) -> Result<()> {
        self.blocks()?;
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            bail!("validation_fraction must lie in (0, 1), got {}", self.validation_fraction);
        }
        if self.features.vocab_capacity == 0 || self.embedder.fallback_dim == 0 {
            bail!("vocab_capacity and fallback_dim must be positive");
        }
        self.train_config().validate()?;
        for b in [&self.neural, &self.stat, &self.ext] {
            b.hyper()?;
        }
        for p in [&self.paths.embeddings, &self.paths.lexicon].into_iter().flatten() {
            require_file(p)?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.training.batch_size,
            max_epochs: self.training.max_epochs,
            patience: self.training.patience,
            learning_rate: self.training.learning_rate,
            seed: self.seed,
        }
    }

    pub fn architecture(&self, layout: &BlockLayout) -> Result<Architecture> {
        let hypers = [self.neural.hyper()?, self.stat.hyper()?, self.ext.hyper()?];
        Ok(Architecture::from_layout(layout, |block| match block {
            Block::Neural => hypers[0].clone(),
            Block::Statistical => hypers[1].clone(),
            Block::External => hypers[2].clone(),
        })?)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths.checkpoint.clone().unwrap_or_else(|| self.paths.cache_dir.join("model.ckpt"))
    }

    pub fn lexicon(&self) -> Result<PolarityLexicon> {
        match &self.paths.lexicon {
            Some(p) => Ok(PolarityLexicon::load(p)?),
            None => Ok(PolarityLexicon::default()),
        }
    }

    /// The configured sentence embedder. Only called when the neural
    /// branch is enabled.
    pub fn embedder(&self) -> Result<Embedder> {
        if let Some(seed) = self.embedder.fallback_seed {
            return Ok(Embedder::Fallback {
                dim: self.embedder.fallback_dim,
                seed,
            });
        }
        match &self.paths.embeddings {
            Some(p) => Ok(Embedder::Store(load_embeddings(p)?)),
            None => bail!("the neural branch needs `paths.embeddings` or `--fallback-embedder seed=<int>`"),
        }
    }

    pub fn train_files(&self) -> Result<(&Path, &Path)> {
        pair_of(&self.paths.train_stances, &self.paths.train_bodies, "train")
    }

    pub fn test_files(&self) -> Result<(&Path, &Path)> {
        pair_of(&self.paths.test_stances, &self.paths.test_bodies, "test")
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.train_stances,
            &mut self.train_bodies,
            &mut self.test_stances,
            &mut self.test_bodies,
            &mut self.embeddings,
            &mut self.lexicon,
            &mut self.checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.cache_dir);
        fix(&mut self.output_dir);
    }
}

fn pair_of<'a>(stances: &'a Option<PathBuf>, bodies: &'a Option<PathBuf>, split: &str) -> Result<(&'a Path, &'a Path)> {
    match (stances, bodies) {
        (Some(s), Some(b)) => {
            require_file(s)?;
            require_file(b)?;
            Ok((s, b))
        }
        _ => bail!("`paths.{split}_stances` and `paths.{split}_bodies` must both be set"),
    }
}

pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{} does not exist", path.display());
    }
    Ok(())
}

/// Parses `seed=<int>` (a bare integer is accepted too).
pub fn parse_fallback_spec(spec: &str) -> Result<u64, String> {
    let value = spec.strip_prefix("seed=").unwrap_or(spec);
    value
        .trim()
        .parse()
        .map_err(|_| format!("expected `seed=<int>`, got `{spec}`"))
}
