use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, AdamState, MlpModel, Mode};
use crate::corpus::Stance;
use crate::error::{Error, Result};
use crate::eval::{confusion, score_official_weighted};
use crate::features::FeatureSet;
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            max_epochs: 50,
            patience: 5,
            learning_rate: AdamState::DEFAULT_LEARNING_RATE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Parameter("batch size, patience and epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Labeled design matrices, one per branch, in canonical block order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Array2<f64>>,
    pub labels: Vec<Stance>,
}

impl Dataset {
    pub fn new(inputs: Vec<Array2<f64>>, labels: Vec<Stance>) -> Result<Self> {
        if inputs.iter().any(|m| m.nrows() != labels.len()) {
            return Err(Error::Parameter("input rows and label count differ".into()));
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn from_features(set: &FeatureSet) -> Result<Self> {
        let labels = set
            .golds()
            .ok_or_else(|| Error::Parameter("training features must all be labeled".into()))?;
        Self::new(set.matrices(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.inputs.iter().map(|m| m.view()).collect()
    }

    fn gather(&self, rows: &[usize]) -> (Vec<Array2<f64>>, Vec<Stance>) {
        let inputs = self.inputs.iter().map(|m| m.select(Axis(0), rows)).collect();
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        (inputs, labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation checkpoint, or the last epoch without validation data.
    pub model: MlpModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Mini-batch Adam with per-epoch shuffling and early stopping on the
/// official FNC score of the validation set.
pub fn train(
    model: MlpModel,
    train_set: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    let scorer = |m: &MlpModel| -> Result<Option<f64>> {
        if validation.is_empty() {
            return Ok(None);
        }
        let preds = m.predict(&validation.views(), exec)?;
        Ok(Some(score_official_weighted(&confusion(&validation.labels, &preds)?)))
    };
    train_with_scorer(model, train_set, config, exec, scorer)
}

/// [`train`] with a caller-supplied validation score (higher is better;
/// `None` disables early stopping).
pub fn train_with_scorer(
    mut model: MlpModel,
    train_set: &Dataset,
    config: &TrainConfig,
    exec: Execution,
    mut scorer: impl FnMut(&MlpModel) -> Result<Option<f64>>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set has no examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&model, config.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for rows in order.chunks(config.batch_size) {
            let (inputs, labels) = train_set.gather(rows);
            let views: Vec<ArrayView2<f64>> = inputs.iter().map(|m| m.view()).collect();
            let cache = model.forward(&views, Mode::Train(&mut rng), exec)?;
            loss_sum += model.loss(cache.probabilities(), &labels) * rows.len() as f64;
            let grads = model.backward(&cache, &labels, exec)?;
            adam_step(&mut model, &grads, &mut adam)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let validation_score = scorer(&model)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_score,
        });

        let Some(score) = validation_score else {
            continue;
        };
        match &best {
            Some((best_score, _, _)) if score <= *best_score => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            _ => {
                best = Some((score, epoch, model.clone()));
                stale = 0;
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, epoch, m)) => (m, epoch),
        None => (model, history.len()),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}
