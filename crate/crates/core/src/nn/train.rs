use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{self, LossKind, Target};
use super::model::{ForwardCache, InputBatch, ModelInput, ModelParams};
use super::optim::{OptimizerKind, OptimizerState};
use super::real::Real;
use crate::datasets::split_indices;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub loss: LossKind,
    #[serde(default = "default_train_ratio")]
    pub train_ratio: f64,
    /// Weight cross-entropy terms by inverse class frequency of the training split.
    #[serde(default)]
    pub balance_classes: bool,
}

fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    64
}
fn default_train_ratio() -> f64 {
    0.7
}

impl TrainConfig {
    /// Point classifier: SGD with momentum, cross-entropy, 100 epochs.
    pub fn classifier() -> Self {
        Self {
            optimizer: OptimizerKind::sgd(),
            learning_rate: default_lr(),
            epochs: 100,
            batch_size: default_batch(),
            loss: LossKind::CrossEntropy,
            train_ratio: default_train_ratio(),
            balance_classes: true,
        }
    }

    /// Region regressor: Adam, mean squared error, 300 epochs.
    pub fn regressor() -> Self {
        Self {
            optimizer: OptimizerKind::adam(),
            learning_rate: default_lr(),
            epochs: 300,
            batch_size: default_batch(),
            loss: LossKind::Mse,
            train_ratio: default_train_ratio(),
            balance_classes: false,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }
}

/// One training example. Examples sharing a `group` (e.g. rotations of one
/// captured sample) always land on the same side of the train/validation split.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: ModelInput,
    pub target: Target,
    pub group: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub train_size: usize,
    pub val_size: usize,
}

impl History {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Loss (and accuracy, for classification) of `params` over `examples`.
pub fn evaluate<T: Real>(params: &ModelParams<T>, examples: &[&Example], kind: LossKind, chunk: usize) -> Result<(f64, Option<f64>)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let outs = params.head.outputs();
    let mut total = 0.0;
    let mut correct = 0usize;
    let mut batch = InputBatch::<T>::default();
    let mut cache = ForwardCache::default();
    for part in examples.chunks(chunk.max(1)) {
        batch.fill(part.iter().map(|e| &e.input))?;
        params.forward_into(&batch, &mut cache);
        let out = &cache.output;
        let targets: Vec<Target> = part.iter().map(|e| e.target).collect();
        let (l, _) = loss::evaluate(kind, out, &targets);
        total += l.as_f64() * part.len() as f64;
        if outs == 2 {
            for (row, t) in out.chunks_exact(2).zip(&targets) {
                let pred = u8::from(row[1] > row[0]);
                if matches!(t, Target::Class(c) if *c == pred) {
                    correct += 1;
                }
            }
        }
    }
    let n = examples.len() as f64;
    let acc = (outs == 2).then(|| correct as f64 / n);
    Ok((total / n, acc))
}

/// `n / (2 n_c)` for each of the two classes; unit weights if a class is absent.
pub fn balanced_weights<'a>(targets: impl Iterator<Item = &'a Target>) -> Vec<f64> {
    let mut counts = [0usize; 2];
    for t in targets {
        let c = match t {
            Target::Class(c) => usize::from(*c != 0),
            Target::Score(s) => usize::from(*s >= 0.5),
        };
        counts[c] += 1;
    }
    if counts.contains(&0) {
        return Vec::new();
    }
    let n = (counts[0] + counts[1]) as f64;
    counts.iter().map(|&c| n / (2.0 * c as f64)).collect()
}

/// Training-time view of an example: receives the stored input and a variant key
/// (epoch plus example index) and returns the input to present instead.
pub type Augment<'a> = &'a (dyn Fn(&ModelInput, u64) -> ModelInput + Sync);

/// Shuffled mini-batch training with a grouped train/validation split.
/// Returns the trained parameters and per-epoch statistics; deterministic per seed.
pub fn train<T: Real>(
    params: ModelParams<T>,
    dataset: &[Example],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ModelParams<T>, History)> {
    train_augmented(params, dataset, cfg, seed, None)
}

/// [`train`] with an optional per-epoch input transform applied to training
/// examples only; validation always sees the stored inputs.
pub fn train_augmented<T: Real>(
    params: ModelParams<T>,
    dataset: &[Example],
    cfg: &TrainConfig,
    seed: u64,
    augment: Option<Augment>,
) -> Result<(ModelParams<T>, History)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.len() < 2 {
        return Err(Error::DatasetTooSmall { needed: 2, got: dataset.len() });
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let groups: Vec<u64> = dataset.iter().map(|e| e.group).collect();
    let (train_idx, val_idx) = split_indices(&groups, cfg.train_ratio, seed);
    let val: Vec<&Example> = val_idx.iter().map(|&i| &dataset[i]).collect();

    let class_weights = if cfg.balance_classes && cfg.loss == LossKind::CrossEntropy {
        balanced_weights(train_idx.iter().map(|&i| &dataset[i].target))
    } else {
        Vec::new()
    };

    let mut params = params;
    let mut state = OptimizerState::new(&cfg.optimizer, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7452_4149_4e00_0000);
    let mut order = train_idx.clone();
    let mut history = History { epochs: Vec::with_capacity(cfg.epochs), train_size: train_idx.len(), val_size: val_idx.len() };

    let mut batch = InputBatch::<T>::default();
    let mut cache = ForwardCache::default();
    let mut grads = params.zeros_like();
    let mut views: Vec<ModelInput> = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            match augment {
                Some(f) => {
                    views.clear();
                    views.extend(chunk.iter().map(|&i| f(&dataset[i].input, (epoch + i) as u64)));
                    batch.fill(views.iter())?;
                }
                None => batch.fill(chunk.iter().map(|&i| &dataset[i].input))?,
            }
            let targets: Vec<Target> = chunk.iter().map(|&i| dataset[i].target).collect();
            params.forward_into(&batch, &mut cache);
            let (l, grad_out) = loss::evaluate_weighted(cfg.loss, &cache.output, &targets, &class_weights);
            grads.iter_mut().for_each(|g| g.fill(T::zero()));
            params.backward_into(&mut cache, &grad_out, &mut grads);
            state.apply(&cfg.optimizer, cfg.learning_rate, &mut params, &grads);
            total += l.as_f64() * chunk.len() as f64;
        }
        let train_loss = total / order.len().max(1) as f64;
        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&params, &val, cfg.loss, 32)?;
            (Some(l), a)
        };
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:?} acc {val_accuracy:?}");
        history.epochs.push(EpochStats { epoch, train_loss, val_loss, val_accuracy });
    }
    Ok((params, history))
}
