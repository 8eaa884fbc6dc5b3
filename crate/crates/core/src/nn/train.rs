//! Seeded Adam trainer with separate learning rates for weights and
//! activation parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics;
use super::model::{Model, ModelConfig, ModelError, ParamGroup, Task};
use crate::exec::Execution;
use crate::series::{Document, LabeledDataset};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (documents {documents:?})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        documents: Vec<usize>,
        loss: f64,
    },
    #[error("parameters became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteParams { epoch: usize, batch: usize },
    #[error("document {doc} has no tags but the model is a tagger")]
    MissingTags { doc: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_weights: f64,
    pub lr_activation: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after the first epoch whose training accuracy reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lr_weights: 3e-4,
            lr_activation: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 1,
            seed: 0,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        for (name, v) in [
            ("lr", self.lr_weights),
            ("lr-act", self.lr_activation),
            ("eps", self.eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(TrainError::Config(format!(
                    "{name} must be in [0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: Vec<f64>,
}

impl Adam {
    fn new(model: &Model, cfg: &TrainConfig) -> Self {
        let lr = model
            .params
            .info
            .iter()
            .flat_map(|p| {
                let rate = if p.group == ParamGroup::Activation {
                    cfg.lr_activation
                } else {
                    cfg.lr_weights
                };
                std::iter::repeat_n(rate, p.rows * p.cols)
            })
            .collect::<Vec<_>>();
        Adam {
            m: vec![0.0; lr.len()],
            v: vec![0.0; lr.len()],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= self.lr[i] * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.eps);
        }
    }
}

/// Targets for one document under the model's task.
pub fn targets(doc: &Document, index: usize, task: Task) -> Result<Vec<usize>, TrainError> {
    match task {
        Task::Classification => Ok(vec![doc.label]),
        Task::Tagging => doc
            .tags
            .clone()
            .ok_or(TrainError::MissingTags { doc: index }),
    }
}

/// Model configuration matching a dataset's shapes.
pub fn config_for(dataset: &LabeledDataset, base: &ModelConfig) -> Result<ModelConfig, TrainError> {
    let dim = dataset.dim().ok_or(TrainError::EmptyDataset)?;
    let n_outputs = match base.task {
        Task::Classification => dataset.n_classes,
        Task::Tagging => dataset.n_tags.ok_or(TrainError::MissingTags { doc: 0 })?,
    };
    Ok(ModelConfig {
        input_dim: dim,
        n_outputs,
        ..base.clone()
    })
}

/// Train on `docs` with precomputed feature vectors. Single-threaded and
/// deterministic for a fixed seed.
pub fn train_on(
    model: &mut Model,
    docs: &[&Document],
    features: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>, TrainError> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let task = model.config.task;
    let all_targets: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| targets(d, i, task))
        .collect::<Result<_, _>>()?;
    let mut adam = Adam::new(model, cfg);
    let mut flat = model.params.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut total) = (0.0, 0usize, 0usize);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = vec![0.0; flat.len()];
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (loss, g, preds) =
                    model.loss_and_grad(&docs[i].tokens, &features[i], &all_targets[i])?;
                batch_loss += loss;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                correct += preds
                    .iter()
                    .zip(&all_targets[i])
                    .filter(|(p, t)| p == t)
                    .count();
                total += preds.len();
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch,
                    documents: chunk.to_vec(),
                    loss: batch_loss,
                });
            }
            let k = chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g /= k);
            adam.step(&mut flat, &grad, cfg);
            model.params.set_flat(&flat);
            if !model.params.is_finite() {
                return Err(TrainError::NonFiniteParams { epoch, batch });
            }
            loss_sum += batch_loss;
        }
        let accuracy = correct as f64 / total.max(1) as f64;
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / docs.len() as f64,
            accuracy,
        });
        if cfg.target_accuracy.is_some_and(|t| accuracy >= t) {
            break;
        }
    }
    Ok(history)
}

/// Initialise a model for `dataset`, compute features and train on every
/// document.
pub fn train(
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<(Model, Vec<EpochRecord>), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let model_cfg = config_for(dataset, model_cfg)?;
    let mut model = Model::new(model_cfg, cfg.seed)?;
    let docs: Vec<&Document> = dataset.documents.iter().collect();
    let tokens: Vec<_> = docs.iter().map(|d| &d.tokens).collect();
    let features = model
        .config
        .features
        .extract_all(&tokens, Execution::Sequential);
    let history = train_on(&mut model, &docs, &features, cfg)?;
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n: usize,
}

/// Accuracy and macro-F1 over documents (tagging: over tokens). Forward passes
/// are independent and may run in parallel.
pub fn evaluate(
    model: &Model,
    docs: &[&Document],
    features: &[Vec<f64>],
    exec: Execution,
) -> Result<Evaluation, TrainError> {
    let task = model.config.task;
    let per_doc = exec.map_range(docs.len(), |i| {
        let preds = model.predict(&docs[i].tokens, &features[i])?;
        Ok::<_, TrainError>((preds, targets(docs[i], i, task)?))
    });
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for r in per_doc {
        let (p, t) = r?;
        pred.extend(p);
        truth.extend(t);
    }
    Ok(Evaluation {
        accuracy: metrics::accuracy(&pred, &truth),
        macro_f1: metrics::macro_f1(&pred, &truth, model.config.n_outputs),
        n: truth.len(),
    })
}
