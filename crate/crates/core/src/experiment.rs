//! Train/evaluate protocol and the comparison harnesses.
//!
//! A run splits the corpus 8:1:1 (train, validation, test) with a seeded
//! shuffle, trains on the first part and reports accuracy and macro-F1 on the
//! other two. Repeats use consecutive seeds. Comparison tables vary exactly
//! one field of an otherwise fixed configuration; each row carries a hash of
//! its configuration with that field blanked, so equal hashes certify that
//! nothing else changed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::activations::{ActivationKind, ActivationSpec};
use crate::exec::Execution;
use crate::multifractal::Method;
use crate::nn::train::{
    config_for, evaluate, train_on, EpochRecord, Evaluation, TrainConfig, TrainError,
};
use crate::nn::{Model, ModelConfig};
use crate::series::{Document, LabeledDataset};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 8:1:1 partition of `0..n`. Validation and test each get
/// `round(n/10)` items (at least one when `n ≥ 3`); training gets the rest.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tenth = if n >= 3 {
        ((n as f64) / 10.0).round().max(1.0) as usize
    } else {
        0
    };
    let test = idx.split_off(n - tenth);
    let val = idx.split_off(n - 2 * tenth);
    Split {
        train: idx,
        val,
        test,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub repeat: usize,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub train: Evaluation,
    pub val: Evaluation,
    pub test: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub runs: Vec<RunResult>,
    pub mean_test: Summary,
    pub mean_val: Summary,
}

/// SHA-256 of the canonical (key-sorted) JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("configuration serialises");
    hex::encode(Sha256::digest(
        serde_json::to_vec(&v).expect("value serialises"),
    ))
}

fn mean_summary(evals: &[&Evaluation]) -> Summary {
    let n = evals.len().max(1) as f64;
    Summary {
        accuracy: evals.iter().map(|e| e.accuracy).sum::<f64>() / n,
        macro_f1: evals.iter().map(|e| e.macro_f1).sum::<f64>() / n,
    }
}

fn pick<'a>(docs: &'a [Document], idx: &[usize]) -> Vec<&'a Document> {
    idx.iter().map(|&i| &docs[i]).collect()
}

fn pick_features(fv: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| fv[i].clone()).collect()
}

/// One seeded run on precomputed features. Returns the trained model too.
pub fn run_once(
    dataset: &LabeledDataset,
    features: &[Vec<f64>],
    cfg: &ExperimentConfig,
    repeat: usize,
) -> Result<(Model, RunResult), TrainError> {
    let seed = cfg.train.seed.wrapping_add(repeat as u64);
    let split = split_indices(dataset.len(), seed);
    if split.train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let model_cfg = config_for(dataset, &cfg.model)?;
    let mut model = Model::new(model_cfg, seed)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let docs = &dataset.documents;
    let history = train_on(
        &mut model,
        &pick(docs, &split.train),
        &pick_features(features, &split.train),
        &train_cfg,
    )?;
    let eval = |idx: &[usize]| {
        evaluate(
            &model,
            &pick(docs, idx),
            &pick_features(features, idx),
            Execution::Sequential,
        )
    };
    let (train, val, test) = (eval(&split.train)?, eval(&split.val)?, eval(&split.test)?);
    Ok((
        model,
        RunResult {
            repeat,
            seed,
            history,
            train,
            val,
            test,
        },
    ))
}

/// All repeats of one configuration. Repeats are independent and run under
/// `exec`; each is internally sequential.
pub fn run_experiment(
    dataset: &LabeledDataset,
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<ExperimentReport, TrainError> {
    run_experiment_models(dataset, cfg, exec).map(|(report, _)| report)
}

/// [`run_experiment`] that also returns the trained model of every repeat.
pub fn run_experiment_models(
    dataset: &LabeledDataset,
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<(ExperimentReport, Vec<Model>), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.repeats == 0 {
        return Err(TrainError::Config("repeats must be at least 1".into()));
    }
    cfg.train.validate()?;
    let tokens: Vec<_> = dataset.documents.iter().map(|d| &d.tokens).collect();
    let features = cfg.model.features.extract_all(&tokens, exec);
    let (models, runs): (Vec<Model>, Vec<RunResult>) = exec
        .map_range(cfg.repeats, |r| run_once(dataset, &features, cfg, r))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .unzip();
    let tests: Vec<&Evaluation> = runs.iter().map(|r| &r.test).collect();
    let vals: Vec<&Evaluation> = runs.iter().map(|r| &r.val).collect();
    let report = ExperimentReport {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        config_hash: config_hash(cfg),
        mean_test: mean_summary(&tests),
        mean_val: mean_summary(&vals),
        runs,
    };
    Ok((report, models))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    Activations,
    Mfa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub activation: ActivationSpec,
    pub method: Method,
    pub seed: u64,
    pub repeats: usize,
    /// Hash of the run configuration with the varied field blanked.
    pub config_hash: String,
    pub test_accuracy: f64,
    pub test_macro_f1: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub per_run_test_macro_f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub format_version: u32,
    pub mode: CompareMode,
    pub base_config: ExperimentConfig,
    pub notes: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// True when every row shares one seed and one blanked-config hash.
    pub fn is_stationary(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].config_hash == w[1].config_hash && w[0].seed == w[1].seed)
    }
}

fn blanked_hash(cfg: &ExperimentConfig, mode: CompareMode) -> String {
    let mut v = serde_json::to_value(cfg).expect("configuration serialises");
    let field = match mode {
        CompareMode::Activations => v.pointer_mut("/model/activation"),
        CompareMode::Mfa => v.pointer_mut("/model/features/method"),
    };
    if let Some(slot) = field {
        *slot = Value::Null;
    }
    config_hash(&v)
}

fn compare(
    dataset: &LabeledDataset,
    base: &ExperimentConfig,
    mode: CompareMode,
    variants: Vec<(String, ExperimentConfig)>,
    notes: Vec<String>,
    exec: Execution,
) -> Result<ComparisonTable, TrainError> {
    // Variants run side by side; each runs its repeats sequentially so the
    // table does not depend on scheduling.
    let reports = exec.map(&variants, |(_, cfg)| {
        run_experiment(dataset, cfg, Execution::Sequential)
    });
    let mut rows = Vec::with_capacity(variants.len());
    for ((name, cfg), report) in variants.iter().zip(reports) {
        let report = report?;
        rows.push(ComparisonRow {
            variant: name.clone(),
            activation: cfg.model.activation,
            method: cfg.model.features.method,
            seed: cfg.train.seed,
            repeats: cfg.repeats,
            config_hash: blanked_hash(cfg, mode),
            test_accuracy: report.mean_test.accuracy,
            test_macro_f1: report.mean_test.macro_f1,
            val_accuracy: report.mean_val.accuracy,
            val_macro_f1: report.mean_val.macro_f1,
            per_run_test_macro_f1: report.runs.iter().map(|r| r.test.macro_f1).collect(),
        });
    }
    Ok(ComparisonTable {
        format_version: FORMAT_VERSION,
        mode,
        base_config: base.clone(),
        notes,
        rows,
    })
}

/// One row per activation kind, Sital first; only the activation changes.
pub fn compare_activations(
    dataset: &LabeledDataset,
    base: &ExperimentConfig,
    exec: Execution,
) -> Result<ComparisonTable, TrainError> {
    let variants = ActivationKind::ALL
        .iter()
        .map(|k| {
            let mut cfg = base.clone();
            cfg.model.activation = if *k == base.model.activation.kind() {
                base.model.activation
            } else {
                k.default_spec()
            };
            (k.as_str().to_string(), cfg)
        })
        .collect();
    let notes =
        vec!["values are metrics on the supplied corpus, not published results".to_string()];
    compare(
        dataset,
        base,
        CompareMode::Activations,
        variants,
        notes,
        exec,
    )
}

/// One row per multifractal method used for the Hurst feature vector.
pub fn compare_mfa(
    dataset: &LabeledDataset,
    base: &ExperimentConfig,
    exec: Execution,
) -> Result<ComparisonTable, TrainError> {
    let variants = Method::ALL
        .iter()
        .map(|m| {
            let mut cfg = base.clone();
            cfg.model.features.method = *m;
            (m.as_str().to_string(), cfg)
        })
        .collect();
    let notes = vec![
        "MF-DXA excluded: it needs a second series per document".to_string(),
        "values are metrics on the supplied corpus, not published results".to_string(),
    ];
    compare(dataset, base, CompareMode::Mfa, variants, notes, exec)
}
