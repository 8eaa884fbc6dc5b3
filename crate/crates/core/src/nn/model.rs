//! DeFFSi: recurrent encoder, gated Hurst fusion, SCNN, attention and head.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gradcheck::{grad_check, GradCheckReport};
use super::tape::{Tape, Var};
use crate::activations::{ActivationKind, ActivationSpec};
use crate::exec::Execution;
use crate::multifractal::{
    default_q_grid, hurst_profile, log_spaced_scales, Method, MfaConfig, ScaleSpec,
};
use crate::series::{mean_embedding, EmbeddingMatrix};

/// Half-width of the uniform weight initialiser.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("input has {got} features per token, model expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("feature vector has length {got}, model expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("sequence too short: SCNN stage {stage} receives {len} positions, needs {need}")]
    LengthUnderflow {
        stage: String,
        len: usize,
        need: usize,
    },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One label per document.
    Classification,
    /// One label per token; pooling keeps the sequence length.
    Tagging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    /// Left `(w − 1)/2`, right the remainder, so lengths are preserved.
    Same,
}

/// How the per-document Hurst vector is computed.
///
/// Mean embeddings are short, so the scale grid starts at 4 and spans up to
/// `max_scales` log-spaced scales in `[4, ⌊N/4⌋]`. Exponents whose fit fails
/// are filled with `fill`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub method: Method,
    pub q_grid: Vec<f64>,
    pub min_scale: usize,
    pub max_scales: usize,
    pub vol_window: usize,
    pub fill: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            method: Method::FsMfa,
            q_grid: default_q_grid(),
            min_scale: 4,
            max_scales: 8,
            vol_window: 4,
            fill: 0.5,
        }
    }
}

impl FeatureConfig {
    pub fn mfa_config(&self, n: usize) -> MfaConfig {
        MfaConfig {
            method: self.method,
            q_grid: self.q_grid.clone(),
            scales: ScaleSpec::Explicit(log_spaced_scales(self.min_scale, n / 4, self.max_scales)),
            vol_window: self.vol_window,
            dfa_poly_order: 1,
        }
    }

    /// `H(q)` of the mean embedding over the configured grid.
    pub fn extract(&self, tokens: &EmbeddingMatrix) -> Vec<f64> {
        let s = mean_embedding(tokens);
        let cfg = self.mfa_config(s.len());
        let mut fv = vec![self.fill; self.q_grid.len()];
        match hurst_profile(&s, &cfg) {
            Ok(p) => {
                for (slot, r) in fv.iter_mut().zip(&p.records) {
                    *slot = r.h;
                }
            }
            Err(crate::multifractal::MfaError::TooFewScales(_)) => {
                // Fit what can be fitted; the failing q keep the fill value.
                if let Ok((table, _)) =
                    crate::multifractal::fluctuation_table(&s, &cfg, Execution::Sequential)
                {
                    for (slot, fit) in fv.iter_mut().zip(crate::multifractal::fit_table(&table)) {
                        if let Ok(r) = fit {
                            *slot = r.h;
                        }
                    }
                }
            }
            Err(_) => {}
        }
        fv.iter()
            .map(|&h| if h.is_finite() { h } else { self.fill })
            .collect()
    }

    pub fn extract_all(&self, docs: &[&EmbeddingMatrix], exec: Execution) -> Vec<Vec<f64>> {
        exec.map(docs, |m| self.extract(m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub input_dim: usize,
    /// Classes for classification, tag alphabet size for tagging.
    pub n_outputs: usize,
    pub hidden: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub blocks: usize,
    pub padding: Padding,
    pub attention_dim: usize,
    pub dense: usize,
    /// Used at every Sital site: both SCNN convolutions of each stage and the
    /// dense layer.
    pub activation: ActivationSpec,
    pub features: FeatureConfig,
    /// Recorded for checkpoints; the encoder is a stacked bidirectional LSTM.
    pub recurrent_cell: String,
}

impl ModelConfig {
    /// Desk scale: `h = 32`, 32 filters, 2 blocks.
    pub fn desk(input_dim: usize, n_outputs: usize) -> Self {
        ModelConfig {
            task: Task::Classification,
            input_dim,
            n_outputs,
            hidden: 32,
            filters: 32,
            kernel_width: 4,
            blocks: 2,
            padding: Padding::Valid,
            attention_dim: 32,
            dense: 32,
            activation: ActivationSpec::default(),
            features: FeatureConfig::default(),
            recurrent_cell: "lstm".into(),
        }
    }

    /// `h = 200`, 256 filters, 5 blocks.
    pub fn full_scale(input_dim: usize, n_outputs: usize) -> Self {
        ModelConfig {
            hidden: 200,
            filters: 256,
            blocks: 5,
            attention_dim: 200,
            dense: 200,
            ..ModelConfig::desk(input_dim, n_outputs)
        }
    }

    /// Same-length convolutions and stride-1 pooling, one output per token.
    pub fn tagging(mut self) -> Self {
        self.task = Task::Tagging;
        self.padding = Padding::Same;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("input_dim", self.input_dim),
            ("n_outputs", self.n_outputs),
            ("hidden", self.hidden),
            ("filters", self.filters),
            ("kernel_width", self.kernel_width),
            ("attention_dim", self.attention_dim),
            ("dense", self.dense),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.features.q_grid.is_empty() {
            return Err(ModelError::Config("feature q grid is empty".into()));
        }
        if self.task == Task::Tagging && self.padding != Padding::Same {
            return Err(ModelError::Config("tagging needs same padding".into()));
        }
        self.activation
            .validate()
            .map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn fv_len(&self) -> usize {
        self.features.q_grid.len()
    }

    fn pads(&self) -> (usize, usize) {
        match self.padding {
            Padding::Valid => (0, 0),
            Padding::Same => {
                let total = self.kernel_width - 1;
                (total / 2, total - total / 2)
            }
        }
    }

    /// Rows trimmed from each side of a stage input before the residual
    /// concatenation (two convolutions shrink by `w − 1` each).
    fn residual_crop(&self) -> usize {
        match self.padding {
            Padding::Valid => self.kernel_width - 1,
            Padding::Same => 0,
        }
    }

    fn pool(&self) -> (usize, usize, bool) {
        match self.task {
            Task::Classification => (2, 2, false),
            Task::Tagging => (2, 1, true),
        }
    }

    /// Channels after the SCNN.
    pub fn scnn_channels(&self) -> usize {
        2 * self.hidden + (self.blocks + 1) * self.filters
    }

    /// Sequence length after each SCNN stage, failing at the first stage that
    /// cannot run.
    pub fn scnn_lengths(&self, n: usize) -> Result<Vec<usize>, ModelError> {
        let w = self.kernel_width;
        let (pl, pr) = self.pads();
        let conv = |len: usize, stage: &str| -> Result<usize, ModelError> {
            if len + pl + pr < w {
                return Err(ModelError::LengthUnderflow {
                    stage: stage.into(),
                    len,
                    need: w - pl - pr,
                });
            }
            Ok(len + pl + pr + 1 - w)
        };
        let two_convs = |len: usize, stage: &str| conv(conv(len, stage)?, stage);
        let mut lens = vec![two_convs(n, "pre")?];
        let (size, stride, keep) = self.pool();
        for b in 0..self.blocks {
            let stage = format!("block{}", b + 1);
            let len = *lens.last().unwrap_or(&0);
            let pooled = if keep {
                len
            } else if len < size {
                return Err(ModelError::LengthUnderflow {
                    stage,
                    len,
                    need: size,
                });
            } else {
                (len - size) / stride + 1
            };
            lens.push(two_convs(pooled, &stage)?);
        }
        Ok(lens)
    }

    fn activation_sites(&self) -> Vec<String> {
        let mut sites = vec!["scnn.pre.conv1".to_string(), "scnn.pre.conv2".to_string()];
        for b in 1..=self.blocks {
            sites.push(format!("scnn.block{b}.conv1"));
            sites.push(format!("scnn.block{b}.conv2"));
        }
        sites.push("dense".into());
        sites
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Weight,
    Bias,
    /// Learnable activation parameters (Sital γ, η).
    Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub group: ParamGroup,
}

/// Named parameter arrays in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub info: Vec<ParamInfo>,
    pub values: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    fn from_parts(info: Vec<ParamInfo>, values: Vec<Vec<f64>>) -> Self {
        let index = info
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        ParamStore {
            info,
            values,
            index,
        }
    }

    pub fn layout(cfg: &ModelConfig) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize, group: ParamGroup| {
            out.push(ParamInfo {
                name,
                rows,
                cols,
                group,
            });
        };
        let (h, f, w) = (cfg.hidden, cfg.filters, cfg.kernel_width);
        for layer in 0..2 {
            let input = if layer == 0 { cfg.input_dim } else { 2 * h };
            for dir in ["fwd", "bwd"] {
                let p = format!("birnn.l{layer}.{dir}");
                add(format!("{p}.wx"), input, 4 * h, ParamGroup::Weight);
                add(format!("{p}.wh"), h, 4 * h, ParamGroup::Weight);
                add(format!("{p}.b"), 1, 4 * h, ParamGroup::Bias);
            }
        }
        let gate =
            |add: &mut dyn FnMut(String, usize, usize, ParamGroup), name: &str, width: usize| {
                add(
                    format!("{name}.proj.w"),
                    cfg.fv_len(),
                    width,
                    ParamGroup::Weight,
                );
                add(format!("{name}.proj.b"), 1, width, ParamGroup::Bias);
                add(format!("{name}.kappa"), 1, width, ParamGroup::Weight);
                add(format!("{name}.bias"), 1, width, ParamGroup::Bias);
            };
        gate(&mut add, "gate1", 2 * h);
        let mut channels = 2 * h;
        let mut stages = vec!["scnn.pre".to_string()];
        stages.extend((1..=cfg.blocks).map(|b| format!("scnn.block{b}")));
        for stage in &stages {
            add(
                format!("{stage}.conv1.w"),
                w * channels,
                f,
                ParamGroup::Weight,
            );
            add(format!("{stage}.conv1.b"), 1, f, ParamGroup::Bias);
            add(format!("{stage}.conv2.w"), w * f, f, ParamGroup::Weight);
            add(format!("{stage}.conv2.b"), 1, f, ParamGroup::Bias);
            channels += f;
        }
        let a = cfg.attention_dim;
        add("attn.w_mean".into(), 1, a, ParamGroup::Weight);
        add("attn.w_fv".into(), 1, a, ParamGroup::Weight);
        add("attn.b".into(), 1, a, ParamGroup::Bias);
        add("attn.q".into(), a, 1, ParamGroup::Weight);
        gate(&mut add, "gate2", channels);
        add("dense.w".into(), channels, cfg.dense, ParamGroup::Weight);
        add("dense.b".into(), 1, cfg.dense, ParamGroup::Bias);
        add(
            "head.w".into(),
            cfg.dense,
            cfg.n_outputs,
            ParamGroup::Weight,
        );
        add("head.b".into(), 1, cfg.n_outputs, ParamGroup::Bias);
        if cfg.activation.kind() == ActivationKind::Sital {
            for site in cfg.activation_sites() {
                add(format!("act.{site}.gamma"), 1, 1, ParamGroup::Activation);
                add(format!("act.{site}.eta"), 1, 1, ParamGroup::Activation);
            }
        }
        out
    }

    /// Uniform(−0.08, 0.08) weights, zero biases, activation parameters from
    /// the configured spec.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let info = Self::layout(cfg);
        let values = info
            .iter()
            .map(|p| {
                let n = p.rows * p.cols;
                match p.group {
                    ParamGroup::Weight => (0..n)
                        .map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE))
                        .collect(),
                    ParamGroup::Bias => vec![0.0; n],
                    ParamGroup::Activation => {
                        let v = match cfg.activation {
                            ActivationSpec::Sital { gamma, eta } => {
                                if p.name.ends_with(".gamma") {
                                    gamma
                                } else {
                                    eta
                                }
                            }
                            _ => 0.0,
                        };
                        vec![v; n]
                    }
                }
            })
            .collect();
        Self::from_parts(info, values)
    }

    /// Redraw weights and biases from uniform(−scale, scale). Used to move
    /// gradient checks away from the near-linear regime of the initialiser.
    pub fn randomize(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (p, v) in self.info.iter().zip(&mut self.values) {
            if p.group != ParamGroup::Activation {
                v.iter_mut()
                    .for_each(|x| *x = rng.random_range(-scale..scale));
            }
        }
    }

    pub fn with_values(info: Vec<ParamInfo>, values: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if info.len() != values.len() {
            return Err(ModelError::Config("parameter count mismatch".into()));
        }
        for (p, v) in info.iter().zip(&values) {
            if v.len() != p.rows * p.cols {
                return Err(ModelError::Config(format!(
                    "{} has {} values",
                    p.name,
                    v.len()
                )));
            }
        }
        Ok(Self::from_parts(info, values))
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| self.values[i].as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.index.get(name).map(|&i| &mut self.values[i])
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// All values in layout order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for v in &mut self.values {
            let n = v.len();
            v.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    /// Put every array on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound<'_> {
        let vars = self
            .info
            .iter()
            .zip(&self.values)
            .map(|(p, v)| tape.leaf(p.rows, p.cols, v.clone()))
            .collect();
        Bound { store: self, vars }
    }
}

/// Parameters placed on a tape.
pub struct Bound<'a> {
    store: &'a ParamStore,
    pub vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn var(&self, name: &str) -> Result<Var, ModelError> {
        self.store
            .index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| ModelError::MissingParam(name.into()))
    }

    fn opt(&self, name: &str) -> Option<Var> {
        self.store.index.get(name).map(|&i| self.vars[i])
    }
}

/// One direction of one LSTM layer. `xw` holds the precomputed input
/// projections `X·W_x + b` (n × 4h).
fn lstm_pass(tape: &mut Tape, xw: Var, wh: Var, hidden: usize, reverse: bool) -> Var {
    let n = tape.shape(xw).0;
    let mut h = tape.zeros(1, hidden);
    let mut c = tape.zeros(1, hidden);
    let mut outs = vec![h; n];
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for t in order {
        let x = tape.row(xw, t);
        let rec = tape.matmul(h, wh);
        let z = tape.add(x, rec);
        let zi = tape.slice_cols(z, 0, hidden);
        let zf = tape.slice_cols(z, hidden, hidden);
        let zg = tape.slice_cols(z, 2 * hidden, hidden);
        let zo = tape.slice_cols(z, 3 * hidden, hidden);
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let g = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let keep = tape.mul(f, c);
        let write = tape.mul(i, g);
        c = tape.add(keep, write);
        let tc = tape.tanh(c);
        h = tape.mul(o, tc);
        outs[t] = h;
    }
    tape.stack_rows(&outs)
}

/// Two stacked bidirectional LSTM layers; returns `n × 2h`, forward state first.
pub fn birnn_forward(tape: &mut Tape, x: Var, p: &Bound, hidden: usize) -> Result<Var, ModelError> {
    let mut input = x;
    for layer in 0..2 {
        let mut dirs = Vec::with_capacity(2);
        for (dir, reverse) in [("fwd", false), ("bwd", true)] {
            let pre = format!("birnn.l{layer}.{dir}");
            let wx = p.var(&format!("{pre}.wx"))?;
            if tape.shape(input).1 != tape.shape(wx).0 {
                return Err(ModelError::InputDim {
                    expected: tape.shape(wx).0,
                    got: tape.shape(input).1,
                });
            }
            let proj = tape.matmul(input, wx);
            let xw = tape.add_row(proj, p.var(&format!("{pre}.b"))?);
            dirs.push(lstm_pass(
                tape,
                xw,
                p.var(&format!("{pre}.wh"))?,
                hidden,
                reverse,
            ));
        }
        input = tape.concat_cols(dirs[0], dirs[1]);
    }
    Ok(input)
}

/// `λ = σ(κ ⊙ a + bias)`, output `λ ⊙ a + (1 − λ) ⊙ b`, with `κ` and `bias`
/// rows broadcast over the rows of `a`.
pub fn gate_fuse(tape: &mut Tape, a: Var, b: Var, kappa: Var, bias: Var) -> Var {
    let ka = tape.mul_row(a, kappa);
    let z = tape.add_row(ka, bias);
    let lambda = tape.sigmoid(z);
    let mu = tape.one_minus(lambda);
    let pa = tape.mul(lambda, a);
    let pb = tape.mul(mu, b);
    tape.add(pa, pb)
}

/// Affine projection of the `1 × m` feature row to `rows × width`.
fn project(
    tape: &mut Tape,
    fv: Var,
    p: &Bound,
    gate: &str,
    rows: usize,
) -> Result<Var, ModelError> {
    let w = p.var(&format!("{gate}.proj.w"))?;
    let prod = tape.matmul(fv, w);
    let proj = tape.add_row(prod, p.var(&format!("{gate}.proj.b"))?);
    Ok(if rows == 1 {
        proj
    } else {
        tape.broadcast_rows(proj, rows)
    })
}

fn activate(tape: &mut Tape, x: Var, cfg: &ModelConfig, p: &Bound, site: &str) -> Var {
    let gamma = p.opt(&format!("act.{site}.gamma"));
    let eta = p.opt(&format!("act.{site}.eta"));
    tape.act(x, cfg.activation, gamma, eta)
}

/// conv → activation → conv → activation, then concatenation with the
/// (cropped) stage input.
fn scnn_stage(
    tape: &mut Tape,
    x: Var,
    cfg: &ModelConfig,
    p: &Bound,
    stage: &str,
) -> Result<Var, ModelError> {
    let (pl, pr) = cfg.pads();
    let w = cfg.kernel_width;
    let mut y = x;
    for conv in ["conv1", "conv2"] {
        let name = format!("{stage}.{conv}");
        let len = tape.shape(y).0;
        if len + pl + pr < w {
            return Err(ModelError::LengthUnderflow {
                stage: stage.into(),
                len,
                need: w - pl - pr,
            });
        }
        let k = p.var(&format!("{name}.w"))?;
        let b = p.var(&format!("{name}.b"))?;
        let z = tape.conv1d(y, k, b, w, pl, pr);
        y = activate(tape, z, cfg, p, &name);
    }
    let crop = cfg.residual_crop();
    let len = tape.shape(y).0;
    let skip = if crop > 0 {
        tape.crop_rows(x, crop, len)
    } else {
        x
    };
    Ok(tape.concat_cols(skip, y))
}

pub fn scnn_forward(
    tape: &mut Tape,
    fvh: Var,
    cfg: &ModelConfig,
    p: &Bound,
) -> Result<Var, ModelError> {
    cfg.scnn_lengths(tape.shape(fvh).0)?;
    let mut x = scnn_stage(tape, fvh, cfg, p, "scnn.pre")?;
    let (size, stride, keep) = cfg.pool();
    for b in 1..=cfg.blocks {
        let pooled = tape.max_pool(x, size, stride, keep);
        x = scnn_stage(tape, pooled, cfg, p, &format!("scnn.block{b}"))?;
    }
    Ok(x)
}

/// Additive attention over the Hurst vector. Returns `(weights, fva)`, both
/// `1 × m`.
pub fn attention_fv(tape: &mut Tape, fv: Var, p: &Bound) -> Result<(Var, Var), ModelError> {
    let m = tape.shape(fv).1;
    let col = tape.transpose(fv);
    let mean = tape.mean_all(fv);
    let per_item = tape.matmul(col, p.var("attn.w_fv")?);
    let shared = tape.matmul(mean, p.var("attn.w_mean")?);
    let z = tape.add_row(per_item, shared);
    let z = tape.add_row(z, p.var("attn.b")?);
    let u = tape.tanh(z);
    let scores = tape.matmul(u, p.var("attn.q")?);
    let scores = tape.transpose(scores);
    let weights = tape.softmax_rows(scores);
    debug_assert_eq!(tape.shape(weights), (1, m));
    let fva = tape.mul(weights, fv);
    Ok((weights, fva))
}

/// Handles into the tape for one forward pass.
pub struct Forward {
    pub logits: Var,
    pub attention: Var,
    pub params: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ParamStore::init(&config, seed);
        Ok(Model { config, params })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        tokens: &EmbeddingMatrix,
        fv: &[f64],
    ) -> Result<Forward, ModelError> {
        let cfg = &self.config;
        if tokens.cols() != cfg.input_dim {
            return Err(ModelError::InputDim {
                expected: cfg.input_dim,
                got: tokens.cols(),
            });
        }
        if fv.len() != cfg.fv_len() {
            return Err(ModelError::FeatureDim {
                expected: cfg.fv_len(),
                got: fv.len(),
            });
        }
        cfg.scnn_lengths(tokens.rows())?;
        let p = self.params.bind(tape);
        let x = tape.leaf(tokens.rows(), tokens.cols(), tokens.data().to_vec());
        let fv = tape.leaf(1, fv.len(), fv.to_vec());
        let n = tokens.rows();

        let hs = birnn_forward(tape, x, &p, cfg.hidden)?;
        let fv_proj = project(tape, fv, &p, "gate1", n)?;
        let fvh = gate_fuse(
            tape,
            hs,
            fv_proj,
            p.var("gate1.kappa")?,
            p.var("gate1.bias")?,
        );
        let fvhc = scnn_forward(tape, fvh, cfg, &p)?;
        let (attention, fva) = attention_fv(tape, fv, &p)?;

        let summary = match cfg.task {
            Task::Classification => tape.max_rows(fvhc),
            Task::Tagging => fvhc,
        };
        let rows = tape.shape(summary).0;
        let fva_proj = project(tape, fva, &p, "gate2", rows)?;
        let fused = gate_fuse(
            tape,
            summary,
            fva_proj,
            p.var("gate2.kappa")?,
            p.var("gate2.bias")?,
        );
        let d = tape.matmul(fused, p.var("dense.w")?);
        let d = tape.add_row(d, p.var("dense.b")?);
        let d = activate(tape, d, cfg, &p, "dense");
        let out = tape.matmul(d, p.var("head.w")?);
        let logits = tape.add_row(out, p.var("head.b")?);
        Ok(Forward {
            logits,
            attention,
            params: p.vars,
        })
    }

    /// Class probabilities: one row for classification, one per token for
    /// tagging.
    pub fn predict_proba(
        &self,
        tokens: &EmbeddingMatrix,
        fv: &[f64],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, tokens, fv)?;
        let probs = tape.softmax_rows(out.logits);
        let c = tape.shape(probs).1;
        Ok(tape.value(probs).chunks(c).map(<[f64]>::to_vec).collect())
    }

    /// Arg-max predictions, one per output row.
    pub fn predict(&self, tokens: &EmbeddingMatrix, fv: &[f64]) -> Result<Vec<usize>, ModelError> {
        Ok(self
            .predict_proba(tokens, fv)?
            .iter()
            .map(|r| argmax(r))
            .collect())
    }

    /// Loss and flat gradient (layout order) for one example.
    pub fn loss_and_grad(
        &self,
        tokens: &EmbeddingMatrix,
        fv: &[f64],
        targets: &[usize],
    ) -> Result<(f64, Vec<f64>, Vec<usize>), ModelError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, tokens, fv)?;
        let rows = tape.shape(out.logits).0;
        if targets.len() != rows {
            return Err(ModelError::Config(format!(
                "{} targets for {rows} output rows",
                targets.len()
            )));
        }
        let c = tape.shape(out.logits).1;
        let preds = tape.value(out.logits).chunks(c).map(argmax).collect();
        let loss = tape.softmax_cross_entropy(out.logits, targets);
        tape.backward(loss);
        let grad = out
            .params
            .iter()
            .flat_map(|&v| tape.grad(v).to_vec())
            .collect();
        Ok((tape.value(loss)[0], grad, preds))
    }

    /// Central-difference check of every parameter gradient for one example.
    pub fn grad_check(
        &self,
        tokens: &EmbeddingMatrix,
        fv: &[f64],
        targets: &[usize],
        h: f64,
    ) -> Result<GradCheckReport, ModelError> {
        let (_, grad, _) = self.loss_and_grad(tokens, fv, targets)?;
        let point = self.params.flatten();
        let f = |flat: &[f64]| {
            let mut m = self.clone();
            m.params.set_flat(flat);
            m.loss(tokens, fv, targets).unwrap_or(f64::NAN)
        };
        Ok(grad_check(f, &point, &grad, h, &[]))
    }

    /// Loss only; used by finite-difference checks.
    pub fn loss(
        &self,
        tokens: &EmbeddingMatrix,
        fv: &[f64],
        targets: &[usize],
    ) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, tokens, fv)?;
        let loss = tape.softmax_cross_entropy(out.logits, targets);
        Ok(tape.value(loss)[0])
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |b, (i, &x)| if x > v[b] { i } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingMatrix::new(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    fn micro() -> ModelConfig {
        ModelConfig {
            hidden: 5,
            filters: 3,
            blocks: 1,
            attention_dim: 4,
            dense: 4,
            padding: Padding::Same,
            features: FeatureConfig {
                q_grid: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
                ..Default::default()
            },
            ..ModelConfig::desk(6, 3)
        }
    }

    #[test]
    fn shape_calculus_valid_64() {
        let cfg = ModelConfig::desk(8, 3);
        // 64 -3 -3 = 58; pool 29, -6 = 23; pool 11, -6 = 5.
        assert_eq!(cfg.scnn_lengths(64).unwrap(), vec![58, 23, 5]);
        assert_eq!(cfg.scnn_lengths(46).unwrap(), vec![40, 14, 1]);
        match cfg.scnn_lengths(45) {
            Err(ModelError::LengthUnderflow { stage, .. }) => assert_eq!(stage, "block2"),
            other => panic!("{other:?}"),
        }
        assert!(
            matches!(cfg.scnn_lengths(5), Err(ModelError::LengthUnderflow { ref stage, .. }) if stage == "pre")
        );
        let tag = ModelConfig::desk(8, 3).tagging();
        assert_eq!(tag.scnn_lengths(7).unwrap(), vec![7, 7, 7]);
    }

    #[test]
    fn scnn_forward_length_matches_calculus() {
        let cfg = ModelConfig {
            hidden: 3,
            filters: 2,
            ..ModelConfig::desk(4, 2)
        };
        let store = ParamStore::init(&cfg, 1);
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let x = t.leaf(64, 6, vec![0.1; 64 * 6]);
        let y = scnn_forward(&mut t, x, &cfg, &p).unwrap();
        assert_eq!(t.shape(y), (5, cfg.scnn_channels()));
    }

    #[test]
    fn zero_kernels_pass_pooled_input_through() {
        let cfg = ModelConfig {
            hidden: 2,
            filters: 3,
            blocks: 1,
            ..ModelConfig::desk(4, 2)
        };
        let mut store = ParamStore::init(&cfg, 1);
        for (info, v) in store.info.clone().iter().zip(store.values.iter_mut()) {
            if info.name.starts_with("scnn") {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let data: Vec<f64> = (0..30 * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = t.leaf(30, 4, data.clone());
        let y = scnn_forward(&mut t, x, &cfg, &p).unwrap();
        // pre: 30 -> 24 rows, input cropped by 3 each side; block: pool 12 -> 6, crop 3.
        assert_eq!(t.shape(y), (6, 4 + 3 + 3));
        let out = t.get(y);
        for r in 0..6 {
            let row = out.row(r);
            assert!(row[4..].iter().all(|&v| v == 0.0));
            for c in 0..4 {
                // pooled index r + 3 covers input rows 2(r+3)+3 and +4 of the pre crop.
                let a = data[(2 * (r + 3) + 3) * 4 + c];
                let b = data[(2 * (r + 3) + 4) * 4 + c];
                assert_eq!(row[c], a.max(b));
            }
        }
    }

    #[test]
    fn birnn_zero_weights_give_zero_states() {
        let cfg = ModelConfig {
            hidden: 5,
            ..ModelConfig::desk(4, 2)
        };
        let mut store = ParamStore::init(&cfg, 3);
        store
            .values
            .iter_mut()
            .for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let x = t.leaf(3, 4, vec![0.7; 12]);
        let h = birnn_forward(&mut t, x, &p, 5).unwrap();
        assert_eq!(t.shape(h), (3, 10));
        assert!(t.value(h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn birnn_gradients() {
        let cfg = ModelConfig {
            hidden: 5,
            ..ModelConfig::desk(4, 2)
        };
        let store = ParamStore::init(&cfg, 11);
        let names: Vec<String> = store
            .info
            .iter()
            .filter(|p| p.name.starts_with("birnn"))
            .map(|p| p.name.clone())
            .collect();
        let x = random_matrix(3, 4, 5);
        let proj: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect();
        let eval = |flat: &[f64]| {
            let mut s = store.clone();
            let mut off = 0;
            for n in &names {
                let v = s.get_mut(n).unwrap();
                let k = v.len();
                v.copy_from_slice(&flat[off..off + k]);
                off += k;
            }
            let mut t = Tape::new();
            let p = s.bind(&mut t);
            let xv = t.leaf(3, 4, x.data().to_vec());
            let h = birnn_forward(&mut t, xv, &p, 5).unwrap();
            let w = t.leaf(3, 10, proj.clone());
            let prod = t.mul(h, w);
            let loss = t.sum_all(prod);
            t.backward(loss);
            let g: Vec<f64> = names
                .iter()
                .flat_map(|n| t.grad(p.var(n).unwrap()).to_vec())
                .collect();
            (t.value(loss)[0], g)
        };
        let point: Vec<f64> = names
            .iter()
            .flat_map(|n| store.get(n).unwrap().to_vec())
            .collect();
        // Scale weights up so the cell is away from its linear regime.
        let point: Vec<f64> = point.iter().map(|v| v * 10.0).collect();
        let (_, g) = eval(&point);
        let r = grad_check(|f| eval(f).0, &point, &g, 1e-5, &[]);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn gate_examples() {
        let mut t = Tape::new();
        let a = t.leaf(2, 2, vec![1.0, -2.0, 3.0, 0.5]);
        let b = t.leaf(2, 2, vec![3.0, 2.0, -1.0, 0.5]);
        let k0 = t.zeros(1, 2);
        let out = gate_fuse(&mut t, a, b, k0, k0);
        assert_eq!(t.value(out), &[2.0, 0.0, 1.0, 0.5]);
        let big = t.leaf(1, 2, vec![10.0, 10.0]);
        let out = gate_fuse(&mut t, a, b, k0, big);
        for (o, x) in t.value(out).iter().zip(t.value(a)) {
            assert!((o - x).abs() < 1e-3 * 5.0);
        }
        let lambda = crate::activations::sigmoid(10.0);
        assert!(lambda > 0.999);
    }

    #[test]
    fn attention_examples() {
        let cfg = micro();
        let store = ParamStore::init(&cfg, 2);
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let fv = t.leaf(1, 1, vec![0.7]);
        let (w, fva) = attention_fv(&mut t, fv, &p).unwrap();
        assert_eq!(t.value(w), &[1.0]);
        assert_eq!(t.value(fva), &[0.7]);

        let mut zeroed = store.clone();
        zeroed
            .get_mut("attn.q")
            .unwrap()
            .iter_mut()
            .for_each(|x| *x = 0.0);
        let mut t = Tape::new();
        let p = zeroed.bind(&mut t);
        let fv = t.leaf(1, 4, vec![0.2, 0.9, -0.4, 0.5]);
        let (w, _) = attention_fv(&mut t, fv, &p).unwrap();
        assert!(t.value(w).iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn micro_end_to_end_gradient() {
        let mut model = Model::new(micro(), 21).unwrap();
        model.params.randomize(0.5, 77);
        let x = random_matrix(4, 6, 9);
        let fv = [0.61, 0.55, 0.5, 0.46, 0.41];
        let r = model.grad_check(&x, &fv, &[1], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert_eq!(r.checked, model.params.count());
    }

    #[test]
    fn valid_padding_gradient() {
        let cfg = ModelConfig {
            kernel_width: 2,
            padding: Padding::Valid,
            ..micro()
        };
        let mut model = Model::new(cfg, 5).unwrap();
        model.params.randomize(0.5, 6);
        let x = random_matrix(12, 6, 4);
        let r = model
            .grad_check(&x, &[0.7, 0.6, 0.5, 0.4, 0.3], &[2], 1e-5)
            .unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }

    #[test]
    fn probabilities_and_determinism() {
        let model = Model::new(micro(), 4).unwrap();
        let x = random_matrix(4, 6, 1);
        let fv = [0.5; 5];
        let a = model.predict_proba(&x, &fv).unwrap();
        let b = model.predict_proba(&x, &fv).unwrap();
        assert_eq!(a, b);
        assert!((a[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            model.predict(&x, &[0.5; 4]),
            Err(ModelError::FeatureDim { .. })
        ));
        assert!(matches!(
            model.predict(&random_matrix(4, 5, 1), &fv),
            Err(ModelError::InputDim { .. })
        ));
    }

    #[test]
    fn tagging_outputs_one_row_per_token() {
        let cfg = ModelConfig {
            hidden: 3,
            filters: 2,
            dense: 3,
            attention_dim: 3,
            ..micro()
        }
        .tagging();
        let model = Model::new(cfg, 4).unwrap();
        let x = random_matrix(7, 6, 2);
        let probs = model.predict_proba(&x, &[0.5; 5]).unwrap();
        assert_eq!(probs.len(), 7);
        assert!(probs
            .iter()
            .all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn non_sital_models_have_no_activation_params() {
        let cfg = ModelConfig {
            activation: ActivationSpec::Relu,
            ..micro()
        };
        let store = ParamStore::init(&cfg, 1);
        assert!(store.info.iter().all(|p| p.group != ParamGroup::Activation));
        let sital = ParamStore::init(&micro(), 1);
        assert_eq!(
            sital
                .info
                .iter()
                .filter(|p| p.group == ParamGroup::Activation)
                .count(),
            10
        );
        assert_eq!(sital.get("act.dense.gamma"), Some(&[1.0][..]));
    }

    #[test]
    fn features_for_short_mean_embeddings() {
        let fc = FeatureConfig::default();
        let x = random_matrix(10, 32, 3);
        let fv = fc.extract(&x);
        assert_eq!(fv.len(), 41);
        assert!(fv.iter().all(|h| h.is_finite()));
        let tiny = fc.extract(&random_matrix(4, 6, 3));
        assert!(tiny.iter().all(|&h| h == 0.5));
    }

    proptest! {
        #[test]
        fn gate_is_convex(
            a in proptest::collection::vec(-5f64..5.0, 6),
            b in proptest::collection::vec(-5f64..5.0, 6),
            k in proptest::collection::vec(-3f64..3.0, 3),
            bias in proptest::collection::vec(-3f64..3.0, 3),
        ) {
            let mut t = Tape::new();
            let av = t.leaf(2, 3, a.clone());
            let bv = t.leaf(2, 3, b.clone());
            let kv = t.leaf(1, 3, k);
            let biv = t.leaf(1, 3, bias);
            let out = gate_fuse(&mut t, av, bv, kv, biv);
            for (i, o) in t.value(out).iter().enumerate() {
                prop_assert!(*o >= a[i].min(b[i]) - 1e-12 && *o <= a[i].max(b[i]) + 1e-12);
            }
        }

        #[test]
        fn attention_is_distribution(fv in proptest::collection::vec(-2f64..2.0, 1..12), seed in 0u64..50) {
            let store = ParamStore::init(&micro(), seed);
            let mut t = Tape::new();
            let p = store.bind(&mut t);
            let f = t.leaf(1, fv.len(), fv.clone());
            let (w, _) = attention_fv(&mut t, f, &p).unwrap();
            prop_assert!((t.value(w).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(t.value(w).iter().all(|&x| x >= 0.0));
        }
    }
}
