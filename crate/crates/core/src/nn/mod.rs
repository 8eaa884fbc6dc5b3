//! The DeFFSi network on a small reverse-mode tape.

pub mod checkpoint;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod tape;
pub mod train;

pub use gradcheck::{grad_check, GradCheckReport};
pub use model::{
    attention_fv, birnn_forward, gate_fuse, scnn_forward, FeatureConfig, Model, ModelConfig,
    ModelError, Padding, Task,
};
pub use tape::{DiffArray, Tape, Var};
pub use train::{evaluate, train, train_on, EpochRecord, Evaluation, TrainConfig, TrainError};
