//! Multifractal text analysis.
//!
//! The crate is organised bottom-up:
//!
//! * [`series`]: validated series, embedding matrices, labelled corpora, file
//!   ingestion and seeded synthetic generators (white noise, fractional
//!   Gaussian noise, binomial cascades, class-conditional embedded corpora).
//! * [`fourier`]: truncated Fourier-series fit with entropy-selected order and
//!   reconstruction (the denoising front end of FS-MFA).
//! * [`multifractal`]: profile, volatility-weighted trend, windowed variances,
//!   q-order fluctuation functions and generalized Hurst exponents for the
//!   FS-MFA, MF-DHV and MF-DFA variants.
//! * [`activations`]: Sital and the eleven baseline activations with analytic
//!   derivatives.
//! * [`nn`]: a small reverse-mode tape, the DeFFSi network, its trainer,
//!   checkpoints and gradient checking.
//! * [`experiment`]: the train/evaluate protocol and the comparison harnesses.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature disabled every path runs sequentially and produces identical
//! results.

pub mod activations;
pub mod exec;
pub mod experiment;
pub mod fourier;
pub mod multifractal;
pub mod nn;
pub mod series;

pub use activations::{ActivationKind, ActivationSpec};
pub use exec::Execution;
pub use fourier::{denoise, Denoised, FourierModel};
pub use multifractal::{hurst_profile, HurstProfile, Method, MfaConfig};
pub use series::{EmbeddingMatrix, LabeledDataset, Series};

/// Version tag written into every JSON artefact.
pub const FORMAT_VERSION: u32 = 1;
