use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Document, EmbeddingMatrix, LabeledDataset, Series, SeriesError};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` iid standard-normal samples.
pub fn synth_gaussian_noise(n: usize, seed: u64) -> Result<Series, SeriesError> {
    if n == 0 {
        return Err(SeriesError::InvalidParameter("n must be at least 1".into()));
    }
    let mut r = rng(seed);
    Series::new((0..n).map(|_| r.sample(StandardNormal)).collect())
}

/// Fractional Gaussian noise by spectral synthesis.
///
/// White noise of length `2n` is shaped in the frequency domain by
/// `|k|^{-(2H-1)/2}` (zero DC), transformed back, truncated to `n` samples and
/// standardised. Doubling the length keeps the circular wrap-around out of the
/// returned window.
pub fn synth_fgn(n: usize, hurst: f64, seed: u64) -> Result<Series, SeriesError> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(SeriesError::InvalidParameter(format!(
            "hurst {hurst} outside (0, 1)"
        )));
    }
    if n < 64 {
        return Err(SeriesError::InvalidParameter(format!(
            "n = {n} below the minimum of 64"
        )));
    }
    let m = 2 * n;
    let mut r = rng(seed);
    let mut buf: Vec<Complex64> = (0..m)
        .map(|_| Complex64::new(r.sample(StandardNormal), 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m).process(&mut buf);
    let exponent = -(2.0 * hurst - 1.0) / 2.0;
    for (j, c) in buf.iter_mut().enumerate() {
        let k = j.min(m - j);
        *c *= if k == 0 {
            0.0
        } else {
            (k as f64).powf(exponent)
        };
    }
    planner.plan_fft_inverse(m).process(&mut buf);

    let x: Vec<f64> = buf[..n].iter().map(|c| c.re).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    Series::new(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Deterministic binomial multiplicative cascade of length `2^levels`.
///
/// Each cell splits its mass into a left child with weight `p` and a right
/// child with weight `1 - p`; the total mass stays 1.
pub fn synth_binomial_cascade(levels: u32, p: f64) -> Result<Series, SeriesError> {
    if !(1..=24).contains(&levels) {
        return Err(SeriesError::InvalidParameter(format!(
            "levels {levels} outside [1, 24]"
        )));
    }
    if !(p > 0.5 && p < 1.0) {
        return Err(SeriesError::InvalidParameter(format!(
            "p {p} outside (0.5, 1)"
        )));
    }
    let mut mass = vec![1.0];
    for _ in 0..levels {
        mass = mass.iter().flat_map(|&w| [w * p, w * (1.0 - p)]).collect();
    }
    Series::new(mass)
}

/// Parameters of the class-conditional embedded corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_docs: usize,
    pub n_classes: usize,
    pub n_tokens: usize,
    pub dim: usize,
    /// Distance between class means.
    pub separation: f64,
    pub seed: u64,
}

impl CorpusSpec {
    fn check(&self) -> Result<(), SeriesError> {
        if self.n_docs == 0 || self.n_classes == 0 || self.n_tokens == 0 || self.dim == 0 {
            return Err(SeriesError::InvalidParameter(
                "all corpus counts must be >= 1".into(),
            ));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(SeriesError::InvalidParameter(format!(
                "separation {} must be finite and >= 0",
                self.separation
            )));
        }
        Ok(())
    }
}

/// Class means pairwise `separation` apart: scaled axis vectors when the
/// classes fit in the embedding dimension, random unit directions otherwise.
fn class_means(spec: &CorpusSpec, n: usize, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let radius = spec.separation / std::f64::consts::SQRT_2;
    (0..n)
        .map(|c| {
            let mut v = vec![0.0; spec.dim];
            if n <= spec.dim {
                v[c] = radius;
            } else {
                v.iter_mut().for_each(|x| *x = r.sample(StandardNormal));
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter_mut().for_each(|x| *x *= radius / norm);
            }
            v
        })
        .collect()
}

/// Documents whose tokens are `class mean + N(0, I)`; labels cycle through the
/// classes so the corpus is balanced.
pub fn synth_embedded_corpus(spec: &CorpusSpec) -> Result<LabeledDataset, SeriesError> {
    spec.check()?;
    let mut r = rng(spec.seed);
    let means = class_means(spec, spec.n_classes, &mut r);
    let documents = (0..spec.n_docs)
        .map(|i| {
            let label = i % spec.n_classes;
            let data = (0..spec.n_tokens)
                .flat_map(|_| {
                    means[label]
                        .iter()
                        .map(|m| m + r.sample::<f64, _>(StandardNormal))
                        .collect::<Vec<_>>()
                })
                .collect();
            let tokens = EmbeddingMatrix::new(spec.n_tokens, spec.dim, data)?;
            Ok(Document {
                tokens,
                label,
                tags: None,
            })
        })
        .collect::<Result<Vec<_>, SeriesError>>()?;
    LabeledDataset::new(spec.n_classes, None, documents)
}

/// Tagging variant: every token draws its own tag uniformly and is embedded
/// around that tag's mean. The document label is the most frequent tag
/// (lowest index on ties) and `n_classes` equals the tag count.
pub fn synth_tagged_corpus(spec: &CorpusSpec) -> Result<LabeledDataset, SeriesError> {
    spec.check()?;
    let mut r = rng(spec.seed);
    let means = class_means(spec, spec.n_classes, &mut r);
    let documents = (0..spec.n_docs)
        .map(|_| {
            let tags: Vec<usize> = (0..spec.n_tokens)
                .map(|_| r.random_range(0..spec.n_classes))
                .collect();
            let data = tags
                .iter()
                .flat_map(|&t| {
                    means[t]
                        .iter()
                        .map(|m| m + r.sample::<f64, _>(StandardNormal))
                        .collect::<Vec<_>>()
                })
                .collect();
            let mut counts = vec![0usize; spec.n_classes];
            tags.iter().for_each(|&t| counts[t] += 1);
            let label = (0..spec.n_classes)
                .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
                .unwrap_or(0);
            let tokens = EmbeddingMatrix::new(spec.n_tokens, spec.dim, data)?;
            Ok(Document {
                tokens,
                label,
                tags: Some(tags),
            })
        })
        .collect::<Result<Vec<_>, SeriesError>>()?;
    LabeledDataset::new(spec.n_classes, Some(spec.n_classes), documents)
}
