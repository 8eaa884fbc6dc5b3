//! Series and corpus carriers, file ingestion, and seeded synthetic generators.
//!
//! Every generator is a pure function of its arguments, seed included, and
//! doubles as an oracle for the estimators and the trainer.

mod io;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dataset, load_series, save_dataset, SeriesFormat};
pub use synth::{
    synth_binomial_cascade, synth_embedded_corpus, synth_fgn, synth_gaussian_noise,
    synth_tagged_corpus, CorpusSpec,
};

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series is empty")]
    Empty,
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("json element {index}: {reason}")]
    JsonElement { index: usize, reason: String },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding matrix: {0}")]
    Shape(String),
    #[error("document {doc}: {reason}")]
    Document { doc: usize, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Ordered, non-empty sequence of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Series(Vec<f64>);

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SeriesError::NonFinite { index, value });
        }
        Ok(Series(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `a * x + b` for every sample.
    pub fn affine(&self, a: f64, b: f64) -> Result<Series, SeriesError> {
        Series::new(self.0.iter().map(|v| a * v + b).collect())
    }
}

impl TryFrom<Vec<f64>> for Series {
    type Error = SeriesError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Series::new(v)
    }
}

impl From<Series> for Vec<f64> {
    fn from(s: Series) -> Self {
        s.0
    }
}

impl AsRef<[f64]> for Series {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Token-major embedding matrix: `rows` tokens, each a `cols`-dimensional vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, SeriesError> {
        if rows == 0 || cols == 0 {
            return Err(SeriesError::Shape(format!("{rows}x{cols} has no entries")));
        }
        if data.len() != rows * cols {
            return Err(SeriesError::Shape(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SeriesError::NonFinite { index, value });
        }
        Ok(EmbeddingMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, SeriesError> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(SeriesError::Shape(format!(
                "token {i} has dimension {}, expected {d}",
                r.len()
            )));
        }
        EmbeddingMatrix::new(n, d, rows.into_iter().flatten().collect())
    }

    /// Number of tokens.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Embedding dimension.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl TryFrom<Vec<Vec<f64>>> for EmbeddingMatrix {
    type Error = SeriesError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        EmbeddingMatrix::from_rows(rows)
    }
}

impl From<EmbeddingMatrix> for Vec<Vec<f64>> {
    fn from(m: EmbeddingMatrix) -> Self {
        m.data.chunks(m.cols).map(<[f64]>::to_vec).collect()
    }
}

/// Mean over the token axis: one value per embedding dimension.
pub fn mean_embedding(m: &EmbeddingMatrix) -> Series {
    let mut acc = vec![0.0; m.cols];
    for i in 0..m.rows {
        for (a, v) in acc.iter_mut().zip(m.row(i)) {
            *a += v;
        }
    }
    let n = m.rows as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Series(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub tokens: EmbeddingMatrix,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub n_classes: usize,
    /// Size of the per-token tag alphabet, when documents carry tags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tags: Option<usize>,
    pub documents: Vec<Document>,
}

impl LabeledDataset {
    pub fn new(
        n_classes: usize,
        n_tags: Option<usize>,
        documents: Vec<Document>,
    ) -> Result<Self, SeriesError> {
        let ds = LabeledDataset {
            n_classes,
            n_tags,
            documents,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        if self.n_classes == 0 {
            return Err(SeriesError::InvalidParameter(
                "n_classes must be positive".into(),
            ));
        }
        let dim = self.documents.first().map(|d| d.tokens.cols());
        for (doc, d) in self.documents.iter().enumerate() {
            if d.label >= self.n_classes {
                return Err(SeriesError::Document {
                    doc,
                    reason: format!("label {} outside [0, {})", d.label, self.n_classes),
                });
            }
            if Some(d.tokens.cols()) != dim {
                return Err(SeriesError::Document {
                    doc,
                    reason: format!(
                        "embedding dimension {} differs from {dim:?}",
                        d.tokens.cols()
                    ),
                });
            }
            if let Some(tags) = &d.tags {
                if tags.len() != d.tokens.rows() {
                    return Err(SeriesError::Document {
                        doc,
                        reason: format!("{} tags for {} tokens", tags.len(), d.tokens.rows()),
                    });
                }
                let n_tags = self.n_tags.ok_or_else(|| SeriesError::Document {
                    doc,
                    reason: "tags present but dataset has no n_tags".into(),
                })?;
                if let Some(t) = tags.iter().find(|&&t| t >= n_tags) {
                    return Err(SeriesError::Document {
                        doc,
                        reason: format!("tag {t} outside [0, {n_tags})"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.documents.first().map(|d| d.tokens.cols())
    }

    pub fn is_tagged(&self) -> bool {
        self.n_tags.is_some() && self.documents.iter().all(|d| d.tags.is_some())
    }
}
