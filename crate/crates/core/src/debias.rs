//! Embeddings, the corruption prototype, and the offset operation.
//!
//! Image features are unit L2-normalized D-vectors. The mean embedding of
//! the negative augmentations acts as a corruption prototype; subtracting
//! `beta` times that prototype from each image feature suppresses the
//! corruption component. The debiased vectors are deliberately NOT
//! renormalized: logits are taken directly from them, and renormalization
//! would change only logit magnitudes, never the argmax. It is available as
//! an explicit option for ablation.

use crate::error::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-6;

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scale a raw vector to unit L2 norm.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(raw);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(raw.iter().map(|x| x / norm).collect())
}

/// A batch of unit-norm D-dimensional image features.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

impl EmbeddingBatch {
    /// Validates that every vector is D-dimensional and unit norm
    /// (tolerance 1e-6).
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let dim = vectors[0].len();
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: format!("{dim}-dim vector"),
                    actual: format!("{}-dim vector at index {i}", v.len()),
                });
            }
            let norm = l2_norm(v);
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotUnitVector(norm));
            }
        }
        Ok(Self { vectors, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

/// Mean embedding of the negative augmentations.
#[derive(Debug, Clone)]
pub struct NegativePrototype {
    n_bar: Vec<f64>,
    m_used: usize,
}

impl NegativePrototype {
    pub fn vector(&self) -> &[f64] {
        &self.n_bar
    }

    /// Number of negative embeddings averaged.
    pub fn m_used(&self) -> usize {
        self.m_used
    }
}

/// Componentwise arithmetic mean of the negative embeddings.
pub fn mean_prototype(negatives: &[Vec<f64>]) -> Result<NegativePrototype> {
    if negatives.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    let dim = negatives[0].len();
    let mut sum = vec![0.0f64; dim];
    for (i, n) in negatives.iter().enumerate() {
        if n.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: format!("{dim}-dim vector"),
                actual: format!("{}-dim vector at index {i}", n.len()),
            });
        }
        for (s, x) in sum.iter_mut().zip(n) {
            *s += x;
        }
    }
    let inv = 1.0 / negatives.len() as f64;
    for s in sum.iter_mut() {
        *s *= inv;
    }
    Ok(NegativePrototype {
        n_bar: sum,
        m_used: negatives.len(),
    })
}

/// Normalized class text embeddings with their labels.
#[derive(Debug, Clone)]
pub struct TextBank {
    embeddings: Vec<Vec<f64>>,
    class_names: Vec<String>,
    dim: usize,
}

impl TextBank {
    pub fn new(embeddings: Vec<Vec<f64>>, class_names: Vec<String>) -> Result<Self> {
        if embeddings.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "text bank needs at least 2 classes, got {}",
                embeddings.len()
            )));
        }
        if embeddings.len() != class_names.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} class names", embeddings.len()),
                actual: format!("{}", class_names.len()),
            });
        }
        let dim = embeddings[0].len();
        for (i, t) in embeddings.iter().enumerate() {
            if t.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: format!("{dim}-dim vector"),
                    actual: format!("{}-dim vector at class {i}", t.len()),
                });
            }
            let norm = l2_norm(t);
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotUnitVector(norm));
            }
        }
        Ok(Self {
            embeddings,
            class_names,
            dim,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.embeddings.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }
}

/// Debiased feature vectors `d_i = v_i − β·n̄` together with the offset
/// parameters that produced them.
#[derive(Debug, Clone)]
pub struct DebiasedBatch {
    vectors: Vec<Vec<f64>>,
    beta: f64,
}

impl DebiasedBatch {
    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Unit-norm copies of the debiased vectors, for pipelines that expect
    /// cosine-ready features. Off the default path: renormalization changes
    /// logit magnitudes (and therefore entropies) but never the argmax.
    pub fn renormalized(&self) -> Result<Vec<Vec<f64>>> {
        self.vectors.iter().map(|v| normalize(v)).collect()
    }
}

/// Subtract `beta` times the prototype from every embedding. No
/// renormalization.
pub fn offset(batch: &EmbeddingBatch, proto: &NegativePrototype, beta: f64) -> Result<DebiasedBatch> {
    if proto.n_bar.len() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}-dim prototype", batch.dim()),
            actual: format!("{}-dim prototype", proto.n_bar.len()),
        });
    }
    if !beta.is_finite() {
        return Err(Error::NonFiniteLogits);
    }
    let vectors = batch
        .vectors()
        .iter()
        .map(|v| {
            v.iter()
                .zip(&proto.n_bar)
                .map(|(x, n)| x - beta * n)
                .collect()
        })
        .collect();
    Ok(DebiasedBatch { vectors, beta })
}

/// Raw offset on a single vector; used where no batch wrapper is warranted.
pub fn offset_vector(v: &[f64], n_bar: &[f64], beta: f64) -> Vec<f64> {
    v.iter().zip(n_bar).map(|(x, n)| x - beta * n).collect()
}

/// Similarity logits against the bank, scaled by 100.
pub fn logits(d: &[f64], bank: &TextBank) -> Result<Vec<f64>> {
    if d.len() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}-dim feature", bank.dim()),
            actual: format!("{}-dim feature", d.len()),
        });
    }
    Ok(bank
        .embeddings()
        .iter()
        .map(|t| 100.0 * dot(d, t))
        .collect())
}

/// Index of the class with the highest similarity; ties break to the lowest
/// index.
pub fn predict(d: &[f64], bank: &TextBank) -> Result<usize> {
    let l = logits(d, bank)?;
    Ok(argmax(&l))
}

/// First index attaining the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
