//! Unit-norm embeddings and cross-modal cosine scoring.
//!
//! All similarity math runs in f64; cosine values are clamped to `[-1, 1]`
//! after the dot product so rounding can never push scores outside the range
//! downstream quantile code assumes.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Tolerance on the unit-norm invariant of [`Embedding`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// A unit-norm embedding vector.
///
/// Constructed through [`l2_normalize`] (or [`Embedding::new`] for vectors
/// that are already normalized), so every value of this type satisfies
/// `|‖v‖₂ − 1| ≤ 1e-6`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: Vec<f64>,
}

impl Embedding {
    /// Wraps a vector that is already unit-norm within [`UNIT_NORM_TOL`].
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Normalization("non-finite component".into()));
        }
        let norm = dot(&vector, &vector).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Normalization(format!(
                "vector norm {norm} is not within {UNIT_NORM_TOL} of 1"
            )));
        }
        Ok(Embedding { vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }

    /// Test-only escape hatch for exercising invariant checks downstream.
    #[cfg(test)]
    pub(crate) fn new_unchecked(vector: Vec<f64>) -> Self {
        Embedding { vector }
    }
}

/// Dot product with four independent accumulators.
///
/// The fixed lane count keeps the summation order identical regardless of
/// thread count while breaking the serial FP dependency chain.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Scales `v` to unit Euclidean norm.
///
/// Fails with a normalization error on zero-norm or non-finite input.
pub fn l2_normalize(v: &[f64]) -> Result<Embedding> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Normalization("non-finite component".into()));
    }
    let norm = dot(v, v).sqrt();
    if norm == 0.0 {
        return Err(Error::Normalization("zero-norm vector".into()));
    }
    let vector = v.iter().map(|x| x / norm).collect();
    Ok(Embedding { vector })
}

/// Cosine similarity of two unit embeddings: their dot product, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(dot(&a.vector, &b.vector).clamp(-1.0, 1.0))
}

/// Squared Euclidean distance `‖a − b‖²`.
///
/// For unit vectors this equals `2 − 2·cosine_similarity(a, b)`; the identity
/// is checked as a test property rather than assumed here.
pub fn squared_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut acc = 0.0;
    for (x, y) in a.vector.iter().zip(&b.vector) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc)
}

/// Dense selfie-by-document cosine score matrix.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    scores: Vec<f64>,
    n_selfies: usize,
    n_docs: usize,
}

impl ScoreMatrix {
    pub fn n_selfies(&self) -> usize {
        self.n_selfies
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Score of selfie `i` against document `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n_docs + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_docs..(i + 1) * self.n_docs]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }
}

/// Scores every selfie against every document: `M[i][j] = cos(selfies[i], docs[j])`.
///
/// Rows are partitioned across worker threads; each cell is computed
/// independently, so the output is bit-identical for any thread count.
pub fn cross_modal_scores(docs: &[Embedding], selfies: &[Embedding]) -> Result<ScoreMatrix> {
    check_score_inputs(docs, selfies)?;
    let n_docs = docs.len();
    let mut scores = vec![0.0f64; selfies.len() * n_docs];
    scores
        .par_chunks_mut(n_docs)
        .zip(selfies.par_iter())
        .for_each(|(row, selfie)| {
            for (cell, doc) in row.iter_mut().zip(docs) {
                *cell = dot(&selfie.vector, &doc.vector).clamp(-1.0, 1.0);
            }
        });
    Ok(ScoreMatrix {
        scores,
        n_selfies: selfies.len(),
        n_docs,
    })
}

/// Single-threaded reference path for [`cross_modal_scores`].
pub fn cross_modal_scores_serial(docs: &[Embedding], selfies: &[Embedding]) -> Result<ScoreMatrix> {
    check_score_inputs(docs, selfies)?;
    let n_docs = docs.len();
    let mut scores = Vec::with_capacity(selfies.len() * n_docs);
    for selfie in selfies {
        for doc in docs {
            scores.push(dot(&selfie.vector, &doc.vector).clamp(-1.0, 1.0));
        }
    }
    Ok(ScoreMatrix {
        scores,
        n_selfies: selfies.len(),
        n_docs,
    })
}

fn check_score_inputs(docs: &[Embedding], selfies: &[Embedding]) -> Result<()> {
    if docs.is_empty() {
        return Err(Error::EmptyInput("document embeddings"));
    }
    if selfies.is_empty() {
        return Err(Error::EmptyInput("selfie embeddings"));
    }
    let dim = docs[0].dim();
    for e in docs.iter().chain(selfies) {
        if e.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: e.dim(),
            });
        }
    }
    Ok(())
}
