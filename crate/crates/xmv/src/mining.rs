//! Mini-batch construction and cross-modal semi-hard triplet selection.
//!
//! Positives are always the anchor's opposite-modality record of the same
//! subject, and negatives share the positive's modality, so a selfie anchor is
//! only ever compared against document embeddings (and vice versa).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Modality, PairedDataset};
use crate::embedding::{squared_distance, Embedding, UNIT_NORM_TOL};
use crate::error::{Error, Result};

/// Which modality may serve as the anchor during mining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnchorModality {
    /// Both selfie and document anchors (doubles usable triplets per batch).
    #[default]
    Both,
    /// Selfie anchors only.
    SelfieOnly,
}

/// A sampled mini-batch: `batch_size / 2` subjects with both of their images.
///
/// Index layout: `2k` is subject `k`'s document, `2k + 1` its selfie.
#[derive(Debug, Clone)]
pub struct MiningBatch {
    subject_ids: Vec<String>,
    features: Vec<Vec<f32>>,
}

impl MiningBatch {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn feature(&self, idx: usize) -> &[f32] {
        &self.features[idx]
    }

    pub fn subject_of(&self, idx: usize) -> usize {
        idx / 2
    }

    pub fn modality_of(&self, idx: usize) -> Modality {
        if idx.is_multiple_of(2) {
            Modality::Document
        } else {
            Modality::Selfie
        }
    }

    /// The same-subject, opposite-modality index.
    pub fn partner(&self, idx: usize) -> usize {
        idx ^ 1
    }
}

/// An anchor/positive/negative index triple under the cross-modal constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor_idx: usize,
    pub positive_idx: usize,
    pub negative_idx: usize,
    pub margin_used: f64,
}

/// Samples `batch_size / 2` subjects uniformly without replacement and packs
/// both images of each into a batch. Deterministic for a given rng state.
pub fn sample_batch<R: Rng>(
    dataset: &PairedDataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<MiningBatch> {
    if batch_size == 0 || !batch_size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "batch_size {batch_size} must be even and positive"
        )));
    }
    let n_subjects = batch_size / 2;
    if n_subjects > dataset.len() {
        return Err(Error::Config(format!(
            "batch needs {n_subjects} subjects but dataset has {}",
            dataset.len()
        )));
    }
    let picked = rand::seq::index::sample(rng, dataset.len(), n_subjects);
    let mut subject_ids = Vec::with_capacity(n_subjects);
    let mut features = Vec::with_capacity(batch_size);
    for i in picked {
        let s = &dataset.subjects()[i];
        subject_ids.push(s.id.clone());
        features.push(s.document.base_feature.clone());
        features.push(s.selfie.base_feature.clone());
    }
    Ok(MiningBatch {
        subject_ids,
        features,
    })
}

/// Cross-modal semi-hard selection over a batch.
///
/// Every eligible image serves as anchor once, paired with its same-subject
/// opposite-modality positive. Negatives are other subjects' embeddings with
/// the positive's modality. Per anchor: a uniformly random negative from the
/// semi-hard window `d_ap < d_an < d_ap + margin` when it is non-empty,
/// otherwise the hardest negative with `d_an > d_ap`, otherwise no triplet.
pub fn mine_semi_hard<R: Rng>(
    batch: &MiningBatch,
    head_embeddings: &[Embedding],
    margin: f64,
    anchor_modality: AnchorModality,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    if margin <= 0.0 {
        return Err(Error::Config(format!("margin {margin} must be positive")));
    }
    if head_embeddings.len() != batch.len() {
        return Err(Error::Dimension {
            expected: batch.len(),
            got: head_embeddings.len(),
        });
    }
    for e in head_embeddings {
        let norm = e.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Normalization(format!(
                "head embedding norm {norm} is not unit"
            )));
        }
    }

    let mut triplets = Vec::new();
    let mut semi_hard = Vec::new();
    for anchor in 0..batch.len() {
        if anchor_modality == AnchorModality::SelfieOnly
            && batch.modality_of(anchor) != Modality::Selfie
        {
            continue;
        }
        let positive = batch.partner(anchor);
        let d_ap = squared_distance(&head_embeddings[anchor], &head_embeddings[positive])?;
        let negative_modality = batch.modality_of(positive);

        semi_hard.clear();
        let mut fallback: Option<(usize, f64)> = None;
        for cand in 0..batch.len() {
            if batch.subject_of(cand) == batch.subject_of(anchor)
                || batch.modality_of(cand) != negative_modality
            {
                continue;
            }
            let d_an = squared_distance(&head_embeddings[anchor], &head_embeddings[cand])?;
            if d_ap < d_an && d_an < d_ap + margin {
                semi_hard.push(cand);
            }
            if d_an > d_ap {
                // Hardest admissible fallback: smallest d_an above d_ap; ties
                // go to the lowest index.
                match fallback {
                    Some((_, best)) if best <= d_an => {}
                    _ => fallback = Some((cand, d_an)),
                }
            }
        }
        let negative = if !semi_hard.is_empty() {
            Some(semi_hard[rng.random_range(0..semi_hard.len())])
        } else {
            fallback.map(|(idx, _)| idx)
        };
        if let Some(negative_idx) = negative {
            triplets.push(Triplet {
                anchor_idx: anchor,
                positive_idx: positive,
                negative_idx,
                margin_used: margin,
            });
        }
    }
    Ok(triplets)
}

/// Hinge triplet loss on unit vectors: `max(0, ‖a−p‖² − ‖a−n‖² + margin)`.
pub fn triplet_loss(a: &Embedding, p: &Embedding, n: &Embedding, margin: f64) -> Result<f64> {
    if margin <= 0.0 {
        return Err(Error::Config(format!("margin {margin} must be positive")));
    }
    let d_ap = squared_distance(a, p)?;
    let d_an = squared_distance(a, n)?;
    Ok((d_ap - d_an + margin).max(0.0))
}

/// Debug dump of mined triplets as CSV
/// (`anchor,positive,negative,d_ap,d_an,loss`).
pub fn write_triplet_csv(
    triplets: &[Triplet],
    head_embeddings: &[Embedding],
    path: &std::path::Path,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "anchor,positive,negative,d_ap,d_an,loss")?;
    for t in triplets {
        let d_ap = squared_distance(
            &head_embeddings[t.anchor_idx],
            &head_embeddings[t.positive_idx],
        )?;
        let d_an = squared_distance(
            &head_embeddings[t.anchor_idx],
            &head_embeddings[t.negative_idx],
        )?;
        let loss = (d_ap - d_an + t.margin_used).max(0.0);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            t.anchor_idx, t.positive_idx, t.negative_idx, d_ap, d_an, loss
        )?;
    }
    w.flush()?;
    Ok(())
}
