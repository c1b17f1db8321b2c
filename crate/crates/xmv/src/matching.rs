//! Scoring a paired dataset under an embedding head: authentic scores are
//! each subject's own document/selfie pair, impostor scores are all ordered
//! selfie-vs-document pairs between distinct subjects of the same group.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::PairedDataset;
use crate::embedding::{cosine_similarity, cross_modal_scores, Embedding};
use crate::error::{Error, Result};
use crate::eval::{PairType, ScoreRow, ScoreSet};
use crate::trainer::EmbeddingHead;

/// Document and selfie embeddings for every subject, in dataset order.
pub fn embed_dataset(
    dataset: &PairedDataset,
    head: &EmbeddingHead,
) -> Result<Vec<(Embedding, Embedding)>> {
    if head.d_in() != dataset.dim() {
        return Err(Error::Dimension {
            expected: dataset.dim(),
            got: head.d_in(),
        });
    }
    dataset
        .subjects()
        .par_iter()
        .map(|s| {
            let doc = head.forward(&s.document.base_feature)?;
            let selfie = head.forward(&s.selfie.base_feature)?;
            Ok((doc, selfie))
        })
        .collect()
}

/// Subject indices grouped by age-span subset label.
pub fn subset_partition(dataset: &PairedDataset) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.subjects().iter().enumerate() {
        groups.entry(s.subset_label()?.name).or_default().push(i);
    }
    Ok(groups)
}

/// Authentic and impostor scores for a group of subject indices.
///
/// Impostors are the `n·(n−1)` ordered selfie-vs-document pairs between
/// distinct subjects of the group.
pub fn group_score_set(
    embeddings: &[(Embedding, Embedding)],
    indices: &[usize],
) -> Result<ScoreSet> {
    if indices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "group needs at least 2 subjects, found {}",
            indices.len()
        )));
    }
    let docs: Vec<Embedding> = indices.iter().map(|&i| embeddings[i].0.clone()).collect();
    let selfies: Vec<Embedding> = indices.iter().map(|&i| embeddings[i].1.clone()).collect();
    let matrix = cross_modal_scores(&docs, &selfies)?;
    let n = indices.len();
    let mut authentic = Vec::with_capacity(n);
    let mut impostor = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                authentic.push(matrix.get(i, j));
            } else {
                impostor.push(matrix.get(i, j));
            }
        }
    }
    ScoreSet::new(authentic, impostor)
}

/// Labeled score rows for a group (for score-file dumps).
pub fn group_score_rows(
    dataset: &PairedDataset,
    embeddings: &[(Embedding, Embedding)],
    indices: &[usize],
) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::with_capacity(indices.len() * indices.len());
    for &i in indices {
        for &j in indices {
            let score = cosine_similarity(&embeddings[i].1, &embeddings[j].0)?;
            rows.push(ScoreRow {
                pair_type: if i == j {
                    PairType::Authentic
                } else {
                    PairType::Impostor
                },
                selfie_subject: dataset.subjects()[i].id.clone(),
                doc_subject: dataset.subjects()[j].id.clone(),
                score,
            });
        }
    }
    Ok(rows)
}

/// Mean authentic and mean impostor score over a group of subject indices.
pub fn group_mean_scores(
    embeddings: &[(Embedding, Embedding)],
    indices: &[usize],
) -> Result<(f64, f64)> {
    let set = group_score_set(embeddings, indices)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((mean(set.authentic()), mean(set.impostor())))
}
