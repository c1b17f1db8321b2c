//! Trainable embedding head fine-tuned with triplet loss via SGD with
//! momentum, with periodic validation and best-checkpoint selection.
//!
//! The head is an affine map followed by length normalization,
//! `z = (W·x + b) / ‖W·x + b‖`; gradients flow through the normalization via
//! its Jacobian `(I − z·zᵀ) / ‖y‖`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, Result};
use crate::eval::{tar_at_far, ScoreSet};
use crate::mining::{mine_semi_hard, sample_batch, AnchorModality};
use crate::valbuilder::ValidationSet;

/// Affine embedding head: `forward(x) = normalize(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingHead {
    weights: Vec<f64>,
    bias: Vec<f64>,
    d_in: usize,
    d_out: usize,
}

impl EmbeddingHead {
    /// Identity head: `W = I`, `b = 0`. Iteration zero of training therefore
    /// scores exactly like the raw base features.
    pub fn identity(dim: usize) -> EmbeddingHead {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        EmbeddingHead {
            weights,
            bias: vec![0.0; dim],
            d_in: dim,
            d_out: dim,
        }
    }

    /// Reduced-output head: an identity block plus truncated-Gaussian noise
    /// (clipped at two sigma), `b = 0`.
    pub fn with_identity_block<R: Rng>(
        d_out: usize,
        d_in: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<EmbeddingHead> {
        if d_out > d_in || d_out == 0 {
            return Err(Error::Config(format!(
                "d_out {d_out} must be in [1, d_in = {d_in}]"
            )));
        }
        let mut weights = vec![0.0; d_out * d_in];
        for w in weights.iter_mut() {
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            *w = sigma * g.clamp(-2.0, 2.0);
        }
        for i in 0..d_out {
            weights[i * d_in + i] += 1.0;
        }
        Ok(EmbeddingHead {
            weights,
            bias: vec![0.0; d_out],
            d_in,
            d_out,
        })
    }

    pub fn from_parts(weights: Vec<f64>, bias: Vec<f64>, d_out: usize, d_in: usize) -> Result<Self> {
        if weights.len() != d_out * d_in || bias.len() != d_out {
            return Err(Error::Dimension {
                expected: d_out * d_in,
                got: weights.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Normalization("non-finite head parameters".into()));
        }
        Ok(EmbeddingHead {
            weights,
            bias,
            d_in,
            d_out,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Pre-normalization output `y = W·x + b` and its norm.
    fn affine(&self, x: &[f32]) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.d_in {
            return Err(Error::Dimension {
                expected: self.d_in,
                got: x.len(),
            });
        }
        let mut y = Vec::with_capacity(self.d_out);
        for r in 0..self.d_out {
            let row = &self.weights[r * self.d_in..(r + 1) * self.d_in];
            // Four accumulators; fixed order regardless of threading.
            let mut acc = [0.0f64; 4];
            let chunks = self.d_in / 4;
            for c in 0..chunks {
                let j = c * 4;
                acc[0] += row[j] * x[j] as f64;
                acc[1] += row[j + 1] * x[j + 1] as f64;
                acc[2] += row[j + 2] * x[j + 2] as f64;
                acc[3] += row[j + 3] * x[j + 3] as f64;
            }
            let mut tail = 0.0;
            for j in chunks * 4..self.d_in {
                tail += row[j] * x[j] as f64;
            }
            y.push((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail + self.bias[r]);
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok((y, norm))
    }

    /// Unit-norm embedding of a base feature vector.
    pub fn forward(&self, x: &[f32]) -> Result<Embedding> {
        let (y, norm) = self.affine(x)?;
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Normalization(format!(
                "head output norm {norm} cannot be normalized"
            )));
        }
        Embedding::new(y.iter().map(|v| v / norm).collect::<Vec<_>>()).or_else(|_| {
            // Renormalize once more; long vectors can lose a few ulps.
            crate::embedding::l2_normalize(&y)
        })
    }
}

/// Hyperparameters of the fine-tuning loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub margin: f64,
    /// Validation cadence in iterations.
    pub eval_interval: u64,
    pub max_iterations: u64,
    pub seed: u64,
    /// FAR target used for checkpoint selection.
    pub selection_far: f64,
    pub anchor_modality: AnchorModality,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            momentum: 0.9,
            batch_size: 240,
            margin: 0.3,
            eval_interval: 200,
            max_iterations: 10_000,
            seed: 42,
            selection_far: 0.001,
            anchor_modality: AnchorModality::Both,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::Config("batch_size must be even and positive".into()));
        }
        if self.margin <= 0.0 {
            return Err(Error::Config("margin must be positive".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be positive".into()));
        }
        if !(self.selection_far > 0.0 && self.selection_far < 1.0) {
            return Err(Error::Config("selection_far must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One validation checkpoint in the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub iteration: u64,
    /// Mean mini-batch loss since the previous checkpoint (0 at iteration 0).
    pub mean_batch_loss: f64,
    /// Validation TAR at the selection FAR, averaged over folds.
    pub validation_tar: f64,
}

/// Per-checkpoint records plus the index of the best one.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub points: Vec<EvalPoint>,
    pub best_iteration: u64,
}

impl TrainHistory {
    pub fn best_point(&self) -> &EvalPoint {
        self.points
            .iter()
            .find(|p| p.iteration == self.best_iteration)
            .expect("best_iteration always refers to a recorded point")
    }

    /// Writes the history CSV: `iteration,loss,val_tar`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "iteration,loss,val_tar")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.iteration, p.mean_batch_loss, p.validation_tar)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<TrainHistory> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "iteration,loss,val_tar")) => {}
            _ => return Err(Error::parse(1, "missing history header")),
        }
        let mut points = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(line_no, "expected 3 fields"));
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::parse(line_no, format!("bad value {s:?}")))
            };
            points.push(EvalPoint {
                iteration: fields[0]
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad iteration {:?}", fields[0])))?,
                mean_batch_loss: parse_f(fields[1])?,
                validation_tar: parse_f(fields[2])?,
            });
        }
        if points.is_empty() {
            return Err(Error::parse(0, "history has no checkpoints"));
        }
        let best = points
            .iter()
            .fold(None::<&EvalPoint>, |best, p| match best {
                Some(b) if p.validation_tar > b.validation_tar => Some(p),
                None => Some(p),
                keep => keep,
            })
            .unwrap();
        Ok(TrainHistory {
            best_iteration: best.iteration,
            points,
        })
    }
}

/// Mean triplet loss over a list of `(anchor, positive, negative)` base
/// feature triples, with analytic gradients for `W` and `b`.
///
/// Inactive-hinge triplets count toward the mean but contribute zero gradient.
pub fn loss_and_gradient(
    head: &EmbeddingHead,
    triplet_features: &[(&[f32], &[f32], &[f32])],
    margin: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if triplet_features.is_empty() {
        return Err(Error::EmptyInput("triplet list"));
    }
    if margin <= 0.0 {
        return Err(Error::Config(format!("margin {margin} must be positive")));
    }

    // Fixed-size chunks accumulated independently, then combined in chunk
    // order: parallel yet bitwise independent of the thread count.
    type Partial = (f64, Vec<f64>, Vec<f64>);
    const CHUNK: usize = 32;
    let partials: Vec<Result<Partial>> = triplet_features
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss_sum = 0.0;
            let mut grad_w = vec![0.0; head.weights.len()];
            let mut grad_b = vec![0.0; head.bias.len()];
            for &(xa, xp, xn) in chunk {
                loss_sum += accumulate_triplet(head, xa, xp, xn, margin, &mut grad_w, &mut grad_b)?;
            }
            Ok((loss_sum, grad_w, grad_b))
        })
        .collect();

    let mut loss_sum = 0.0;
    let mut grad_w = vec![0.0; head.weights.len()];
    let mut grad_b = vec![0.0; head.bias.len()];
    for partial in partials {
        let (l, gw, gb) = partial?;
        loss_sum += l;
        for (acc, v) in grad_w.iter_mut().zip(&gw) {
            *acc += v;
        }
        for (acc, v) in grad_b.iter_mut().zip(&gb) {
            *acc += v;
        }
    }
    let n = triplet_features.len() as f64;
    for g in grad_w.iter_mut().chain(grad_b.iter_mut()) {
        *g /= n;
    }
    Ok((loss_sum / n, grad_w, grad_b))
}

/// Adds one triplet's gradient (unscaled by the mean) and returns its loss.
fn accumulate_triplet(
    head: &EmbeddingHead,
    xa: &[f32],
    xp: &[f32],
    xn: &[f32],
    margin: f64,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Result<f64> {
    let fwd = |x: &[f32]| -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let (y, norm) = head.affine(x)?;
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Normalization(
                "head output cannot be normalized".into(),
            ));
        }
        let z: Vec<f64> = y.iter().map(|v| v / norm).collect();
        Ok((y, norm, z))
    };
    let (_ya, na, za) = fwd(xa)?;
    let (_yp, np, zp) = fwd(xp)?;
    let (_yn, nn, zn) = fwd(xn)?;

    let d_ap: f64 = za.iter().zip(&zp).map(|(a, b)| (a - b) * (a - b)).sum();
    let d_an: f64 = za.iter().zip(&zn).map(|(a, b)| (a - b) * (a - b)).sum();
    let hinge = d_ap - d_an + margin;
    if hinge <= 0.0 {
        return Ok(0.0);
    }

    // dL/dz for the active hinge.
    let g_za: Vec<f64> = zn.iter().zip(&zp).map(|(n, p)| 2.0 * (n - p)).collect();
    let g_zp: Vec<f64> = zp.iter().zip(&za).map(|(p, a)| 2.0 * (p - a)).collect();
    let g_zn: Vec<f64> = za.iter().zip(&zn).map(|(a, n)| 2.0 * (a - n)).collect();

    for (x, z, norm, g_z) in [
        (xa, &za, na, &g_za),
        (xp, &zp, np, &g_zp),
        (xn, &zn, nn, &g_zn),
    ] {
        // Through z = y/‖y‖: dL/dy = (g − z·(zᵀg)) / ‖y‖.
        let zg: f64 = z.iter().zip(g_z).map(|(zi, gi)| zi * gi).sum();
        for r in 0..head.d_out {
            let gy = (g_z[r] - z[r] * zg) / norm;
            grad_b[r] += gy;
            let row = &mut grad_w[r * head.d_in..(r + 1) * head.d_in];
            for (w, xi) in row.iter_mut().zip(x) {
                *w += gy * *xi as f64;
            }
        }
    }
    Ok(hinge)
}

/// Classical momentum update: `v ← momentum·v − lr·g; θ ← θ + v`.
pub fn sgd_momentum_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    if grads.len() != params.len() || velocity.len() != params.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            got: grads.len().max(velocity.len()),
        });
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - learning_rate * *g;
        *p += *v;
    }
    Ok(())
}

/// Subject-index pairs of one fold (selfie side, document side).
type FoldPairs = Vec<(usize, usize)>;

/// Validation pair list resolved against a dataset, ready for repeated
/// rescoring with the current head.
struct ResolvedValidation {
    /// Per fold: (authentic pairs, impostor pairs).
    folds: Vec<(FoldPairs, FoldPairs)>,
}

fn resolve_validation(validation: &ValidationSet, data: &PairedDataset) -> Result<ResolvedValidation> {
    let resolve = |id: &str| -> Result<usize> {
        data.subject_index(id).ok_or_else(|| {
            Error::Config(format!("validation subject {id} missing from dataset"))
        })
    };
    let mut folds = Vec::with_capacity(validation.folds.len());
    for fold in &validation.folds {
        let mut authentic = Vec::with_capacity(fold.authentic.len());
        for p in &fold.authentic {
            authentic.push((resolve(&p.selfie_subject)?, resolve(&p.doc_subject)?));
        }
        let mut impostor = Vec::with_capacity(fold.impostor.len());
        for p in &fold.impostor {
            impostor.push((resolve(&p.selfie_subject)?, resolve(&p.doc_subject)?));
        }
        folds.push((authentic, impostor));
    }
    Ok(ResolvedValidation { folds })
}

/// Scores the fixed validation pair list with `head` and returns TAR at the
/// selection FAR averaged over folds.
fn validation_tar(
    head: &EmbeddingHead,
    data: &PairedDataset,
    resolved: &ResolvedValidation,
    selection_far: f64,
) -> Result<f64> {
    let embeddings: Vec<(Embedding, Embedding)> = data
        .subjects()
        .par_iter()
        .map(|s| {
            let doc = head.forward(&s.document.base_feature)?;
            let selfie = head.forward(&s.selfie.base_feature)?;
            Ok((doc, selfie))
        })
        .collect::<Result<_>>()?;
    let mut tar_sum = 0.0;
    for (authentic, impostor) in &resolved.folds {
        let score = |pairs: &[(usize, usize)]| -> Result<Vec<f64>> {
            pairs
                .iter()
                .map(|&(s_idx, d_idx)| {
                    cosine_similarity(&embeddings[s_idx].1, &embeddings[d_idx].0)
                })
                .collect()
        };
        let set = ScoreSet::new(score(authentic)?, score(impostor)?)?;
        tar_sum += tar_at_far(&set, selection_far)?.tar;
    }
    Ok(tar_sum / resolved.folds.len() as f64)
}

/// Runs the fine-tuning loop and returns the best head (by validation TAR at
/// the selection FAR, earliest iteration on ties) with its history.
///
/// Fully deterministic for a given config: sampling and mining use one seeded
/// generator, and all parallel work is order-independent.
pub fn train(
    train_set: &PairedDataset,
    val_data: &PairedDataset,
    validation: &ValidationSet,
    config: &TrainConfig,
) -> Result<(EmbeddingHead, TrainHistory)> {
    config.validate()?;
    if validation.folds.is_empty() || validation.folds.iter().all(|f| f.authentic.is_empty()) {
        return Err(Error::Config("validation set is empty".into()));
    }
    if config.batch_size / 2 > train_set.len() {
        return Err(Error::Config(format!(
            "batch_size {} needs more subjects than the training set has ({})",
            config.batch_size,
            train_set.len()
        )));
    }
    let resolved = resolve_validation(validation, val_data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut head = EmbeddingHead::identity(train_set.dim());
    let mut velocity_w = vec![0.0; head.weights.len()];
    let mut velocity_b = vec![0.0; head.bias.len()];

    let tar0 = validation_tar(&head, val_data, &resolved, config.selection_far)?;
    let mut points = vec![EvalPoint {
        iteration: 0,
        mean_batch_loss: 0.0,
        validation_tar: tar0,
    }];
    let mut best = (tar0, 0u64, head.clone());
    let mut window_losses: Vec<f64> = Vec::new();

    for iteration in 1..=config.max_iterations {
        let batch = sample_batch(train_set, config.batch_size, &mut rng)?;
        let head_embeddings: Vec<Embedding> = (0..batch.len())
            .into_par_iter()
            .map(|i| head.forward(batch.feature(i)))
            .collect::<Result<_>>()?;
        let triplets = mine_semi_hard(
            &batch,
            &head_embeddings,
            config.margin,
            config.anchor_modality,
            &mut rng,
        )?;
        if triplets.is_empty() {
            window_losses.push(0.0);
        } else {
            let features: Vec<(&[f32], &[f32], &[f32])> = triplets
                .iter()
                .map(|t| {
                    (
                        batch.feature(t.anchor_idx),
                        batch.feature(t.positive_idx),
                        batch.feature(t.negative_idx),
                    )
                })
                .collect();
            let (loss, grad_w, grad_b) = loss_and_gradient(&head, &features, config.margin)?;
            sgd_momentum_step(
                &mut head.weights,
                &grad_w,
                &mut velocity_w,
                config.learning_rate,
                config.momentum,
            )?;
            sgd_momentum_step(
                &mut head.bias,
                &grad_b,
                &mut velocity_b,
                config.learning_rate,
                config.momentum,
            )?;
            window_losses.push(loss);
        }

        if iteration % config.eval_interval == 0 {
            let tar = validation_tar(&head, val_data, &resolved, config.selection_far)?;
            let mean_loss = window_losses.iter().sum::<f64>() / window_losses.len() as f64;
            window_losses.clear();
            points.push(EvalPoint {
                iteration,
                mean_batch_loss: mean_loss,
                validation_tar: tar,
            });
            if tar > best.0 {
                best = (tar, iteration, head.clone());
            }
        }
    }

    let history = TrainHistory {
        points,
        best_iteration: best.1,
    };
    Ok((best.2, history))
}

/// On-disk checkpoint: a JSON header plus the row-major `W` and `b` arrays.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub d_out: usize,
    pub d_in: usize,
    pub iteration: u64,
    pub validation_tar: f64,
    pub config: TrainConfig,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Checkpoint {
    pub fn new(head: &EmbeddingHead, iteration: u64, validation_tar: f64, config: TrainConfig) -> Self {
        Checkpoint {
            d_out: head.d_out,
            d_in: head.d_in,
            iteration,
            validation_tar,
            config,
            weights: head.weights.clone(),
            bias: head.bias.clone(),
        }
    }

    pub fn head(&self) -> Result<EmbeddingHead> {
        EmbeddingHead::from_parts(self.weights.clone(), self.bias.clone(), self.d_out, self.d_in)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(&mut w, self)
            .map_err(|e| Error::Config(format!("cannot encode checkpoint: {e}")))?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(0, format!("bad checkpoint: {e}")))
    }
}
