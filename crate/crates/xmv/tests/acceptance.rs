//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (run with `--nocapture` to see them all).
//!
//! Oracles here are deliberately naive re-derivations (try-every-threshold
//! counting loops, full finite-difference Jacobians, exhaustive pair
//! enumeration) kept independent of the library's implementation paths.

use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use xmv::cli;
use xmv::dataset::{CardFormat, Gender, ImageRecord, Modality, PairedDataset, Subject};
use xmv::embedding::{cross_modal_scores, cross_modal_scores_serial, l2_normalize, Embedding};
use xmv::eval::{d_prime, tar_at_far, threshold_at_far, ScoreSet};
use xmv::mining::{mine_semi_hard, sample_batch, AnchorModality};
use xmv::synth::SynthConfig;
use xmv::trainer::{loss_and_gradient, EmbeddingHead, TrainConfig};
use xmv::valbuilder::{build_hard_validation, ImpostorDirection};

/// Wall-clock budgets are asserted, so the timed criteria must not share the
/// two cores; this lock serializes them.
fn timing_lock() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn pass(criterion: u32, details: &str) {
    println!("[criterion {criterion}] PASS - {details}");
}

// ---------------------------------------------------------------------------
// Criterion 1: threshold/TAR oracle equivalence
// ---------------------------------------------------------------------------

/// Try-every-threshold oracle: candidates are the observed impostor scores
/// plus +inf; feasibility and rates come from direct counting.
fn oracle_threshold(impostor: &[f64], far_target: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &t in impostor {
        let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
        if far <= far_target && t < best {
            best = t;
        }
    }
    best
}

fn oracle_tar(authentic: &[f64], impostor: &[f64], far_target: f64) -> (f64, f64, f64) {
    let mut threshold = oracle_threshold(impostor, far_target);
    if threshold == f64::INFINITY {
        let max_imp = impostor.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut above = f64::INFINITY;
        for &a in authentic {
            if a > max_imp && a < above {
                above = a;
            }
        }
        threshold = above;
    }
    let tar = authentic.iter().filter(|&&a| a >= threshold).count() as f64 / authentic.len() as f64;
    let far = impostor.iter().filter(|&&s| s >= threshold).count() as f64 / impostor.len() as f64;
    (threshold, tar, far)
}

#[test]
fn criterion_1_threshold_oracle_equivalence() {
    let _guard = timing_lock();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0usize;
    for case in 0..1000 {
        // Mostly small sets, with a tail of large ones up to 5000.
        let max = match case % 20 {
            0 => 5000,
            1..=4 => 1000,
            _ => 60,
        };
        let n_imp = rng.random_range(1..=max);
        let n_auth = rng.random_range(1..=max);
        // Half the cases draw from a coarse grid to engineer ties.
        let discrete = case % 2 == 0;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if discrete {
                        rng.random_range(-16i32..=16) as f64 / 16.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        };
        let impostor = draw(n_imp);
        let authentic = draw(n_auth);
        let far_target = match case % 5 {
            0 => 0.0,
            1 => 0.0001,
            2 => rng.random_range(0..=n_imp) as f64 / n_imp as f64,
            3 => rng.random_range(0.0..1.0),
            _ => 0.999999,
        }
        .min(0.999999);

        let got_t = threshold_at_far(&impostor, far_target).unwrap();
        let (want_t, want_tar, want_far) = oracle_tar(&authentic, &impostor, far_target);
        let set = ScoreSet::new(authentic.clone(), impostor.clone()).unwrap();
        let got = tar_at_far(&set, far_target).unwrap();
        // Exact equality, not tolerance.
        assert_eq!(got_t, oracle_threshold(&impostor, far_target), "case {case}");
        assert_eq!(got.threshold, want_t, "case {case}");
        assert_eq!(got.tar, want_tar, "case {case}");
        assert_eq!(got.achieved_far, want_far, "case {case}");
        assert!(got.achieved_far <= far_target, "case {case}");
        checked += 1;
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    pass(
        1,
        &format!("{checked} random score sets match the enumeration oracle exactly in {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: gradient check against central finite differences
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_gradient_check() {
    let _guard = timing_lock();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let h = 1e-5;
    let mut max_err = 0.0f64;
    let mut case = 0;
    while case < 100 {
        let d_in = rng.random_range(3..9);
        let d_out = d_in;
        let weights: Vec<f64> = (0..d_out * d_in)
            .map(|i| {
                let base = if i % (d_in + 1) == 0 { 1.0 } else { 0.0 };
                base + rng.random_range(-0.4..0.4)
            })
            .collect();
        let bias: Vec<f64> = (0..d_out).map(|_| rng.random_range(-0.2..0.2)).collect();
        let head = EmbeddingHead::from_parts(weights, bias, d_out, d_in).unwrap();
        let margin = rng.random_range(0.1..0.6);
        let feat = |rng: &mut ChaCha8Rng| -> Vec<f32> {
            (0..d_in).map(|_| rng.random_range(-1.0f32..1.0)).collect()
        };
        let (xa, xp, xn) = (feat(&mut rng), feat(&mut rng), feat(&mut rng));

        // Skip cases sitting on the hinge kink, where one-sided subgradients
        // make finite differences meaningless.
        let fwd = |x: &[f32]| head.forward(x).unwrap();
        let d2 = |a: &Embedding, b: &Embedding| {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        };
        let (za, zp, zn) = (fwd(&xa), fwd(&xp), fwd(&xn));
        let hinge = d2(&za, &zp) - d2(&za, &zn) + margin;
        if hinge.abs() < 1e-3 {
            continue;
        }
        case += 1;

        let triplets = [(&xa[..], &xp[..], &xn[..])];
        let (_, gw, gb) = loss_and_gradient(&head, &triplets, margin).unwrap();
        let loss_of = |w: &[f64], b: &[f64]| -> f64 {
            let head = EmbeddingHead::from_parts(w.to_vec(), b.to_vec(), d_out, d_in).unwrap();
            loss_and_gradient(&head, &triplets, margin).unwrap().0
        };

        let mut numeric_w = vec![0.0; gw.len()];
        for i in 0..gw.len() {
            let mut wp = head.weights().to_vec();
            let mut wm = head.weights().to_vec();
            wp[i] += h;
            wm[i] -= h;
            numeric_w[i] = (loss_of(&wp, head.bias()) - loss_of(&wm, head.bias())) / (2.0 * h);
        }
        let mut numeric_b = vec![0.0; gb.len()];
        for i in 0..gb.len() {
            let mut bp = head.bias().to_vec();
            let mut bm = head.bias().to_vec();
            bp[i] += h;
            bm[i] -= h;
            numeric_b[i] = (loss_of(head.weights(), &bp) - loss_of(head.weights(), &bm)) / (2.0 * h);
        }
        let scale = gw
            .iter()
            .chain(&gb)
            .chain(&numeric_w)
            .chain(&numeric_b)
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(1e-12);
        let err = gw
            .iter()
            .zip(&numeric_w)
            .chain(gb.iter().zip(&numeric_b))
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
            / scale;
        assert!(err <= 1e-5, "case {case}: relative error {err}");
        max_err = max_err.max(err);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    pass(
        2,
        &format!("100 gradient checks, max relative error {max_err:.2e} in {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: validation-builder contract
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_validation_builder_contract() {
    // A >= 3000-subject pool built straight from the generator.
    let config = SynthConfig {
        n_train_subjects: 3_200,
        n_test_per_subset: 2,
        d_in: 32,
        drift_rank: 4,
        seed: 33,
        ..SynthConfig::default()
    };
    let pool = xmv::synth::generate(&config).unwrap().train;
    assert!(pool.len() >= 3000);
    let head = EmbeddingHead::identity(32);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let set = build_hard_validation(
        &pool,
        |x| head.forward(x),
        10,
        300,
        ImpostorDirection::SelfieToDoc,
        &mut rng,
    )
    .unwrap();

    assert_eq!(set.folds.len(), 10);
    for fold in &set.folds {
        assert_eq!(fold.authentic.len(), 300);
        assert_eq!(fold.impostor.len(), 300);
    }
    assert_eq!(set.total_pairs(), 6000);
    // Subject-disjoint across folds.
    let mut seen = std::collections::HashSet::new();
    for fold in &set.folds {
        let mut fold_subjects = std::collections::HashSet::new();
        for p in fold.authentic.iter().chain(&fold.impostor) {
            fold_subjects.insert(p.selfie_subject.clone());
            fold_subjects.insert(p.doc_subject.clone());
        }
        for s in fold_subjects {
            assert!(seen.insert(s), "subject appears in two folds");
        }
    }

    // Toy fold: exhaustive enumeration of hardest pairs.
    let toy = toy_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let toy_set = build_hard_validation(
        &toy,
        |x| head_2().forward(x),
        1,
        3,
        ImpostorDirection::SelfieToDoc,
        &mut rng,
    )
    .unwrap();
    let cos = |a: &[f32], b: &[f32]| -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    // Hard positives: the 3 lowest authentic scores of the 6 subjects.
    let mut auth: Vec<(f64, String)> = toy
        .subjects()
        .iter()
        .map(|s| (cos(&s.selfie.base_feature, &s.document.base_feature), s.id.clone()))
        .collect();
    auth.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let expected: std::collections::BTreeSet<String> =
        auth[..3].iter().map(|(_, id)| id.clone()).collect();
    let got: std::collections::BTreeSet<String> = toy_set.folds[0]
        .authentic
        .iter()
        .map(|p| p.selfie_subject.clone())
        .collect();
    assert_eq!(got, expected, "hard positives must be the lowest authentic scores");
    // Hard negatives: per kept subject, argmax impostor among kept subjects.
    for pair in &toy_set.folds[0].impostor {
        let i = toy.subject_index(&pair.selfie_subject).unwrap();
        let best = expected
            .iter()
            .filter(|id| **id != pair.selfie_subject)
            .map(|id| {
                let j = toy.subject_index(id).unwrap();
                (
                    cos(
                        &toy.subjects()[i].selfie.base_feature,
                        &toy.subjects()[j].document.base_feature,
                    ),
                    id.clone(),
                )
            })
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(&a.1)))
            .unwrap();
        assert_eq!(pair.doc_subject, best.1, "impostor argmax mismatch");
    }
    pass(
        3,
        "3,200-subject pool gives 10 disjoint folds x (300 + 300) = 6,000 pairs; toy folds match enumeration",
    );
}

fn head_2() -> EmbeddingHead {
    EmbeddingHead::identity(2)
}

fn toy_pool() -> PairedDataset {
    let subject = |id: &str, doc: [f32; 2], selfie: [f32; 2]| Subject {
        id: id.into(),
        document: ImageRecord {
            subject_id: id.into(),
            modality: Modality::Document,
            gender: Gender::Male,
            age_at_capture: 12,
            card_format: CardFormat::Yellow,
            base_feature: doc.to_vec(),
        },
        selfie: ImageRecord {
            subject_id: id.into(),
            modality: Modality::Selfie,
            gender: Gender::Male,
            age_at_capture: 18,
            card_format: CardFormat::NotApplicable,
            base_feature: selfie.to_vec(),
        },
    };
    PairedDataset::from_subjects(vec![
        subject("t0", [1.0, 0.0], [0.9, 0.44]),
        subject("t1", [0.0, 1.0], [0.5, 0.87]),
        subject("t2", [0.7, 0.7], [-0.7, 0.72]),
        subject("t3", [0.0, -1.0], [0.9, -0.44]),
        subject("t4", [-1.0, 0.0], [-0.98, 0.2]),
        subject("t5", [0.6, -0.8], [0.63, -0.78]),
    ])
    .unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 4: mining soundness over 10^4 random batches
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_mining_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let dim = 6;
    let mut total_triplets = 0usize;
    for batch_no in 0..10_000 {
        let n_subjects = rng.random_range(2..=10);
        let subjects: Vec<Subject> = (0..n_subjects)
            .map(|i| {
                let feat = |rng: &mut ChaCha8Rng| -> Vec<f32> {
                    (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
                };
                let id = format!("b{i:02}");
                Subject {
                    id: id.clone(),
                    document: ImageRecord {
                        subject_id: id.clone(),
                        modality: Modality::Document,
                        gender: Gender::Female,
                        age_at_capture: 12,
                        card_format: CardFormat::Blue,
                        base_feature: feat(&mut rng),
                    },
                    selfie: ImageRecord {
                        subject_id: id.clone(),
                        modality: Modality::Selfie,
                        gender: Gender::Female,
                        age_at_capture: 18,
                        card_format: CardFormat::NotApplicable,
                        base_feature: feat(&mut rng),
                    },
                }
            })
            .collect();
        let ds = PairedDataset::from_subjects(subjects).unwrap();
        let batch = sample_batch(&ds, 2 * n_subjects, &mut rng).unwrap();
        let embeddings: Vec<Embedding> = (0..batch.len())
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                l2_normalize(&v).unwrap()
            })
            .collect();
        let margin = rng.random_range(0.05..1.0);
        let triplets =
            mine_semi_hard(&batch, &embeddings, margin, AnchorModality::Both, &mut rng).unwrap();

        let d2 = |a: usize, b: usize| -> f64 {
            embeddings[a]
                .as_slice()
                .iter()
                .zip(embeddings[b].as_slice())
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        };
        let mut anchors_with = std::collections::HashSet::new();
        for t in &triplets {
            total_triplets += 1;
            assert!(anchors_with.insert(t.anchor_idx), "anchor used twice");
            // Cross-modal structure.
            assert_eq!(t.positive_idx, t.anchor_idx ^ 1, "batch {batch_no}");
            assert_ne!(
                batch.modality_of(t.anchor_idx),
                batch.modality_of(t.positive_idx)
            );
            assert_eq!(
                batch.modality_of(t.negative_idx),
                batch.modality_of(t.positive_idx)
            );
            assert_ne!(batch.subject_of(t.negative_idx), batch.subject_of(t.anchor_idx));

            // Semi-hard window or the documented fallback.
            let d_ap = d2(t.anchor_idx, t.positive_idx);
            let d_an = d2(t.anchor_idx, t.negative_idx);
            let candidates: Vec<usize> = (0..batch.len())
                .filter(|&c| {
                    batch.subject_of(c) != batch.subject_of(t.anchor_idx)
                        && batch.modality_of(c) == batch.modality_of(t.positive_idx)
                })
                .collect();
            let semi_hard: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&c| {
                    let d = d2(t.anchor_idx, c);
                    d_ap < d && d < d_ap + margin
                })
                .collect();
            if !semi_hard.is_empty() {
                assert!(
                    semi_hard.contains(&t.negative_idx),
                    "batch {batch_no}: negative outside non-empty semi-hard set"
                );
            } else {
                assert!(d_an > d_ap, "batch {batch_no}: fallback below d_ap");
                let hardest = candidates
                    .iter()
                    .copied()
                    .filter(|&c| d2(t.anchor_idx, c) > d_ap)
                    .map(|c| d2(t.anchor_idx, c))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(d_an, hardest, "batch {batch_no}: fallback not hardest");
            }
        }
        // Anchors without a triplet must have no admissible negative.
        for anchor in 0..batch.len() {
            if anchors_with.contains(&anchor) {
                continue;
            }
            let d_ap = d2(anchor, anchor ^ 1);
            for c in 0..batch.len() {
                if batch.subject_of(c) != batch.subject_of(anchor)
                    && batch.modality_of(c) == batch.modality_of(anchor ^ 1)
                {
                    assert!(
                        d2(anchor, c) <= d_ap,
                        "batch {batch_no}: anchor {anchor} skipped despite admissible negative"
                    );
                }
            }
        }
    }
    pass(
        4,
        &format!("{total_triplets} triplets over 10,000 batches, zero constraint violations"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 5 and 7 share one synthetic dataset (default config, seed 42).
// ---------------------------------------------------------------------------

struct SharedSynth {
    dir: tempfile::TempDir,
    test_files: Vec<PathBuf>,
    train_file: PathBuf,
}

fn shared_synth() -> &'static SharedSynth {
    static DATA: OnceLock<SharedSynth> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig::default(); // 20,000 train subjects, 600 per subset, seed 42
        let written = cli::cmd_synth(&config, dir.path(), false).unwrap();
        let train_file = written
            .iter()
            .find(|(label, _, _)| label == "train")
            .unwrap()
            .1
            .clone();
        let test_files = written
            .iter()
            .filter(|(label, _, _)| label != "train")
            .map(|(_, path, _)| path.clone())
            .collect();
        SharedSynth {
            dir,
            test_files,
            train_file,
        }
    })
}

#[test]
fn criterion_5_synthetic_analog_of_subset_table() {
    let _guard = timing_lock();
    let start = Instant::now();
    let data = shared_synth();
    let out = data.dir.path();

    let far = [0.0001];
    let baseline_rows =
        cli::cmd_eval(&data.test_files, None, &far, &out.join("eval_base"), false).unwrap();
    let baseline: Vec<(String, f64)> = baseline_rows
        .iter()
        .map(|r| (r.subset.clone(), r.result.tar))
        .collect();
    assert_eq!(baseline.len(), 5);

    // (a) Baseline TAR@FAR=0.01% strictly decreasing from i18s1819 down to
    // i10s1819; rows are sorted by label, i.e. ascending document age.
    for w in baseline.windows(2) {
        assert!(
            w[0].1 < w[1].1,
            "baseline not strictly ordered: {} {} vs {} {}",
            w[0].0,
            w[0].1,
            w[1].0,
            w[1].1
        );
    }

    // Train on the pool with the fixed seed. 2,000 iterations converge well
    // within the runtime budget; the criterion pins the SynthConfig only.
    let train_cfg = cli::TrainCmdConfig {
        train: TrainConfig {
            max_iterations: 2000,
            seed: 42,
            ..TrainConfig::default()
        },
        ..cli::TrainCmdConfig::default()
    };
    let run_dir = out.join("run");
    let summary = cli::cmd_train(&data.train_file, &run_dir, &train_cfg).unwrap();
    assert!(
        summary.best_validation_tar > summary.initial_validation_tar,
        "validation TAR did not improve: {} vs {}",
        summary.best_validation_tar,
        summary.initial_validation_tar
    );
    let tuned_rows = cli::cmd_eval(
        &data.test_files,
        Some(&run_dir.join("checkpoint.json")),
        &far,
        &out.join("eval_tuned"),
        false,
    )
    .unwrap();
    let tuned: Vec<(String, f64)> = tuned_rows
        .iter()
        .map(|r| (r.subset.clone(), r.result.tar))
        .collect();

    // (b) Fine-tuning improves TAR on every subset.
    for (b, t) in baseline.iter().zip(&tuned) {
        assert_eq!(b.0, t.0);
        assert!(
            t.1 > b.1,
            "{}: tuned TAR {} did not improve on baseline {}",
            b.0,
            t.1,
            b.1
        );
    }

    // (c) The worst-to-best TAR gap shrinks by at least half.
    let gap = |v: &[(String, f64)]| -> f64 {
        let lo = v.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = v.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let baseline_gap = gap(&baseline);
    let tuned_gap = gap(&tuned);
    assert!(
        tuned_gap <= 0.5 * baseline_gap,
        "gap only shrank from {baseline_gap} to {tuned_gap}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 900.0, "took {elapsed:?}, budget 15 min");
    pass(
        5,
        &format!(
            "baseline {:?} -> tuned {:?}; gap {:.3} -> {:.3} ({:.0}% shrink); best iter {} in {:.1?}",
            baseline.iter().map(|x| (x.1 * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            tuned.iter().map(|x| (x.1 * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            baseline_gap,
            tuned_gap,
            (1.0 - tuned_gap / baseline_gap) * 100.0,
            summary.best_iteration,
            elapsed
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: d-prime sanity on Gaussians
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_d_prime_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let n = 100_000;
    let auth_dist = Normal::new(1.0, 1.0).unwrap();
    let imp_dist = Normal::new(0.0, 1.0).unwrap();
    let authentic: Vec<f64> = (0..n).map(|_| auth_dist.sample(&mut rng)).collect();
    let impostor: Vec<f64> = (0..n).map(|_| imp_dist.sample(&mut rng)).collect();
    let set = ScoreSet::new(authentic, impostor).unwrap();
    let d = d_prime(&set).unwrap();
    assert!(
        (d - 1.0).abs() <= 0.02,
        "d-prime {d} outside 1.00 +/- 0.02"
    );
    pass(6, &format!("10^5 N(1,1) vs N(0,1) samples give d-prime {d:.4}"));
}

// ---------------------------------------------------------------------------
// Criterion 7: card-format analysis direction
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_card_format_direction() {
    let data = shared_synth();
    let out = data.dir.path().join("card");
    let samples = cli::cmd_analyze_card(&data.test_files, None, &out, 10, 7).unwrap();

    let mut subsets_checked = 0;
    let mut labels: Vec<String> = samples.iter().map(|s| s.subset.clone()).collect();
    labels.dedup();
    for label in labels {
        let in_subset: Vec<_> = samples.iter().filter(|s| s.subset == label).collect();
        let yellow_means: Vec<f64> = in_subset
            .iter()
            .filter(|s| s.format == CardFormat::Yellow)
            .map(|s| s.mean_authentic)
            .collect();
        let blue_means: Vec<f64> = in_subset
            .iter()
            .filter(|s| s.format == CardFormat::Blue)
            .map(|s| s.mean_authentic)
            .collect();
        // One side is the 10 draws, the other the single minority mean; the
        // direction must hold for every pairing.
        assert_eq!(yellow_means.len() + blue_means.len(), 11);
        for &y in &yellow_means {
            for &b in &blue_means {
                assert!(
                    y < b,
                    "{label}: yellow authentic mean {y} not below blue {b}"
                );
            }
        }
        subsets_checked += 1;
    }
    assert!(subsets_checked >= 2, "expected at least two mixed-format subsets");
    pass(
        7,
        &format!("yellow authentic mean below blue in all 10 draws across {subsets_checked} subsets"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: cross-modal scoring performance and thread-count invariance
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_score_matrix_performance() {
    let _guard = timing_lock();
    let n = 2642;
    let dim = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut make = |count: usize| -> Vec<Embedding> {
        (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                l2_normalize(&v).unwrap()
            })
            .collect()
    };
    let docs = make(n);
    let selfies = make(n);

    let start = Instant::now();
    let parallel = cross_modal_scores(&docs, &selfies).unwrap();
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "{n}x{n} at d={dim} took {elapsed:?}, budget 10 s"
    );
    let serial = cross_modal_scores_serial(&docs, &selfies).unwrap();
    assert_eq!(parallel.as_slice(), serial.as_slice(), "thread count changed results");
    pass(
        8,
        &format!("{n}x{n} cosines at d={dim} in {elapsed:.2?}; parallel == serial bit-for-bit"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: train rerun determinism through the CLI binary
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_train_determinism() {
    let _guard = timing_lock();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_xmv");
    let synth = std::process::Command::new(bin)
        .args(["synth", "--seed", "11", "--train-subjects", "400", "--test-per-subset", "5"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));

    let train_args = |out: &str| -> Vec<String> {
        vec![
            "train".into(),
            "--data".into(),
            dir.path().join("train.csv").display().to_string(),
            "--out".into(),
            dir.path().join(out).display().to_string(),
            "--seed".into(),
            "5".into(),
            "--iterations".into(),
            "100".into(),
            "--eval-interval".into(),
            "25".into(),
            "--batch-size".into(),
            "40".into(),
        ]
    };
    for out in ["r1", "r2"] {
        let run = std::process::Command::new(bin)
            .args(train_args(out))
            .output()
            .unwrap();
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let bytes = |name: &str| -> (Vec<u8>, Vec<u8>) {
        (
            std::fs::read(dir.path().join("r1").join(name)).unwrap(),
            std::fs::read(dir.path().join("r2").join(name)).unwrap(),
        )
    };
    let (h1, h2) = bytes("history.csv");
    assert_eq!(h1, h2, "history.csv differs between reruns");
    let (c1, c2) = bytes("checkpoint.json");
    assert_eq!(c1, c2, "checkpoint.json differs between reruns");
    let (v1, v2) = bytes("validation.csv");
    assert_eq!(v1, v2, "validation.csv differs between reruns");

    pass(9, "rerun with identical config+seed is byte-identical (history, checkpoint, validation)");
}
