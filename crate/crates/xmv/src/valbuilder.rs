//! Subject-disjoint train/validation splitting and hard-pair validation
//! construction.
//!
//! Each validation fold keeps its lowest-similarity authentic pairs (hard
//! positives) and, for every kept subject, the highest-similarity impostor
//! among the kept subjects (hard negatives). Ties break by ascending
//! subject id.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, Result};

/// A scored comparison reference: which selfie against which document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRef {
    pub selfie_subject: String,
    pub doc_subject: String,
}

/// One validation fold: hard authentic pairs plus their hard impostor pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub authentic: Vec<PairRef>,
    pub impostor: Vec<PairRef>,
}

/// Subject-disjoint folds of hard validation pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    pub folds: Vec<Fold>,
}

impl ValidationSet {
    pub fn total_pairs(&self) -> usize {
        self.folds
            .iter()
            .map(|f| f.authentic.len() + f.impostor.len())
            .sum()
    }

    /// Writes the validation CSV: `fold,pair_type,selfie_subject,doc_subject`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "fold,pair_type,selfie_subject,doc_subject")?;
        for (i, fold) in self.folds.iter().enumerate() {
            for p in &fold.authentic {
                writeln!(w, "{i},authentic,{},{}", p.selfie_subject, p.doc_subject)?;
            }
            for p in &fold.impostor {
                writeln!(w, "{i},impostor,{},{}", p.selfie_subject, p.doc_subject)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ValidationSet> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "fold,pair_type,selfie_subject,doc_subject")) => {}
            _ => return Err(Error::parse(1, "missing validation header")),
        }
        let mut folds: Vec<Fold> = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::parse(line_no, "expected 4 fields"));
            }
            let fold: usize = fields[0]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad fold {:?}", fields[0])))?;
            while folds.len() <= fold {
                folds.push(Fold {
                    authentic: Vec::new(),
                    impostor: Vec::new(),
                });
            }
            let pair = PairRef {
                selfie_subject: fields[2].to_string(),
                doc_subject: fields[3].to_string(),
            };
            match fields[1] {
                "authentic" => folds[fold].authentic.push(pair),
                "impostor" => folds[fold].impostor.push(pair),
                other => return Err(Error::parse(line_no, format!("bad pair_type {other:?}"))),
            }
        }
        if folds.is_empty() {
            return Err(Error::parse(0, "validation file has no pairs"));
        }
        Ok(ValidationSet { folds })
    }
}

/// Direction used when searching a subject's hardest impostor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImpostorDirection {
    /// The kept subject's selfie against every other kept subject's document.
    #[default]
    SelfieToDoc,
    /// Max over both orientations.
    Both,
}

/// Uniform random subject-level split into disjoint train and validation sets.
pub fn split_subjects<R: Rng>(
    dataset: &PairedDataset,
    train_fraction: f64,
    rng: &mut R,
) -> Result<(PairedDataset, PairedDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Config(format!(
            "split of {n} subjects at {train_fraction} leaves one side empty"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let pick = |idxs: &[usize]| -> Result<PairedDataset> {
        PairedDataset::from_subjects(
            idxs.iter()
                .map(|&i| dataset.subjects()[i].clone())
                .collect(),
        )
    };
    Ok((pick(&indices[..n_train])?, pick(&indices[n_train..])?))
}

/// Builds the hard validation set.
///
/// Subjects are partitioned uniformly into `folds` disjoint groups; per group
/// the `per_fold` lowest-scoring authentic pairs are kept, and each kept
/// subject contributes its highest-similarity impostor among the kept
/// subjects. Scores come from `scorer` (typically the iteration-0 head) plus
/// cosine.
pub fn build_hard_validation<F, R>(
    val: &PairedDataset,
    scorer: F,
    folds: usize,
    per_fold: usize,
    direction: ImpostorDirection,
    rng: &mut R,
) -> Result<ValidationSet>
where
    F: Fn(&[f32]) -> Result<Embedding> + Sync,
    R: Rng,
{
    if folds == 0 {
        return Err(Error::Config("folds must be positive".into()));
    }
    if per_fold < 2 {
        return Err(Error::Config(
            "per_fold must be at least 2 so impostor pairs exist".into(),
        ));
    }
    let n = val.len();
    if n / folds < per_fold {
        return Err(Error::InsufficientData(format!(
            "{n} subjects split into {folds} folds leaves {} per fold, need {per_fold}",
            n / folds
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);

    // Even chunked partition: the first (n % folds) folds get one extra.
    let base = n / folds;
    let extra = n % folds;
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let size = base + usize::from(k < extra);
        groups.push(indices[start..start + size].to_vec());
        start += size;
    }

    let embedded: Vec<(Embedding, Embedding)> = val
        .subjects()
        .par_iter()
        .map(|s| {
            let doc = scorer(&s.document.base_feature)?;
            let selfie = scorer(&s.selfie.base_feature)?;
            Ok((doc, selfie))
        })
        .collect::<Result<_>>()?;

    let mut out_folds = Vec::with_capacity(folds);
    for group in &groups {
        // Hard positives: per_fold lowest authentic scores, ties by id.
        let mut scored: Vec<(f64, usize)> = group
            .iter()
            .map(|&i| {
                let (doc, selfie) = &embedded[i];
                Ok((cosine_similarity(selfie, doc)?, i))
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then_with(|| val.subjects()[a.1].id.cmp(&val.subjects()[b.1].id))
        });
        let mut selected: Vec<usize> = scored[..per_fold].iter().map(|&(_, i)| i).collect();
        selected.sort_by(|&a, &b| val.subjects()[a].id.cmp(&val.subjects()[b].id));

        let authentic: Vec<PairRef> = selected
            .iter()
            .map(|&i| PairRef {
                selfie_subject: val.subjects()[i].id.clone(),
                doc_subject: val.subjects()[i].id.clone(),
            })
            .collect();

        // Hard negatives: per kept subject, the argmax impostor among the
        // kept subjects.
        let impostor: Vec<PairRef> = selected
            .par_iter()
            .map(|&i| {
                let mut best: Option<(f64, PairRef)> = None;
                for &j in &selected {
                    if j == i {
                        continue;
                    }
                    let mut candidates = vec![(
                        cosine_similarity(&embedded[i].1, &embedded[j].0)?,
                        PairRef {
                            selfie_subject: val.subjects()[i].id.clone(),
                            doc_subject: val.subjects()[j].id.clone(),
                        },
                    )];
                    if direction == ImpostorDirection::Both {
                        candidates.push((
                            cosine_similarity(&embedded[j].1, &embedded[i].0)?,
                            PairRef {
                                selfie_subject: val.subjects()[j].id.clone(),
                                doc_subject: val.subjects()[i].id.clone(),
                            },
                        ));
                    }
                    for (score, pair) in candidates {
                        let replace = match &best {
                            None => true,
                            Some((s, p)) => {
                                score > *s
                                    || (score == *s
                                        && (pair.doc_subject.as_str(), pair.selfie_subject.as_str())
                                            < (p.doc_subject.as_str(), p.selfie_subject.as_str()))
                            }
                        };
                        if replace {
                            best = Some((score, pair));
                        }
                    }
                }
                Ok(best.expect("per_fold >= 2 guarantees an impostor candidate").1)
            })
            .collect::<Result<_>>()?;

        out_folds.push(Fold { authentic, impostor });
    }
    let set = ValidationSet { folds: out_folds };
    debug_assert!(fold_subjects_disjoint(&set));
    Ok(set)
}

fn fold_subjects_disjoint(set: &ValidationSet) -> bool {
    let mut seen: HashSet<&str> = HashSet::new();
    for fold in &set.folds {
        let mut here: HashSet<&str> = HashSet::new();
        for p in fold.authentic.iter().chain(&fold.impostor) {
            here.insert(&p.selfie_subject);
            here.insert(&p.doc_subject);
        }
        for id in here {
            if !seen.insert(id) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CardFormat, Gender, ImageRecord, Modality, Subject};
    use crate::trainer::EmbeddingHead;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn subject(id: &str, doc: Vec<f32>, selfie: Vec<f32>) -> Subject {
        let rec = |modality, age, card, feat| ImageRecord {
            subject_id: id.to_string(),
            modality,
            gender: Gender::Female,
            age_at_capture: age,
            card_format: card,
            base_feature: feat,
        };
        Subject {
            id: id.to_string(),
            document: rec(Modality::Document, 12, CardFormat::Yellow, doc),
            selfie: rec(Modality::Selfie, 18, CardFormat::NotApplicable, selfie),
        }
    }

    fn angled_dataset(n: usize) -> PairedDataset {
        // Doc at angle t, selfie rotated off it by a subject-specific amount.
        let subjects = (0..n)
            .map(|i| {
                let t = i as f32 * 0.31;
                let off = 0.05 + 0.11 * (i as f32 % 7.0);
                subject(
                    &format!("v{i:03}"),
                    vec![t.cos(), t.sin()],
                    vec![(t + off).cos(), (t + off).sin()],
                )
            })
            .collect();
        PairedDataset::from_subjects(subjects).unwrap()
    }

    #[test]
    fn split_fraction_and_determinism() {
        let ds = angled_dataset(10);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (train, val) = split_subjects(&ds, 0.9, &mut rng).unwrap();
        assert_eq!(train.len(), 9);
        assert_eq!(val.len(), 1);

        let mut r1 = ChaCha8Rng::seed_from_u64(33);
        let mut r2 = ChaCha8Rng::seed_from_u64(33);
        let (t1, v1) = split_subjects(&ds, 0.7, &mut r1).unwrap();
        let (t2, v2) = split_subjects(&ds, 0.7, &mut r2).unwrap();
        assert_eq!(t1.subjects(), t2.subjects());
        assert_eq!(v1.subjects(), v2.subjects());

        // Disjoint and covering.
        let train_ids: HashSet<_> = t1.subjects().iter().map(|s| s.id.clone()).collect();
        assert!(v1.subjects().iter().all(|s| !train_ids.contains(&s.id)));
        assert_eq!(t1.len() + v1.len(), ds.len());
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let ds = angled_dataset(10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            split_subjects(&ds, 1.0, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split_subjects(&ds, 0.0, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split_subjects(&ds, 0.05, &mut rng),
            Err(Error::Config(_))
        ));
    }

    /// Brute-force check on a single toy fold: the two lowest-authentic
    /// subjects are kept and each emits its argmax impostor.
    #[test]
    fn toy_fold_matches_exhaustive_enumeration() {
        // Authentic cosines: s0 very aligned, s1 aligned, s2 and s3 far off.
        let subjects = vec![
            subject("s0", vec![1.0, 0.0], vec![0.995, 0.0998]),
            subject("s1", vec![0.0, 1.0], vec![0.198, 0.980]),
            subject("s2", vec![0.707, 0.707], vec![-0.707, 0.707]),
            subject("s3", vec![0.0, -1.0], vec![0.995, -0.0998]),
        ];
        let ds = PairedDataset::from_subjects(subjects).unwrap();
        let head = EmbeddingHead::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = build_hard_validation(
            &ds,
            |x| head.forward(x),
            1,
            2,
            ImpostorDirection::SelfieToDoc,
            &mut rng,
        )
        .unwrap();

        // Independent enumeration with raw trigonometry.
        let cos = |a: &[f32], b: &[f32]| -> f64 {
            let dot = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum::<f64>();
            let na = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let mut auth: Vec<(f64, &str)> = ds
            .subjects()
            .iter()
            .map(|s| (cos(&s.selfie.base_feature, &s.document.base_feature), s.id.as_str()))
            .collect();
        auth.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let expect_selected: HashSet<&str> = auth[..2].iter().map(|&(_, id)| id).collect();

        let fold = &set.folds[0];
        let got_selected: HashSet<&str> = fold
            .authentic
            .iter()
            .map(|p| p.selfie_subject.as_str())
            .collect();
        assert_eq!(got_selected, expect_selected);

        for pair in &fold.impostor {
            let i = ds.subject_index(&pair.selfie_subject).unwrap();
            let best = expect_selected
                .iter()
                .filter(|&&id| id != pair.selfie_subject)
                .map(|&id| {
                    let j = ds.subject_index(id).unwrap();
                    (
                        cos(
                            &ds.subjects()[i].selfie.base_feature,
                            &ds.subjects()[j].document.base_feature,
                        ),
                        id,
                    )
                })
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                .unwrap();
            assert_eq!(pair.doc_subject, best.1);
        }
    }

    #[test]
    fn per_fold_equal_to_fold_size_keeps_everyone() {
        let ds = angled_dataset(8);
        let head = EmbeddingHead::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = build_hard_validation(
            &ds,
            |x| head.forward(x),
            2,
            4,
            ImpostorDirection::SelfieToDoc,
            &mut rng,
        )
        .unwrap();
        assert_eq!(set.folds.len(), 2);
        for fold in &set.folds {
            assert_eq!(fold.authentic.len(), 4);
            assert_eq!(fold.impostor.len(), 4);
        }
        assert_eq!(set.total_pairs(), 16);
        assert!(fold_subjects_disjoint(&set));
    }

    #[test]
    fn undersized_folds_are_rejected() {
        let ds = angled_dataset(8);
        let head = EmbeddingHead::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(matches!(
            build_hard_validation(
                &ds,
                |x| head.forward(x),
                2,
                5,
                ImpostorDirection::SelfieToDoc,
                &mut rng
            ),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn impostor_pairs_are_cross_modal_within_fold() {
        let ds = angled_dataset(20);
        let head = EmbeddingHead::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let set = build_hard_validation(
            &ds,
            |x| head.forward(x),
            4,
            3,
            ImpostorDirection::Both,
            &mut rng,
        )
        .unwrap();
        for fold in &set.folds {
            let kept: HashSet<&str> = fold
                .authentic
                .iter()
                .map(|p| p.selfie_subject.as_str())
                .collect();
            for p in &fold.impostor {
                assert_ne!(p.selfie_subject, p.doc_subject);
                assert!(kept.contains(p.selfie_subject.as_str()));
                assert!(kept.contains(p.doc_subject.as_str()));
            }
        }
    }

    #[test]
    fn validation_csv_round_trips() {
        let ds = angled_dataset(12);
        let head = EmbeddingHead::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let set = build_hard_validation(
            &ds,
            |x| head.forward(x),
            3,
            3,
            ImpostorDirection::SelfieToDoc,
            &mut rng,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("validation.csv");
        set.write_csv(&path).unwrap();
        assert_eq!(ValidationSet::read_csv(&path).unwrap(), set);
    }
}
