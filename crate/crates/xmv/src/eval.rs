//! Exact verification metrics: threshold-at-FAR, TAR@FAR, ROC points, d-prime,
//! and score statistics.
//!
//! The accept rule is `score >= threshold` and thresholds are restricted to
//! observed impostor scores plus a `+inf` sentinel, which makes every metric
//! exactly reproducible by threshold enumeration.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Authentic and impostor similarity score collections.
#[derive(Debug, Clone)]
pub struct ScoreSet {
    authentic: Vec<f64>,
    impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(authentic: Vec<f64>, impostor: Vec<f64>) -> Result<ScoreSet> {
        if authentic.iter().chain(&impostor).any(|s| !s.is_finite()) {
            return Err(Error::Range("scores must be finite".into()));
        }
        Ok(ScoreSet { authentic, impostor })
    }

    pub fn authentic(&self) -> &[f64] {
        &self.authentic
    }

    pub fn impostor(&self) -> &[f64] {
        &self.impostor
    }
}

/// Result of a TAR@FAR evaluation. `threshold` is `f64::INFINITY` when no
/// finite observed threshold meets the FAR target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub far_target: f64,
    #[serde(with = "inf_sentinel")]
    pub threshold: f64,
    pub tar: f64,
    pub achieved_far: f64,
}

/// Serializes infinite thresholds as the string `"inf"`.
mod inf_sentinel {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(de::Error::custom(format!("bad threshold {t:?}"))),
        }
    }
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Smallest threshold drawn from the observed impostor scores (or `+inf`)
/// whose false acceptance rate does not exceed `far_target`.
pub fn threshold_at_far(impostor: &[f64], far_target: f64) -> Result<f64> {
    if impostor.is_empty() {
        return Err(Error::EmptyInput("impostor scores"));
    }
    if !(0.0..1.0).contains(&far_target) {
        return Err(Error::Range(format!(
            "far_target {far_target} outside [0, 1)"
        )));
    }
    let asc = sorted(impostor);
    let n = asc.len();
    // Scanning candidate thresholds in ascending order, FAR = (n - i) / n for
    // the first occurrence i of each distinct value; FAR is non-increasing, so
    // the first candidate meeting the target is the smallest.
    for (i, &t) in asc.iter().enumerate() {
        if i > 0 && asc[i - 1] == t {
            continue;
        }
        let far = (n - i) as f64 / n as f64;
        if far <= far_target {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// TAR at the threshold chosen by [`threshold_at_far`] over the impostor side.
///
/// When no finite impostor-drawn threshold meets the target, the smallest
/// authentic score strictly above the impostor maximum is tried; if none
/// exists, TAR is 0 and the threshold stays at the sentinel.
pub fn tar_at_far(scores: &ScoreSet, far_target: f64) -> Result<EvalResult> {
    if scores.authentic.is_empty() {
        return Err(Error::EmptyInput("authentic scores"));
    }
    let mut threshold = threshold_at_far(&scores.impostor, far_target)?;
    if threshold == f64::INFINITY {
        let max_imp = scores
            .impostor
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let above = scores
            .authentic
            .iter()
            .cloned()
            .filter(|&a| a > max_imp)
            .fold(f64::INFINITY, f64::min);
        threshold = above; // stays +inf when no authentic exceeds all impostors
    }
    let tar = count_at_least(&scores.authentic, threshold) as f64 / scores.authentic.len() as f64;
    let achieved_far =
        count_at_least(&scores.impostor, threshold) as f64 / scores.impostor.len() as f64;
    Ok(EvalResult {
        far_target,
        threshold,
        tar,
        achieved_far,
    })
}

fn count_at_least(scores: &[f64], t: f64) -> usize {
    scores.iter().filter(|&&s| s >= t).count()
}

/// ROC operating points, one per unique observed score used as a threshold,
/// with `(0, tar_0)` and `(1, 1)` endpoints, sorted by FAR.
pub fn roc_points(scores: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    if scores.authentic.is_empty() {
        return Err(Error::EmptyInput("authentic scores"));
    }
    if scores.impostor.is_empty() {
        return Err(Error::EmptyInput("impostor scores"));
    }
    let mut thresholds: Vec<f64> = scores
        .authentic
        .iter()
        .chain(&scores.impostor)
        .cloned()
        .collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let n_auth = scores.authentic.len() as f64;
    let n_imp = scores.impostor.len() as f64;
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    for &t in &thresholds {
        points.push((
            count_at_least(&scores.impostor, t) as f64 / n_imp,
            count_at_least(&scores.authentic, t) as f64 / n_auth,
        ));
    }
    let max_imp = scores
        .impostor
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let tar0 = scores.authentic.iter().filter(|&&a| a > max_imp).count() as f64 / n_auth;
    points.push((0.0, tar0));
    points.push((1.0, 1.0));
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    Ok(points)
}

/// Pooled-variance separation statistic between the two score distributions:
/// `|mean(auth) − mean(imp)| / sqrt((var(auth) + var(imp)) / 2)`.
pub fn d_prime(scores: &ScoreSet) -> Result<f64> {
    for (side, name) in [
        (&scores.authentic, "authentic"),
        (&scores.impostor, "impostor"),
    ] {
        if side.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "d-prime needs at least 2 {name} scores, found {}",
                side.len()
            )));
        }
    }
    let (m_a, v_a) = mean_var(&scores.authentic);
    let (m_i, v_i) = mean_var(&scores.impostor);
    let pooled = ((v_a + v_i) / 2.0).sqrt();
    if pooled == 0.0 {
        // Degenerate constant distributions: zero separation if means agree.
        return Ok(if m_a == m_i { 0.0 } else { f64::INFINITY });
    }
    Ok((m_a - m_i).abs() / pooled)
}

/// Mean and sample variance (n−1 denominator; 0 for a single value).
fn mean_var(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    if scores.len() < 2 {
        return (mean, 0.0);
    }
    let ss = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Quantile levels reported by [`score_stats`].
pub const STAT_QUANTILES: [f64; 5] = [0.01, 0.25, 0.5, 0.75, 0.99];

/// Standard sample statistics over a score list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Values at [`STAT_QUANTILES`], by linear interpolation between order
    /// statistics.
    pub quantiles: [f64; 5],
}

pub fn score_stats(scores: &[f64]) -> Result<ScoreStats> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    let (mean, var) = mean_var(scores);
    let asc = sorted(scores);
    let mut quantiles = [0.0; 5];
    for (slot, &q) in quantiles.iter_mut().zip(&STAT_QUANTILES) {
        *slot = interpolated_quantile(&asc, q);
    }
    Ok(ScoreStats {
        mean,
        std: var.sqrt(),
        min: asc[0],
        max: asc[asc.len() - 1],
        quantiles,
    })
}

fn interpolated_quantile(asc: &[f64], q: f64) -> f64 {
    let h = (asc.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    asc[lo] + (h - lo as f64) * (asc[hi] - asc[lo])
}

/// Whether a score-file row is an authentic or impostor comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairType {
    Authentic,
    Impostor,
}

impl PairType {
    fn as_str(self) -> &'static str {
        match self {
            PairType::Authentic => "authentic",
            PairType::Impostor => "impostor",
        }
    }
}

/// One labeled comparison in the score file CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub pair_type: PairType,
    pub selfie_subject: String,
    pub doc_subject: String,
    pub score: f64,
}

/// Writes the score file CSV: `pair_type,selfie_subject,doc_subject,score`.
pub fn write_score_csv(rows: &[ScoreRow], path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "pair_type,selfie_subject,doc_subject,score")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.pair_type.as_str(),
            r.selfie_subject,
            r.doc_subject,
            r.score
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a score file CSV back into rows.
pub fn read_score_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "pair_type,selfie_subject,doc_subject,score")) => {}
        _ => return Err(Error::parse(1, "missing score file header")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(line_no, "expected 4 fields"));
        }
        let pair_type = match fields[0] {
            "authentic" => PairType::Authentic,
            "impostor" => PairType::Impostor,
            other => return Err(Error::parse(line_no, format!("bad pair_type {other:?}"))),
        };
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad score {:?}", fields[3])))?;
        rows.push(ScoreRow {
            pair_type,
            selfie_subject: fields[1].to_string(),
            doc_subject: fields[2].to_string(),
            score,
        });
    }
    Ok(rows)
}

/// Collects score rows into a [`ScoreSet`].
pub fn score_set_from_rows(rows: &[ScoreRow]) -> Result<ScoreSet> {
    let mut authentic = Vec::new();
    let mut impostor = Vec::new();
    for r in rows {
        match r.pair_type {
            PairType::Authentic => authentic.push(r.score),
            PairType::Impostor => impostor.push(r.score),
        }
    }
    ScoreSet::new(authentic, impostor)
}
