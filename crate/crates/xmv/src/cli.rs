//! Experiment orchestration behind the command-line front end: dataset
//! synthesis, training, subset evaluation, subgroup analysis, and report
//! rendering. Every randomized command takes an explicit seed; outputs use
//! fixed file names under the chosen output directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, write_dataset_binary, write_dataset_csv, Gender, PairedDataset, Subject};
use crate::error::{Error, Result};
use crate::eval::{d_prime, tar_at_far, write_score_csv, EvalResult, ScoreSet};
use crate::matching::{embed_dataset, group_mean_scores, group_score_rows, group_score_set, subset_partition};
use crate::report;
use crate::synth::{generate, SynthConfig};
use crate::trainer::{train, Checkpoint, EmbeddingHead, TrainConfig};
use crate::valbuilder::{build_hard_validation, split_subjects, ImpostorDirection};

/// Parses a FAR target given as a fraction (`0.0001`) or percent (`0.01%`).
pub fn parse_far(s: &str) -> Result<f64> {
    let (raw, percent) = match s.strip_suffix('%') {
        Some(rest) => (rest, true),
        None => (s, false),
    };
    let mut value: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::Range(format!("cannot parse FAR target {s:?}")))?;
    if percent {
        value /= 100.0;
    }
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::Range(format!(
            "FAR target {s:?} must lie strictly inside (0, 1)"
        )));
    }
    Ok(value)
}

/// Validates, sorts ascending, and dedups a FAR target list.
pub fn normalize_far_targets(mut targets: Vec<f64>) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::Config("at least one FAR target is required".into()));
    }
    for &t in &targets {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Range(format!("FAR target {t} outside (0, 1)")));
        }
    }
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    targets.dedup();
    Ok(targets)
}

pub const DEFAULT_FAR_TARGETS: [f64; 2] = [0.0001, 0.001];

/// Key-value JSON experiment configuration accepted by every subcommand via
/// `--config`; individual flags override these values.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub datasets: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub far_targets: Option<Vec<FarTarget>>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub train_fraction: Option<f64>,
    pub val_folds: Option<usize>,
    pub val_per_fold: Option<usize>,
    pub impostor_direction: Option<ImpostorDirection>,
    pub draws: Option<usize>,
    pub group_by: Vec<String>,
}

/// A FAR target in config files: a fraction number or a percent string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FarTarget {
    Fraction(f64),
    Text(String),
}

impl FarTarget {
    pub fn value(&self) -> Result<f64> {
        match self {
            FarTarget::Fraction(v) => {
                if *v > 0.0 && *v < 1.0 {
                    Ok(*v)
                } else {
                    Err(Error::Range(format!("FAR target {v} outside (0, 1)")))
                }
            }
            FarTarget::Text(s) => parse_far(s),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config file: {e}")))
    }

    pub fn far_targets(&self) -> Result<Vec<f64>> {
        match &self.far_targets {
            None => Ok(DEFAULT_FAR_TARGETS.to_vec()),
            Some(list) => {
                normalize_far_targets(list.iter().map(|t| t.value()).collect::<Result<_>>()?)
            }
        }
    }
}

/// Creates the output directory if its parent already exists. A missing
/// parent is an I/O error rather than a silent deep mkdir.
pub fn ensure_out_dir(path: &Path) -> Result<()> {
    match fs::create_dir(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists && path.is_dir() => Ok(()),
        Err(e) => Err(Error::Io(e)),
    }
}

fn checkpoint_or_identity(checkpoint: Option<&Path>, dim: usize) -> Result<EmbeddingHead> {
    match checkpoint {
        Some(path) => {
            let head = Checkpoint::load(path)?.head()?;
            if head.d_in() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: head.d_in(),
                });
            }
            Ok(head)
        }
        None => Ok(EmbeddingHead::identity(dim)),
    }
}

/// Loads and merges one or more dataset files; subject ids must be unique
/// across files.
pub fn load_datasets(paths: &[PathBuf]) -> Result<PairedDataset> {
    if paths.is_empty() {
        return Err(Error::Config("no dataset files given".into()));
    }
    let mut subjects: Vec<Subject> = Vec::new();
    for path in paths {
        subjects.extend(load_dataset(path)?.subjects().iter().cloned());
    }
    PairedDataset::from_subjects(subjects)
}

/// Writes the synthetic train pool, one file per test subset, and the ground
/// truth sidecar. Returns `(label, path, subject count)` per written dataset.
pub fn cmd_synth(
    config: &SynthConfig,
    out: &Path,
    binary: bool,
) -> Result<Vec<(String, PathBuf, usize)>> {
    ensure_out_dir(out)?;
    let output = generate(config)?;
    let ext = if binary { "xmv" } else { "csv" };
    let write = |ds: &PairedDataset, path: &Path| -> Result<()> {
        if binary {
            write_dataset_binary(ds, path)
        } else {
            write_dataset_csv(ds, path)
        }
    };
    let mut written = Vec::new();
    let train_path = out.join(format!("train.{ext}"));
    write(&output.train, &train_path)?;
    written.push(("train".to_string(), train_path, output.train.len()));
    for (label, ds) in &output.test_subsets {
        let path = out.join(format!("test_{label}.{ext}"));
        write(ds, &path)?;
        written.push((label.clone(), path, ds.len()));
    }
    output.truth.save(&out.join("ground_truth.json"))?;
    for (label, _, count) in &written {
        println!("{label}: {count} subjects");
    }
    Ok(written)
}

/// Train-command knobs beyond [`TrainConfig`] itself.
#[derive(Debug, Clone)]
pub struct TrainCmdConfig {
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub val_folds: usize,
    /// Hard positives kept per fold; `None` clamps the canonical 300 to the
    /// fold size.
    pub val_per_fold: Option<usize>,
    pub impostor_direction: ImpostorDirection,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        TrainCmdConfig {
            train: TrainConfig::default(),
            train_fraction: 0.9,
            val_folds: 10,
            val_per_fold: None,
            impostor_direction: ImpostorDirection::SelfieToDoc,
        }
    }
}

/// Training outcome summary.
#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub best_iteration: u64,
    pub best_validation_tar: f64,
    pub initial_validation_tar: f64,
    pub validation_pairs: usize,
}

/// Splits the dataset, builds the hard validation set with the iteration-0
/// head, trains, and writes `validation.csv`, `history.csv`, and
/// `checkpoint.json`.
pub fn cmd_train(data: &Path, out: &Path, cfg: &TrainCmdConfig) -> Result<TrainSummary> {
    ensure_out_dir(out)?;
    let dataset = load_dataset(data)?;

    // Independent rng streams for the split and the fold shuffle keep both
    // decoupled from the training loop's draws.
    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    split_rng.set_stream(u64::MAX - 1);
    let (train_set, val_set) = split_subjects(&dataset, cfg.train_fraction, &mut split_rng)?;

    let per_fold = match cfg.val_per_fold {
        Some(v) => v,
        None => (val_set.len() / cfg.val_folds).min(300),
    };
    let baseline = EmbeddingHead::identity(dataset.dim());
    let mut fold_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    fold_rng.set_stream(u64::MAX - 2);
    let validation = build_hard_validation(
        &val_set,
        |x| baseline.forward(x),
        cfg.val_folds,
        per_fold,
        cfg.impostor_direction,
        &mut fold_rng,
    )?;
    validation.write_csv(&out.join("validation.csv"))?;

    let (head, history) = train(&train_set, &val_set, &validation, &cfg.train)?;
    history.write_csv(&out.join("history.csv"))?;
    let best = history.best_point().clone();
    Checkpoint::new(&head, best.iteration, best.validation_tar, cfg.train.clone())
        .save(&out.join("checkpoint.json"))?;
    Ok(TrainSummary {
        best_iteration: best.iteration,
        best_validation_tar: best.validation_tar,
        initial_validation_tar: history.points[0].validation_tar,
        validation_pairs: validation.total_pairs(),
    })
}

/// One row of the per-subset evaluation table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalTableRow {
    pub subset: String,
    #[serde(flatten)]
    pub result: EvalResult,
    pub n_authentic: usize,
    pub n_impostor: usize,
}

/// Evaluates TAR at each FAR target per age-gap subset and writes `eval.csv`
/// and `eval.json` (plus per-subset score dumps when requested).
pub fn cmd_eval(
    datasets: &[PathBuf],
    checkpoint: Option<&Path>,
    far_targets: &[f64],
    out: &Path,
    dump_scores: bool,
) -> Result<Vec<EvalTableRow>> {
    ensure_out_dir(out)?;
    let far_targets = normalize_far_targets(far_targets.to_vec())?;
    let dataset = load_datasets(datasets)?;
    let head = checkpoint_or_identity(checkpoint, dataset.dim())?;
    let embeddings = embed_dataset(&dataset, &head)?;
    let groups = subset_partition(&dataset)?;

    let mut rows = Vec::new();
    for (label, indices) in &groups {
        let scores = group_score_set(&embeddings, indices)?;
        for &far in &far_targets {
            let result = tar_at_far(&scores, far)?;
            rows.push(EvalTableRow {
                subset: label.clone(),
                result,
                n_authentic: scores.authentic().len(),
                n_impostor: scores.impostor().len(),
            });
        }
        if dump_scores {
            let score_rows = group_score_rows(&dataset, &embeddings, indices)?;
            write_score_csv(&score_rows, &out.join(format!("scores_{label}.csv")))?;
        }
    }
    write_eval_csv(&rows, &out.join("eval.csv"))?;
    let json = serde_json::to_string_pretty(&rows)
        .map_err(|e| Error::Config(format!("cannot encode eval results: {e}")))?;
    fs::write(out.join("eval.json"), json + "\n")?;
    Ok(rows)
}

fn fmt_threshold(t: f64) -> String {
    if t.is_finite() {
        format!("{t}")
    } else {
        "inf".to_string()
    }
}

pub fn write_eval_csv(rows: &[EvalTableRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "subset,far_target,threshold,tar,achieved_far,n_authentic,n_impostor")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.subset,
            r.result.far_target,
            fmt_threshold(r.result.threshold),
            r.result.tar,
            r.result.achieved_far,
            r.n_authentic,
            r.n_impostor
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalTableRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "subset,far_target,threshold,tar,achieved_far,n_authentic,n_impostor")) => {}
        _ => return Err(Error::parse(1, "missing eval header")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(line_no, "expected 7 fields"));
        }
        let parse_f = |s: &str| -> Result<f64> {
            if s == "inf" {
                return Ok(f64::INFINITY);
            }
            s.parse()
                .map_err(|_| Error::parse(line_no, format!("bad value {s:?}")))
        };
        let parse_n = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(line_no, format!("bad count {s:?}")))
        };
        rows.push(EvalTableRow {
            subset: fields[0].to_string(),
            result: EvalResult {
                far_target: parse_f(fields[1])?,
                threshold: parse_f(fields[2])?,
                tar: parse_f(fields[3])?,
                achieved_far: parse_f(fields[4])?,
            },
            n_authentic: parse_n(fields[5])?,
            n_impostor: parse_n(fields[6])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::parse(0, "eval table has no rows"));
    }
    Ok(rows)
}

/// Per-gender pooled analysis results.
#[derive(Debug, Clone, Serialize)]
pub struct GenderGroupReport {
    pub gender: Gender,
    pub n_subjects: usize,
    pub n_authentic: usize,
    pub n_impostor: usize,
    pub d_prime: f64,
    pub mean_authentic: f64,
    pub mean_impostor: f64,
    pub results: Vec<EvalResult>,
}

/// Gender-mode analysis: pools authentic scores per gender across subsets, and
/// impostor scores from same-gender within-subset pairs; writes `analyze.json`
/// plus 64-bin histogram CSVs per gender.
pub fn cmd_analyze_gender(
    datasets: &[PathBuf],
    checkpoint: Option<&Path>,
    far_targets: &[f64],
    out: &Path,
) -> Result<Vec<GenderGroupReport>> {
    ensure_out_dir(out)?;
    let far_targets = normalize_far_targets(far_targets.to_vec())?;
    let dataset = load_datasets(datasets)?;
    let head = checkpoint_or_identity(checkpoint, dataset.dim())?;
    let embeddings = embed_dataset(&dataset, &head)?;
    let groups = subset_partition(&dataset)?;

    let mut reports = Vec::new();
    for gender in [Gender::Male, Gender::Female] {
        let mut authentic = Vec::new();
        let mut impostor = Vec::new();
        let mut n_subjects = 0usize;
        for indices in groups.values() {
            let filtered: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| dataset.subjects()[i].gender() == gender)
                .collect();
            n_subjects += filtered.len();
            if filtered.len() < 2 {
                continue;
            }
            let set = group_score_set(&embeddings, &filtered)?;
            authentic.extend_from_slice(set.authentic());
            impostor.extend_from_slice(set.impostor());
        }
        if authentic.len() < 2 || impostor.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "gender analysis needs {gender} subjects in the data"
            )));
        }
        let set = ScoreSet::new(authentic, impostor)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let results = far_targets
            .iter()
            .map(|&far| tar_at_far(&set, far))
            .collect::<Result<Vec<_>>>()?;
        let bins = report::histogram_bins(set.authentic(), set.impostor(), -1.0, 1.0, 64)?;
        write_histogram_csv(&bins, &out.join(format!("hist_{gender}.csv")))?;
        reports.push(GenderGroupReport {
            gender,
            n_subjects,
            n_authentic: set.authentic().len(),
            n_impostor: set.impostor().len(),
            d_prime: d_prime(&set)?,
            mean_authentic: mean(set.authentic()),
            mean_impostor: mean(set.impostor()),
            results,
        });
    }
    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| Error::Config(format!("cannot encode analysis: {e}")))?;
    fs::write(out.join("analyze.json"), json + "\n")?;
    Ok(reports)
}

pub fn write_histogram_csv(bins: &report::HistogramBins, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "bin_lo,bin_hi,authentic,impostor")?;
    let n = bins.authentic.len();
    let width = (bins.hi - bins.lo) / n as f64;
    for i in 0..n {
        writeln!(
            w,
            "{},{},{},{}",
            bins.lo + i as f64 * width,
            bins.lo + (i + 1) as f64 * width,
            bins.authentic[i],
            bins.impostor[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram_csv(path: &Path) -> Result<report::HistogramBins> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "bin_lo,bin_hi,authentic,impostor")) => {}
        _ => return Err(Error::parse(1, "missing histogram header")),
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut authentic = Vec::new();
    let mut impostor = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(line_no, "expected 4 fields"));
        }
        let f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(line_no, format!("bad value {s:?}")))
        };
        lo = lo.min(f(fields[0])?);
        hi = hi.max(f(fields[1])?);
        authentic.push(
            fields[2]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad count {:?}", fields[2])))?,
        );
        impostor.push(
            fields[3]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad count {:?}", fields[3])))?,
        );
    }
    if authentic.is_empty() {
        return Err(Error::parse(0, "histogram has no bins"));
    }
    Ok(report::HistogramBins {
        lo,
        hi,
        authentic,
        impostor,
    })
}

/// One mean-score sample in the card-format analysis: either a resampled draw
/// of the majority format or the full minority group.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CardFormatSample {
    pub subset: String,
    pub format: crate::dataset::CardFormat,
    /// `draw_<k>` for majority resamples, `full` for the minority group.
    pub sample: String,
    pub n_subjects: usize,
    pub mean_authentic: f64,
    pub mean_impostor: f64,
}

/// Smallest per-format subject count for a subset to enter the card-format
/// analysis; tiny minority groups produce meaningless means.
pub const MIN_FORMAT_GROUP: usize = 20;

/// Card-format mode: for each subset with both formats (at least
/// [`MIN_FORMAT_GROUP`] subjects each), resamples the majority format down to
/// the minority count `n_draws` times and reports mean authentic/impostor
/// scores next to the minority's full-group means.
pub fn cmd_analyze_card(
    datasets: &[PathBuf],
    checkpoint: Option<&Path>,
    out: &Path,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<CardFormatSample>> {
    ensure_out_dir(out)?;
    if n_draws == 0 {
        return Err(Error::Config("draws must be positive".into()));
    }
    let dataset = load_datasets(datasets)?;
    let head = checkpoint_or_identity(checkpoint, dataset.dim())?;
    let embeddings = embed_dataset(&dataset, &head)?;
    let groups = subset_partition(&dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut samples = Vec::new();
    for (label, indices) in &groups {
        use crate::dataset::CardFormat;
        let of_format = |fmt: CardFormat| -> Vec<usize> {
            indices
                .iter()
                .copied()
                .filter(|&i| dataset.subjects()[i].card_format() == fmt)
                .collect()
        };
        let yellow = of_format(CardFormat::Yellow);
        let blue = of_format(CardFormat::Blue);
        if yellow.len() < MIN_FORMAT_GROUP || blue.len() < MIN_FORMAT_GROUP {
            continue;
        }
        let (majority, minority, majority_fmt, minority_fmt) = if yellow.len() >= blue.len() {
            (yellow, blue, CardFormat::Yellow, CardFormat::Blue)
        } else {
            (blue, yellow, CardFormat::Blue, CardFormat::Yellow)
        };
        let (auth, imp) = group_mean_scores(&embeddings, &minority)?;
        samples.push(CardFormatSample {
            subset: label.clone(),
            format: minority_fmt,
            sample: "full".to_string(),
            n_subjects: minority.len(),
            mean_authentic: auth,
            mean_impostor: imp,
        });
        for draw in 0..n_draws {
            let picked = rand::seq::index::sample(&mut rng, majority.len(), minority.len());
            let drawn: Vec<usize> = picked.iter().map(|k| majority[k]).collect();
            let (auth, imp) = group_mean_scores(&embeddings, &drawn)?;
            samples.push(CardFormatSample {
                subset: label.clone(),
                format: majority_fmt,
                sample: format!("draw_{draw}"),
                n_subjects: drawn.len(),
                mean_authentic: auth,
                mean_impostor: imp,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no subset contains at least {MIN_FORMAT_GROUP} subjects of each card format"
        )));
    }
    write_card_csv(&samples, &out.join("card_format.csv"))?;
    let json = serde_json::to_string_pretty(&samples)
        .map_err(|e| Error::Config(format!("cannot encode analysis: {e}")))?;
    fs::write(out.join("analyze.json"), json + "\n")?;
    Ok(samples)
}

fn write_card_csv(samples: &[CardFormatSample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "subset,format,sample,n_subjects,mean_authentic,mean_impostor")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.subset, s.format, s.sample, s.n_subjects, s.mean_authentic, s.mean_impostor
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Renders SVG reports into `<out>/report/`: grouped TAR bars per FAR target
/// from named eval tables, a training curve from a history CSV, and score
/// histograms; input CSVs are copied alongside for self-containment.
pub fn cmd_report(
    out: &Path,
    history: Option<&Path>,
    evals: &[(String, PathBuf)],
    histograms: &[(String, PathBuf)],
) -> Result<Vec<PathBuf>> {
    if history.is_none() && evals.is_empty() && histograms.is_empty() {
        return Err(Error::Config(
            "report needs at least one of --history, --eval, --hist".into(),
        ));
    }
    ensure_out_dir(out)?;
    let report_dir = out.join("report");
    ensure_out_dir(&report_dir)?;
    let mut written = Vec::new();

    if !evals.is_empty() {
        let mut tables = Vec::new();
        for (name, path) in evals {
            tables.push((name.clone(), read_eval_csv(path)?));
            fs::copy(path, report_dir.join(format!("eval_{name}.csv")))?;
        }
        // One grouped-bar chart per FAR target present in the first table.
        let mut fars: Vec<f64> = tables[0].1.iter().map(|r| r.result.far_target).collect();
        fars.sort_by(|a, b| a.partial_cmp(b).unwrap());
        fars.dedup();
        for far in fars {
            let mut categories: Vec<String> = tables[0]
                .1
                .iter()
                .filter(|r| r.result.far_target == far)
                .map(|r| r.subset.clone())
                .collect();
            categories.dedup();
            let mut series = Vec::new();
            for (name, rows) in &tables {
                let values: Vec<f64> = categories
                    .iter()
                    .map(|c| {
                        rows.iter()
                            .find(|r| &r.subset == c && r.result.far_target == far)
                            .map(|r| r.result.tar)
                            .ok_or_else(|| {
                                Error::Config(format!(
                                    "eval table {name} lacks subset {c} at FAR {far}"
                                ))
                            })
                    })
                    .collect::<Result<_>>()?;
                series.push((name.clone(), values));
            }
            let svg = report::grouped_bar_chart(
                &format!("TAR at FAR = {far}"),
                "TAR",
                &categories,
                &series,
            )?;
            let path = report_dir.join(format!("tar_far_{far}.svg"));
            fs::write(&path, svg)?;
            written.push(path);
        }
    }

    if let Some(history_path) = history {
        let history = crate::trainer::TrainHistory::read_csv(history_path)?;
        fs::copy(history_path, report_dir.join("history.csv"))?;
        let points: Vec<(u64, f64, f64)> = history
            .points
            .iter()
            .map(|p| (p.iteration, p.mean_batch_loss, p.validation_tar))
            .collect();
        let svg = report::training_curve("training curve", &points)?;
        let path = report_dir.join("training_curve.svg");
        fs::write(&path, svg)?;
        written.push(path);
    }

    for (name, path) in histograms {
        let bins = read_histogram_csv(path)?;
        fs::copy(path, report_dir.join(format!("hist_{name}.csv")))?;
        let svg = report::histogram_chart(&format!("score distribution: {name}"), &bins)?;
        let out_path = report_dir.join(format!("hist_{name}.svg"));
        fs::write(&out_path, svg)?;
        written.push(out_path);
    }
    Ok(written)
}
