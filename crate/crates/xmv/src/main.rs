//! `xmv` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xmv::cli;
use xmv::error::Error;

#[derive(Parser)]
#[command(name = "xmv", version, about = "Cross-modal document/selfie verification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-modality dataset
    Synth(SynthArgs),
    /// Fine-tune the embedding head with cross-modal semi-hard triplets
    Train(TrainArgs),
    /// Per-subset TAR@FAR evaluation
    Eval(EvalArgs),
    /// Subgroup analysis by gender or card format
    Analyze(AnalyzeArgs),
    /// Render SVG reports from eval, history, and histogram outputs
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config providing defaults for any unset flag
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (its parent must exist)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every randomized step; required, no wall-clock fallback
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training-pool subject count
    #[arg(long)]
    train_subjects: Option<usize>,
    /// Subjects per test subset
    #[arg(long)]
    test_per_subset: Option<usize>,
    /// Base feature dimension
    #[arg(long)]
    dim: Option<usize>,
    /// Write the binary dataset format instead of CSV
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training dataset (CSV or binary)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    /// FAR target used for checkpoint selection (fraction or percent)
    #[arg(long)]
    selection_far: Option<String>,
    /// Anchor on both modalities or selfies only
    #[arg(long, value_parser = ["both", "selfie_only"])]
    anchor_modality: Option<String>,
    /// Subject fraction kept for training (rest builds validation)
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    val_folds: Option<usize>,
    /// Hard positives per fold (default: min(300, fold size))
    #[arg(long)]
    val_per_fold: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset file(s); repeatable
    #[arg(long = "data")]
    data: Vec<PathBuf>,
    /// Trained checkpoint (omit for the identity baseline)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// FAR target, fraction or percent; repeatable
    #[arg(long = "far")]
    far: Vec<String>,
    /// Also write per-subset score files
    #[arg(long)]
    dump_scores: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "data")]
    data: Vec<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// gender or card_format
    #[arg(long, value_parser = ["gender", "card_format"])]
    mode: Option<String>,
    #[arg(long = "far")]
    far: Vec<String>,
    /// Resample count for card-format mode
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training history CSV
    #[arg(long)]
    history: Option<PathBuf>,
    /// Named eval table, as name=path; repeatable
    #[arg(long = "eval")]
    eval: Vec<String>,
    /// Named histogram CSV, as name=path; repeatable
    #[arg(long = "hist")]
    hist: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Range(_) => 1,
        Error::Parse { .. }
        | Error::Io(_)
        | Error::InsufficientData(_)
        | Error::EmptyInput(_)
        | Error::Dimension { .. } => 2,
        Error::Normalization(_) => 3,
    }
}

fn load_config(common: &CommonArgs) -> Result<cli::ExperimentConfig, Error> {
    match &common.config {
        Some(path) => cli::ExperimentConfig::load(path),
        None => Ok(cli::ExperimentConfig::default()),
    }
}

fn require_out(common: &CommonArgs, config: &cli::ExperimentConfig) -> Result<PathBuf, Error> {
    common
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| Error::Config("--out is required".into()))
}

fn require_seed(common: &CommonArgs, config: &cli::ExperimentConfig) -> Result<u64, Error> {
    common
        .seed
        .or(config.seed)
        .ok_or_else(|| Error::Config("--seed is required (no wall-clock seeding)".into()))
}

fn far_targets(flags: &[String], config: &cli::ExperimentConfig) -> Result<Vec<f64>, Error> {
    if flags.is_empty() {
        return config.far_targets();
    }
    let parsed = flags
        .iter()
        .map(|s| cli::parse_far(s))
        .collect::<Result<Vec<_>, _>>()?;
    cli::normalize_far_targets(parsed)
}

fn datasets(flags: &[PathBuf], config: &cli::ExperimentConfig) -> Result<Vec<PathBuf>, Error> {
    let list = if flags.is_empty() {
        config.datasets.clone()
    } else {
        flags.to_vec()
    };
    if list.is_empty() {
        return Err(Error::Config("--data is required".into()));
    }
    Ok(list)
}

fn parse_named(values: &[String], what: &str) -> Result<Vec<(String, PathBuf)>, Error> {
    values
        .iter()
        .map(|v| {
            v.split_once('=')
                .map(|(name, path)| (name.to_string(), PathBuf::from(path)))
                .ok_or_else(|| Error::Config(format!("{what} expects name=path, got {v:?}")))
        })
        .collect()
}

fn run(cli_args: Cli) -> Result<(), Error> {
    match cli_args.command {
        Command::Synth(args) => {
            let config = load_config(&args.common)?;
            let out = require_out(&args.common, &config)?;
            let mut synth = config.synth.clone();
            synth.seed = require_seed(&args.common, &config)?;
            if let Some(n) = args.train_subjects {
                synth.n_train_subjects = n;
            }
            if let Some(n) = args.test_per_subset {
                synth.n_test_per_subset = n;
            }
            if let Some(d) = args.dim {
                synth.d_in = d;
            }
            cli::cmd_synth(&synth, &out, args.binary)?;
            Ok(())
        }
        Command::Train(args) => {
            let config = load_config(&args.common)?;
            let out = require_out(&args.common, &config)?;
            let data = args
                .data
                .clone()
                .or_else(|| config.data.clone())
                .ok_or_else(|| Error::Config("--data is required".into()))?;
            let mut cmd = cli::TrainCmdConfig {
                train: config.train.clone(),
                train_fraction: config.train_fraction.unwrap_or(0.9),
                val_folds: config.val_folds.unwrap_or(10),
                val_per_fold: config.val_per_fold,
                impostor_direction: config.impostor_direction.unwrap_or_default(),
            };
            cmd.train.seed = require_seed(&args.common, &config)?;
            if let Some(v) = args.iterations {
                cmd.train.max_iterations = v;
            }
            if let Some(v) = args.learning_rate {
                cmd.train.learning_rate = v;
            }
            if let Some(v) = args.momentum {
                cmd.train.momentum = v;
            }
            if let Some(v) = args.batch_size {
                cmd.train.batch_size = v;
            }
            if let Some(v) = args.margin {
                cmd.train.margin = v;
            }
            if let Some(v) = args.eval_interval {
                cmd.train.eval_interval = v;
            }
            if let Some(v) = &args.selection_far {
                cmd.train.selection_far = cli::parse_far(v)?;
            }
            if let Some(v) = &args.anchor_modality {
                cmd.train.anchor_modality = match v.as_str() {
                    "selfie_only" => xmv::mining::AnchorModality::SelfieOnly,
                    _ => xmv::mining::AnchorModality::Both,
                };
            }
            if let Some(v) = args.train_fraction {
                cmd.train_fraction = v;
            }
            if let Some(v) = args.val_folds {
                cmd.val_folds = v;
            }
            if let Some(v) = args.val_per_fold {
                cmd.val_per_fold = Some(v);
            }
            let summary = cli::cmd_train(&data, &out, &cmd)?;
            println!(
                "best iteration {} (validation TAR {:.5}, started at {:.5}, {} validation pairs)",
                summary.best_iteration,
                summary.best_validation_tar,
                summary.initial_validation_tar,
                summary.validation_pairs
            );
            Ok(())
        }
        Command::Eval(args) => {
            let config = load_config(&args.common)?;
            let out = require_out(&args.common, &config)?;
            let data = datasets(&args.data, &config)?;
            let fars = far_targets(&args.far, &config)?;
            let checkpoint = args.checkpoint.clone().or_else(|| config.checkpoint.clone());
            let rows = cli::cmd_eval(&data, checkpoint.as_deref(), &fars, &out, args.dump_scores)?;
            for row in &rows {
                println!(
                    "{} far={} tar={:.5} threshold={}",
                    row.subset,
                    row.result.far_target,
                    row.result.tar,
                    if row.result.threshold.is_finite() {
                        format!("{:.6}", row.result.threshold)
                    } else {
                        "inf".to_string()
                    }
                );
            }
            Ok(())
        }
        Command::Analyze(args) => {
            let config = load_config(&args.common)?;
            let out = require_out(&args.common, &config)?;
            let data = datasets(&args.data, &config)?;
            let checkpoint = args.checkpoint.clone().or_else(|| config.checkpoint.clone());
            let mode = args
                .mode
                .clone()
                .or_else(|| config.group_by.first().cloned())
                .unwrap_or_else(|| "gender".to_string());
            match mode.as_str() {
                "gender" => {
                    let fars = far_targets(&args.far, &config)?;
                    let reports =
                        cli::cmd_analyze_gender(&data, checkpoint.as_deref(), &fars, &out)?;
                    for r in &reports {
                        println!(
                            "{}: n={} d'={:.4} mean_auth={:.4} mean_imp={:.4}",
                            r.gender, r.n_subjects, r.d_prime, r.mean_authentic, r.mean_impostor
                        );
                    }
                }
                "card_format" => {
                    let seed = require_seed(&args.common, &config)?;
                    let draws = args.draws.or(config.draws).unwrap_or(10);
                    let samples =
                        cli::cmd_analyze_card(&data, checkpoint.as_deref(), &out, draws, seed)?;
                    for s in &samples {
                        println!(
                            "{} {} {}: mean_auth={:.4} mean_imp={:.4}",
                            s.subset, s.format, s.sample, s.mean_authentic, s.mean_impostor
                        );
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown analyze mode {other:?} (expected gender or card_format)"
                    )))
                }
            }
            Ok(())
        }
        Command::Report(args) => {
            let config = load_config(&args.common)?;
            let out = require_out(&args.common, &config)?;
            let evals = parse_named(&args.eval, "--eval")?;
            let hists = parse_named(&args.hist, "--hist")?;
            let written = cli::cmd_report(&out, args.history.as_deref(), &evals, &hists)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
