//! `tdgs`: synthesize, analyze, train, evaluate, and clean multi-channel
//! diagnostic data by pairwise similarity classification.
//!
//! Exit codes: 0 on success, 1 for validation or usage errors, 2 for I/O errors.

mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use tdgs_core::class_structure::{
    class_ratios, curve_csv, parse_rational, transformation_curve, ClassStructureReport,
};
use tdgs_core::data_model::{load_shots, save_shots, structure_of, synthesize};
use tdgs_core::evaluation::{grouped_csv, DEFAULT_FLAG_THRESHOLD};
use tdgs_core::pairing::{build_pairs, pairs_csv};
use tdgs_core::pipeline::{
    clean_shots, evaluate, sweep, train_cleaner, CleaningModel, SweepConfig,
};
use tdgs_core::{Rational, Shot, StructureSpec, SynthConfig};

use config::RunConfig;

/// Fault pattern used by `synth` when `--faults` is not given; repeated to the shot count.
const DEFAULT_FAULTS: [usize; 7] = [1, 1, 0, 2, 0, 1, 1];

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "tdgs",
    version,
    about = "Pairwise similarity cleaning for multi-channel diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset (--out).
    Synth(RunConfig),
    /// Report pair counts and class ratios of a labeled dataset.
    Analyze(RunConfig),
    /// Dump pair features as CSV.
    Pairs(RunConfig),
    /// Train a pair classifier (--dataset, --model).
    Train(RunConfig),
    /// Score a model on a labeled dataset.
    Eval(RunConfig),
    /// Flag incorrect channels and write a relabeled dataset (--out).
    Clean(RunConfig),
    /// Train on every pool subset and report G-mean per class structure.
    Sweep(RunConfig),
    /// Emit class-structure transformation curves as CSV.
    Curves(RunConfig),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let io = e.chain().any(|c| {
        c.is::<std::io::Error>()
            || c.downcast_ref::<tdgs_core::Error>()
                .is_some_and(|e| e.is_io())
    });
    if io {
        2
    } else {
        1
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(c) => cmd_synth(&c.resolve()?),
        Command::Analyze(c) => cmd_analyze(&c.resolve()?),
        Command::Pairs(c) => cmd_pairs(&c.resolve()?),
        Command::Train(c) => cmd_train(&c.resolve()?),
        Command::Eval(c) => cmd_eval(&c.resolve()?),
        Command::Clean(c) => cmd_clean(&c.resolve()?),
        Command::Sweep(c) => cmd_sweep(&c.resolve()?),
        Command::Curves(c) => cmd_curves(&c.resolve()?),
    }
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| usage(format!("missing required --{flag}")))
}

fn read_dataset(path: &Path) -> Result<Vec<Shot>> {
    let shots = load_shots(path)?;
    if shots.is_empty() {
        return Err(usage(format!("{}: dataset has no shots", path.display())));
    }
    Ok(shots)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes to `path` when given, stdout otherwise.
fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, contents),
        None => {
            std::io::stdout()
                .write_all(contents.as_bytes())
                .context("writing to stdout")?;
            Ok(())
        }
    }
}

fn structure_summary(spec: &StructureSpec, report: &ClassStructureReport) -> String {
    let mut s = String::new();
    let ks: Vec<String> = spec
        .incorrect_per_shot()
        .iter()
        .map(|k| k.to_string())
        .collect();
    let _ = writeln!(s, "channels: {}", spec.n_channels());
    let _ = writeln!(s, "shots: {}", spec.n_shots());
    let _ = writeln!(s, "incorrect_per_shot: {}", ks.join(","));
    let _ = writeln!(s, "total_pairs: {}", report.total_pairs);
    let _ = writeln!(s, "similar: {}", report.similar);
    let _ = writeln!(s, "dissimilar: {}", report.dissimilar);
    let _ = writeln!(
        s,
        "raw_ratio: {} ({})",
        report.raw_ratio,
        report.raw_ratio.to_decimal_string()
    );
    let _ = writeln!(
        s,
        "tdgs_ratio: {} ({})",
        report.tdgs_ratio,
        report.tdgs_ratio.to_decimal_string()
    );
    let _ = writeln!(s, "balanced_improved: {}", report.balanced_improved);
    s
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let out = require(&cfg.out, "out")?;
    let channels = cfg.channels.unwrap_or(11);
    let faults = match (&cfg.faults, cfg.shots) {
        (Some(f), Some(n)) if f.len() != n => {
            return Err(usage(format!(
                "--faults lists {} shots but --shots is {n}",
                f.len()
            )))
        }
        (Some(f), _) => f.clone(),
        (None, n) => DEFAULT_FAULTS
            .iter()
            .copied()
            .cycle()
            .take(n.unwrap_or(7))
            .collect(),
    };
    let mut synth = SynthConfig::new(
        channels,
        cfg.samples.unwrap_or(500),
        faults,
        cfg.seed.unwrap_or(0),
    );
    if let Some(dt) = cfg.dt {
        synth.dt = dt;
    }
    let shots = synthesize(&synth)?;
    save_shots(&shots, out)?;
    let spec = structure_of(&shots)?;
    print!("{}", structure_summary(&spec, &class_ratios(&spec)));
    Ok(())
}

fn cmd_analyze(cfg: &RunConfig) -> Result<()> {
    let shots = read_dataset(require(&cfg.dataset, "dataset")?)?;
    let spec = structure_of(&shots)?;
    let report = class_ratios(&spec);
    print!("{}", structure_summary(&spec, &report));
    if let Some(path) = &cfg.report {
        let csv = format!(
            "total_pairs,similar,dissimilar,raw_ratio,tdgs_ratio,balanced_improved\n{},{},{},{},{},{}\n",
            report.total_pairs,
            report.similar,
            report.dissimilar,
            report.raw_ratio.to_decimal_string(),
            report.tdgs_ratio.to_decimal_string(),
            report.balanced_improved
        );
        write_file(path, &csv)?;
    }
    Ok(())
}

fn cmd_pairs(cfg: &RunConfig) -> Result<()> {
    let shots = read_dataset(require(&cfg.dataset, "dataset")?)?;
    let pairs = build_pairs(&shots, &cfg.feature_config())?;
    emit(cfg.out.as_deref(), &pairs_csv(&pairs))
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let shots = read_dataset(require(&cfg.dataset, "dataset")?)?;
    let model_path = require(&cfg.model, "model")?;
    let (model, report) = train_cleaner(&shots, cfg.feature_config(), &cfg.train_config())?;
    model.save(model_path)?;
    println!(
        "training_structure: {} ({})",
        model.class_structure,
        model.class_structure.to_decimal_string()
    );
    println!("support_vectors: {}", model.svm.alphas.len());
    println!("updates: {}", report.updates);
    println!("converged: {}", report.converged);
    println!("max_kkt_violation: {}", report.max_kkt_violation);
    if !report.converged {
        eprintln!("warning: solver hit its sweep cap before converging");
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let shots = read_dataset(require(&cfg.dataset, "dataset")?)?;
    let model = CleaningModel::load(require(&cfg.model, "model")?)?;
    let report = evaluate(&model, &shots)?;
    let csv = report.csv();
    print!("{csv}");
    if let Some(path) = &cfg.report {
        write_file(path, &csv)?;
    }
    Ok(())
}

fn cmd_clean(cfg: &RunConfig) -> Result<()> {
    let shots = read_dataset(require(&cfg.dataset, "dataset")?)?;
    let model = CleaningModel::load(require(&cfg.model, "model")?)?;
    let out = require(&cfg.out, "out")?;
    let threshold = cfg.threshold.unwrap_or(DEFAULT_FLAG_THRESHOLD);
    let cleaned = clean_shots(&model, &shots, threshold)?;
    let mut total = 0;
    for c in &cleaned {
        let ids: Vec<String> = c.flagged.iter().map(|i| i.to_string()).collect();
        println!("{}: flagged [{}]", c.shot.shot_id, ids.join(","));
        total += c.flagged.len();
    }
    println!("flagged_channels: {total}");
    let shots: Vec<Shot> = cleaned.into_iter().map(|c| c.shot).collect();
    save_shots(&shots, out)?;
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let mut pool = read_dataset(require(&cfg.pool, "pool")?)?;
    let validation = read_dataset(require(&cfg.validation, "validation")?)?;
    if let Some(n) = cfg.pool_size {
        if n > pool.len() {
            return Err(usage(format!(
                "--pool-size {n} exceeds the {} shots in the pool",
                pool.len()
            )));
        }
        pool.truncate(n);
    }
    let sweep_cfg = SweepConfig {
        subset_size: cfg.subset.unwrap_or(7),
        cap: cfg.cap.unwrap_or(2000),
        seed: cfg.seed.unwrap_or(0),
        train: cfg.train_config(),
        features: cfg.feature_config(),
    };
    let outcome = sweep(&pool, &validation, &sweep_cfg)?;
    if !outcome.exhaustive {
        eprintln!(
            "warning: {} subsets exceed the cap of {}; sampled {} at random",
            outcome.total_subsets,
            sweep_cfg.cap,
            outcome.visited()
        );
    }
    if !outcome.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} single-class training subsets",
            outcome.skipped.len()
        );
    }
    eprintln!(
        "trained {} classifiers over {} class structures",
        outcome.results.len(),
        outcome.groups.len()
    );
    emit(
        cfg.report.as_deref().or(cfg.out.as_deref()),
        &grouped_csv(&outcome.groups),
    )
}

fn cmd_curves(cfg: &RunConfig) -> Result<()> {
    let n = cfg.channels.unwrap_or(11);
    let grid: Vec<Rational> = match &cfg.q_grid {
        Some(values) => values
            .iter()
            .map(|v| parse_rational(v))
            .collect::<Result<_, _>>()?,
        None => (0..=n as i64)
            .map(|k| Rational::new(k, n.max(1) as i64))
            .collect(),
    };
    let points = transformation_curve(n, &grid)?;
    emit(cfg.out.as_deref(), &curve_csv(&points))
}
