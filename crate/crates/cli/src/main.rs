//! `qdc` command-line runner.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qdc::bench::{
    parse_feature_csv, parse_m_values, predictions_to_csv, report_to_csv, run, score_rows, sweep_copies, sweep_to_csv,
    sweep_to_svg, ExperimentConfig,
};
use qdc::classifiers::{load_model, save_model};
use qdc::par::ExecMode;
use qdc::Error;

#[derive(Parser)]
#[command(name = "qdc", version, about = "Quantum state discrimination classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every repetition of an experiment and write the per-repetition report.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `output.csv` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit on the training side of the first split and save the model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Score a headed CSV of raw feature rows with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Balanced accuracy across copy counts, e.g. `--m 1..8,inf`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        m: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also draw the series; defaults to `output.svg` from the config.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

const CONFIG_ERROR: u8 = 2;
const DATA_ERROR: u8 = 3;
const SOLVER_ERROR: u8 = 4;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => CONFIG_ERROR,
            Error::SolverFailure(_) | Error::ResourceLimit(_) | Error::NotPsd { .. } => SOLVER_ERROR,
            _ => DATA_ERROR,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn failure(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| failure(DATA_ERROR, format!("cannot write {}: {e}", path.display())))
}

fn output_path(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.output.csv.as_ref().map(|p| cfg.resolve(p)))
        .ok_or_else(|| failure(CONFIG_ERROR, "no output path: pass --out or set output.csv"))
}

fn bench(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_file(config)?;
    let out = output_path(out, &cfg)?;
    let report = run(&cfg)?;
    write(&out, &report_to_csv(&report)?)?;
    match report.aggregate(|m| m.ba_test) {
        Some((mean, std)) => eprintln!(
            "{} {}: test BA {:.2} ± {:.2} % over {}/{} repetitions",
            report.experiment_id,
            report.classifier.name(),
            100.0 * mean,
            100.0 * std,
            report.ok_count(),
            report.rows.len()
        ),
        None => return Err(failure(SOLVER_ERROR, "every repetition is N/A")),
    }
    Ok(())
}

fn train(config: &Path, model: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_file(config)?;
    let outcome = qdc::bench::train(&cfg)?;
    save_model(&outcome.model, model)?;
    let selected = outcome
        .selected
        .map(|v| format!(", cv selected {v:e}"))
        .unwrap_or_default();
    eprintln!("held-out BA {:.2} %{selected}", 100.0 * outcome.ba_test);
    Ok(())
}

fn predict(model: &Path, input: &Path, out: &Path) -> Result<(), Failure> {
    let model = load_model(model)?;
    let bytes = std::fs::read(input).map_err(|e| failure(DATA_ERROR, format!("cannot read {}: {e}", input.display())))?;
    let x = parse_feature_csv(&bytes)?;
    let (scores, preds) = score_rows(&model, &x, ExecMode::Parallel)?;
    write(out, &predictions_to_csv(&model, &scores, &preds)?)
}

fn sweep(config: &Path, m: &str, out: Option<PathBuf>, svg: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_file(config)?;
    let out = output_path(out, &cfg)?;
    let (values, inf) = parse_m_values(m)?;
    let points = sweep_copies(&cfg, &values, inf)?;
    write(&out, &sweep_to_csv(&points)?)?;
    if let Some(svg) = svg.or_else(|| cfg.output.svg.as_ref().map(|p| cfg.resolve(p))) {
        write(&svg, &sweep_to_svg(&points, &cfg.experiment_id))?;
    }
    for p in &points {
        if let Some((mean, std)) = p.ba_test() {
            let flag = if p.underflow { "  (underflow)" } else { "" };
            eprintln!("m = {:>3}: {:.2} ± {:.2} %{flag}", p.copies.to_string(), 100.0 * mean, 100.0 * std);
        }
    }
    if points.iter().all(|p| p.report.all_failed()) {
        return Err(failure(SOLVER_ERROR, "every run is N/A"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench { config, out } => bench(&config, out),
        Command::Train { config, model } => train(&config, &model),
        Command::Predict { model, input, out } => predict(&model, &input, &out),
        Command::Sweep { config, m, out, svg } => sweep(&config, &m, out, svg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
