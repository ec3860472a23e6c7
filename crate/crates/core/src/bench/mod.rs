//! Config-driven experiment runner: repeated shuffled splits, grid CV, copy-count sweeps.

mod config;
mod cv;
mod report;

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::classifiers::kpgm::underflow_rows;
use crate::classifiers::{fit, predictions, ClassifierKind, ClassifierModel, FitContext, ModelSpec};
use crate::data::{split, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{balanced_accuracy, confusion, empirical_success_probability, mean_squared_error, ConfusionMatrix};
use crate::par::{map_indexed, ExecMode};

pub use config::{
    CvParameter, CvScheme, CvSpec, DatasetSource, ExperimentConfig, OutputPaths, SplitConfig, CONFIG_VERSION,
};
pub use cv::{cv_mean_scores, cv_select, fold_indices};
pub use report::{
    parse_feature_csv, predictions_to_csv, report_to_csv, sweep_to_csv, sweep_to_svg, REPORT_COLUMNS, SWEEP_COLUMNS,
};

/// Copy count of a run; kernel PGM in the `m → ∞` limit reports `inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Copies {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Copies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Copies::Finite(m) => write!(f, "{m}"),
            Copies::Infinite => f.write_str("inf"),
        }
    }
}

/// Metrics of one successful repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RepMetrics {
    pub ba_train: f64,
    pub ba_test: f64,
    pub psucc_train: f64,
    pub psucc_test: f64,
    pub mse_train: f64,
    pub mse_test: f64,
    pub confusion_train: ConfusionMatrix,
    pub confusion_test: ConfusionMatrix,
    /// Test rows whose scores all fell below the underflow level.
    pub underflow_test: usize,
    pub n_test: usize,
    /// Hyperparameter chosen by cross-validation, if any ran.
    pub selected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub repetition: usize,
    pub split_seed: u64,
    pub wall_ms: f64,
    /// `Err` holds the reason a repetition is reported N/A.
    pub outcome: std::result::Result<RepMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub experiment_id: String,
    pub classifier: ClassifierKind,
    pub features: usize,
    pub copies: Copies,
    pub record_wall_time: bool,
    pub rows: Vec<RunRow>,
}

/// Mean and sample standard deviation (`n − 1`); the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

impl RunReport {
    pub fn ok(&self) -> impl Iterator<Item = &RepMetrics> {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn ok_count(&self) -> usize {
        self.ok().count()
    }

    pub fn all_failed(&self) -> bool {
        self.ok_count() == 0
    }

    /// Mean ± std of a per-repetition metric over successful repetitions.
    pub fn aggregate(&self, metric: impl Fn(&RepMetrics) -> f64) -> Option<(f64, f64)> {
        mean_std(&self.ok().map(metric).collect::<Vec<_>>())
    }

    pub fn to_csv(&self) -> Result<String> {
        report_to_csv(self)
    }
}

fn evaluate(model: &ClassifierModel, d: &Dataset, exec: ExecMode) -> Result<(f64, f64, f64, ConfusionMatrix, usize)> {
    let scores = model.scores_batch(d.features(), exec)?;
    let cm = confusion(&predictions(&scores), d.labels(), model.k)?;
    let ba = balanced_accuracy(&cm)?;
    let rows: Vec<Vec<f64>> = scores.row_iter().map(|r| r.iter().copied().collect()).collect();
    let psucc = empirical_success_probability(&rows, d.labels(), &model.priors)?;
    let mse = mean_squared_error(&rows, d.labels())?;
    let underflow = if model.kind == ClassifierKind::KPgmC {
        underflow_rows(&scores)
    } else {
        0
    };
    Ok((ba, psucc, mse, cm, underflow))
}

/// Draws the repetition's split, runs CV if configured, and fits on the training side.
fn fit_repetition(
    cfg: &ExperimentConfig,
    data: &Dataset,
    repetition: usize,
    deadline: Option<Instant>,
    exec: ExecMode,
) -> Result<(ClassifierModel, Dataset, Dataset, Option<f64>)> {
    let split_spec = cfg.split.spec(repetition);
    let (train, test) = split(data, &split_spec)?;
    let mut spec = cfg.model.clone();
    let mut selected = None;
    if let Some(cv) = cfg.effective_cv() {
        let v = cv_select(&spec, &train, &cv, split_spec.derived_seed(), exec, deadline)?;
        spec = cv.parameter.apply(&spec, v);
        selected = Some(v);
    }
    let model = fit(&spec, &train, &FitContext { deadline, exec })?;
    Ok((model, train, test, selected))
}

fn run_repetition(cfg: &ExperimentConfig, data: &Dataset, repetition: usize, exec: ExecMode) -> RunRow {
    let start = Instant::now();
    let budget = cfg.budget();
    let deadline = start.checked_add(budget);
    let outcome = (|| {
        let (model, train, test, selected) = fit_repetition(cfg, data, repetition, deadline, exec)?;
        let (ba_train, psucc_train, mse_train, confusion_train, _) = evaluate(&model, &train, exec)?;
        let (ba_test, psucc_test, mse_test, confusion_test, underflow_test) = evaluate(&model, &test, exec)?;
        if start.elapsed() > budget {
            return Err(Error::ResourceLimit(format!("wall-clock budget of {} min exceeded", cfg.budget_minutes)));
        }
        Ok(RepMetrics {
            ba_train,
            ba_test,
            psucc_train,
            psucc_test,
            mse_train,
            mse_test,
            confusion_train,
            confusion_test,
            underflow_test,
            n_test: test.n_samples(),
            selected,
        })
    })();
    RunRow {
        repetition,
        split_seed: cfg.split.spec(repetition).derived_seed(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        outcome: outcome.map_err(|e| e.to_string()),
    }
}

fn reported_features(cfg: &ExperimentConfig, data: &Dataset) -> usize {
    cfg.model.pipeline.pca.unwrap_or(data.n_features())
}

fn reported_copies(spec: &ModelSpec) -> Copies {
    if spec.kind == ClassifierKind::KPgmInfC {
        Copies::Infinite
    } else {
        Copies::Finite(spec.pipeline.copies)
    }
}

/// Loads the dataset and runs every repetition. Only config and data problems are
/// errors; a failing repetition becomes an N/A row.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    run_on(cfg, &data)
}

/// [`run`] on an already loaded dataset.
pub fn run_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunReport> {
    cfg.validate()?;
    // Repetitions are the outer parallel loop; inner work stays sequential so the
    // pool is not oversubscribed.
    let inner = if cfg.split.repetitions > 1 {
        ExecMode::Sequential
    } else {
        cfg.exec
    };
    let rows = map_indexed(cfg.split.repetitions, cfg.exec, |r| run_repetition(cfg, data, r, inner));
    Ok(RunReport {
        experiment_id: cfg.experiment_id.clone(),
        classifier: cfg.model.kind,
        features: reported_features(cfg, data),
        copies: reported_copies(&cfg.model),
        record_wall_time: cfg.record_wall_time,
        rows,
    })
}

/// Model fitted on the training side of repetition 0, as used by `train`.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    pub selected: Option<f64>,
    pub ba_test: f64,
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let deadline = Instant::now().checked_add(cfg.budget());
    let (model, _, test, selected) = fit_repetition(cfg, &data, 0, deadline, cfg.exec)?;
    let (ba_test, ..) = evaluate(&model, &test, cfg.exec)?;
    Ok(TrainOutcome {
        model,
        selected,
        ba_test,
    })
}

/// One point of a copy-count sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub copies: Copies,
    pub report: RunReport,
    /// Some repetition had every test score below the underflow level.
    pub underflow: bool,
    /// Mean share of underflowed test rows over successful repetitions.
    pub underflow_fraction: f64,
}

impl SweepPoint {
    pub fn ba_test(&self) -> Option<(f64, f64)> {
        self.report.aggregate(|m| m.ba_test)
    }

    pub fn ba_train(&self) -> Option<(f64, f64)> {
        self.report.aggregate(|m| m.ba_train)
    }
}

/// Parses `1..8,inf`-style lists into ascending copy counts plus the infinity flag.
pub fn parse_m_values(s: &str) -> Result<(Vec<usize>, bool)> {
    let bad = |p: &str| Error::Config(format!("bad copy count {p:?}"));
    let mut values = Vec::new();
    let mut inf = false;
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.eq_ignore_ascii_case("inf") {
            inf = true;
        } else if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let lo: usize = lo.parse().map_err(|_| bad(part))?;
            let hi: usize = hi.parse().map_err(|_| bad(part))?;
            if lo > hi {
                return Err(bad(part));
            }
            values.extend(lo..=hi);
        } else {
            values.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    Ok((values, inf))
}

fn sweep_config(cfg: &ExperimentConfig, copies: Copies) -> ExperimentConfig {
    let mut c = cfg.clone();
    match copies {
        Copies::Finite(m) => c.model.pipeline.copies = m,
        Copies::Infinite => {
            c.model.kind = ClassifierKind::KPgmInfC;
            c.model.pipeline.copies = 1;
            c.cv = None;
        }
    }
    c
}

fn check_sweep(cfg: &ExperimentConfig, m_values: &[usize], include_infinity: bool) -> Result<()> {
    if m_values.is_empty() && !include_infinity {
        return Err(Error::Config("sweep needs at least one copy count".into()));
    }
    if m_values.first() == Some(&0) || m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("copy counts must be positive and strictly ascending".into()));
    }
    if include_infinity && !matches!(cfg.model.kind, ClassifierKind::KPgmC | ClassifierKind::KPgmInfC) {
        return Err(Error::Config(format!(
            "the m = inf limit exists only for kernel PGM, not {}",
            cfg.model.kind.name()
        )));
    }
    Ok(())
}

pub fn sweep_copies(cfg: &ExperimentConfig, m_values: &[usize], include_infinity: bool) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    check_sweep(cfg, m_values, include_infinity)?;
    let data = cfg.load_dataset()?;
    sweep_copies_on(cfg, &data, m_values, include_infinity)
}

/// [`sweep_copies`] on an already loaded dataset.
pub fn sweep_copies_on(
    cfg: &ExperimentConfig,
    data: &Dataset,
    m_values: &[usize],
    include_infinity: bool,
) -> Result<Vec<SweepPoint>> {
    check_sweep(cfg, m_values, include_infinity)?;
    let mut copies: Vec<Copies> = m_values.iter().map(|&m| Copies::Finite(m)).collect();
    if include_infinity {
        copies.push(Copies::Infinite);
    }
    copies
        .into_iter()
        .map(|c| {
            let report = run_on(&sweep_config(cfg, c), data)?;
            let ok: Vec<&RepMetrics> = report.ok().collect();
            let underflow = ok.iter().any(|m| m.underflow_test == m.n_test);
            let underflow_fraction = if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|m| m.underflow_test as f64 / m.n_test as f64).sum::<f64>() / ok.len() as f64
            };
            Ok(SweepPoint {
                copies: c,
                report,
                underflow,
                underflow_fraction,
            })
        })
        .collect()
}

/// Scores and 1-based predictions for raw rows, mapped back to original labels by the caller.
pub fn score_rows(model: &ClassifierModel, x: &DMatrix<f64>, exec: ExecMode) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let s = model.scores_batch(x, exec)?;
    let p = predictions(&s);
    Ok((s, p))
}
