//! Declarative experiment description.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierKind, ModelSpec};
use crate::data::{load_csv, load_idx, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::par::ExecMode;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Idx { images: PathBuf, labels: PathBuf },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
}

fn default_label_column() -> String {
    "label".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// Absolute training size; wins over `train_fraction`.
    #[serde(default)]
    pub train_count: Option<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_fraction() -> f64 {
    0.5
}
fn default_repetitions() -> usize {
    10
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: default_fraction(),
            train_count: None,
            repetitions: default_repetitions(),
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn spec(&self, repetition: usize) -> SplitSpec {
        let s = SplitSpec::new(self.train_fraction, self.seed, repetition as u64);
        match self.train_count {
            Some(c) => s.with_train_count(c),
            None => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvParameter {
    RelThreshold,
    BoxRadius,
    RidgeLambda,
}

impl CvParameter {
    pub fn name(self) -> &'static str {
        match self {
            CvParameter::RelThreshold => "rel_threshold",
            CvParameter::BoxRadius => "box_radius",
            CvParameter::RidgeLambda => "ridge_lambda",
        }
    }

    pub fn applies_to(self, kind: ClassifierKind) -> bool {
        match self {
            CvParameter::RelThreshold => matches!(kind, ClassifierKind::PgmC | ClassifierKind::KPgmC),
            CvParameter::BoxRadius => kind == ClassifierKind::LpC,
            CvParameter::RidgeLambda => kind == ClassifierKind::RidgeC,
        }
    }

    /// Copy of `spec` with the parameter set to `value`.
    pub fn apply(self, spec: &ModelSpec, value: f64) -> ModelSpec {
        let mut s = spec.clone();
        match self {
            CvParameter::RelThreshold => s.params.rel_threshold = value,
            CvParameter::BoxRadius => s.params.box_radius = value,
            CvParameter::RidgeLambda => s.params.ridge_lambda = value,
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScheme {
    KFold,
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSpec {
    pub parameter: CvParameter,
    pub grid: Vec<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: CvScheme,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_scheme() -> CvScheme {
    CvScheme::KFold
}
fn default_folds() -> usize {
    5
}

fn log_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

impl CvSpec {
    /// Grid search run when a config names none: the kernel PGM threshold and the ridge
    /// regularizer are always tuned, everything else keeps its configured value.
    pub fn default_for(kind: ClassifierKind) -> Option<CvSpec> {
        let (parameter, grid) = match kind {
            ClassifierKind::KPgmC => (CvParameter::RelThreshold, log_grid(-12, -2)),
            ClassifierKind::RidgeC => (CvParameter::RidgeLambda, log_grid(-4, 2)),
            _ => return None,
        };
        Some(CvSpec {
            parameter,
            grid,
            scheme: CvScheme::KFold,
            folds: default_folds(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Sweep chart; ignored by plain runs.
    #[serde(default)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_id")]
    pub experiment_id: String,
    pub dataset: DatasetSource,
    pub model: ModelSpec,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub cv: Option<CvSpec>,
    #[serde(default = "default_budget")]
    pub budget_minutes: f64,
    /// Off by default so reports stay byte-identical across runs.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub exec: ExecMode,
    #[serde(default)]
    pub output: OutputPaths,
    /// Directory that relative dataset and output paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_id() -> String {
    "experiment".into()
}
fn default_budget() -> f64 {
    30.0
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource, model: ModelSpec) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            experiment_id: default_id(),
            dataset,
            model,
            split: SplitConfig::default(),
            cv: None,
            budget_minutes: default_budget(),
            record_wall_time: false,
            exec: ExecMode::default(),
            output: OutputPaths::default(),
            base_dir: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative paths inside it resolve against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&s)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.model.validate()?;
        if self.split.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.split.train_count.is_none() && !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if !(self.budget_minutes > 0.0) {
            return Err(Error::Config("budget_minutes must be positive".into()));
        }
        if let Some(cv) = &self.cv {
            validate_cv(cv, &self.model)?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Idx { images, labels } => load_idx(self.resolve(images), self.resolve(labels)),
            DatasetSource::Csv { path, label_column } => load_csv(self.resolve(path), label_column),
        }
    }

    /// The explicit CV spec, or the kind's default search.
    pub fn effective_cv(&self) -> Option<CvSpec> {
        self.cv.clone().or_else(|| CvSpec::default_for(self.model.kind))
    }

    pub fn budget(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.budget_minutes * 60.0)
    }
}

pub(crate) fn validate_cv(cv: &CvSpec, model: &ModelSpec) -> Result<()> {
    if cv.grid.is_empty() {
        return Err(Error::Config("cv grid is empty".into()));
    }
    if !cv.parameter.applies_to(model.kind) {
        return Err(Error::Config(format!(
            "{} cannot be tuned for {}",
            cv.parameter.name(),
            model.kind.name()
        )));
    }
    if cv.scheme == CvScheme::KFold && cv.folds < 2 {
        return Err(Error::Config("k-fold cv needs at least 2 folds".into()));
    }
    for &v in &cv.grid {
        cv.parameter.apply(model, v).validate()?;
    }
    Ok(())
}
