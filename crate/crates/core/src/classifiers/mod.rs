//! Every classifier behind one fit / score / predict contract.

pub mod kpgm;
pub mod pipeline;

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::ridge_fit;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{trace_distance, SymMatrix};
use crate::par::{try_map_indexed, ExecMode};
use crate::quantum::{born_scores_batch, class_centroids_from_vectors, pgm, DensityMatrix, Povm};
use crate::solvers::{
    solve_box_gap_lp, solve_povm_sdp, Completeness, LpOptions, PovmSdpProblem, SdpObjective, SdpOptions,
};

pub use kpgm::{kpgm_fit, kpgm_infinite_predict, KernelGram, KernelPgmModel};
pub use pipeline::{Expansion, FittedPipeline, Normalization, PipelineSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "sdp_c")]
    SdpC,
    #[serde(rename = "sdp_gamma_c")]
    SdpGammaC,
    #[serde(rename = "lp_c")]
    LpC,
    #[serde(rename = "pgm_c")]
    PgmC,
    #[serde(rename = "kpgm_c")]
    KPgmC,
    #[serde(rename = "kpgm_inf_c")]
    KPgmInfC,
    #[serde(rename = "qnc_c")]
    QncC,
    #[serde(rename = "ridge_c")]
    RidgeC,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::SdpC => "sdp_c",
            ClassifierKind::SdpGammaC => "sdp_gamma_c",
            ClassifierKind::LpC => "lp_c",
            ClassifierKind::PgmC => "pgm_c",
            ClassifierKind::KPgmC => "kpgm_c",
            ClassifierKind::KPgmInfC => "kpgm_inf_c",
            ClassifierKind::QncC => "qnc_c",
            ClassifierKind::RidgeC => "ridge_c",
        }
    }

    /// Kinds whose scores are Born probabilities of an explicit POVM or centroid set.
    pub fn uses_states(self) -> bool {
        matches!(
            self,
            ClassifierKind::SdpC | ClassifierKind::SdpGammaC | ClassifierKind::PgmC | ClassifierKind::QncC
        )
    }

    pub fn is_linear(self) -> bool {
        matches!(self, ClassifierKind::LpC | ClassifierKind::RidgeC)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Relative pseudo-inverse threshold for the PGM variants.
    #[serde(default = "default_threshold")]
    pub rel_threshold: f64,
    /// Box radius `Λ` of the gap LP.
    #[serde(default = "default_box")]
    pub box_radius: f64,
    #[serde(default = "default_ridge")]
    pub ridge_lambda: f64,
    #[serde(default)]
    pub completeness: Completeness,
    #[serde(default = "default_sdp_tol")]
    pub sdp_tol: f64,
    #[serde(default = "default_sdp_iters")]
    pub sdp_max_iters: usize,
}

fn default_threshold() -> f64 {
    crate::linalg::DEFAULT_REL_THRESHOLD
}
fn default_box() -> f64 {
    1.0
}
fn default_ridge() -> f64 {
    1e-2
}
fn default_sdp_tol() -> f64 {
    1e-6
}
fn default_sdp_iters() -> usize {
    50_000
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            rel_threshold: default_threshold(),
            box_radius: default_box(),
            ridge_lambda: default_ridge(),
            completeness: Completeness::default(),
            sdp_tol: default_sdp_tol(),
            sdp_max_iters: default_sdp_iters(),
        }
    }
}

/// A classifier kind with its pipeline and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ClassifierKind,
    #[serde(default)]
    pub pipeline: PipelineSpec,
    #[serde(default)]
    pub params: Hyperparams,
}

impl ModelSpec {
    pub fn new(kind: ClassifierKind, pipeline: PipelineSpec) -> Self {
        ModelSpec {
            kind,
            pipeline,
            params: Hyperparams::default(),
        }
    }

    /// Rejects stage combinations that make no sense for the kind.
    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        let kind = self.kind.name();
        if p.copies == 0 {
            return Err(Error::Config("copies must be at least 1".into()));
        }
        if p.normalization == Normalization::None && !self.kind.is_linear() {
            return Err(Error::Config(format!("{kind} needs a normalization to build states")));
        }
        if p.state_subspace.is_some() && !self.kind.uses_states() {
            return Err(Error::Config(format!("state_subspace is not available for {kind}")));
        }
        if self.kind.is_linear() && p.copies > 2 {
            return Err(Error::Config(format!("{kind} supports copies 1 or 2")));
        }
        if !(self.params.rel_threshold >= 0.0 && self.params.rel_threshold < 1.0) {
            return Err(Error::Config("rel_threshold must lie in [0, 1)".into()));
        }
        if !(self.params.box_radius > 0.0) {
            return Err(Error::Config("box_radius must be positive".into()));
        }
        if !(self.params.ridge_lambda >= 0.0) {
            return Err(Error::Config("ridge_lambda must be nonnegative".into()));
        }
        Ok(())
    }

    pub(crate) fn expansion(&self) -> Expansion {
        let m = self.pipeline.copies;
        match self.kind {
            _ if m == 1 => Expansion::None,
            ClassifierKind::LpC | ClassifierKind::RidgeC => Expansion::Quadratic,
            ClassifierKind::KPgmC | ClassifierKind::KPgmInfC => Expansion::None,
            _ => Expansion::Tensor(m),
        }
    }
}

/// Execution context for a fit.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitContext {
    pub deadline: Option<Instant>,
    pub exec: ExecMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    #[serde(rename = "povm")]
    Povm(Povm),
    #[serde(rename = "linear")]
    Linear {
        /// `dim × K`.
        weights: DMatrix<f64>,
        intercepts: Vec<f64>,
    },
    #[serde(rename = "kernel")]
    Kernel(KernelPgmModel),
    #[serde(rename = "nearest")]
    Nearest { train: DMatrix<f64>, labels: Vec<usize> },
    #[serde(rename = "centroids")]
    Centroids(Vec<DensityMatrix>),
}

/// Solver outcome kept alongside the fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub k: usize,
    /// Original label value of each class.
    pub class_labels: Vec<i64>,
    /// Training priors `N_k / N`.
    pub priors: Vec<f64>,
    pub copies: usize,
    pub pipeline: FittedPipeline,
    pub payload: Payload,
    #[serde(default)]
    pub diagnostics: Option<FitDiagnostics>,
}

/// Rows scored per work unit; fixed so results never depend on the execution mode.
const SCORE_CHUNK: usize = 256;

/// Fits `spec` on `train`.
pub fn fit(spec: &ModelSpec, train: &Dataset, ctx: &FitContext) -> Result<ClassifierModel> {
    spec.validate()?;
    let k = train.class_count();
    let labels = train.labels();
    let (pipeline, x) = FittedPipeline::fit(&spec.pipeline, spec.expansion(), train.features())?;
    let counts = train.class_counts();
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateClass { class: c + 1 });
    }
    let n = labels.len() as f64;
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let params = &spec.params;
    let mut diagnostics = None;
    let payload = match spec.kind {
        ClassifierKind::PgmC => {
            let ens = class_centroids_from_vectors(&x, labels, k)?;
            Payload::Povm(pgm(&ens, params.rel_threshold)?)
        }
        ClassifierKind::SdpC | ClassifierKind::SdpGammaC => {
            let ens = class_centroids_from_vectors(&x, labels, k)?;
            let objective = if spec.kind == ClassifierKind::SdpC {
                SdpObjective::MaxPsucc
            } else {
                SdpObjective::MaxGap
            };
            let opts = SdpOptions {
                tol: params.sdp_tol,
                max_iters: params.sdp_max_iters,
                deadline: ctx.deadline,
                ..SdpOptions::default()
            };
            let (povm, report) = solve_povm_sdp(&PovmSdpProblem::new(ens, objective, params.completeness), &opts)?;
            diagnostics = Some(FitDiagnostics {
                objective: report.objective_value,
                iterations: report.iterations,
                converged: report.converged,
            });
            Payload::Povm(povm)
        }
        ClassifierKind::QncC => {
            let ens = class_centroids_from_vectors(&x, labels, k)?;
            Payload::Centroids(ens.centroids().to_vec())
        }
        ClassifierKind::LpC => {
            let centroids = class_means(&x, labels, k);
            let sol = solve_box_gap_lp(&centroids, params.box_radius, &LpOptions::default())?;
            diagnostics = Some(FitDiagnostics {
                objective: sol.gamma,
                iterations: sol.report.iterations,
                converged: sol.report.converged,
            });
            let dim = x.ncols();
            Payload::Linear {
                weights: DMatrix::from_fn(dim, k, |i, c| sol.weights[c][i]),
                intercepts: vec![0.0; k],
            }
        }
        ClassifierKind::RidgeC => {
            let m = ridge_fit(&x, labels, k, params.ridge_lambda)?;
            Payload::Linear {
                weights: m.weights,
                intercepts: m.intercepts,
            }
        }
        ClassifierKind::KPgmC => Payload::Kernel(kpgm_fit(
            &x,
            labels,
            k,
            spec.pipeline.copies,
            params.rel_threshold,
        )?),
        ClassifierKind::KPgmInfC => Payload::Nearest {
            train: x,
            labels: labels.to_vec(),
        },
    };
    Ok(ClassifierModel {
        kind: spec.kind,
        k,
        class_labels: train.class_labels().to_vec(),
        priors,
        copies: spec.pipeline.copies,
        pipeline,
        payload,
        diagnostics,
    })
}

fn class_means(x: &DMatrix<f64>, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; x.ncols()]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l - 1] += 1;
        for (s, v) in sums[l - 1].iter_mut().zip(x.row(i).iter()) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl ClassifierModel {
    /// Scores of already-transformed rows.
    fn payload_scores(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.payload {
            Payload::Povm(p) => born_scores_batch(p, x),
            Payload::Linear { weights, intercepts } => {
                if x.ncols() != weights.nrows() {
                    return Err(Error::invalid("linear model dimension mismatch"));
                }
                let mut s = x * weights;
                for mut row in s.row_iter_mut() {
                    for (c, v) in row.iter_mut().enumerate() {
                        *v += intercepts[c];
                    }
                }
                Ok(s)
            }
            Payload::Kernel(m) => m.scores_batch(x),
            Payload::Nearest { train, labels } => {
                let pred = kpgm::kpgm_infinite_predict_batch(train, labels, x)?;
                let mut s = DMatrix::zeros(x.nrows(), self.k);
                for (i, l) in pred.into_iter().enumerate() {
                    s[(i, l - 1)] = 1.0;
                }
                Ok(s)
            }
            Payload::Centroids(cs) => {
                let mut s = DMatrix::zeros(x.nrows(), self.k);
                for i in 0..x.nrows() {
                    let row: Vec<f64> = x.row(i).iter().copied().collect();
                    let rho = SymMatrix::outer(&row);
                    for (c, centroid) in cs.iter().enumerate() {
                        s[(i, c)] = -trace_distance(&rho, centroid.matrix())?;
                    }
                }
                Ok(s)
            }
        }
    }

    /// `N × K` scores for raw feature rows.
    pub fn scores_batch(&self, raw: &DMatrix<f64>, mode: ExecMode) -> Result<DMatrix<f64>> {
        let n = raw.nrows();
        let chunks = n.div_ceil(SCORE_CHUNK);
        let parts = try_map_indexed(chunks, mode, |c| {
            let start = c * SCORE_CHUNK;
            let len = SCORE_CHUNK.min(n - start);
            let x = self.pipeline.transform(&raw.rows(start, len).into_owned())?;
            self.payload_scores(&x)
        })?;
        let mut out = DMatrix::zeros(n, self.k);
        for (c, part) in parts.into_iter().enumerate() {
            out.rows_mut(c * SCORE_CHUNK, part.nrows()).copy_from(&part);
        }
        Ok(out)
    }

    pub fn scores(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let s = self.scores_batch(&DMatrix::from_row_slice(1, raw.len(), raw), ExecMode::Sequential)?;
        Ok(s.row(0).iter().copied().collect())
    }

    /// 1-based class.
    pub fn predict(&self, raw: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(raw)?) + 1)
    }

    pub fn predict_batch(&self, raw: &DMatrix<f64>, mode: ExecMode) -> Result<Vec<usize>> {
        Ok(predictions(&self.scores_batch(raw, mode)?))
    }
}

/// Row-wise argmax of a score matrix, 1-based.
pub fn predictions(scores: &DMatrix<f64>) -> Vec<usize> {
    scores
        .row_iter()
        .map(|r| argmax(&r.iter().copied().collect::<Vec<_>>()) + 1)
        .collect()
}

pub const MODEL_FORMAT: &str = "qdc-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    model: ClassifierModel,
}

pub fn model_to_json(model: &ClassifierModel) -> Result<String> {
    serde_json::to_string(&ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    })
    .map_err(|e| Error::Format(e.to_string()))
}

pub fn model_from_json(s: &str) -> Result<ClassifierModel> {
    let f: ModelFile = serde_json::from_str(s).map_err(|e| Error::Format(format!("model file: {e}")))?;
    if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model file {} v{}", f.format, f.version)));
    }
    Ok(f.model)
}

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::CompletenessMode;

    /// States straight from the raw features, no centering.
    fn raw() -> PipelineSpec {
        PipelineSpec {
            center: false,
            ..PipelineSpec::default()
        }
    }

    fn orthogonal_pair() -> Dataset {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 3.0]);
        Dataset::from_zero_based(x, &[0, 0, 1, 1], 2).unwrap()
    }

    fn spec(kind: ClassifierKind) -> ModelSpec {
        ModelSpec::new(kind, raw())
    }

    #[test]
    fn pgm_on_orthogonal_classes_is_projective() {
        let m = fit(&spec(ClassifierKind::PgmC), &orthogonal_pair(), &FitContext::default()).unwrap();
        let Payload::Povm(p) = &m.payload else { panic!() };
        assert_eq!(p.mode(), CompletenessMode::Exact);
        assert!(p.elements()[0].sub(&SymMatrix::from_diagonal(&[1.0, 0.0])).frobenius_norm() < 1e-12);
        let s = m.scores(&[5.0, 0.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1].abs() < 1e-12);
    }

    #[test]
    fn sdp_on_orthogonal_classes_is_perfect() {
        let d = orthogonal_pair();
        let m = fit(&spec(ClassifierKind::SdpC), &d, &FitContext::default()).unwrap();
        assert!((m.diagnostics.unwrap().objective - 1.0).abs() < 1e-5);
        assert_eq!(m.predict_batch(d.features(), ExecMode::Sequential).unwrap(), d.labels());
    }

    #[test]
    fn ridge_separates_1d_classes() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let d = Dataset::from_zero_based(x, &[0, 0, 0, 1, 1, 1], 2).unwrap();
        let mut s = ModelSpec::new(
            ClassifierKind::RidgeC,
            PipelineSpec {
                normalization: Normalization::None,
                ..raw()
            },
        );
        s.params.ridge_lambda = 1e-9;
        let m = fit(&s, &d, &FitContext::default()).unwrap();
        for i in 0..6 {
            let sc = m.scores(&[d.features()[(i, 0)]]).unwrap();
            assert_eq!(sc[1] > sc[0], i >= 3);
        }
    }

    #[test]
    fn qnc_scores_zero_distance_at_pure_centroid() {
        let m = fit(&spec(ClassifierKind::QncC), &orthogonal_pair(), &FitContext::default()).unwrap();
        let s = m.scores(&[0.0, 2.0]).unwrap();
        assert!(s[1].abs() < 1e-12 && s[0] < -0.99);
        assert_eq!(m.predict(&[0.0, 2.0]).unwrap(), 2);
    }

    #[test]
    fn lp_scores_are_dot_products() {
        let m = fit(&spec(ClassifierKind::LpC), &orthogonal_pair(), &FitContext::default()).unwrap();
        let s = m.scores(&[1.0, 0.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-9 && (s[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_and_monotone_maps() {
        assert_eq!(argmax(&[0.2, 0.8]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        let s = [0.1, 0.7, 0.3, 0.7];
        let mapped: Vec<f64> = s.iter().map(|v| 3.0 * v + 2.0).collect();
        assert_eq!(argmax(&s), argmax(&mapped));
    }

    #[test]
    fn helstrom_pair_prediction() {
        let c: f64 = 0.6;
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, c, (1.0 - c * c).sqrt()]);
        let d = Dataset::from_zero_based(x, &[0, 1], 2).unwrap();
        let m = fit(&spec(ClassifierKind::PgmC), &d, &FitContext::default()).unwrap();
        let s = m.scores(&[1.0, 0.0]).unwrap();
        assert_eq!(argmax(&s), 0);
        assert!((s[0] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn invalid_stage_combinations() {
        let mut s = spec(ClassifierKind::RidgeC);
        s.pipeline.state_subspace = Some(2);
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = spec(ClassifierKind::PgmC);
        s.pipeline.normalization = Normalization::None;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = spec(ClassifierKind::LpC);
        s.pipeline.copies = 3;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn chunked_scoring_is_mode_independent() {
        let n = 600;
        let x = DMatrix::from_fn(n, 3, |i, j| ((i * 3 + j) as f64 * 0.71).sin() + 1.5);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let d = Dataset::from_zero_based(x, &labels, 3).unwrap();
        for kind in [ClassifierKind::PgmC, ClassifierKind::KPgmC, ClassifierKind::QncC] {
            let m = fit(&spec(kind), &d.subset(&(0..90).collect::<Vec<_>>()), &FitContext::default()).unwrap();
            let a = m.scores_batch(d.features(), ExecMode::Sequential).unwrap();
            let b = m.scores_batch(d.features(), ExecMode::Parallel).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let d = orthogonal_pair();
        for kind in [
            ClassifierKind::PgmC,
            ClassifierKind::KPgmC,
            ClassifierKind::KPgmInfC,
            ClassifierKind::QncC,
            ClassifierKind::LpC,
        ] {
            let m = fit(&spec(kind), &d, &FitContext::default()).unwrap();
            let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
            let a = m.scores_batch(d.features(), ExecMode::Sequential).unwrap();
            let b = back.scores_batch(d.features(), ExecMode::Sequential).unwrap();
            assert!((a - b).amax() < 1e-12, "{kind:?}");
        }
        assert!(model_from_json(r#"{"format":"x","version":1}"#).is_err());
    }
}
