//! Density matrices, POVMs, class ensembles and the pretty good measurement.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};
use crate::preprocess::StateVector;

/// Element eigenvalues may dip this far below zero.
pub const POVM_PSD_TOLERANCE: f64 = 1e-8;
/// Frobenius tolerance on `Σ E_k` against its target.
pub const POVM_COMPLETENESS_TOLERANCE: f64 = 1e-6;
/// Born scores above this negative value are clipped to zero.
pub const SCORE_CLIP: f64 = -1e-9;

/// Symmetric PSD matrix of unit trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymMatrix", into = "SymMatrix")]
pub struct DensityMatrix(SymMatrix);

impl DensityMatrix {
    pub fn new(m: SymMatrix) -> Result<Self> {
        let tr = m.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("density matrix has trace {tr}")));
        }
        let min = m.min_eigenvalue();
        if min < -1e-10 {
            return Err(Error::NotPsd { eigenvalue: min });
        }
        Ok(DensityMatrix(m))
    }

    /// Trusted constructor for matrices that are PSD with unit trace by construction.
    pub(crate) fn from_trusted(m: SymMatrix) -> Self {
        DensityMatrix(m)
    }

    pub fn from_pure(x: &StateVector) -> Self {
        DensityMatrix(SymMatrix::outer(x.as_slice()))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.0
    }
}

impl TryFrom<SymMatrix> for DensityMatrix {
    type Error = Error;
    fn try_from(m: SymMatrix) -> Result<Self> {
        DensityMatrix::new(m)
    }
}

impl From<DensityMatrix> for SymMatrix {
    fn from(d: DensityMatrix) -> Self {
        d.0
    }
}

/// What `Σ E_k` is required to equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletenessMode {
    /// `Σ E_k = I`.
    Exact,
    /// `Σ E_k ≤ I`; the remainder is an inconclusive outcome.
    Subnormalized,
    /// `Σ E_k = Π_S` for a stored projector.
    SubspaceExact,
}

/// Result of checking a POVM's invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PovmCheck {
    pub min_eigenvalue: f64,
    /// Frobenius distance to the target, or the excess of `λ_max(Σ E_k)` over 1
    /// for subnormalized POVMs.
    pub completeness_residual: f64,
}

/// An ordered list of `K` measurement operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<SymMatrix>,
    mode: CompletenessMode,
    support: Option<SymMatrix>,
}

impl Povm {
    /// Validates and wraps. `support` is required for [`CompletenessMode::SubspaceExact`].
    pub fn new(
        elements: Vec<SymMatrix>,
        mode: CompletenessMode,
        support: Option<SymMatrix>,
    ) -> Result<Self> {
        let povm = Povm::unchecked(elements, mode, support)?;
        let check = povm.check();
        if check.min_eigenvalue < -POVM_PSD_TOLERANCE {
            return Err(Error::NotPsd {
                eigenvalue: check.min_eigenvalue,
            });
        }
        let limit = match mode {
            CompletenessMode::Subnormalized => POVM_PSD_TOLERANCE,
            _ => POVM_COMPLETENESS_TOLERANCE,
        };
        if check.completeness_residual > limit {
            return Err(Error::invalid(format!(
                "POVM completeness residual {:e} exceeds {limit:e} ({mode:?})",
                check.completeness_residual
            )));
        }
        Ok(povm)
    }

    /// Shape checks only; the caller is responsible for the operator invariants.
    pub(crate) fn unchecked(
        elements: Vec<SymMatrix>,
        mode: CompletenessMode,
        support: Option<SymMatrix>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("POVM needs at least one element"));
        }
        let dim = elements[0].dim();
        if elements.iter().any(|e| e.dim() != dim) {
            return Err(Error::invalid("POVM elements differ in dimension"));
        }
        match (&support, mode) {
            (None, CompletenessMode::SubspaceExact) => {
                return Err(Error::invalid("subspace-exact POVM needs a support projector"))
            }
            (Some(p), _) if p.dim() != dim => {
                return Err(Error::invalid("support projector dimension mismatch"))
            }
            _ => {}
        }
        let support = if mode == CompletenessMode::SubspaceExact {
            support
        } else {
            None
        };
        Ok(Povm {
            elements,
            mode,
            support,
        })
    }

    pub fn k(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn elements(&self) -> &[SymMatrix] {
        &self.elements
    }

    pub fn mode(&self) -> CompletenessMode {
        self.mode
    }

    pub fn support(&self) -> Option<&SymMatrix> {
        self.support.as_ref()
    }

    pub fn element_sum(&self) -> SymMatrix {
        let mut sum = SymMatrix::zeros(self.dim()).into_matrix();
        for e in &self.elements {
            sum += e.matrix();
        }
        SymMatrix::symmetrized(sum)
    }

    pub fn check(&self) -> PovmCheck {
        let min_eigenvalue = self
            .elements
            .iter()
            .map(|e| e.min_eigenvalue())
            .fold(f64::INFINITY, f64::min);
        let sum = self.element_sum();
        let completeness_residual = match self.mode {
            CompletenessMode::Exact => sum.sub(&SymMatrix::identity(self.dim())).frobenius_norm(),
            CompletenessMode::Subnormalized => (sum.max_eigenvalue() - 1.0).max(0.0),
            CompletenessMode::SubspaceExact => sum
                .sub(self.support.as_ref().expect("validated support"))
                .frobenius_norm(),
        };
        PovmCheck {
            min_eigenvalue,
            completeness_residual,
        }
    }
}

/// Per-class centroid states with priors `p_k = N_k / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEnsemble {
    centroids: Vec<DensityMatrix>,
    priors: Vec<f64>,
}

impl ClassEnsemble {
    pub fn new(centroids: Vec<DensityMatrix>, priors: Vec<f64>) -> Result<Self> {
        if centroids.len() < 2 || centroids.len() != priors.len() {
            return Err(Error::invalid(
                "ensemble needs K ≥ 2 centroids and one prior per centroid",
            ));
        }
        if priors.iter().any(|&p| !(p >= 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("priors must be nonnegative and sum to 1"));
        }
        let dim = centroids[0].dim();
        if centroids.iter().any(|c| c.dim() != dim) {
            return Err(Error::invalid("centroids differ in dimension"));
        }
        Ok(ClassEnsemble { centroids, priors })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].dim()
    }

    pub fn centroids(&self) -> &[DensityMatrix] {
        &self.centroids
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// `ρ = Σ p_k ρ̄_k`.
    pub fn average_state(&self) -> SymMatrix {
        let mut acc = DMatrix::zeros(self.dim(), self.dim());
        for (c, &p) in self.centroids.iter().zip(&self.priors) {
            acc += c.matrix().matrix() * p;
        }
        SymMatrix::symmetrized(acc)
    }
}

fn counts_for(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l == 0 || l > k {
            return Err(Error::invalid(format!("label {l} outside 1..={k}")));
        }
        counts[l - 1] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateClass { class: c + 1 });
    }
    Ok(counts)
}

/// `ρ̄_k = (1/N_k) Σ_{i∈C_k} ρ_i`, labels in `1..=K`.
pub fn class_centroids(states: &[DensityMatrix], labels: &[usize], k: usize) -> Result<ClassEnsemble> {
    if states.len() != labels.len() || states.is_empty() {
        return Err(Error::invalid("states and labels must be nonempty and equally long"));
    }
    let counts = counts_for(labels, k)?;
    let dim = states[0].dim();
    let mut sums = vec![DMatrix::zeros(dim, dim); k];
    for (s, &l) in states.iter().zip(labels) {
        if s.dim() != dim {
            return Err(Error::invalid("states differ in dimension"));
        }
        sums[l - 1] += s.matrix().matrix();
    }
    finish_ensemble(sums, &counts, labels.len())
}

/// Centroids of pure states given as rows of `vectors`: `ρ̄_k = X_kᵀ X_k / N_k`.
pub fn class_centroids_from_vectors(vectors: &DMatrix<f64>, labels: &[usize], k: usize) -> Result<ClassEnsemble> {
    if vectors.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::invalid("vectors and labels must be nonempty and equally long"));
    }
    let counts = counts_for(labels, k)?;
    let mut sums = Vec::with_capacity(k);
    for class in 1..=k {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let xk = vectors.select_rows(&rows);
        sums.push(xk.tr_mul(&xk));
    }
    finish_ensemble(sums, &counts, labels.len())
}

fn finish_ensemble(sums: Vec<DMatrix<f64>>, counts: &[usize], n: usize) -> Result<ClassEnsemble> {
    let centroids = sums
        .into_iter()
        .zip(counts)
        .map(|(s, &c)| {
            let mut m = SymMatrix::symmetrized(s / c as f64);
            // Pin the trace at exactly 1 against accumulated rounding.
            let tr = m.trace();
            m = m.scale(1.0 / tr);
            DensityMatrix::from_trusted(m)
        })
        .collect();
    let priors = counts.iter().map(|&c| c as f64 / n as f64).collect();
    ClassEnsemble::new(centroids, priors)
}

fn clip_scores(scores: &mut [f64]) {
    for s in scores.iter_mut() {
        if *s < 0.0 && *s >= SCORE_CLIP {
            *s = 0.0;
        }
    }
}

/// `xᵀ E_k x` for every outcome, noise-level negatives clipped to zero.
pub fn born_scores(povm: &Povm, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != povm.dim() {
        return Err(Error::invalid(format!(
            "state has dimension {}, POVM acts on {}",
            x.len(),
            povm.dim()
        )));
    }
    let mut s: Vec<f64> = povm.elements.iter().map(|e| e.quad_form(x)).collect();
    clip_scores(&mut s);
    Ok(s)
}

/// `Tr(E_k ρ)` for a mixed input.
pub fn born_scores_mixed(povm: &Povm, rho: &DensityMatrix) -> Result<Vec<f64>> {
    if rho.dim() != povm.dim() {
        return Err(Error::invalid("state and POVM dimensions differ"));
    }
    let mut s: Vec<f64> = povm.elements.iter().map(|e| e.dot(rho.matrix())).collect();
    clip_scores(&mut s);
    Ok(s)
}

/// Born scores for every row of `states` (`N × K` result).
pub fn born_scores_batch(povm: &Povm, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if states.ncols() != povm.dim() {
        return Err(Error::invalid("state and POVM dimensions differ"));
    }
    let n = states.nrows();
    let mut out = DMatrix::zeros(n, povm.k());
    for (k, e) in povm.elements.iter().enumerate() {
        let xe = states * e.matrix();
        for i in 0..n {
            let v = xe.row(i).dot(&states.row(i));
            out[(i, k)] = if (SCORE_CLIP..0.0).contains(&v) { 0.0 } else { v };
        }
    }
    Ok(out)
}

/// Pretty good measurement `E_k = p_k ρ^{-1/2} ρ̄_k ρ^{-1/2}` with
/// `ρ = Σ p_k ρ̄_k` and a thresholded pseudo-inverse square root.
///
/// A rank-deficient `ρ` (at `rel_threshold`) yields a
/// [`CompletenessMode::SubspaceExact`] POVM supported on the span of `ρ`.
pub fn pgm(ensemble: &ClassEnsemble, rel_threshold: f64) -> Result<Povm> {
    let rho = ensemble.average_state();
    let eig = sym_eig(&rho)?;
    let inv_sqrt = eig.pinv_pow(-0.5, rel_threshold)?;
    let retained = eig.retained(rel_threshold).len();
    let elements = ensemble
        .centroids()
        .iter()
        .zip(ensemble.priors())
        .map(|(c, &p)| inv_sqrt.sandwich(c.matrix()).scale(p))
        .collect();
    if retained == ensemble.dim() {
        Povm::unchecked(elements, CompletenessMode::Exact, None)
    } else {
        let support = eig.support_projector(rel_threshold);
        Povm::unchecked(elements, CompletenessMode::SubspaceExact, Some(support))
    }
}

/// `Σ_k p_k Tr(E_k ρ̄_k)`.
pub fn success_probability(povm: &Povm, ensemble: &ClassEnsemble) -> Result<f64> {
    if povm.dim() != ensemble.dim() || povm.k() != ensemble.k() {
        return Err(Error::invalid("POVM and ensemble shapes differ"));
    }
    Ok(povm
        .elements
        .iter()
        .zip(ensemble.centroids())
        .zip(ensemble.priors())
        .map(|((e, c), &p)| p * e.dot(c.matrix()))
        .sum())
}

/// On-disk POVM container.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmFile {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub k: usize,
    pub completeness_mode: CompletenessMode,
    /// One row-major `dim × dim` array per element.
    pub elements: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_projector: Option<Vec<f64>>,
}

pub const POVM_FORMAT: &str = "qdc-povm";
pub const POVM_VERSION: u32 = 1;

fn row_major(m: &SymMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(m.matrix()[(i, j)]);
        }
    }
    out
}

impl From<&Povm> for PovmFile {
    fn from(p: &Povm) -> Self {
        PovmFile {
            format: POVM_FORMAT.into(),
            version: POVM_VERSION,
            dim: p.dim(),
            k: p.k(),
            completeness_mode: p.mode,
            elements: p.elements.iter().map(row_major).collect(),
            support_projector: p.support.as_ref().map(row_major),
        }
    }
}

impl TryFrom<PovmFile> for Povm {
    type Error = Error;

    fn try_from(f: PovmFile) -> Result<Self> {
        if f.format != POVM_FORMAT || f.version != POVM_VERSION {
            return Err(Error::Format(format!(
                "unsupported POVM container {} v{}",
                f.format, f.version
            )));
        }
        if f.elements.len() != f.k {
            return Err(Error::Format(format!(
                "POVM header says {} elements, found {}",
                f.k,
                f.elements.len()
            )));
        }
        let elements = f
            .elements
            .iter()
            .map(|e| SymMatrix::from_row_slice(f.dim, e))
            .collect::<Result<Vec<_>>>()?;
        let support = f
            .support_projector
            .as_ref()
            .map(|s| SymMatrix::from_row_slice(f.dim, s))
            .transpose()?;
        Povm::new(elements, f.completeness_mode, support)
    }
}

impl Serialize for Povm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PovmFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = PovmFile::deserialize(d)?;
        Povm::try_from(file).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::l2_normalize;
    use proptest::prelude::*;

    fn diag(d: &[f64]) -> DensityMatrix {
        DensityMatrix::new(SymMatrix::from_diagonal(d)).unwrap()
    }

    fn computational_povm() -> Povm {
        Povm::new(
            vec![SymMatrix::from_diagonal(&[1.0, 0.0]), SymMatrix::from_diagonal(&[0.0, 1.0])],
            CompletenessMode::Exact,
            None,
        )
        .unwrap()
    }

    /// Two unit vectors in the plane with overlap `c`.
    fn pair(c: f64) -> (StateVector, StateVector) {
        let x = StateVector::new(vec![1.0, 0.0]).unwrap();
        let y = StateVector::new(vec![c, (1.0 - c * c).sqrt()]).unwrap();
        (x, y)
    }

    /// Best success probability over projective measurements {P_θ, I − P_θ} in
    /// the plane, P_θ the projector on (cos θ, sin θ); grid step 1e-5 rad.
    fn rotation_grid_oracle(x: &StateVector, y: &StateVector) -> f64 {
        let steps = (std::f64::consts::PI / 1e-5) as usize;
        let mut best = 0.0f64;
        for s in 0..=steps {
            let t = s as f64 * 1e-5;
            let (c, si) = (t.cos(), t.sin());
            let px = (c * x.as_slice()[0] + si * x.as_slice()[1]).powi(2);
            let py = (c * y.as_slice()[0] + si * y.as_slice()[1]).powi(2);
            best = best.max(0.5 * px + 0.5 * (1.0 - py));
        }
        best
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(SymMatrix::from_diagonal(&[0.5, 0.4])).is_err());
        assert!(matches!(
            DensityMatrix::new(SymMatrix::from_diagonal(&[1.5, -0.5])),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn centroid_examples() {
        let e = class_centroids(
            &[diag(&[1.0, 0.0]), diag(&[1.0, 0.0]), diag(&[0.0, 1.0])],
            &[1, 1, 2],
            2,
        )
        .unwrap();
        assert_eq!(e.centroids()[0], diag(&[1.0, 0.0]));
        assert!((e.priors()[0] - 2.0 / 3.0).abs() < 1e-15);

        let e = class_centroids(&[diag(&[1.0, 0.0]), diag(&[0.0, 1.0])], &[1, 2], 2).unwrap();
        assert_eq!(e.priors(), &[0.5, 0.5]);

        let e = class_centroids(
            &[diag(&[1.0, 0.0]), diag(&[0.0, 1.0]), diag(&[1.0, 0.0])],
            &[1, 1, 2],
            2,
        )
        .unwrap();
        assert_eq!(e.centroids()[0], diag(&[0.5, 0.5]));

        assert!(matches!(
            class_centroids(&[diag(&[1.0, 0.0])], &[1], 2),
            Err(Error::DegenerateClass { class: 2 })
        ));
    }

    #[test]
    fn centroids_from_vectors_match() {
        let xs = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.6, 0.8, 0.0, 1.0]);
        let states: Vec<DensityMatrix> = (0..3)
            .map(|i| DensityMatrix::from_pure(&StateVector::new(xs.row(i).iter().copied().collect()).unwrap()))
            .collect();
        let a = class_centroids(&states, &[1, 1, 2], 2).unwrap();
        let b = class_centroids_from_vectors(&xs, &[1, 1, 2], 2).unwrap();
        for (ca, cb) in a.centroids().iter().zip(b.centroids()) {
            assert!(ca.matrix().sub(cb.matrix()).frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn born_rule_examples() {
        let p = computational_povm();
        assert_eq!(born_scores(&p, &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = born_scores(&p, &[h, h]).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
        let s = born_scores_mixed(&p, &diag(&[0.3, 0.7])).unwrap();
        assert!((s[0] - 0.3).abs() < 1e-15 && (s[1] - 0.7).abs() < 1e-15);
        assert!(born_scores(&p, &[1.0]).is_err());
    }

    #[test]
    fn pgm_orthogonal_states_is_projective() {
        let e = class_centroids(&[diag(&[1.0, 0.0]), diag(&[0.0, 1.0])], &[1, 2], 2).unwrap();
        let povm = pgm(&e, 1e-10).unwrap();
        assert_eq!(povm.mode(), CompletenessMode::Exact);
        assert!(povm.elements()[0].sub(&SymMatrix::from_diagonal(&[1.0, 0.0])).frobenius_norm() < 1e-12);
        assert!((success_probability(&povm, &e).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pgm_identical_states_splits_support() {
        let rho = diag(&[1.0, 0.0]);
        let e = ClassEnsemble::new(vec![rho.clone(), rho], vec![0.3, 0.7]).unwrap();
        let povm = pgm(&e, 1e-10).unwrap();
        assert_eq!(povm.mode(), CompletenessMode::SubspaceExact);
        let support = SymMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(povm.elements()[0].sub(&support.scale(0.3)).frobenius_norm() < 1e-12);
        assert!(povm.elements()[1].sub(&support.scale(0.7)).frobenius_norm() < 1e-12);
        assert!(povm.check().completeness_residual < 1e-12);
    }

    #[test]
    fn helstrom_oracle_and_pgm_agree() {
        for c in [0.0, 0.2, 0.4, 0.6, 0.8] {
            let (x, y) = pair(c);
            let closed = 0.5 * (1.0 + (1.0 - c * c).sqrt());
            let oracle = rotation_grid_oracle(&x, &y);
            assert!((oracle - closed).abs() < 1e-4, "oracle {oracle} vs {closed}");
            let e = class_centroids(&[DensityMatrix::from_pure(&x), DensityMatrix::from_pure(&y)], &[1, 2], 2).unwrap();
            let povm = pgm(&e, 1e-10).unwrap();
            assert!((success_probability(&povm, &e).unwrap() - closed).abs() < 1e-6);
        }
        assert!((0.5f64 * (1.0 + (1.0f64 - 0.36).sqrt()) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn uniform_guessing() {
        let e = class_centroids(&[diag(&[1.0, 0.0]), diag(&[0.0, 1.0]), diag(&[0.5, 0.5])], &[1, 2, 3], 3).unwrap();
        let third = SymMatrix::identity(2).scale(1.0 / 3.0);
        let povm = Povm::new(vec![third.clone(), third.clone(), third], CompletenessMode::Exact, None).unwrap();
        assert!((success_probability(&povm, &e).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn povm_validation_rejects_bad_sets() {
        let half = SymMatrix::identity(2).scale(0.5);
        assert!(Povm::new(vec![half.clone()], CompletenessMode::Exact, None).is_err());
        assert!(Povm::new(vec![half.clone()], CompletenessMode::Subnormalized, None).is_ok());
        assert!(Povm::new(vec![half.clone(), half.clone(), half.clone()], CompletenessMode::Subnormalized, None).is_err());
        assert!(Povm::new(vec![half], CompletenessMode::SubspaceExact, None).is_err());
        let neg = SymMatrix::from_diagonal(&[1.5, -0.5]);
        assert!(matches!(
            Povm::new(vec![neg, SymMatrix::from_diagonal(&[-0.5, 1.5])], CompletenessMode::Exact, None),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn povm_json_round_trip() {
        let p = computational_povm();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"completeness_mode\":\"exact\""));
        let back: Povm = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let bad = json.replace("qdc-povm", "other");
        assert!(serde_json::from_str::<Povm>(&bad).is_err());
    }

    fn unit_strategy(q: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, q).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn pgm_satisfies_declared_mode(
            vs in prop::collection::vec(unit_strategy(4), 3..12),
        ) {
            let xs: Vec<StateVector> = vs.iter().map(|v| l2_normalize(v).unwrap()).collect();
            let states: Vec<DensityMatrix> = xs.iter().map(DensityMatrix::from_pure).collect();
            let labels: Vec<usize> = (0..states.len()).map(|i| i % 3 + 1).collect();
            let e = class_centroids(&states, &labels, 3).unwrap();
            let povm = pgm(&e, 1e-10).unwrap();
            let check = povm.check();
            prop_assert!(check.min_eigenvalue >= -POVM_PSD_TOLERANCE);
            prop_assert!(check.completeness_residual <= POVM_COMPLETENESS_TOLERANCE);
            for x in &xs {
                let s: f64 = born_scores(&povm, x.as_slice()).unwrap().iter().sum();
                prop_assert!(s <= 1.0 + 1e-6);
            }
        }

        #[test]
        fn exact_povm_scores_sum_to_one(v in unit_strategy(3)) {
            let e = class_centroids(
                &[diag(&[0.6, 0.3, 0.1]), diag(&[0.1, 0.2, 0.7])], &[1, 2], 2).unwrap();
            let povm = pgm(&e, 1e-10).unwrap();
            prop_assert_eq!(povm.mode(), CompletenessMode::Exact);
            let x = l2_normalize(&v).unwrap();
            let s: f64 = born_scores(&povm, x.as_slice()).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
        }
    }
}
