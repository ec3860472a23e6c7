//! Dense symmetric kernels: eigendecomposition, regularized pseudo-inverse
//! powers, PSD cone projection and trace distance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative eigenvalue cutoff for pseudo-inverses.
pub const DEFAULT_REL_THRESHOLD: f64 = 1e-10;

/// Eigenvalues below `-PSD_TOLERANCE * λ_max` make a matrix non-PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// A real symmetric matrix. Construction symmetrizes explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymMatrixRepr", into = "SymMatrixRepr")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps a square matrix, replacing it by `(M + Mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("empty matrix"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite matrix entry"));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without validation; callers guarantee a square finite input.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// The rank-one matrix `x xᵀ`.
    pub fn outer(x: &[f64]) -> Self {
        let v = DVector::from_column_slice(x);
        SymMatrix(&v * v.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Hilbert-Schmidt product `Tr(A B)`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `xᵀ S x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let mut acc = 0.0;
        for j in 0..n {
            let col = self.0.column(j);
            let mut s = 0.0;
            for i in 0..n {
                s += col[i] * x[i];
            }
            acc += s * x[j];
        }
        acc
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix(&self.0 * factor)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// `A B A` for symmetric `A`, `B`; the result is symmetric.
    pub fn sandwich(&self, inner: &SymMatrix) -> SymMatrix {
        SymMatrix::symmetrized(&self.0 * &inner.0 * &self.0)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        let mut vals = self.0.clone().symmetric_eigenvalues();
        vals.as_mut_slice()
            .sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct SymMatrixRepr {
    dim: usize,
    entries: Vec<f64>,
}

impl From<SymMatrix> for SymMatrixRepr {
    fn from(m: SymMatrix) -> Self {
        let dim = m.dim();
        // Row-major; equal to column-major for a symmetric matrix but spelled out.
        let entries = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| m.0[(i, j)])
            .collect();
        SymMatrixRepr { dim, entries }
    }
}

impl TryFrom<SymMatrixRepr> for SymMatrix {
    type Error = Error;

    fn try_from(r: SymMatrixRepr) -> Result<Self> {
        SymMatrix::from_row_slice(r.dim, &r.entries)
    }
}

/// Spectral decomposition `S = V Λ Vᵀ` with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl EigDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = scale_columns(&self.eigenvectors, self.eigenvalues.as_slice());
        &scaled * self.eigenvectors.transpose()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Indices of eigenvalues strictly above `rel_threshold · λ_max` (and above zero).
    pub fn retained(&self, rel_threshold: f64) -> Vec<usize> {
        let cutoff = rel_threshold * self.max_eigenvalue().max(0.0);
        (0..self.dim())
            .filter(|&i| self.eigenvalues[i] > cutoff && self.eigenvalues[i] > 0.0)
            .collect()
    }

    /// Applies `f` to the retained eigenvalues and zero to the rest.
    pub fn spectral_map(&self, keep: &[usize], f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        if keep.is_empty() {
            return SymMatrix::zeros(n);
        }
        let v = self.eigenvectors.select_columns(keep);
        let w: Vec<f64> = keep.iter().map(|&i| f(self.eigenvalues[i])).collect();
        let scaled = scale_columns(&v, &w);
        SymMatrix::symmetrized(&scaled * v.transpose())
    }

    /// Projector onto the span of the retained eigenvectors.
    pub fn support_projector(&self, rel_threshold: f64) -> SymMatrix {
        self.spectral_map(&self.retained(rel_threshold), |_| 1.0)
    }

    fn check_psd(&self) -> Result<()> {
        let max = self.max_eigenvalue().max(0.0);
        let min = self.eigenvalues[self.dim() - 1];
        if min < -PSD_TOLERANCE * max || (max == 0.0 && min < 0.0) {
            return Err(Error::NotPsd { eigenvalue: min });
        }
        Ok(())
    }

    /// `S^exponent` restricted to the retained eigenspaces.
    pub fn pinv_pow(&self, exponent: f64, rel_threshold: f64) -> Result<SymMatrix> {
        if !(0.0..1.0).contains(&rel_threshold) {
            return Err(Error::invalid(format!(
                "relative threshold {rel_threshold} outside [0, 1)"
            )));
        }
        self.check_psd()?;
        Ok(self.spectral_map(&self.retained(rel_threshold), |l| l.powf(exponent)))
    }
}

pub(crate) fn scale_columns(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= w[j];
    }
    out
}

/// Symmetric eigendecomposition, eigenvalues descending.
///
/// Ties keep the solver's original order. Each eigenvector is oriented so its
/// largest-magnitude coordinate (first one on ties) is positive.
pub fn sym_eig(s: &SymMatrix) -> Result<EigDecomposition> {
    if s.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite matrix entry"));
    }
    let n = s.dim();
    let eig = s.0.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = eig.eigenvectors.select_columns(&order);
    for mut col in eigenvectors.column_iter_mut() {
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `S^exponent` on the eigenspaces with `λ > rel_threshold · λ_max`, zero elsewhere.
///
/// Eigenvalues down to `-1e-10 · λ_max` are treated as zero; anything more
/// negative is [`Error::NotPsd`]. A matrix with nothing retained maps to zero.
pub fn pinv_pow(s: &SymMatrix, exponent: f64, rel_threshold: f64) -> Result<SymMatrix> {
    sym_eig(s)?.pinv_pow(exponent, rel_threshold)
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
pub fn psd_project(s: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    let keep: Vec<usize> = (0..eig.dim()).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    Ok(eig.spectral_map(&keep, |l| l))
}

/// `½ Tr|A − B|`, i.e. half the sum of absolute eigenvalues of the difference.
pub fn trace_distance(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let diff = a.sub(b);
    if diff.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite matrix entry"));
    }
    Ok(0.5 * diff.0.symmetric_eigenvalues().iter().map(|l| l.abs()).sum::<f64>())
}
