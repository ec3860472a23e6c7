//! One-vs-all ridge regression and the quadratic feature map.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{scale_columns, sym_eig, EigDecomposition, SymMatrix};
use crate::preprocess::{column_means, poly_expand, shift_columns};

/// Eigenvalues of `XᵀX + λI` below this fraction of the largest are dropped.
const RIDGE_REL_THRESHOLD: f64 = 1e-12;

/// Per-class linear scores `β_kᵀx + b_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    /// `p × K`, one column per class.
    pub weights: DMatrix<f64>,
    pub intercepts: Vec<f64>,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.weights.nrows() {
            return Err(Error::invalid(format!(
                "ridge model expects {} features, got {}",
                self.weights.nrows(),
                x.len()
            )));
        }
        let xv = DVector::from_column_slice(x);
        Ok((0..self.weights.ncols())
            .map(|k| self.weights.column(k).dot(&xv) + self.intercepts[k])
            .collect())
    }

    /// `N × K` scores for the rows of `x`.
    pub fn scores_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.weights.nrows() {
            return Err(Error::invalid("ridge feature dimension mismatch"));
        }
        let mut s = x * &self.weights;
        for mut row in s.row_iter_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v += self.intercepts[k];
            }
        }
        Ok(s)
    }
}

fn one_hot(labels: &[usize], k: usize) -> Result<DMatrix<f64>> {
    let mut y = DMatrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l > k {
            return Err(Error::invalid(format!("label {l} outside 1..={k}")));
        }
        y[(i, l - 1)] = 1.0;
    }
    Ok(y)
}

/// Factorization shared by every `λ` on one training set.
pub struct RidgePath {
    eig: EigDecomposition,
    /// `Vᵀ Xcᵀ Yc`.
    projected: DMatrix<f64>,
    x_mean: Vec<f64>,
    y_mean: Vec<f64>,
}

impl RidgePath {
    pub fn new(features: &DMatrix<f64>, labels: &[usize], k: usize) -> Result<Self> {
        if features.nrows() != labels.len() || labels.is_empty() {
            return Err(Error::invalid("features and labels must be nonempty and equally long"));
        }
        let y = one_hot(labels, k)?;
        let x_mean = column_means(features);
        let y_mean = column_means(&y);
        let xc = shift_columns(features, &x_mean);
        let yc = shift_columns(&y, &y_mean);
        let eig = sym_eig(&SymMatrix::symmetrized(xc.tr_mul(&xc)))?;
        let projected = eig.eigenvectors.tr_mul(&xc.tr_mul(&yc));
        Ok(RidgePath {
            eig,
            projected,
            x_mean,
            y_mean,
        })
    }

    pub fn fit(&self, lambda: f64) -> Result<RidgeModel> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid(format!("ridge penalty must be ≥ 0, got {lambda}")));
        }
        let shifted: Vec<f64> = self.eig.eigenvalues.iter().map(|&s| s.max(0.0) + lambda).collect();
        let top = shifted.iter().cloned().fold(0.0, f64::max);
        let inv: Vec<f64> = shifted
            .iter()
            .map(|&s| if s > RIDGE_REL_THRESHOLD * top && s > 0.0 { 1.0 / s } else { 0.0 })
            .collect();
        let weights = scale_columns(&self.eig.eigenvectors, &inv) * &self.projected;
        let intercepts = (0..weights.ncols())
            .map(|k| {
                self.y_mean[k]
                    - self
                        .x_mean
                        .iter()
                        .enumerate()
                        .map(|(i, m)| m * weights[(i, k)])
                        .sum::<f64>()
            })
            .collect();
        Ok(RidgeModel {
            weights,
            intercepts,
            lambda,
        })
    }
}

/// Minimizes `‖Y − Xβ − 1bᵀ‖² + λ‖β‖²` with one-hot `Y`; the intercept is not penalized.
/// A singular system at `λ = 0` falls back to the pseudo-inverse.
pub fn ridge_fit(features: &DMatrix<f64>, labels: &[usize], k: usize, lambda: f64) -> Result<RidgeModel> {
    RidgePath::new(features, labels, k)?.fit(lambda)
}

/// `(u, u ⊗ u)` with duplicate products removed.
pub fn quad_feature_map(u: &[f64]) -> Vec<f64> {
    poly_expand(u)
}

/// Applies [`quad_feature_map`] to every row.
pub fn quad_feature_map_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let out_dim = p + p * (p + 1) / 2;
    let mut out = DMatrix::zeros(x.nrows(), out_dim);
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        for (j, v) in quad_feature_map(&row).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}
