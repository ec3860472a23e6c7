//! Pretty good measurement through the Gram matrix of the training states.
//!
//! With `G_ij = (x_iᵀx_j)^m` and `w_j = (x_jᵀz)^m`, the outcome probabilities
//! are `Pr(k|z) = ‖Π_k G^{-1/2} w‖²`, so nothing ever lives in the
//! `q^m`-dimensional tensor space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, EigDecomposition, SymMatrix};
use crate::quantum::SCORE_CLIP;

/// Scores below this are indistinguishable from zero in double precision.
pub const UNDERFLOW_LEVEL: f64 = 1e-280;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPgmModel {
    /// `N × q`, unit rows.
    train: DMatrix<f64>,
    /// 1-based class of each training row.
    labels: Vec<usize>,
    k: usize,
    copies: usize,
    rel_threshold: f64,
    g_inv_sqrt: SymMatrix,
}

fn elementwise_pow(m: &mut DMatrix<f64>, copies: usize) {
    if copies == 1 {
        return;
    }
    let e = i32::try_from(copies).unwrap_or(i32::MAX);
    m.apply(|v| *v = v.powi(e));
}

fn validate(train: &DMatrix<f64>, labels: &[usize], k: usize, copies: usize) -> Result<()> {
    if train.nrows() == 0 || train.nrows() != labels.len() {
        return Err(Error::invalid("training vectors and labels must be nonempty and equally long"));
    }
    if copies == 0 {
        return Err(Error::invalid("copy count must be at least 1"));
    }
    if let Some(&l) = labels.iter().find(|&&l| l == 0 || l > k) {
        return Err(Error::invalid(format!("label {l} outside 1..={k}")));
    }
    for i in 0..train.nrows() {
        let n = train.row(i).norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("training vector {i} has norm {n}")));
        }
    }
    Ok(())
}

/// `(X Xᵀ)^{∘m}`.
pub fn gram_power(train: &DMatrix<f64>, copies: usize) -> SymMatrix {
    let mut g = train * train.transpose();
    elementwise_pow(&mut g, copies);
    SymMatrix::symmetrized(g)
}

/// One Gram eigendecomposition, reusable across pseudo-inverse thresholds.
pub struct KernelGram {
    train: DMatrix<f64>,
    labels: Vec<usize>,
    k: usize,
    copies: usize,
    eig: EigDecomposition,
}

impl KernelGram {
    pub fn new(train: DMatrix<f64>, labels: Vec<usize>, k: usize, copies: usize) -> Result<Self> {
        validate(&train, &labels, k, copies)?;
        let eig = sym_eig(&gram_power(&train, copies))?;
        Ok(KernelGram {
            train,
            labels,
            k,
            copies,
            eig,
        })
    }

    pub fn model(&self, rel_threshold: f64) -> Result<KernelPgmModel> {
        Ok(KernelPgmModel {
            train: self.train.clone(),
            labels: self.labels.clone(),
            k: self.k,
            copies: self.copies,
            rel_threshold,
            g_inv_sqrt: self.eig.pinv_pow(-0.5, rel_threshold)?,
        })
    }
}

/// Fits on unit training vectors (rows of `train`) with 1-based labels.
pub fn kpgm_fit(
    train: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    copies: usize,
    rel_threshold: f64,
) -> Result<KernelPgmModel> {
    KernelGram::new(train.clone(), labels.to_vec(), k, copies)?.model(rel_threshold)
}

impl KernelPgmModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn rel_threshold(&self) -> f64 {
        self.rel_threshold
    }

    pub fn input_dim(&self) -> usize {
        self.train.ncols()
    }

    pub fn g_inv_sqrt(&self) -> &SymMatrix {
        &self.g_inv_sqrt
    }

    /// `Pr(k|z)` for every class; `z` must be a unit vector.
    pub fn scores(&self, z: &[f64]) -> Result<Vec<f64>> {
        let zm = DMatrix::from_row_slice(1, z.len(), z);
        let s = self.scores_batch(&zm)?;
        Ok(s.row(0).iter().copied().collect())
    }

    /// `N_test × K` scores for the rows of `z`.
    pub fn scores_batch(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "kernel model expects dimension {}, got {}",
                self.input_dim(),
                z.ncols()
            )));
        }
        let mut w = z * self.train.transpose();
        elementwise_pow(&mut w, self.copies);
        let v = w * self.g_inv_sqrt.matrix();
        let mut out = DMatrix::zeros(z.nrows(), self.k);
        for (j, &l) in self.labels.iter().enumerate() {
            for i in 0..z.nrows() {
                out[(i, l - 1)] += v[(i, j)] * v[(i, j)];
            }
        }
        out.apply(|s| {
            if *s < 0.0 && *s >= SCORE_CLIP {
                *s = 0.0
            }
        });
        Ok(out)
    }
}

/// Number of rows whose scores all fall below [`UNDERFLOW_LEVEL`].
pub fn underflow_rows(scores: &DMatrix<f64>) -> usize {
    scores
        .row_iter()
        .filter(|r| r.iter().all(|&s| s.abs() < UNDERFLOW_LEVEL))
        .count()
}

/// Label of the training vector with the largest `|x_iᵀz|`; ties go to the
/// smallest training index.
pub fn kpgm_infinite_predict(train: &DMatrix<f64>, labels: &[usize], z: &[f64]) -> Result<usize> {
    let zm = DMatrix::from_row_slice(1, z.len(), z);
    Ok(kpgm_infinite_predict_batch(train, labels, &zm)?[0])
}

pub fn kpgm_infinite_predict_batch(train: &DMatrix<f64>, labels: &[usize], z: &DMatrix<f64>) -> Result<Vec<usize>> {
    if train.nrows() == 0 || train.nrows() != labels.len() {
        return Err(Error::invalid("training vectors and labels must be nonempty and equally long"));
    }
    if z.ncols() != train.ncols() {
        return Err(Error::invalid("dimension mismatch between training and query vectors"));
    }
    let w = z * train.transpose();
    Ok((0..z.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_v = w[(i, 0)].abs();
            for j in 1..w.ncols() {
                let v = w[(i, j)].abs();
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            labels[best]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng_from_seed;
    use crate::preprocess::{l2_normalize, tensor_power};
    use crate::quantum::{born_scores, class_centroids_from_vectors, pgm};
    use rand::Rng;
    use std::time::Instant;

    fn random_unit_rows(n: usize, q: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        let mut rows = Vec::with_capacity(n * q);
        for _ in 0..n {
            let v: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
            rows.extend(l2_normalize(&v).unwrap().into_vec());
        }
        DMatrix::from_row_slice(n, q, &rows)
    }

    fn tensor_rows(x: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = (0..x.nrows())
            .map(|i| {
                let s = l2_normalize(&x.row(i).iter().copied().collect::<Vec<_>>()).unwrap();
                tensor_power(&s, m).unwrap().into_vec()
            })
            .collect();
        DMatrix::from_fn(x.nrows(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn orthonormal_training_set() {
        let x = DMatrix::identity(3, 3);
        let model = kpgm_fit(&x, &[1, 2, 2], 2, 1, 1e-10).unwrap();
        assert!(model.g_inv_sqrt().sub(&SymMatrix::identity(3)).frobenius_norm() < 1e-12);
        let s = model.scores(&[0.0, 1.0, 0.0]).unwrap();
        assert!((s[0]).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_query_scores_zero() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let model = kpgm_fit(&x, &[1, 2], 2, 1, 1e-10).unwrap();
        assert_eq!(model.scores(&[0.0, 0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn duplicated_vector_is_handled() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let model = kpgm_fit(&x, &[1, 1, 2], 2, 1, 1e-10).unwrap();
        let s = model.scores(&[1.0, 0.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-10 && s[1].abs() < 1e-10);
    }

    #[test]
    fn two_copies_match_explicit_tensors() {
        let x = random_unit_rows(10, 3, 3);
        let labels: Vec<usize> = (0..10).map(|i| i % 3 + 1).collect();
        let kernel = kpgm_fit(&x, &labels, 3, 2, 1e-10).unwrap();
        let xt = tensor_rows(&x, 2);
        let explicit = kpgm_fit(&xt, &labels, 3, 1, 1e-10).unwrap();
        assert!(kernel.g_inv_sqrt().sub(explicit.g_inv_sqrt()).frobenius_norm() < 1e-8);
    }

    #[test]
    fn kernel_matches_direct_pgm() {
        let (q, n, k) = (6, 12, 3);
        let x = random_unit_rows(n, q, 21);
        let labels: Vec<usize> = (0..n).map(|i| i % k + 1).collect();
        let model = kpgm_fit(&x, &labels, k, 1, 1e-10).unwrap();
        let povm = pgm(&class_centroids_from_vectors(&x, &labels, k).unwrap(), 1e-10).unwrap();
        let z = random_unit_rows(20, q, 22);
        for i in 0..z.nrows() {
            let zi: Vec<f64> = z.row(i).iter().copied().collect();
            let a = model.scores(&zi).unwrap();
            let b = born_scores(&povm, &zi).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-8, "{u} vs {v}");
            }
        }
    }

    /// Class scores at `m` copies with every `w_j^m` rescaled by the largest
    /// `|w|^m`, computed through logarithms so nothing underflows.
    fn log_domain_argmax(x: &DMatrix<f64>, labels: &[usize], k: usize, m: usize, z: &[f64]) -> usize {
        let g = gram_power(x, m);
        let gis = sym_eig(&g).unwrap().pinv_pow(-0.5, 1e-10).unwrap();
        let logs: Vec<(f64, f64)> = (0..x.nrows())
            .map(|j| {
                let d: f64 = x.row(j).iter().zip(z).map(|(a, b)| a * b).sum();
                let sign = if d < 0.0 && m % 2 == 1 { -1.0 } else { 1.0 };
                (sign, m as f64 * d.abs().ln())
            })
            .collect();
        let top = logs.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|(s, l)| s * (l - top).exp()).collect();
        let mut scores = vec![0.0; k];
        for i in 0..x.nrows() {
            let v: f64 = (0..x.nrows()).map(|j| gis.matrix()[(i, j)] * w[j]).sum();
            scores[labels[i] - 1] += v * v;
        }
        let mut best = 0;
        for c in 1..k {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        best + 1
    }

    #[test]
    fn infinite_limit_agrees_with_large_m() {
        let (q, n, k) = (6, 12, 3);
        let x = random_unit_rows(n, q, 5);
        let labels: Vec<usize> = (0..n).map(|i| i % k + 1).collect();
        let z = random_unit_rows(200, q, 6);
        let mut checked = 0;
        for i in 0..z.nrows() {
            let zi: Vec<f64> = z.row(i).iter().copied().collect();
            let mut dots: Vec<f64> = (0..n)
                .map(|j| x.row(j).iter().zip(&zi).map(|(a, b)| a * b).sum::<f64>().abs())
                .collect();
            dots.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if dots[0] < 1.05 * dots[1] {
                continue;
            }
            checked += 1;
            let inf = kpgm_infinite_predict(&x, &labels, &zi).unwrap();
            assert_eq!(inf, log_domain_argmax(&x, &labels, k, 200, &zi));
        }
        assert!(checked > 50);
    }

    #[test]
    fn infinite_limit_is_perfect_on_training_set() {
        let x = random_unit_rows(40, 5, 9);
        let labels: Vec<usize> = (0..40).map(|i| i % 4 + 1).collect();
        assert_eq!(kpgm_infinite_predict_batch(&x, &labels, &x).unwrap(), labels);
    }

    #[test]
    fn infinite_limit_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let h = (0.9f64, (1.0f64 - 0.81).sqrt());
        assert_eq!(kpgm_infinite_predict(&x, &[1, 2], &[h.0, h.1]).unwrap(), 1);
        assert_eq!(kpgm_infinite_predict(&x, &[1, 2], &[0.0, -1.0]).unwrap(), 2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(kpgm_infinite_predict(&x, &[2, 1], &[s, s]).unwrap(), 2);
    }

    #[test]
    fn cost_does_not_grow_with_copies() {
        let x = random_unit_rows(300, 10, 13);
        let labels: Vec<usize> = (0..300).map(|i| i % 10 + 1).collect();
        let t = Instant::now();
        kpgm_fit(&x, &labels, 10, 1, 1e-10).unwrap();
        let one = t.elapsed();
        let t = Instant::now();
        let model = kpgm_fit(&x, &labels, 10, 100, 1e-10).unwrap();
        let hundred = t.elapsed();
        assert!(hundred < one * 10 + std::time::Duration::from_millis(500));
        let s: f64 = model.scores(&x.row(0).iter().copied().collect::<Vec<_>>()).unwrap().iter().sum();
        assert!(s <= 1.0 + 1e-6);
    }

    #[test]
    fn underflow_detection() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1e-300, 0.4, 0.1]);
        assert_eq!(underflow_rows(&s), 1);
    }
}
