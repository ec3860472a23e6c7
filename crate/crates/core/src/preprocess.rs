//! Feature-space and state-space transformations.
//!
//! Column statistics (mean, standard deviation, principal directions) are
//! always fitted on the training split and replayed on anything else.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};
use crate::quantum::DensityMatrix;

/// Largest vector length `tensor_power` will build by default.
pub const DEFAULT_TENSOR_CAP: usize = 10_000_000;

/// Norms at or below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-300;

/// A real unit vector: the amplitude vector of a pure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    /// Accepts `x` if `|x|₂ = 1` within `1e-9`.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        let n = norm(&x);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("state vector has norm {n}")));
        }
        Ok(StateVector(x))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &StateVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Per-column mean of the training features.
pub fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

/// Per-column population standard deviation `sqrt(E[u²] − E[u]²)`.
pub fn column_stds(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect()
}

pub(crate) fn shift_columns(x: &DMatrix<f64>, shift: &[f64]) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-shift[j]);
    }
    out
}

/// Standard deviations this small are treated as constant columns.
const MIN_STD: f64 = 1e-12;

pub(crate) fn scale_columns_by_std(x: &DMatrix<f64>, std: &[f64]) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        if std[j] > MIN_STD {
            col /= std[j];
        }
    }
    out
}

/// Subtracts the training column means from both splits.
pub fn center_fit_apply(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    let mean = column_means(train.features());
    Ok((
        train.with_features(shift_columns(train.features(), &mean))?,
        test.with_features(shift_columns(test.features(), &mean))?,
    ))
}

/// Divides both splits by the training column standard deviations.
/// Constant columns pass through unchanged.
pub fn standardize_fit_apply(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    let std = column_stds(train.features());
    Ok((
        train.with_features(scale_columns_by_std(train.features(), &std))?,
        test.with_features(scale_columns_by_std(test.features(), &std))?,
    ))
}

/// Top principal directions of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `p × p′`, orthonormal columns in descending variance order.
    pub components: DMatrix<f64>,
    /// Variance along each retained direction.
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.components.ncols()
    }

    /// `(u − mean)ᵀ components` for every row.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "PCA expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(shift_columns(x, &self.mean) * &self.components)
    }

    /// Maps projected coordinates back to the input space.
    pub fn reconstruct(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = y * self.components.transpose();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.mean[j]);
        }
        out
    }
}

/// Population covariance `XcᵀXc / N` of the rows of `x`.
pub fn covariance(x: &DMatrix<f64>) -> (Vec<f64>, SymMatrix) {
    let mean = column_means(x);
    let xc = shift_columns(x, &mean);
    let cov = xc.tr_mul(&xc) / x.nrows() as f64;
    (mean, SymMatrix::symmetrized(cov))
}

pub fn pca_fit(train: &Dataset, p_prime: usize) -> Result<PcaModel> {
    pca_fit_matrix(train.features(), p_prime)
}

pub fn pca_fit_matrix(x: &DMatrix<f64>, p_prime: usize) -> Result<PcaModel> {
    let p = x.ncols();
    if p_prime == 0 || p_prime > p {
        return Err(Error::invalid(format!(
            "PCA dimension {p_prime} outside 1..={p}"
        )));
    }
    let (mean, cov) = covariance(x);
    // sym_eig orients each eigenvector so its largest-magnitude entry is positive.
    let eig = sym_eig(&cov)?;
    let keep: Vec<usize> = (0..p_prime).collect();
    Ok(PcaModel {
        mean,
        components: eig.eigenvectors.select_columns(&keep),
        variances: keep.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
    })
}

pub fn pca_apply(model: &PcaModel, d: &Dataset) -> Result<Dataset> {
    d.with_features(model.transform(d.features())?)
}

/// `u / |u|₂`.
pub fn l2_normalize(u: &[f64]) -> Result<StateVector> {
    let n = norm(u);
    if !(n > ZERO_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok(StateVector(u.iter().map(|v| v / n).collect()))
}

/// `((|u|² − 1)/(|u|² + 1), 2u/(|u|² + 1))`, a unit vector of length `p + 1`.
pub fn inverse_stereographic(u: &[f64]) -> StateVector {
    let sq = dot(u, u);
    let mut x = Vec::with_capacity(u.len() + 1);
    if sq.is_infinite() {
        x.push(1.0);
        x.resize(x.len() + u.len(), 0.0);
        return StateVector(x);
    }
    let denom = sq + 1.0;
    x.push((sq - 1.0) / denom);
    x.extend(u.iter().map(|v| 2.0 * v / denom));
    // Re-normalize away rounding so the unit-norm invariant is tight.
    let n = norm(&x);
    x.iter_mut().for_each(|v| *v /= n);
    StateVector(x)
}

/// `u` followed by the products `u_i u_j` for `i ≤ j` in row-major order.
pub fn poly_expand(u: &[f64]) -> Vec<f64> {
    let p = u.len();
    let mut out = Vec::with_capacity(p + p * (p + 1) / 2);
    out.extend_from_slice(u);
    for i in 0..p {
        for j in i..p {
            out.push(u[i] * u[j]);
        }
    }
    out
}

pub fn to_density(x: &StateVector) -> DensityMatrix {
    DensityMatrix::from_pure(x)
}

/// `x^{⊗m}` in lexicographic index order.
pub fn tensor_power(x: &StateVector, m: usize) -> Result<StateVector> {
    tensor_power_capped(x, m, DEFAULT_TENSOR_CAP)
}

pub fn tensor_power_capped(x: &StateVector, m: usize, cap: usize) -> Result<StateVector> {
    Ok(StateVector(tensor_power_raw(&x.0, m, cap)?))
}

pub(crate) fn tensor_power_len(q: usize, m: usize, cap: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::invalid("copy count must be at least 1"));
    }
    let mut len: usize = 1;
    for _ in 0..m {
        len = len
            .checked_mul(q)
            .filter(|&l| l <= cap)
            .ok_or_else(|| {
                Error::ResourceLimit(format!("{q}^{m} entries exceed the cap of {cap}"))
            })?;
    }
    Ok(len)
}

pub(crate) fn tensor_power_raw(x: &[f64], m: usize, cap: usize) -> Result<Vec<f64>> {
    tensor_power_len(x.len(), m, cap)?;
    let mut out = x.to_vec();
    for _ in 1..m {
        let mut next = Vec::with_capacity(out.len() * x.len());
        for &a in &out {
            next.extend(x.iter().map(|b| a * b));
        }
        out = next;
    }
    Ok(out)
}

/// `Π ρ Π / Tr(Π ρ)` for an orthogonal projector `Π`.
pub fn state_subspace_project(rho: &DensityMatrix, proj: &SymMatrix) -> Result<DensityMatrix> {
    if proj.dim() != rho.dim() {
        return Err(Error::invalid(format!(
            "projector is {}-dimensional, state is {}-dimensional",
            proj.dim(),
            rho.dim()
        )));
    }
    let p = proj.matrix();
    if (p * p - p).norm() > 1e-9 {
        return Err(Error::invalid("matrix is not an orthogonal projector"));
    }
    let weight = proj.dot(rho.matrix());
    if weight <= 1e-12 {
        return Err(Error::NullProjection);
    }
    let projected = proj.sandwich(rho.matrix()).scale(1.0 / weight);
    DensityMatrix::new(projected)
}

/// Top-`d′` eigenvectors of the average training state `(1/N) Σ x_i x_iᵀ`
/// (rows of `states` are the `x_i`). Columns of the result span the subspace.
pub fn fit_state_subspace(states: &DMatrix<f64>, d_prime: usize) -> Result<DMatrix<f64>> {
    let q = states.ncols();
    if d_prime == 0 || d_prime > q {
        return Err(Error::invalid(format!(
            "subspace dimension {d_prime} outside 1..={q}"
        )));
    }
    let avg = SymMatrix::symmetrized(states.tr_mul(states) / states.nrows() as f64);
    let eig = sym_eig(&avg)?;
    let keep: Vec<usize> = (0..d_prime).collect();
    Ok(eig.eigenvectors.select_columns(&keep))
}

/// Pure-state form of [`state_subspace_project`]: coordinates of `Πx / |Πx|`
/// in the basis `basis` (orthonormal columns).
pub fn project_state_vector(x: &[f64], basis: &DMatrix<f64>) -> Result<StateVector> {
    let coords = basis.tr_mul(&DVector::from_column_slice(x));
    let sq = coords.norm_squared();
    if sq <= 1e-12 {
        return Err(Error::NullProjection);
    }
    let n = sq.sqrt();
    Ok(StateVector(coords.iter().map(|v| v / n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(rows: &[&[f64]]) -> Dataset {
        let n = rows.len();
        let p = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let labels: Vec<usize> = (0..n).map(|_| 0).collect();
        Dataset::from_zero_based(DMatrix::from_row_slice(n, p, &flat), &labels, 1).unwrap()
    }

    #[test]
    fn centering() {
        let train = ds(&[&[1.0, 4.0], &[3.0, 4.0]]);
        let test = ds(&[&[5.0, 0.0]]);
        let (tr, te) = center_fit_apply(&train, &test).unwrap();
        assert_eq!(tr.sample(0), vec![-1.0, 0.0]);
        assert_eq!(tr.sample(1), vec![1.0, 0.0]);
        assert_eq!(te.sample(0), vec![3.0, -4.0]);
    }

    #[test]
    fn standardization() {
        let train = ds(&[&[0.0, 0.0, 7.0], &[2.0, 4.0, 7.0]]);
        let (tr, _) = standardize_fit_apply(&train, &train).unwrap();
        assert_eq!(tr.sample(1), vec![2.0, 2.0, 7.0]);
        assert_eq!(tr.sample(0), vec![0.0, 0.0, 7.0]);
    }

    #[test]
    fn pca_on_diagonal_line() {
        let train = ds(&[&[-1.0, -1.0], &[0.0, 0.0], &[2.0, 2.0], &[3.0, 3.0]]);
        let model = pca_fit(&train, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((model.components[(0, 0)] - h).abs() < 1e-12);
        assert!((model.components[(1, 0)] - h).abs() < 1e-12);
        let proj = pca_apply(&model, &train).unwrap();
        assert_eq!(proj.n_features(), 1);
        // Mean is (1, 1); the point (3, 3) lies 2√2 along the component.
        assert!((proj.sample(3)[0] - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let train = ds(&[&[1.0, 2.0, 0.5], &[0.0, -1.0, 2.0], &[3.0, 1.0, 1.0], &[2.0, 0.0, -1.0]]);
        let model = pca_fit(&train, 3).unwrap();
        let back = model.reconstruct(&model.transform(train.features()).unwrap());
        assert!((back - train.features()).norm() < 1e-9);
        let ctc = model.components.tr_mul(&model.components);
        assert!((ctc - DMatrix::identity(3, 3)).norm() < 1e-9);
        assert!(pca_fit(&train, 4).is_err());
        assert!(pca_apply(&model, &ds(&[&[1.0]])).is_err());
    }

    #[test]
    fn pca_isotropic_is_orthonormal() {
        let train = ds(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]);
        let model = pca_fit(&train, 1).unwrap();
        assert!((model.components.column(0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_maps() {
        assert_eq!(l2_normalize(&[3.0, 4.0]).unwrap().as_slice(), &[0.6, 0.8]);
        assert_eq!(l2_normalize(&[0.0, 1.0]).unwrap().as_slice(), &[0.0, 1.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroVector)));

        assert_eq!(inverse_stereographic(&[0.0]).as_slice(), &[-1.0, 0.0]);
        assert_eq!(inverse_stereographic(&[1.0]).as_slice(), &[0.0, 1.0]);
        let far = inverse_stereographic(&[1e200]);
        assert!((far.as_slice()[0] - 1.0).abs() < 1e-12);
        let big = inverse_stereographic(&[1e6, -1e6]);
        assert!((big.as_slice()[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn polynomial_expansion() {
        assert_eq!(poly_expand(&[2.0, 3.0]), vec![2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(poly_expand(&[0.0; 3]), vec![0.0; 9]);
        assert_eq!(poly_expand(&[1.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn densities() {
        let rho = to_density(&StateVector::new(vec![1.0, 0.0]).unwrap());
        assert_eq!(rho.matrix().matrix().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rho = to_density(&StateVector::new(vec![h, h]).unwrap());
        assert!(rho.matrix().matrix().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn tensor_powers() {
        let x = StateVector::new(vec![0.6, 0.8]).unwrap();
        let t = tensor_power(&x, 2).unwrap();
        let expect = [0.36, 0.48, 0.48, 0.64];
        assert!(t.as_slice().iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(tensor_power(&x, 1).unwrap(), x);
        assert!(matches!(
            tensor_power_capped(&x, 30, 1000),
            Err(Error::ResourceLimit(_))
        ));
        assert!(tensor_power(&x, 0).is_err());
    }

    #[test]
    fn subspace_projection() {
        let rho = DensityMatrix::new(SymMatrix::from_diagonal(&[0.5, 0.5])).unwrap();
        let out = state_subspace_project(&rho, &SymMatrix::identity(2)).unwrap();
        assert!(out.matrix().sub(rho.matrix()).frobenius_norm() < 1e-15);
        let p = SymMatrix::from_diagonal(&[1.0, 0.0]);
        let out = state_subspace_project(&rho, &p).unwrap();
        assert!(out.matrix().sub(&p).frobenius_norm() < 1e-15);
        let pure = DensityMatrix::new(SymMatrix::from_diagonal(&[1.0, 0.0])).unwrap();
        let out = state_subspace_project(&pure, &p).unwrap();
        assert!(out.matrix().sub(pure.matrix()).frobenius_norm() < 1e-15);
        let q = SymMatrix::from_diagonal(&[0.0, 1.0]);
        assert!(matches!(
            state_subspace_project(&pure, &q),
            Err(Error::NullProjection)
        ));
    }

    #[test]
    fn vector_projection_matches_density_projection() {
        let x = l2_normalize(&[0.3, -0.5, 0.8]).unwrap();
        let basis = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let v = project_state_vector(x.as_slice(), &basis).unwrap();
        let proj = SymMatrix::symmetrized(&basis * basis.transpose());
        let rho = state_subspace_project(&to_density(&x), &proj).unwrap();
        let sub = rho.matrix().matrix().view((0, 0), (2, 2)).clone_owned();
        let outer = DVector::from_column_slice(v.as_slice());
        assert!((sub - &outer * outer.transpose()).norm() < 1e-12);
    }

    fn vec_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 1..max_len)
    }

    proptest! {
        #[test]
        fn normalization_maps_are_unit(u in vec_strategy(12)) {
            let s = inverse_stereographic(&u);
            prop_assert!((norm(s.as_slice()) - 1.0).abs() <= 1e-12);
            if let Ok(x) = l2_normalize(&u) {
                prop_assert!((norm(x.as_slice()) - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn stereographic_is_injective(u in vec_strategy(6), delta in vec_strategy(6)) {
            let v: Vec<f64> = u.iter().zip(delta.iter().chain(std::iter::repeat(&0.0))).map(|(a, b)| a + b).collect();
            if u.iter().zip(&v).any(|(a, b)| (a - b).abs() > 1e-6) {
                let (su, sv) = (inverse_stereographic(&u), inverse_stereographic(&v));
                let gap: f64 = su.as_slice().iter().zip(sv.as_slice()).map(|(a, b)| (a - b).abs()).sum();
                prop_assert!(gap > 0.0);
            }
        }

        #[test]
        fn tensor_gram_law(a in vec_strategy(5), b in vec_strategy(5), m in 1usize..=4) {
            let len = a.len().min(b.len());
            if let (Ok(x), Ok(y)) = (l2_normalize(&a[..len]), l2_normalize(&b[..len])) {
                let g = x.dot(&y);
                let tx = tensor_power(&x, m).unwrap();
                let ty = tensor_power(&y, m).unwrap();
                prop_assert!((tx.dot(&ty) - g.powi(m as i32)).abs() <= 1e-10);
                prop_assert!((norm(tx.as_slice()) - 1.0).abs() <= 1e-12);
            }
        }
    }
}
