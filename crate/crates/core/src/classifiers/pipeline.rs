//! Preprocessing stages: declared in config, fitted on training rows, replayed on anything else.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::quad_feature_map_rows;
use crate::error::{Error, Result};
use crate::preprocess::{
    column_means, column_stds, fit_state_subspace, inverse_stereographic, pca_fit_matrix,
    scale_columns_by_std, shift_columns, tensor_power_len, tensor_power_raw, PcaModel, DEFAULT_TENSOR_CAP,
    ZERO_NORM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    L2,
    Stereographic,
    /// Raw features; only meaningful for the linear classifiers.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(default = "yes")]
    pub center: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub pca: Option<usize>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default = "one")]
    pub copies: usize,
    #[serde(default)]
    pub state_subspace: Option<usize>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec {
            center: true,
            standardize: false,
            pca: None,
            normalization: Normalization::L2,
            copies: 1,
            state_subspace: None,
        }
    }
}

/// How the copy count is realized after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    None,
    /// `x^{⊗m}`.
    Tensor(usize),
    /// `(x, x⊗x)` with duplicate products removed.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub input_dim: usize,
    pub center: Option<Vec<f64>>,
    pub standardize: Option<Vec<f64>>,
    pub pca: Option<PcaModel>,
    pub normalization: Normalization,
    pub expansion: Expansion,
    /// Orthonormal columns spanning the retained state subspace.
    pub subspace: Option<DMatrix<f64>>,
}

fn normalize_rows(x: &DMatrix<f64>, norm: Normalization) -> Result<DMatrix<f64>> {
    match norm {
        Normalization::None => Ok(x.clone()),
        Normalization::L2 => {
            let mut out = x.clone();
            for mut row in out.row_iter_mut() {
                let n = row.norm();
                if !(n > ZERO_NORM) {
                    return Err(Error::ZeroVector);
                }
                row /= n;
            }
            Ok(out)
        }
        Normalization::Stereographic => {
            let mut out = DMatrix::zeros(x.nrows(), x.ncols() + 1);
            for i in 0..x.nrows() {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                for (j, v) in inverse_stereographic(&row).into_vec().into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
            Ok(out)
        }
    }
}

fn expand_rows(x: &DMatrix<f64>, e: Expansion) -> Result<DMatrix<f64>> {
    match e {
        Expansion::None | Expansion::Tensor(1) => Ok(x.clone()),
        Expansion::Quadratic => Ok(quad_feature_map_rows(x)),
        Expansion::Tensor(m) => {
            let len = tensor_power_len(x.ncols(), m, DEFAULT_TENSOR_CAP)?;
            len.checked_mul(x.nrows())
                .filter(|&t| t <= 50 * DEFAULT_TENSOR_CAP)
                .ok_or_else(|| Error::ResourceLimit(format!("{} states of dimension {len} exceed memory cap", x.nrows())))?;
            let mut out = DMatrix::zeros(x.nrows(), len);
            for i in 0..x.nrows() {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                for (j, v) in tensor_power_raw(&row, m, DEFAULT_TENSOR_CAP)?.into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
            Ok(out)
        }
    }
}

fn project_rows(x: &DMatrix<f64>, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = x * basis;
    for mut row in out.row_iter_mut() {
        let sq = row.norm_squared();
        if sq <= 1e-12 {
            return Err(Error::NullProjection);
        }
        row /= sq.sqrt();
    }
    Ok(out)
}

impl FittedPipeline {
    /// Fits every stage on `train` and returns the pipeline with the transformed rows.
    pub fn fit(spec: &PipelineSpec, expansion: Expansion, train: &DMatrix<f64>) -> Result<(Self, DMatrix<f64>)> {
        let input_dim = train.ncols();
        let mut x = train.clone();
        let center = if spec.center {
            let m = column_means(&x);
            x = shift_columns(&x, &m);
            Some(m)
        } else {
            None
        };
        let standardize = if spec.standardize {
            let s = column_stds(&x);
            x = scale_columns_by_std(&x, &s);
            Some(s)
        } else {
            None
        };
        let pca = match spec.pca {
            Some(p) => {
                let model = pca_fit_matrix(&x, p)?;
                x = model.transform(&x)?;
                Some(model)
            }
            None => None,
        };
        x = normalize_rows(&x, spec.normalization)?;
        x = expand_rows(&x, expansion)?;
        let subspace = match spec.state_subspace {
            Some(d) => {
                let basis = fit_state_subspace(&x, d)?;
                x = project_rows(&x, &basis)?;
                Some(basis)
            }
            None => None,
        };
        Ok((
            FittedPipeline {
                input_dim,
                center,
                standardize,
                pca,
                normalization: spec.normalization,
                expansion,
                subspace,
            },
            x,
        ))
    }

    /// Replays the fitted stages on raw rows.
    pub fn transform(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.input_dim {
            return Err(Error::invalid(format!(
                "pipeline expects {} raw features, got {}",
                self.input_dim,
                raw.ncols()
            )));
        }
        let mut x = raw.clone();
        if let Some(m) = &self.center {
            x = shift_columns(&x, m);
        }
        if let Some(s) = &self.standardize {
            x = scale_columns_by_std(&x, s);
        }
        if let Some(p) = &self.pca {
            x = p.transform(&x)?;
        }
        x = normalize_rows(&x, self.normalization)?;
        x = expand_rows(&x, self.expansion)?;
        if let Some(b) = &self.subspace {
            x = project_rows(&x, b)?;
        }
        Ok(x)
    }

    pub fn output_dim(&self) -> usize {
        if let Some(b) = &self.subspace {
            return b.ncols();
        }
        let mut d = match &self.pca {
            Some(p) => p.output_dim(),
            None => self.input_dim,
        };
        if self.normalization == Normalization::Stereographic {
            d += 1;
        }
        match self.expansion {
            Expansion::None => d,
            Expansion::Tensor(m) => d.pow(m as u32),
            Expansion::Quadratic => d + d * (d + 1) / 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_matches_fit_output() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.5, 0.0, 1.0, 3.0, 2.0, 2.0, 2.0, -1.0, 0.3, 1.0]);
        let spec = PipelineSpec {
            center: true,
            standardize: true,
            pca: Some(2),
            normalization: Normalization::Stereographic,
            copies: 2,
            state_subspace: Some(4),
        };
        let (p, fitted) = FittedPipeline::fit(&spec, Expansion::Tensor(2), &x).unwrap();
        assert_eq!(fitted.ncols(), 4);
        assert_eq!(p.output_dim(), 4);
        let again = p.transform(&x).unwrap();
        assert!((again - &fitted).amax() < 1e-12);
        for row in fitted.row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_row_is_rejected() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let spec = PipelineSpec {
            center: false,
            ..PipelineSpec::default()
        };
        let r = FittedPipeline::fit(&spec, Expansion::None, &x);
        assert!(matches!(r, Err(Error::ZeroVector)));
    }

    #[test]
    fn dimension_mismatch_on_replay() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let (p, _) = FittedPipeline::fit(&PipelineSpec::default(), Expansion::Quadratic, &x).unwrap();
        assert_eq!(p.output_dim(), 5);
        assert!(p.transform(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn spec_defaults_and_strictness() {
        let s: PipelineSpec = serde_json::from_str(r#"{"pca": 10}"#).unwrap();
        assert_eq!(s.copies, 1);
        assert!(s.center && !s.standardize);
        assert_eq!(s.normalization, Normalization::L2);
        assert!(serde_json::from_str::<PipelineSpec>(r#"{"pcaa": 10}"#).is_err());
    }
}
