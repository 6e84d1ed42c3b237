//! Feature decorrelation: `z = Λ^{-1/2} Pᵀ (x − mean)` where `P Λ Pᵀ` is the
//! eigendecomposition of the sample covariance of the fitting data.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Correlation magnitude below which a covariance counts as already diagonal.
pub const DIAGONAL_TOLERANCE: f64 = 1e-8;

/// Fitted whitening map. Eigenvalues are positive and sorted descending;
/// `eigenvectors` is `d × r` with orthonormal columns.
///
/// Serialized as `{"mean": [..], "eigenvalues": [..], "eigenvectors": [[..]]}`
/// with the eigenvector matrix row-major (`d` rows of length `r`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct WhiteningTransform {
    mean: Array1<f64>,
    eigenvectors: Array2<f64>,
    eigenvalues: Array1<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl From<WhiteningTransform> for RawTransform {
    fn from(t: WhiteningTransform) -> Self {
        RawTransform {
            mean: t.mean.to_vec(),
            eigenvalues: t.eigenvalues.to_vec(),
            eigenvectors: t
                .eigenvectors
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        }
    }
}

impl TryFrom<RawTransform> for WhiteningTransform {
    type Error = Error;

    fn try_from(raw: RawTransform) -> Result<Self> {
        let d = raw.mean.len();
        let r = raw.eigenvalues.len();
        if raw.eigenvectors.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: raw.eigenvectors.len(),
            });
        }
        let mut flat = Vec::with_capacity(d * r);
        for row in &raw.eigenvectors {
            if row.len() != r {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        if raw.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidArgument(
                "eigenvalues must be positive".into(),
            ));
        }
        Ok(Self {
            mean: Array1::from(raw.mean),
            eigenvectors: Array2::from_shape_vec((d, r), flat)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            eigenvalues: Array1::from(raw.eigenvalues),
        })
    }
}

/// Fits the whitening map on `data`.
///
/// The covariance uses the `N − 1` normaliser. Eigenvalues below
/// `eigen_floor × λ_max` are dropped. Each eigenvector's largest-magnitude
/// component is made positive. A covariance whose correlations are all below
/// [`DIAGONAL_TOLERANCE`] is taken as diagonal, so the eigenbasis is the
/// coordinate axes rather than whatever rotation the solver returns for
/// (near-)repeated eigenvalues.
pub fn fit_whitening(data: &Dataset, eigen_floor: f64) -> Result<WhiteningTransform> {
    let x = data.features();
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let (values, vectors) = if is_diagonal(&cov) {
        (cov.diag().to_vec(), DMatrix::identity(d, d))
    } else {
        let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let lambda_max = values[order[0]];
    if !(lambda_max > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let cutoff = eigen_floor * lambda_max;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| values[i] > cutoff && values[i] > 0.0)
        .collect();
    let r = kept.len();

    let mut eigenvectors = Array2::zeros((d, r));
    let mut eigenvalues = Array1::zeros(r);
    for (col, &i) in kept.iter().enumerate() {
        let v = vectors.column(i);
        let pivot = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for row in 0..d {
            eigenvectors[[row, col]] = sign * v[row];
        }
        eigenvalues[col] = values[i];
    }

    Ok(WhiteningTransform {
        mean,
        eigenvectors,
        eigenvalues,
    })
}

fn is_diagonal(cov: &Array2<f64>) -> bool {
    let d = cov.nrows();
    (0..d).all(|i| {
        (0..i).all(|j| {
            let scale = (cov[[i, i]] * cov[[j, j]]).sqrt();
            cov[[i, j]].abs() <= DIAGONAL_TOLERANCE * scale
        })
    })
}

impl WhiteningTransform {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Retained rank `r`.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigenvectors
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    /// The `r × d` matrix `Λ^{-1/2} Pᵀ`.
    pub fn projection(&self) -> Array2<f64> {
        let mut m = self.eigenvectors.t().to_owned();
        for (mut row, &l) in m.rows_mut().into_iter().zip(self.eigenvalues.iter()) {
            row /= l.sqrt();
        }
        m
    }

    pub fn transform_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.projection().dot(&(&x - &self.mean)))
    }

    /// `P Λ^{1/2} z + mean`; exact inverse of [`Self::transform_row`] when
    /// no direction was truncated.
    pub fn inverse_row(&self, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if z.len() != self.rank() {
            return Err(Error::DimensionMismatch {
                expected: self.rank(),
                got: z.len(),
            });
        }
        let scaled = &z * &self.eigenvalues.mapv(f64::sqrt);
        Ok(self.eigenvectors.dot(&scaled) + &self.mean)
    }

    /// Replaces the features of `data` by their whitened coordinates.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: data.dim(),
            });
        }
        let proj = self.projection();
        let (n, r) = (data.len(), self.rank());
        let mut z = Array2::zeros((n, r));
        z.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(data.features().axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut out, x)| {
                let centered = &x - &self.mean;
                out.assign(&proj.dot(&centered));
            });
        data.with_features(z)
    }
}
