//! Principal component analysis on the sample covariance.

use super::{check_finite, jacobi_eigen, mean_and_covariance, BaselineError};
use crate::matrix::Matrix;

/// Eigenvalues this far below the largest (relatively) count as zero when
/// judging rank.
const RANK_TOL: f64 = 1e-10;

/// Fitted PCA basis.
///
/// `components.row(j)` is the j-th principal direction; rows are orthonormal
/// and ordered by non-increasing `explained_variance`. Each row is signed so
/// its largest-magnitude entry is positive, which makes fits reproducible
/// across runs and platforms.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel, BaselineError> {
    let (u, d) = (x.rows(), x.cols());
    if u < 2 {
        return Err(BaselineError::TooFewSamples { need: 2, got: u });
    }
    if k == 0 || k > d {
        return Err(BaselineError::BadComponentCount { k, max: d });
    }
    check_finite(x)?;
    let (mean, cov) = mean_and_covariance(x, 1);
    let eig = jacobi_eigen(&cov)?;
    let lead = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let rank = eig
        .values
        .iter()
        .filter(|&&v| v > lead * RANK_TOL && v > 0.0)
        .count();
    if k > rank {
        return Err(BaselineError::RankDeficient { k, rank });
    }
    let mut components = Matrix::zeros(k, d);
    for j in 0..k {
        let row = eig.vectors.row(j);
        // Sign convention: the entry with the largest magnitude (first such
        // index on ties) is made positive.
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = i;
            }
        }
        let flip = if row[best] < 0.0 { -1.0 } else { 1.0 };
        for (dst, v) in components.row_mut(j).iter_mut().zip(row) {
            *dst = flip * v;
        }
    }
    // Tiny negative eigenvalues are rounding artifacts of the
    // eigendecomposition; variance is reported as zero there.
    let explained_variance = eig.values[..k].iter().map(|&v| v.max(0.0)).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// Projects rows of `x` onto the fitted components: `(x - mean) C^T`.
pub fn pca_project(model: &PcaModel, x: &Matrix) -> Result<Matrix, BaselineError> {
    if x.cols() != model.mean.len() {
        return Err(BaselineError::DimMismatch {
            expected: model.mean.len(),
            actual: x.cols(),
        });
    }
    check_finite(x)?;
    let k = model.components.rows();
    let mut out = Matrix::zeros(x.rows(), k);
    for r in 0..x.rows() {
        let row = x.row(r);
        for j in 0..k {
            let comp = model.components.row(j);
            let mut acc = 0.0;
            for i in 0..row.len() {
                acc += (row[i] - model.mean[i]) * comp[i];
            }
            out[(r, j)] = acc;
        }
    }
    Ok(out)
}

/// Maps scores back to data space: `mean + scores C`.
pub fn pca_reconstruct(model: &PcaModel, scores: &Matrix) -> Result<Matrix, BaselineError> {
    let k = model.components.rows();
    if scores.cols() != k {
        return Err(BaselineError::DimMismatch {
            expected: k,
            actual: scores.cols(),
        });
    }
    let d = model.mean.len();
    let mut out = Matrix::zeros(scores.rows(), d);
    for r in 0..scores.rows() {
        let s = scores.row(r);
        let dst = out.row_mut(r);
        dst.copy_from_slice(&model.mean);
        for (j, &sj) in s.iter().enumerate() {
            let comp = model.components.row(j);
            for (o, c) in dst.iter_mut().zip(comp) {
                *o += sj * c;
            }
        }
    }
    Ok(out)
}
