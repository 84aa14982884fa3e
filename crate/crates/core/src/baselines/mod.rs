//! Linear baselines over the same embeddings the latent-variable model sees:
//! PCA for a deterministic subspace and factor analysis for a probabilistic
//! one. Both give the non-linear model something concrete to beat and a
//! sanity check that latent structure is really in the data.

mod fa;
mod jacobi;
mod pca;

pub use fa::{fa_fit, fa_log_likelihood, FaModel};
pub use jacobi::{jacobi_eigen, JacobiEigen};
pub use pca::{pca_fit, pca_project, pca_reconstruct, PcaModel};

use crate::matrix::Matrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {diff}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("component count must satisfy 1 <= k <= {max}, got {k}")]
    BadComponentCount { k: usize, max: usize },
    #[error("requested {k} components but the data has rank {rank}")]
    RankDeficient { k: usize, rank: usize },
    #[error("eigendecomposition did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("input has {actual} columns, model expects {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("factor analysis failed: {0}")]
    Numeric(String),
}

fn check_finite(x: &Matrix) -> Result<(), BaselineError> {
    match x.first_non_finite() {
        Some((row, col)) => Err(BaselineError::NonFinite { row, col }),
        None => Ok(()),
    }
}

/// Column means and covariance of `x`; `ddof = 1` gives the sample
/// covariance, `ddof = 0` the maximum-likelihood one.
fn mean_and_covariance(x: &Matrix, ddof: usize) -> (Vec<f64>, Matrix) {
    let (u, d) = (x.rows(), x.cols());
    debug_assert!(u > ddof);
    let mut mean = vec![0.0; d];
    for r in 0..u {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= u as f64;
    }
    let mut cov = Matrix::zeros(d, d);
    let denom = (u - ddof) as f64;
    // Upper triangle in index order, then mirrored, so cov is exactly
    // symmetric in floating point.
    for r in 0..u {
        let row = x.row(r);
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_of_known_data() {
        // Columns: [1,3] has variance 2 (sample), [2,2] has variance 0.
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 2.0]]);
        let (mean, cov) = mean_and_covariance(&x, 1);
        assert_eq!(mean, vec![2.0, 2.0]);
        assert_eq!(cov[(0, 0)], 2.0);
        assert_eq!(cov[(1, 1)], 0.0);
        assert_eq!(cov[(0, 1)], 0.0);
        let (_, cov_ml) = mean_and_covariance(&x, 0);
        assert_eq!(cov_ml[(0, 0)], 1.0);
    }
}
