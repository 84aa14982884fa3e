//! Maximum-likelihood factor analysis fitted by expectation-maximization.
//!
//! Model: `x = mean + L z + eps` with `z ~ N(0, I_k)` and independent
//! per-dimension noise `eps ~ N(0, diag(psi))`, so the implied covariance is
//! `C = L L^T + diag(psi)`. The E-step needs only the sample covariance; all
//! `D x D` inverses go through the Woodbury identity so the per-iteration
//! cost stays `O(k D^2)` with tiny `k x k` Cholesky factorizations.

use super::{check_finite, jacobi_eigen, mean_and_covariance, BaselineError};
use crate::matrix::Matrix;

/// Lower bound applied to every noise variance after each M-step.
pub const PSI_FLOOR: f64 = 1e-8;

/// Fitted factor-analysis parameters. `loadings` is `D x k`.
#[derive(Debug, Clone)]
pub struct FaModel {
    pub mean: Vec<f64>,
    pub loadings: Matrix,
    pub noise: Vec<f64>,
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`
/// when a pivot collapses.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[(i, j)];
            for t in 0..j {
                acc -= l[(i, t)] * l[(j, t)];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return None;
                }
                l[(i, i)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solves `L L^T x = b` in place.
fn chol_solve(l: &Matrix, b: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let mut acc = b[i];
        for t in 0..i {
            acc -= l[(i, t)] * b[t];
        }
        b[i] = acc / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for t in i + 1..n {
            acc -= l[(t, i)] * b[t];
        }
        b[i] = acc / l[(i, i)];
    }
}

/// Mean per-sample log-likelihood given the covariance summary `s` of the
/// data around the model mean.
fn loglik_from_cov(loadings: &Matrix, noise: &[f64], s: &Matrix) -> Result<f64, BaselineError> {
    let d = noise.len();
    let k = loadings.cols();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut ln_psi = 0.0;
    let mut tr_phi_s = 0.0;
    for (i, &p) in noise.iter().enumerate() {
        ln_psi += p.ln();
        tr_phi_s += s[(i, i)] / p;
    }
    if k == 0 {
        return Ok(-0.5 * (d as f64 * ln2pi + ln_psi + tr_phi_s));
    }
    // A = Psi^-1 L,  Gi = I + L^T A,  C^-1 = Psi^-1 - A Gi^-1 A^T.
    let mut a = Matrix::zeros(d, k);
    for i in 0..d {
        for j in 0..k {
            a[(i, j)] = loadings[(i, j)] / noise[i];
        }
    }
    let mut gi = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut acc = if i == j { 1.0 } else { 0.0 };
            for t in 0..d {
                acc += loadings[(t, i)] * a[(t, j)];
            }
            gi[(i, j)] = acc;
        }
    }
    let l = cholesky(&gi).ok_or_else(|| {
        BaselineError::Numeric("posterior precision lost positive definiteness".into())
    })?;
    let mut ln_det_gi = 0.0;
    for i in 0..k {
        ln_det_gi += 2.0 * l[(i, i)].ln();
    }
    // tr(A G A^T S) = tr(G (A^T S A)) with G = Gi^-1.
    let mut asa = Matrix::zeros(k, k);
    for i in 0..k {
        // row i of A^T S = sum_d A[d][i] S[d][:]
        let mut asr = vec![0.0; d];
        for t in 0..d {
            let w = a[(t, i)];
            if w != 0.0 {
                for (dst, v) in asr.iter_mut().zip(s.row(t)) {
                    *dst += w * v;
                }
            }
        }
        for j in 0..k {
            let mut acc = 0.0;
            for t in 0..d {
                acc += asr[t] * a[(t, j)];
            }
            asa[(i, j)] = acc;
        }
    }
    let mut tr_correction = 0.0;
    for j in 0..k {
        let mut col = (0..k).map(|i| asa[(i, j)]).collect::<Vec<_>>();
        chol_solve(&l, &mut col);
        tr_correction += col[j];
    }
    Ok(-0.5 * (d as f64 * ln2pi + ln_det_gi + ln_psi + tr_phi_s - tr_correction))
}

/// Fits a k-factor model by EM, returning the model and the trace of mean
/// per-sample log-likelihood (initial value, then one entry per iteration).
///
/// The trace is non-decreasing up to floating-point rounding; iteration
/// stops when the improvement drops below `tol` or after `max_iter` steps.
/// `k = 0` fits the diagonal-Gaussian special case.
pub fn fa_fit(
    x: &Matrix,
    k: usize,
    max_iter: usize,
    tol: f64,
) -> Result<(FaModel, Vec<f64>), BaselineError> {
    let (u, d) = (x.rows(), x.cols());
    if u < 2 {
        return Err(BaselineError::TooFewSamples { need: 2, got: u });
    }
    if k > d {
        return Err(BaselineError::BadComponentCount { k, max: d });
    }
    if max_iter == 0 {
        return Err(BaselineError::Numeric("max_iter must be positive".into()));
    }
    check_finite(x)?;
    let (mean, s) = mean_and_covariance(x, 0);

    let mut noise: Vec<f64> = (0..d).map(|i| s[(i, i)].max(PSI_FLOOR)).collect();
    let mut loadings = Matrix::zeros(d, k);
    if k > 0 {
        // Spectral warm start: loading j = sqrt(lambda_j) v_j, with the noise
        // picking up the unexplained diagonal.
        let eig = jacobi_eigen(&s)?;
        for j in 0..k {
            let scale = eig.values[j].max(0.0).sqrt();
            for i in 0..d {
                loadings[(i, j)] = scale * eig.vectors[(j, i)];
            }
        }
        for i in 0..d {
            let mut explained = 0.0;
            for j in 0..k {
                explained += loadings[(i, j)] * loadings[(i, j)];
            }
            noise[i] = (s[(i, i)] - explained).max(PSI_FLOOR);
        }
    }

    let mut trace = vec![loglik_from_cov(&loadings, &noise, &s)?];
    if k == 0 {
        // No latent factors: the first M-step is already the ML solution.
        trace.push(trace[0]);
        return Ok((
            FaModel {
                mean,
                loadings,
                noise,
            },
            trace,
        ));
    }

    for _ in 0..max_iter {
        // E-step quantities (Woodbury form).
        let mut a = Matrix::zeros(d, k);
        for i in 0..d {
            for j in 0..k {
                a[(i, j)] = loadings[(i, j)] / noise[i];
            }
        }
        let mut gi = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let mut acc = if i == j { 1.0 } else { 0.0 };
                for t in 0..d {
                    acc += loadings[(t, i)] * a[(t, j)];
                }
                gi[(i, j)] = acc;
            }
        }
        let l = cholesky(&gi).ok_or_else(|| {
            BaselineError::Numeric("posterior precision lost positive definiteness".into())
        })?;
        // W = Gi^-1 A^T, row by row via triangular solves.
        let mut w = Matrix::zeros(k, d);
        for t in 0..d {
            let mut col: Vec<f64> = (0..k).map(|i| a[(t, i)]).collect();
            chol_solve(&l, &mut col);
            for i in 0..k {
                w[(i, t)] = col[i];
            }
        }
        // WS = W S (k x D), Delta = Gi^-1 + W S W^T (k x k).
        let mut ws = Matrix::zeros(k, d);
        for i in 0..k {
            let wr = w.row(i);
            let dst = ws.row_mut(i);
            for (t, &c) in wr.iter().enumerate() {
                if c != 0.0 {
                    for (o, v) in dst.iter_mut().zip(s.row(t)) {
                        *o += c * v;
                    }
                }
            }
        }
        let mut delta = Matrix::zeros(k, k);
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            chol_solve(&l, &mut e);
            for i in 0..k {
                delta[(i, j)] = e[i];
            }
        }
        for i in 0..k {
            for j in 0..k {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += ws[(i, t)] * w[(j, t)];
                }
                delta[(i, j)] += acc;
            }
        }
        // M-step: new loadings solve Delta L'^T = W S; new noise is the
        // unexplained diagonal, floored.
        let ld = cholesky(&delta).ok_or_else(|| {
            BaselineError::Numeric("second-moment matrix lost positive definiteness".into())
        })?;
        let mut new_loadings = Matrix::zeros(d, k);
        for t in 0..d {
            let mut col: Vec<f64> = (0..k).map(|i| ws[(i, t)]).collect();
            chol_solve(&ld, &mut col);
            for j in 0..k {
                new_loadings[(t, j)] = col[j];
            }
        }
        for i in 0..d {
            let mut corr = 0.0;
            for j in 0..k {
                corr += new_loadings[(i, j)] * ws[(j, i)];
            }
            noise[i] = (s[(i, i)] - corr).max(PSI_FLOOR);
        }
        loadings = new_loadings;

        let ll = loglik_from_cov(&loadings, &noise, &s)?;
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() < tol {
            break;
        }
    }
    Ok((
        FaModel {
            mean,
            loadings,
            noise,
        },
        trace,
    ))
}

/// Mean per-sample log-likelihood of `x` under a fitted model (second
/// moments are taken around the model's mean, not the data's).
pub fn fa_log_likelihood(model: &FaModel, x: &Matrix) -> Result<f64, BaselineError> {
    let d = model.mean.len();
    if x.cols() != d {
        return Err(BaselineError::DimMismatch {
            expected: d,
            actual: x.cols(),
        });
    }
    if x.rows() == 0 {
        return Err(BaselineError::TooFewSamples { need: 1, got: 0 });
    }
    check_finite(x)?;
    let mut s = Matrix::zeros(d, d);
    for r in 0..x.rows() {
        let row = x.row(r);
        for i in 0..d {
            let di = row[i] - model.mean[i];
            for j in i..d {
                s[(i, j)] += di * (row[j] - model.mean[j]);
            }
        }
    }
    let uf = x.rows() as f64;
    for i in 0..d {
        for j in i..d {
            let v = s[(i, j)] / uf;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    loglik_from_cov(&model.loadings, &model.noise, &s)
}
