//! Cyclic Jacobi eigendecomposition for symmetric matrices.
//!
//! Rotations zero one off-diagonal pair at a time; sweeps repeat until the
//! off-diagonal Frobenius norm falls below `1e-12` relative to the input's
//! norm. Convergence is quadratic, so even `D` in the hundreds needs only a
//! handful of sweeps.

use super::BaselineError;
use crate::matrix::Matrix;

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
/// Symmetry tolerance relative to the largest entry magnitude.
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenvalues in non-increasing order; `vectors.row(i)` is the unit
/// eigenvector of `values[i]`.
#[derive(Debug, Clone)]
pub struct JacobiEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

pub fn jacobi_eigen(a: &Matrix) -> Result<JacobiEigen, BaselineError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(BaselineError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    super::check_finite(a)?;
    let scale = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    for i in 0..n {
        for j in i + 1..n {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff > SYMMETRY_TOL * scale.max(1.0) {
                return Err(BaselineError::NotSymmetric {
                    row: i,
                    col: j,
                    diff,
                });
            }
        }
    }
    if n == 0 {
        return Ok(JacobiEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }

    let mut m = a.clone();
    // Exact symmetry keeps the rotations well defined even if the input only
    // passed the tolerance check.
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v[(i, i)] = 1.0;
    }

    if scale == 0.0 {
        return Ok(sorted_output(&m, &v));
    }
    let tol = OFF_DIAGONAL_TOL * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() < tol {
            return Ok(sorted_output(&m, &v));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = m[(i, p)];
                    let aiq = m[(i, q)];
                    let new_p = c * aip - s * aiq;
                    let new_q = s * aip + c * aiq;
                    m[(i, p)] = new_p;
                    m[(p, i)] = new_p;
                    m[(i, q)] = new_q;
                    m[(q, i)] = new_q;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    Err(BaselineError::NoConvergence(MAX_SWEEPS))
}

fn sorted_output(m: &Matrix, v: &Matrix) -> JacobiEigen {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    // Non-increasing eigenvalue order; ties broken by original position so
    // the output is deterministic.
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (row, &col) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(row, i)] = v[(i, col)];
        }
    }
    JacobiEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(e: &JacobiEigen) -> Matrix {
        let n = e.values.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for (k, &lam) in e.values.iter().enumerate() {
                    acc += lam * e.vectors[(k, i)] * e.vectors[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    #[test]
    fn diagonal_matrix_is_its_own_decomposition() {
        let a = Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 1.0]]);
        let e = jacobi_eigen(&a).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        assert!((e.vectors[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(e.vectors[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn known_2x2() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = jacobi_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        // Eigenvector of 3 is (1,1)/sqrt(2) up to sign.
        let r = e.vectors.row(0);
        assert!((r[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((r[0] - r[1]).abs() < 1e-12);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = crate::rng::substream(17, "jacobi");
        let raw = crate::rng::normal_matrix(7, 7, &mut rng);
        let mut a = Matrix::zeros(7, 7);
        for i in 0..7 {
            for j in 0..7 {
                a[(i, j)] = 0.5 * (raw[(i, j)] + raw[(j, i)]);
            }
        }
        let e = jacobi_eigen(&a).unwrap();
        let back = reconstruct(&e);
        for i in 0..7 {
            for j in 0..7 {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-9);
            }
        }
        // Orthonormal rows.
        for i in 0..7 {
            for j in 0..7 {
                let mut dot = 0.0;
                for k in 0..7 {
                    dot += e.vectors[(i, k)] * e.vectors[(j, k)];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10);
            }
        }
        // Sorted non-increasing.
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn zero_matrix_is_fine() {
        let e = jacobi_eigen(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let bad = Matrix::from_rows(&[vec![1.0, 5.0], vec![0.0, 1.0]]);
        assert!(matches!(
            jacobi_eigen(&bad),
            Err(BaselineError::NotSymmetric { .. })
        ));
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(
            jacobi_eigen(&rect),
            Err(BaselineError::NotSquare { .. })
        ));
    }
}
