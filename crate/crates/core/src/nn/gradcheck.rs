//! Central finite-difference gradient verification.

use super::NnError;

/// Worst-case agreement between analytic and finite-difference gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
    /// Finite-difference gradient, for inspection when a check fails.
    pub fd_grads: Vec<f64>,
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// Relative error per coordinate is `|a - f| / max(|a|, |f|, 1e-8)`; the
/// floor keeps near-zero gradients from blowing up the ratio.
pub fn finite_difference_check<F>(
    params: &[f64],
    analytic: &[f64],
    mut loss: F,
    h: f64,
) -> Result<GradCheckReport, NnError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(NnError::InvalidStep(h));
    }
    if analytic.len() != params.len() {
        return Err(NnError::GradientLength {
            expected: params.len(),
            actual: analytic.len(),
        });
    }
    let mut work = params.to_vec();
    let mut fd_grads = Vec::with_capacity(params.len());
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: 0,
        fd_grads: Vec::new(),
    };
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let up = loss(&work);
        work[i] = orig - h;
        let down = loss(&work);
        work[i] = orig;
        let fd = (up - down) / (2.0 * h);
        fd_grads.push(fd);
        let abs_err = (analytic[i] - fd).abs();
        let rel_err = abs_err / analytic[i].abs().max(fd.abs()).max(1e-8);
        if rel_err > report.max_rel_err {
            report.max_rel_err = rel_err;
            report.worst_index = i;
        }
        report.max_abs_err = report.max_abs_err.max(abs_err);
    }
    report.fd_grads = fd_grads;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quadratic() {
        // loss = sum x_i^2, gradient 2x; central differences are exact for
        // quadratics up to rounding.
        let params = vec![0.5, -1.5, 2.0];
        let analytic: Vec<f64> = params.iter().map(|x| 2.0 * x).collect();
        let report =
            finite_difference_check(&params, &analytic, |p| p.iter().map(|x| x * x).sum(), 1e-5)
                .unwrap();
        assert!(report.max_rel_err < 1e-9, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn flags_a_wrong_gradient() {
        let params = vec![1.0, 2.0];
        let analytic = vec![2.0, 3.0]; // second entry wrong, should be 4
        let report =
            finite_difference_check(&params, &analytic, |p| p.iter().map(|x| x * x).sum(), 1e-5)
                .unwrap();
        assert!(report.max_rel_err > 0.2);
        assert_eq!(report.worst_index, 1);
    }

    #[test]
    fn rejects_bad_step() {
        let err = finite_difference_check(&[1.0], &[1.0], |_| 0.0, 0.0).unwrap_err();
        assert_eq!(err, NnError::InvalidStep(0.0));
    }
}
