//! Adam optimizer over a flat parameter vector.

use super::NnError;

/// Adam with bias-corrected first and second moments.
///
/// First step from zero state moves each parameter by roughly
/// `-lr * sign(gradient)`, since the corrected moments reduce to
/// `g / (|g| + epsilon)`.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn n_params(&self) -> usize {
        self.m.len()
    }

    /// One update step; rejects shape mismatches and non-finite gradients
    /// before touching any state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() {
            return Err(NnError::FlatLength {
                expected: self.m.len(),
                actual: params.len(),
            });
        }
        if grads.len() != params.len() {
            return Err(NnError::GradientLength {
                expected: params.len(),
                actual: grads.len(),
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index });
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            debug_assert!(self.v[i] >= 0.0);
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_unit_move() {
        // With zero state and one gradient g, the update is
        // -lr * g / (|g| + eps), i.e. about -lr * sign(g).
        let mut adam = AdamState::new(1, 1e-3);
        let mut p = vec![0.5];
        adam.step(&mut p, &[0.25]).unwrap();
        let expected = 0.5 - 1e-3 * 0.25 / (0.25 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - (0.5 - 1e-3)).abs() < 1e-9);

        let mut adam = AdamState::new(1, 1e-3);
        let mut p = vec![0.5];
        adam.step(&mut p, &[-3.0]).unwrap();
        assert!((p[0] - (0.5 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_params_fixed() {
        let mut adam = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.0];
        let before = p.clone();
        adam.step(&mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn rejects_non_finite_and_mismatched_gradients() {
        let mut adam = AdamState::new(2, 0.1);
        let mut p = vec![1.0, 2.0];
        assert_eq!(
            adam.step(&mut p, &[1.0, f64::NAN]),
            Err(NnError::NonFiniteGradient { index: 1 })
        );
        assert_eq!(
            adam.step(&mut p, &[1.0]),
            Err(NnError::GradientLength {
                expected: 2,
                actual: 1
            })
        );
        // Failed steps must not advance time or state.
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut adam = AdamState::new(1, 0.05);
        let mut p = vec![3.0];
        for _ in 0..500 {
            let g = 2.0 * p[0];
            adam.step(&mut p, &[g]).unwrap();
        }
        assert!(p[0].abs() < 0.05, "ended at {}", p[0]);
    }
}
