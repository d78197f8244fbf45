use serde::{Deserialize, Serialize};

use crate::autodiff::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for an ordered list of named parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    names: Vec<String>,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[(String, (usize, usize))]) -> Self {
        let names = params.iter().map(|(n, _)| n.clone()).collect();
        let zeros = || {
            params
                .iter()
                .map(|(_, (r, c))| Matrix::zeros(*r, *c))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            names,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> &[Matrix<T>] {
        &self.second
    }
}

/// One bias-corrected Adam update applied in place.
///
/// Every gradient is validated before any parameter changes, so a
/// non-finite gradient leaves both parameters and state untouched.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Matrix<T>],
    grads: &[Matrix<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Length {
            op: "adam_step parameter count",
            left: params.len(),
            right: grads.len().min(state.first.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(state.names[i].clone()));
        }
    }

    state.step += 1;
    let cfg = state.config;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let one = T::one();
    let correction1 = one - T::of(cfg.beta1.powi(state.step as i32));
    let correction2 = one - T::of(cfg.beta2.powi(state.step as i32));
    let lr = T::of(cfg.learning_rate);
    let eps = T::of(cfg.epsilon);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first[i].as_mut_slice();
        let v = state.second[i].as_mut_slice();
        for (((w, &g), m), v) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(lr: f64, n: usize) -> AdamState<f64> {
        let params: Vec<_> = (0..n).map(|i| (format!("p{i}"), (1, 1))).collect();
        AdamState::new(
            AdamConfig {
                learning_rate: lr,
                ..AdamConfig::default()
            },
            &params,
        )
    }

    #[test]
    fn zero_gradient_is_a_no_op_but_counts() {
        let mut p = Matrix::filled(1, 1, 0.5);
        let mut st = state(1e-3, 1);
        adam_step(&mut [&mut p], &[Matrix::zeros(1, 1)], &mut st).unwrap();
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Matrix::filled(1, 1, 0.0);
        let mut st = state(1e-3, 1);
        adam_step(&mut [&mut p], &[Matrix::filled(1, 1, 1.0)], &mut st).unwrap();
        // m_hat = 1, v_hat = 1 => step = lr / (1 + eps)
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((p.get(0, 0) - want).abs() < 1e-18);
    }

    #[test]
    fn identical_inputs_stay_identical() {
        let mut a = Matrix::filled(1, 1, 0.3);
        let mut b = Matrix::filled(1, 1, 0.3);
        let mut st = state(1e-2, 2);
        for k in 0..5 {
            let g = Matrix::filled(1, 1, 0.1 * k as f64 - 0.2);
            adam_step(&mut [&mut a, &mut b], &[g.clone(), g], &mut st).unwrap();
        }
        assert_eq!(a, b);
        assert!(st.second_moments().iter().all(|v| v.get(0, 0) >= 0.0));
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = Matrix::filled(1, 1, 1.25);
        let mut st = state(0.0, 1);
        adam_step(&mut [&mut p], &[Matrix::filled(1, 1, 3.0)], &mut st).unwrap();
        assert_eq!(p.get(0, 0), 1.25);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Matrix::filled(1, 1, 1.0);
        let mut st = state(1e-3, 1);
        let err = adam_step(&mut [&mut p], &[Matrix::filled(1, 1, f64::NAN)], &mut st).unwrap_err();
        assert!(err.to_string().contains("p0"));
        assert_eq!(st.step_count(), 0);
    }
}
