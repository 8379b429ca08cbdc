//! Bias-corrected Adam on flat parameter vectors.

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One update: `p -= lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected
/// moment estimates.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            context: "adam_step",
            expected: state.m.len(),
            got: params.len().min(grads.len()),
        });
    }
    state.t += 1;
    let b1t = 1.0 - state.beta1.powi(state.t as i32);
    let b2t = 1.0 - state.beta2.powi(state.t as i32);
    for k in 0..params.len() {
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k] * grads[k];
        let m_hat = state.m[k] / b1t;
        let v_hat = state.v[k] / b2t;
        params[k] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_leave_params() {
        let mut st = AdamState::new(3, 0.01);
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut st, &mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut st = AdamState::new(2, 0.001);
        let mut p = vec![0.0, 0.0];
        adam_step(&mut st, &mut p, &[3.5, -0.2]).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-6);
        assert!((p[1] - 0.001).abs() < 1e-6);
    }

    #[test]
    fn deterministic_updates() {
        let run = || {
            let mut st = AdamState::new(4, 0.01);
            let mut p = vec![0.1, 0.2, 0.3, 0.4];
            for k in 0..50 {
                let g: Vec<f64> = (0..4).map(|j| ((k * 4 + j) as f64 * 0.13).sin()).collect();
                adam_step(&mut st, &mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut st = AdamState::new(3, 0.01);
        let mut p = vec![0.0; 2];
        assert!(adam_step(&mut st, &mut p, &[0.0; 2]).is_err());
    }
}
