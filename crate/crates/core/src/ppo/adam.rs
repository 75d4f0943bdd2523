//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One in-place Adam update of `params`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    for (context, got) in [("adam gradients", grads.len()), ("adam state", state.len())] {
        if got != params.len() {
            return Err(Error::Dimension {
                context,
                expected: params.len(),
                got,
            });
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0; 3], &mut s, 0.1).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = vec![0.0; 4];
        let g = [3.0, -0.01, 250.0, -7.0];
        let mut s = AdamState::new(4);
        adam_step(&mut p, &g, &mut s, 1e-3).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            assert!((pi + 1e-3 * gi.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn three_step_scalar_trace() {
        // g = 1 each step, lr = 0.1:
        // m = 0.1, 0.19, 0.271; v = 0.001, 0.001999, 0.002997001
        // m_hat = v_hat^(1/2) = 1 at every step, so each step moves by
        // 0.1 / (1 + 1e-8).
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let ms = [0.1, 0.19, 0.271];
        let vs = [0.001, 0.001999, 0.002_997_001];
        for k in 0..3 {
            adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
            assert!((s.m[0] - ms[k]).abs() < 1e-15);
            assert!((s.v[0] - vs[k]).abs() < 1e-15);
            let expect = -0.1 * (k + 1) as f64 / (1.0 + 1e-8);
            assert!((p[0] - expect).abs() < 1e-14, "{} vs {expect}", p[0]);
        }
        assert_eq!(s.t, 3);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2);
        assert!(matches!(
            adam_step(&mut [0.0; 3], &[0.0; 3], &mut s, 0.1),
            Err(Error::Dimension { .. })
        ));
        let mut s = AdamState::new(3);
        assert!(adam_step(&mut [0.0; 3], &[0.0; 2], &mut s, 0.1).is_err());
    }
}
