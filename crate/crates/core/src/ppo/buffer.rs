//! Fixed-capacity rollout storage and one-step discounted advantages.

use serde::{Deserialize, Serialize};

use super::loss::Sample;
use crate::mdp_env::ACTION_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// The step ended an episode; the next row belongs to a fresh one.
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    capacity: usize,
    rows: Vec<Transition>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        RolloutBuffer {
            capacity,
            rows: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.capacity
    }

    pub fn rows(&self) -> &[Transition] {
        &self.rows
    }

    /// # Panics
    /// If the buffer is already full.
    pub fn push(&mut self, t: Transition) {
        assert!(!self.is_full(), "rollout buffer overflow");
        self.rows.push(t);
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }

    /// Turns the rows into update samples, leaving the buffer empty.
    pub fn drain_samples(&mut self, adv: &Advantages) -> Vec<Sample> {
        assert_eq!(adv.advantages.len(), self.rows.len());
        self.rows
            .drain(..)
            .zip(adv.advantages.iter().zip(&adv.value_targets))
            .map(|(t, (&a, &target))| Sample {
                obs: t.obs,
                action: t.action,
                old_log_prob: t.log_prob,
                advantage: a,
                value_target: target,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    /// Normalized per buffer.
    pub advantages: Vec<f64>,
    /// Pre-normalization advantage plus the stored value.
    pub value_targets: Vec<f64>,
    pub raw: Vec<f64>,
}

/// `A_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)`.
///
/// `V(s_{t+1})` is the next row's stored value, or `bootstrap_value` after the
/// last row.
pub fn compute_advantages(rows: &[Transition], bootstrap_value: f64, gamma: f64) -> Advantages {
    let n = rows.len();
    let raw: Vec<f64> = (0..n)
        .map(|t| {
            let r = &rows[t];
            let next = if r.done {
                0.0
            } else if t + 1 < n {
                rows[t + 1].value
            } else {
                bootstrap_value
            };
            r.reward + gamma * next - r.value
        })
        .collect();
    let value_targets = raw.iter().zip(rows).map(|(a, r)| a + r.value).collect();
    Advantages {
        advantages: normalize(&raw),
        value_targets,
        raw,
    }
}

/// Zero mean and unit population variance; a constant vector is only centred.
fn normalize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 1e-12 {
        x.iter().map(|v| (v - mean) / std).collect()
    } else {
        x.iter().map(|v| v - mean).collect()
    }
}
