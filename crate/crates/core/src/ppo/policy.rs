//! Actor-critic parameter set: Gaussian policy MLP with a state-independent
//! log-std, and a separate value MLP, all stored in one flat vector.

use std::f64::consts::{E, PI};
use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpCache, MlpShape};
use crate::error::{Error, Result};
use crate::mdp_env::ACTION_DIM;

pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
pub const POLICY_OUTPUT_GAIN: f64 = 0.01;
pub const VALUE_OUTPUT_GAIN: f64 = 1.0;

/// Diagonal Gaussian log-density summed over dimensions.
pub fn log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - half_log_2pi
        })
        .sum()
}

/// Differential entropy of the diagonal Gaussian.
pub fn entropy(log_std: &[f64]) -> f64 {
    let half_log_2pie = 0.5 * (2.0 * PI * E).ln();
    log_std.iter().map(|ls| ls + half_log_2pie).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: MlpShape,
    pub critic: MlpShape,
    /// Actor weights, then critic weights, then the log-std vector.
    pub params: Vec<f64>,
}

impl ActorCritic {
    /// Two equal hidden layers of `hidden` units for both networks.
    pub fn new<R: Rng + ?Sized>(input_len: usize, hidden: usize, rng: &mut R) -> Self {
        Self::with_layers(input_len, &[hidden, hidden], rng)
    }

    pub fn with_layers<R: Rng + ?Sized>(input_len: usize, hidden: &[usize], rng: &mut R) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![input_len];
            s.extend_from_slice(hidden);
            s.push(out);
            MlpShape::new(s)
        };
        let actor = sizes(ACTION_DIM);
        let critic = sizes(1);
        let mut params = actor.init(rng, HIDDEN_GAIN, POLICY_OUTPUT_GAIN);
        params.extend(critic.init(rng, HIDDEN_GAIN, VALUE_OUTPUT_GAIN));
        params.extend([0.0; ACTION_DIM]);
        ActorCritic { actor, critic, params }
    }

    pub fn input_len(&self) -> usize {
        self.actor.input_len()
    }

    pub fn actor_range(&self) -> Range<usize> {
        0..self.actor.param_count()
    }

    pub fn critic_range(&self) -> Range<usize> {
        let a = self.actor.param_count();
        a..a + self.critic.param_count()
    }

    pub fn log_std_range(&self) -> Range<usize> {
        let end = self.params.len();
        end - ACTION_DIM..end
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.log_std_range()]
    }

    pub fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.input_len() {
            return Err(Error::Dimension {
                context: "policy input",
                expected: self.input_len(),
                got: obs.len(),
            });
        }
        Ok(())
    }

    /// Policy mean and log-std for one observation.
    pub fn policy_forward(&self, obs: &[f64]) -> Result<([f64; ACTION_DIM], [f64; ACTION_DIM])> {
        self.check_input(obs)?;
        let out = self.actor.forward(&self.params[self.actor_range()], obs);
        let ls = self.log_std();
        Ok(([out[0], out[1]], [ls[0], ls[1]]))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        self.check_input(obs)?;
        Ok(self.critic.forward(&self.params[self.critic_range()], obs)[0])
    }

    /// Pre-clamp Gaussian sample, its log-probability, and the value estimate.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<([f64; ACTION_DIM], f64, f64)> {
        let (mean, ls) = self.policy_forward(obs)?;
        let mut a = [0.0; ACTION_DIM];
        for d in 0..ACTION_DIM {
            let z: f64 = rng.sample(StandardNormal);
            a[d] = mean[d] + ls[d].exp() * z;
        }
        Ok((a, log_prob(&a, &mean, &ls), self.value(obs)?))
    }

    pub(crate) fn actor_cached(&self, obs: &[f64]) -> MlpCache {
        self.actor.forward_cached(&self.params[self.actor_range()], obs)
    }

    pub(crate) fn critic_cached(&self, obs: &[f64]) -> MlpCache {
        self.critic.forward_cached(&self.params[self.critic_range()], obs)
    }
}
