//! PPO losses and their analytic gradients.
//!
//! Everything here is written as a quantity to minimize:
//!
//! * clipped surrogate: `-mean(min(r A, clip(r, 1-eps, 1+eps) A))`
//! * value: `mean((V(s) - target)^2)`
//! * entropy: `-H(pi)`, the negative differential entropy
//!
//! and the total is `surrogate + c1 * value + c2 * entropy`, so a positive
//! `c2` rewards exploration.

use serde::{Deserialize, Serialize};

use super::policy::{entropy, log_prob, ActorCritic};
use crate::mdp_env::ACTION_DIM;

/// One stored transition, ready for a policy update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub obs: Vec<f64>,
    /// Pre-clamp action draw.
    pub action: [f64; ACTION_DIM],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub value_target: f64,
}

/// Per-component weights; `LossWeights::ppo(c1, c2)` gives the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
}

impl LossWeights {
    pub fn ppo(vf_coef: f64, ent_coef: f64) -> Self {
        LossWeights {
            surrogate: 1.0,
            value: vf_coef,
            entropy: ent_coef,
        }
    }

    pub const SURROGATE: Self = LossWeights {
        surrogate: 1.0,
        value: 0.0,
        entropy: 0.0,
    };
    pub const VALUE: Self = LossWeights {
        surrogate: 0.0,
        value: 1.0,
        entropy: 0.0,
    };
    pub const ENTROPY: Self = LossWeights {
        surrogate: 0.0,
        value: 0.0,
        entropy: 1.0,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    /// Fraction of samples whose ratio left `[1-eps, 1+eps]`.
    pub clip_fraction: f64,
}

pub fn probability_ratio(ac: &ActorCritic, s: &Sample) -> f64 {
    let (mean, ls) = ac.policy_forward(&s.obs).expect("sample matches network input");
    (log_prob(&s.action, &mean, &ls) - s.old_log_prob).exp()
}

pub fn clipped_surrogate_loss(ac: &ActorCritic, batch: &[Sample], clip: f64) -> f64 {
    losses(ac, batch, clip, LossWeights::SURROGATE).surrogate
}

pub fn value_loss(ac: &ActorCritic, batch: &[Sample]) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|s| {
            let e = ac.value(&s.obs).expect("sample matches network input") - s.value_target;
            e * e
        })
        .sum::<f64>()
        / n
}

/// Negative entropy; the std is state-independent so the batch mean is the
/// single-state value.
pub fn entropy_loss(ac: &ActorCritic) -> f64 {
    -entropy(ac.log_std())
}

pub fn total_loss(ac: &ActorCritic, batch: &[Sample], clip: f64, vf_coef: f64, ent_coef: f64) -> f64 {
    losses(ac, batch, clip, LossWeights::ppo(vf_coef, ent_coef)).total
}

/// Loss values only.
pub fn losses(ac: &ActorCritic, batch: &[Sample], clip: f64, w: LossWeights) -> LossBreakdown {
    evaluate(ac, batch, clip, w, None)
}

/// Loss values and the gradient of the weighted total w.r.t. `ac.params`.
pub fn losses_and_grad(ac: &ActorCritic, batch: &[Sample], clip: f64, w: LossWeights) -> (LossBreakdown, Vec<f64>) {
    let mut grad = vec![0.0; ac.params.len()];
    let out = evaluate(ac, batch, clip, w, Some(&mut grad));
    (out, grad)
}

fn evaluate(ac: &ActorCritic, batch: &[Sample], clip: f64, w: LossWeights, mut grad: Option<&mut Vec<f64>>) -> LossBreakdown {
    let n = batch.len() as f64;
    let ls: [f64; ACTION_DIM] = [ac.log_std()[0], ac.log_std()[1]];
    let std = [ls[0].exp(), ls[1].exp()];
    let mut surrogate = 0.0;
    let mut value = 0.0;
    let mut clipped = 0usize;
    let mut g_log_std = [0.0; ACTION_DIM];
    let (actor_r, critic_r, ls_r) = (ac.actor_range(), ac.critic_range(), ac.log_std_range());

    for s in batch {
        let need_policy = w.surrogate != 0.0 || grad.is_none();
        if need_policy {
            let cache = ac.actor_cached(&s.obs);
            let mean = cache.output();
            let logp = log_prob(&s.action, mean, &ls);
            let ratio = (logp - s.old_log_prob).exp();
            let a = s.advantage;
            let unclipped = ratio * a;
            let clipped_term = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
            if !(1.0 - clip..=1.0 + clip).contains(&ratio) {
                clipped += 1;
            }
            surrogate -= unclipped.min(clipped_term);
            if let Some(g) = grad.as_deref_mut() {
                // The min takes the unclipped branch unless clipping binds,
                // in which case the clip is flat in the ratio.
                let d_logp = if unclipped <= clipped_term { -w.surrogate * a * ratio / n } else { 0.0 };
                if d_logp != 0.0 {
                    let mut d_mean = [0.0; ACTION_DIM];
                    for d in 0..ACTION_DIM {
                        let z = (s.action[d] - mean[d]) / std[d];
                        d_mean[d] = d_logp * z / std[d];
                        g_log_std[d] += d_logp * (z * z - 1.0);
                    }
                    ac.actor.backward(&ac.params[actor_r.clone()], &cache, &d_mean, &mut g[actor_r.clone()]);
                }
            }
        }
        if w.value != 0.0 || grad.is_none() {
            let cache = ac.critic_cached(&s.obs);
            let e = cache.output()[0] - s.value_target;
            value += e * e;
            if let Some(g) = grad.as_deref_mut() {
                let d_v = w.value * 2.0 * e / n;
                ac.critic.backward(&ac.params[critic_r.clone()], &cache, &[d_v], &mut g[critic_r.clone()]);
            }
        }
    }

    let entropy_term = -entropy(&ls);
    if let Some(g) = grad {
        for d in 0..ACTION_DIM {
            // d(-H)/d(log_std_d) = -1
            g[ls_r.start + d] += g_log_std[d] - w.entropy;
        }
    }
    let surrogate = surrogate / n;
    let value = value / n;
    LossBreakdown {
        surrogate,
        value,
        entropy: entropy_term,
        total: w.surrogate * surrogate + w.value * value + w.entropy * entropy_term,
        clip_fraction: clipped as f64 / n,
    }
}
