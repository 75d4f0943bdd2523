//! Proximal policy optimization written against the flat-parameter MLPs in
//! [`mlp`]: rollout collection, one-step advantages, clipped losses, Adam,
//! checkpoints and evaluation.

pub mod adam;
pub mod buffer;
pub mod checkpoint;
pub mod evaluate;
pub mod loss;
pub mod mlp;
pub mod policy;
pub mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};
pub use buffer::{compute_advantages, Advantages, RolloutBuffer, Transition};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use evaluate::{evaluate, evaluation_seeds, EvalMode};
pub use loss::{
    clipped_surrogate_loss, entropy_loss, losses, losses_and_grad, total_loss, value_loss, LossBreakdown, LossWeights,
    Sample,
};
pub use policy::ActorCritic;
pub use trainer::{IterationLog, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub n_steps: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub clip_range: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub learning_rate: f64,
    pub epochs_per_update: usize,
    pub total_iterations: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("ppo.{field}"), msg));
        if self.n_steps == 0 {
            return bad("n_steps", "must be positive");
        }
        if self.batch_size == 0 || self.batch_size > self.n_steps {
            return bad("batch_size", "must be in 1..=n_steps");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must be in (0, 1]");
        }
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad("clip_range", "must be in (0, 1)");
        }
        if !(self.vf_coef >= 0.0 && self.vf_coef.is_finite()) {
            return bad("vf_coef", "must be finite and >= 0");
        }
        if !(self.ent_coef >= 0.0 && self.ent_coef.is_finite()) {
            return bad("ent_coef", "must be finite and >= 0");
        }
        // Zero is allowed so a frozen-parameter run can be expressed.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be finite and >= 0");
        }
        if self.epochs_per_update == 0 {
            return bad("epochs_per_update", "must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be positive");
        }
        Ok(())
    }
}
