//! Policy roll-outs on fixed seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::ActorCritic;
use crate::error::{Error, Result};
use crate::mdp_env::{EpisodeSummary, MetroEnv};

/// First held-out seed; training episode seeds stay below it.
pub const EVAL_SEED_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Act with the policy mean.
    Deterministic,
    /// Sample from the policy, seeded per episode.
    Sampled,
}

pub fn evaluation_seeds(n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| EVAL_SEED_BASE + i).collect()
}

/// One episode per seed, run in parallel; results are in seed order.
pub fn evaluate(ac: &ActorCritic, env: &MetroEnv, seeds: &[u64], mode: EvalMode) -> Result<Vec<EpisodeSummary>> {
    if ac.input_len() != env.observation_len() {
        return Err(Error::Incompatible(format!(
            "network expects {} inputs, environment produces {}",
            ac.input_len(),
            env.observation_len()
        )));
    }
    seeds.par_iter().map(|&seed| run_episode(ac, &mut env.clone(), seed, mode)).collect()
}

pub fn run_episode(ac: &ActorCritic, env: &mut MetroEnv, seed: u64, mode: EvalMode) -> Result<EpisodeSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
    let mut obs = env.reset(seed)?;
    while !env.is_done() {
        let input = obs.policy_input();
        let action = match mode {
            EvalMode::Deterministic => ac.policy_forward(&input)?.0,
            EvalMode::Sampled => ac.act(&input, &mut rng)?.0,
        };
        obs = env.step(action)?.observation;
    }
    env.summary()
}
