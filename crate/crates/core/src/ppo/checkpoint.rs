//! Versioned JSON checkpoints. Floats round-trip exactly, so a reloaded
//! policy evaluates bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, EvalMode};
use super::policy::ActorCritic;
use super::trainer::{Trainer, TrainerState};
use super::PpoConfig;
use crate::config::config_hash;
use crate::error::{Error, Result};
use crate::mdp_env::{EpisodeSummary, MetroEnv};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Hash of line, physics and env config the policy was trained on.
    pub config_hash: String,
    pub ppo: PpoConfig,
    pub policy: ActorCritic,
    pub trainer: TrainerState,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: t.config_hash().to_string(),
            ppo: t.config().clone(),
            policy: t.policy().clone(),
            trainer: t.state().clone(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.trainer.iteration
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Incompatible(format!("unreadable checkpoint: {e}")))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Errors unless `env` has the configuration and shape this was trained on.
    pub fn check_compatible(&self, env: &MetroEnv) -> Result<()> {
        let hash = config_hash(env.line(), env.physics(), env.config());
        if hash != self.config_hash {
            return Err(Error::Incompatible(format!(
                "trained under config {} but environment is {}",
                self.config_hash, hash
            )));
        }
        if self.policy.input_len() != env.observation_len() {
            return Err(Error::Incompatible(format!(
                "network expects {} inputs, environment produces {}",
                self.policy.input_len(),
                env.observation_len()
            )));
        }
        Ok(())
    }

    /// Continues training where this checkpoint stopped; `ppo` may raise
    /// `total_iterations` but must otherwise match.
    pub fn resume(&self, env: MetroEnv, ppo: Option<PpoConfig>) -> Result<Trainer> {
        self.check_compatible(&env)?;
        let cfg = match ppo {
            Some(c) => {
                let mut a = c.clone();
                let mut b = self.ppo.clone();
                a.total_iterations = 0;
                b.total_iterations = 0;
                if a != b {
                    return Err(Error::Incompatible("PPO settings differ from the checkpoint".into()));
                }
                c
            }
            None => self.ppo.clone(),
        };
        Trainer::resume(cfg, env, self.policy.clone(), self.trainer.clone())
    }

    pub fn evaluate(&self, env: &MetroEnv, seeds: &[u64], mode: EvalMode) -> Result<Vec<EpisodeSummary>> {
        self.check_compatible(env)?;
        evaluate(&self.policy, env, seeds, mode)
    }
}
