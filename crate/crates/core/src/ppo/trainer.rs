//! The PPO outer loop: collect `n_steps` transitions, compute advantages, run
//! shuffled minibatch epochs of Adam on the combined loss.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::buffer::{compute_advantages, RolloutBuffer, Transition};
use super::loss::{losses_and_grad, LossBreakdown, LossWeights, Sample};
use super::policy::ActorCritic;
use super::PpoConfig;
use crate::config::config_hash;
use crate::error::{Error, Result};
use crate::mdp_env::{MetroEnv, Observation, ACTION_DIM};

/// Completed episodes averaged into `mean_ep_reward`.
pub const REWARD_WINDOW: usize = 100;

const SEED_MASK: u64 = (1 << 40) - 1;

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    /// Mean return of the last (up to) 100 completed episodes.
    pub mean_ep_reward: f64,
    pub pg_loss: f64,
    pub value_loss: f64,
    pub entropy_loss: f64,
    /// Wall-clock throughput including the update; not reproducible.
    pub steps_per_sec: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Environment seed of the `k`-th training episode. Always below 2^40, so
/// evaluation seeds at or above 2^40 are never seen in training.
pub fn training_episode_seed(train_seed: u64, k: u64) -> u64 {
    splitmix64(splitmix64(train_seed) ^ k) & SEED_MASK
}

/// Mutable training state, everything a checkpoint needs to resume exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub iteration: usize,
    pub rng: ChaCha8Rng,
    pub adam: AdamState,
    pub episodes_started: u64,
    pub episode_seed: u64,
    /// Raw actions taken so far in the running episode, replayed on resume.
    pub episode_actions: Vec<[f64; ACTION_DIM]>,
    pub episode_reward: f64,
    pub recent_rewards: VecDeque<f64>,
}

pub struct Trainer {
    cfg: PpoConfig,
    env: MetroEnv,
    hash: String,
    ac: ActorCritic,
    state: TrainerState,
    obs: Observation,
    buffer: RolloutBuffer,
    dump_dir: PathBuf,
}

impl Trainer {
    pub fn new(cfg: PpoConfig, env: MetroEnv) -> Result<Self> {
        cfg.validate()?;
        if env.episode_length() == 0 {
            return Err(Error::config("env.fleet", "an episode needs at least one decision"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ac = ActorCritic::new(env.observation_len(), cfg.hidden, &mut rng);
        let state = TrainerState {
            iteration: 0,
            rng,
            adam: AdamState::new(ac.params.len()),
            episodes_started: 0,
            episode_seed: 0,
            episode_actions: Vec::new(),
            episode_reward: 0.0,
            recent_rewards: VecDeque::new(),
        };
        Self::assemble(cfg, env, ac, state, false)
    }

    /// Rebuilds a trainer mid-run. The running episode is replayed from its
    /// seed and recorded actions, so the continuation matches an
    /// uninterrupted run.
    pub fn resume(cfg: PpoConfig, env: MetroEnv, ac: ActorCritic, state: TrainerState) -> Result<Self> {
        cfg.validate()?;
        if ac.input_len() != env.observation_len() {
            return Err(Error::Incompatible(format!(
                "network expects {} inputs, environment produces {}",
                ac.input_len(),
                env.observation_len()
            )));
        }
        if state.adam.len() != ac.params.len() {
            return Err(Error::Incompatible("optimizer state does not match parameter count".into()));
        }
        Self::assemble(cfg, env, ac, state, true)
    }

    fn assemble(cfg: PpoConfig, mut env: MetroEnv, ac: ActorCritic, state: TrainerState, replay: bool) -> Result<Self> {
        env.set_trace(false);
        let hash = config_hash(env.line(), env.physics(), env.config());
        let obs = env.reset(0)?;
        let mut t = Trainer {
            buffer: RolloutBuffer::new(cfg.n_steps),
            dump_dir: std::env::temp_dir(),
            cfg,
            env,
            hash,
            ac,
            state,
            obs,
        };
        if replay {
            t.obs = t.env.reset(t.state.episode_seed)?;
            for a in t.state.episode_actions.clone() {
                t.obs = t.env.step(a)?.observation;
            }
        } else {
            t.start_episode()?;
        }
        Ok(t)
    }

    /// Where a non-finite batch is written before aborting.
    pub fn set_dump_dir(&mut self, dir: impl Into<PathBuf>) {
        self.dump_dir = dir.into();
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn env(&self) -> &MetroEnv {
        &self.env
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn policy(&self) -> &ActorCritic {
        &self.ac
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.state.iteration
    }

    fn start_episode(&mut self) -> Result<()> {
        let s = &mut self.state;
        s.episode_seed = training_episode_seed(self.cfg.seed, s.episodes_started);
        s.episodes_started += 1;
        s.episode_actions.clear();
        s.episode_reward = 0.0;
        self.obs = self.env.reset(s.episode_seed)?;
        Ok(())
    }

    fn mean_recent_reward(&self) -> f64 {
        let r = &self.state.recent_rewards;
        if r.is_empty() {
            f64::NAN
        } else {
            r.iter().sum::<f64>() / r.len() as f64
        }
    }

    fn collect(&mut self) -> Result<f64> {
        self.buffer.clear();
        while !self.buffer.is_full() {
            let input = self.obs.policy_input();
            let (action, log_prob, value) = self.ac.act(&input, &mut self.state.rng)?;
            let step = self.env.step(action)?;
            self.state.episode_actions.push(action);
            self.state.episode_reward += step.reward;
            self.buffer.push(Transition {
                obs: input,
                action,
                log_prob,
                reward: step.reward,
                value,
                done: step.done,
            });
            if step.done {
                let r = &mut self.state.recent_rewards;
                r.push_back(self.state.episode_reward);
                while r.len() > REWARD_WINDOW {
                    r.pop_front();
                }
                self.start_episode()?;
            } else {
                self.obs = step.observation;
            }
        }
        self.ac.value(&self.obs.policy_input())
    }

    fn update(&mut self, samples: &[Sample]) -> Result<LossBreakdown> {
        let weights = LossWeights::ppo(self.cfg.vf_coef, self.cfg.ent_coef);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut sum = LossBreakdown::default();
        let mut batches = 0usize;
        for _ in 0..self.cfg.epochs_per_update {
            order.shuffle(&mut self.state.rng);
            for chunk in order.chunks(self.cfg.batch_size) {
                let batch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                let (l, grad) = losses_and_grad(&self.ac, &batch, self.cfg.clip_range, weights);
                if !l.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(self.dump_batch(&batch, &l));
                }
                adam_step(&mut self.ac.params, &grad, &mut self.state.adam, self.cfg.learning_rate)?;
                sum.surrogate += l.surrogate;
                sum.value += l.value;
                sum.entropy += l.entropy;
                sum.total += l.total;
                sum.clip_fraction += l.clip_fraction;
                batches += 1;
            }
        }
        let k = batches as f64;
        Ok(LossBreakdown {
            surrogate: sum.surrogate / k,
            value: sum.value / k,
            entropy: sum.entropy / k,
            total: sum.total / k,
            clip_fraction: sum.clip_fraction / k,
        })
    }

    fn dump_batch(&self, batch: &[Sample], l: &LossBreakdown) -> Error {
        let iteration = self.state.iteration + 1;
        let path = self.dump_dir.join(format!("nonfinite_batch_iter{iteration}.json"));
        let body = serde_json::json!({
            "iteration": iteration,
            "losses": format!("{l:?}"),
            "log_std": self.ac.log_std(),
            "batch": batch,
        });
        // Best effort: the error is raised regardless.
        let _ = std::fs::create_dir_all(&self.dump_dir)
            .and_then(|_| std::fs::write(&path, serde_json::to_vec_pretty(&body).unwrap_or_default()));
        Error::NonFiniteLoss { iteration, dump: path }
    }

    /// One collect-and-update iteration.
    pub fn iterate(&mut self) -> Result<IterationLog> {
        let start = Instant::now();
        let bootstrap = self.collect()?;
        let adv = compute_advantages(self.buffer.rows(), bootstrap, self.cfg.gamma);
        let samples = self.buffer.drain_samples(&adv);
        let l = self.update(&samples)?;
        self.state.iteration += 1;
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        Ok(IterationLog {
            iter: self.state.iteration,
            mean_ep_reward: self.mean_recent_reward(),
            pg_loss: l.surrogate,
            value_loss: l.value,
            entropy_loss: l.entropy,
            steps_per_sec: samples.len() as f64 / secs,
        })
    }

    /// Runs until `total_iterations` have completed in total.
    pub fn train(&mut self, mut on_iteration: impl FnMut(&IterationLog, &Trainer) -> Result<()>) -> Result<Vec<IterationLog>> {
        let mut logs = Vec::new();
        while self.state.iteration < self.cfg.total_iterations {
            let row = self.iterate()?;
            on_iteration(&row, self)?;
            logs.push(row);
        }
        Ok(logs)
    }
}

pub const LOG_HEADER: [&str; 6] = ["iter", "mean_ep_reward", "pg_loss", "value_loss", "entropy_loss", "steps_per_sec"];

pub fn write_log_csv(path: &Path, rows: &[IterationLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log_csv(path: &Path) -> Result<Vec<IterationLog>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
