//! Decision-process wrapper over [`World`].
//!
//! One decision per departure: the agent sees an `M x 8` feature matrix of
//! every train and answers with two numbers in `[-1, 1]`, mapped affinely to
//! the cruise speed of the coming segment and the dwell at its arrival
//! station. The reward is the growth of network overlap time since the
//! previous decision, divided by `reward_scale_s`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{PhaseTimestamps, TrainPhysics};
use crate::error::{Error, Result};
use crate::line_data::LineDataset;
use crate::network_sim::{DecisionRequest, DisturbanceConfig, EnergyLedger, FleetConfig, World};
use crate::units::{kmh_to_ms, ms_to_kmh};

pub const FEATURES_PER_TRAIN: usize = 8;
pub const ACTION_DIM: usize = 2;
/// Value of a time-point feature before the event has happened.
pub const NOT_YET: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBounds {
    pub cruise_min_kmh: f64,
    pub cruise_max_kmh: f64,
    pub dwell_min_s: f64,
    pub dwell_max_s: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        ActionBounds {
            cruise_min_kmh: 40.0,
            cruise_max_kmh: 80.0,
            dwell_min_s: 15.0,
            dwell_max_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub dt_s: f64,
    pub reward_scale_s: f64,
    pub time_horizon_s: f64,
    pub seed: u64,
    pub fleet: FleetConfig,
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub bounds: ActionBounds,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::config("env", "dt_s must be > 0"));
        }
        if !(self.reward_scale_s > 0.0) {
            return Err(Error::config("env", "reward_scale_s must be > 0"));
        }
        if !(self.time_horizon_s > 0.0) {
            return Err(Error::config("env", "time_horizon_s must be > 0"));
        }
        let b = &self.bounds;
        if !(b.cruise_min_kmh > 0.0 && b.cruise_min_kmh < b.cruise_max_kmh) {
            return Err(Error::config("env.bounds", "need 0 < cruise_min_kmh < cruise_max_kmh"));
        }
        if !(b.dwell_min_s >= 0.0 && b.dwell_min_s < b.dwell_max_s) {
            return Err(Error::config("env.bounds", "need 0 <= dwell_min_s < dwell_max_s"));
        }
        self.fleet.validate()?;
        self.disturbance.validate()
    }
}

/// Features of every train, row-major `num_trains x 8`.
///
/// Columns: last acceleration start, last cruise start, last braking start,
/// last arrival (each `2 t / horizon - 1`, or -1 if never), line position
/// and distance to the next station (fractions of line length), direction
/// (+1 up, -1 down), and a terminal flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f64>,
    pub num_trains: usize,
    pub deciding_train_id: usize,
}

impl Observation {
    pub fn row(&self, train: usize) -> &[f64] {
        &self.features[train * FEATURES_PER_TRAIN..(train + 1) * FEATURES_PER_TRAIN]
    }

    pub fn input_len(&self) -> usize {
        self.features.len()
    }

    /// Network input: the same rows, rotated so the deciding train comes
    /// first and the rest follow in cyclic id order.
    pub fn policy_input(&self) -> Vec<f64> {
        let n = self.num_trains;
        let mut out = Vec::with_capacity(self.features.len());
        for k in 0..n {
            out.extend_from_slice(self.row((self.deciding_train_id + k) % n));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub raw: [f64; ACTION_DIM],
    pub cruise_ms: f64,
    pub dwell_s: f64,
}

/// Affine map from `[-1, 1]^2` onto the configured bounds; inputs are
/// clamped first and non-finite components are treated as 0.
pub fn map_action(raw: [f64; ACTION_DIM], bounds: &ActionBounds) -> ActionCommand {
    let clamp = |x: f64| if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 };
    let raw = [clamp(raw[0]), clamp(raw[1])];
    let lerp = |lo: f64, hi: f64, x: f64| lo + (x + 1.0) * 0.5 * (hi - lo);
    ActionCommand {
        raw,
        cruise_ms: kmh_to_ms(lerp(bounds.cruise_min_kmh, bounds.cruise_max_kmh, raw[0])),
        dwell_s: lerp(bounds.dwell_min_s, bounds.dwell_max_s, raw[1]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub ledger: EnergyLedger,
    pub sim_time_s: f64,
    /// Overlap ticks gained during this step; the reward before scaling.
    pub overlap_ticks_gained: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionLogEntry {
    pub t: f64,
    pub train: usize,
    pub cruise_cmd_kmh: f64,
    pub dwell_cmd_s: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub ledger: EnergyLedger,
    pub total_time_s: f64,
    pub decisions: Vec<DecisionLogEntry>,
}

fn time_feature(t: Option<f64>, horizon: f64) -> f64 {
    match t {
        Some(t) => (2.0 * t / horizon - 1.0).clamp(-1.0, 1.0),
        None => NOT_YET,
    }
}

/// Builds the feature matrix for every train.
pub fn observe(world: &World, deciding_train: usize, time_horizon_s: f64) -> Observation {
    let n = world.num_trains();
    let length = world.line_length_m();
    let mut features = Vec::with_capacity(n * FEATURES_PER_TRAIN);
    for id in 0..n {
        let st = world.train(id);
        let PhaseTimestamps {
            accel,
            cruise,
            decel,
            dwell,
        } = st.timestamps;
        let finished = world.is_finished(id);
        features.extend_from_slice(&[
            time_feature(accel, time_horizon_s),
            time_feature(cruise, time_horizon_s),
            time_feature(decel, time_horizon_s),
            time_feature(dwell, time_horizon_s),
            (world.line_position_m(id) / length).clamp(0.0, 1.0),
            (world.distance_to_next_m(id) / length).clamp(0.0, 1.0),
            st.direction.sign(),
            if finished { 1.0 } else { 0.0 },
        ]);
    }
    Observation {
        features,
        num_trains: n,
        deciding_train_id: deciding_train,
    }
}

/// Sequential reset/step environment.
#[derive(Debug, Clone)]
pub struct MetroEnv {
    line: LineDataset,
    physics: TrainPhysics,
    cfg: EnvConfig,
    world: Option<World>,
    seed: u64,
    last_overlap_ticks: u64,
    done: bool,
    decisions: Vec<DecisionLogEntry>,
    trace: bool,
}

impl MetroEnv {
    pub fn new(line: LineDataset, physics: TrainPhysics, cfg: EnvConfig) -> Result<Self> {
        line.validate()?;
        physics.validate()?;
        cfg.validate()?;
        if kmh_to_ms(cfg.bounds.cruise_max_kmh) > physics.speed_limit_ms * (1.0 + 1e-12) {
            return Err(Error::config("env.bounds", "cruise_max_kmh exceeds the physics speed limit"));
        }
        Ok(MetroEnv {
            line,
            physics,
            cfg,
            world: None,
            seed: 0,
            last_overlap_ticks: 0,
            done: true,
            decisions: Vec::new(),
            trace: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn line(&self) -> &LineDataset {
        &self.line
    }

    pub fn physics(&self) -> &TrainPhysics {
        &self.physics
    }

    pub fn observation_len(&self) -> usize {
        self.cfg.fleet.num_trains * FEATURES_PER_TRAIN
    }

    /// Decisions per episode, independent of the actions taken.
    pub fn episode_length(&self) -> usize {
        self.cfg.fleet.num_trains * self.line.segments.len()
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Record per-tick power samples in subsequent episodes.
    pub fn set_trace(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let c = &self.cfg;
        let mut world = World::new(&self.line, &self.physics, &c.fleet, &c.disturbance, c.dt_s, seed)?;
        if self.trace {
            world.enable_trace();
        }
        let first = world.advance().first().map(|r| r.train_id);
        self.seed = seed;
        self.last_overlap_ticks = 0;
        self.decisions.clear();
        self.done = first.is_none();
        let obs = observe(&world, first.unwrap_or(0), c.time_horizon_s);
        self.world = Some(world);
        Ok(obs)
    }

    pub fn pending_request(&self) -> Option<DecisionRequest> {
        self.world.as_ref().and_then(|w| w.pending().copied())
    }

    /// Applies a raw agent action to the deciding train.
    pub fn step(&mut self, raw: [f64; ACTION_DIM]) -> Result<StepResult> {
        let cmd = map_action(raw, &self.cfg.bounds);
        self.step_command(cmd.cruise_ms, cmd.dwell_s)
    }

    /// Applies the deciding segment's nominal cruise speed and dwell.
    pub fn step_nominal(&mut self) -> Result<StepResult> {
        let world = self.world.as_ref().ok_or(Error::EpisodeFinished)?;
        let req = world.pending().copied().ok_or(Error::EpisodeFinished)?;
        let (cruise, dwell) = world.nominal_command(&req);
        self.step_command(cruise, dwell)
    }

    /// Applies a physical command (m/s, s) to the deciding train.
    pub fn step_command(&mut self, cruise_ms: f64, dwell_s: f64) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let horizon = self.cfg.time_horizon_s;
        let scale = self.cfg.reward_scale_s;
        let world = self.world.as_mut().ok_or(Error::EpisodeFinished)?;
        let req = world.apply_decision(cruise_ms, dwell_s)?;
        let next = world.advance().first().map(|r| r.train_id);
        let ledger = *world.ledger();
        let gained = ledger.overlap_ticks - self.last_overlap_ticks;
        self.last_overlap_ticks = ledger.overlap_ticks;
        let reward = gained as f64 * world.clock().dt / scale;
        self.done = next.is_none();
        self.decisions.push(DecisionLogEntry {
            t: req.departure_time,
            train: req.train_id,
            cruise_cmd_kmh: ms_to_kmh(cruise_ms),
            dwell_cmd_s: if req.last_segment { 0.0 } else { dwell_s },
            reward,
        });
        Ok(StepResult {
            observation: observe(world, next.unwrap_or(req.train_id), horizon),
            reward,
            done: self.done,
            info: StepInfo {
                ledger,
                sim_time_s: world.time(),
                overlap_ticks_gained: gained,
            },
        })
    }

    /// Summary of the current (normally finished) episode.
    pub fn summary(&self) -> Result<EpisodeSummary> {
        let world = self.world.as_ref().ok_or(Error::NotFinished)?;
        Ok(EpisodeSummary {
            seed: self.seed,
            ledger: *world.ledger(),
            total_time_s: world.total_time()?,
            decisions: self.decisions.clone(),
        })
    }

    /// Full no-action episode: every decision takes the nominal command.
    pub fn run_baseline(&mut self, seed: u64) -> Result<EpisodeSummary> {
        self.reset(seed)?;
        while !self.done {
            self.step_nominal()?;
        }
        self.summary()
    }
}
