//! Multi-train line simulation.
//!
//! Trains run a single one-way trip each, half of the fleet in each
//! direction, on separate tracks. They interact only through the shared
//! electrical network: every tick the traction and braking power of all
//! trains are summed, regenerated power is the smaller of total traction and
//! `beta3` times total braking, and any surplus is dissipated.
//!
//! The world pauses whenever a train is about to leave a station so the
//! caller can choose its cruise speed and next dwell. Departures then happen
//! at their exact instant inside the following tick.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    braking_power, plan_profile, step_train, traction_power, Direction, Phase, PhasePlan, TrainPhysics, TrainState,
};
use crate::error::{Error, Result};
use crate::line_data::{reverse_direction, LineDataset};
use crate::units::{km_to_m, kmh_to_ms, kws_to_kwh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub num_trains: usize,
    pub headway_s: f64,
    pub trains_up: usize,
    pub trains_down: usize,
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trains_up + self.trains_down != self.num_trains {
            return Err(Error::config("fleet", "trains_up + trains_down must equal num_trains"));
        }
        if !(self.headway_s > 0.0 && self.headway_s.is_finite()) {
            return Err(Error::config("fleet", "headway must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceDistribution {
    Uniform,
    TruncatedExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub probability_per_stop: f64,
    pub max_extra_dwell_s: f64,
    pub distribution: DisturbanceDistribution,
    /// Scale of the exponential before truncation at `max_extra_dwell_s`.
    #[serde(default = "default_exp_scale")]
    pub exp_scale_s: f64,
}

fn default_exp_scale() -> f64 {
    10.0
}

impl DisturbanceConfig {
    pub fn none() -> Self {
        DisturbanceConfig {
            probability_per_stop: 0.0,
            max_extra_dwell_s: 0.0,
            distribution: DisturbanceDistribution::Uniform,
            exp_scale_s: default_exp_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability_per_stop) {
            return Err(Error::config("disturbance", "probability_per_stop must be in [0, 1]"));
        }
        if !(self.max_extra_dwell_s >= 0.0 && self.max_extra_dwell_s.is_finite()) {
            return Err(Error::config("disturbance", "max_extra_dwell_s must be >= 0"));
        }
        if !(self.exp_scale_s > 0.0) {
            return Err(Error::config("disturbance", "exp_scale_s must be > 0"));
        }
        Ok(())
    }
}

/// Draws the extra dwell `t_eps` for one stop.
///
/// Always consumes one uniform for the Bernoulli trial, plus one more when
/// the stop is disturbed, so the stream position depends only on outcomes.
pub fn sample_disturbance<R: Rng + ?Sized>(dc: &DisturbanceConfig, rng: &mut R) -> f64 {
    let hit: f64 = rng.random();
    if hit >= dc.probability_per_stop {
        return 0.0;
    }
    let u: f64 = rng.random();
    let max = dc.max_extra_dwell_s;
    match dc.distribution {
        DisturbanceDistribution::Uniform => u * max,
        DisturbanceDistribution::TruncatedExponential => {
            let s = dc.exp_scale_s;
            (-s * (1.0 - u * (1.0 - (-max / s).exp())).ln()).clamp(0.0, max)
        }
    }
}

/// First departure of every train: `(m-1) * headway` within its direction group.
pub fn initial_departures(fc: &FleetConfig) -> Vec<(usize, f64)> {
    let up = (0..fc.trains_up).map(|m| (m, m as f64 * fc.headway_s));
    let down = (0..fc.trains_down).map(|m| (fc.trains_up + m, m as f64 * fc.headway_s));
    up.chain(down).collect()
}

/// Time-integrated network energy, kWh, plus overlap time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub e_t_kwh: f64,
    pub e_b_gross_kwh: f64,
    pub e_r_kwh: f64,
    pub e_total_kwh: f64,
    /// Always `overlap_ticks * dt`; never accumulated in floating point.
    pub overlap_seconds: f64,
    pub overlap_ticks: u64,
}

/// Network power over one tick, kW.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PowerSample {
    pub t: f64,
    pub p_t_sum_kw: f64,
    pub p_b_sum_kw: f64,
    pub p_r_kw: f64,
    pub overlap: bool,
}

/// Accumulates one tick of network power into the ledger.
///
/// `p_t_sum` and `p_b_sum` are tick-averaged network powers (kW). The
/// overlap indicator is passed separately because it is judged on
/// simultaneous power, not on averages: a lone train switching from cruise
/// to braking inside one tick must not overlap with itself.
pub fn integrate_energy(
    ledger: &mut EnergyLedger,
    p_t_sum: f64,
    p_b_sum: f64,
    overlap: bool,
    beta3: f64,
    dt: f64,
) -> PowerSample {
    let p_r = p_t_sum.min(beta3 * p_b_sum);
    ledger.e_t_kwh += kws_to_kwh(p_t_sum * dt);
    ledger.e_b_gross_kwh += kws_to_kwh(p_b_sum * dt);
    ledger.e_r_kwh += kws_to_kwh(p_r * dt);
    ledger.e_total_kwh = ledger.e_t_kwh - ledger.e_r_kwh;
    if overlap {
        ledger.overlap_ticks += 1;
    }
    ledger.overlap_seconds = ledger.overlap_ticks as f64 * dt;
    PowerSample {
        t: 0.0,
        p_t_sum_kw: p_t_sum,
        p_b_sum_kw: p_b_sum,
        p_r_kw: p_r,
        overlap,
    }
}

/// Instantaneous network traction and braking power, kW.
pub fn network_power<'a>(trains: impl IntoIterator<Item = &'a TrainState>, phys: &TrainPhysics) -> (f64, f64) {
    trains.into_iter().fold((0.0, 0.0), |(t, b), ts| {
        (t + traction_power(ts, phys), b + braking_power(ts, phys))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub dt: f64,
    pub step_count: u64,
}

impl SimClock {
    pub fn t(&self) -> f64 {
        self.step_count as f64 * self.dt
    }
}

/// A train is about to depart and needs a command for its next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub train_id: usize,
    /// Index of the segment about to be run, in the train's own direction.
    pub segment_index: usize,
    pub departure_time: f64,
    /// The segment ends at the terminal, so the dwell command is unused.
    pub last_segment: bool,
}

/// One segment of a route, in internal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteSegment {
    pub distance_m: f64,
    pub nominal_cruise_ms: f64,
    pub nominal_dwell_s: f64,
    /// Distance from this direction's origin to the segment start.
    pub offset_m: f64,
}

fn route(line: &LineDataset) -> Vec<RouteSegment> {
    let mut offset = 0.0;
    line.segments
        .iter()
        .map(|s| {
            let seg = RouteSegment {
                distance_m: km_to_m(s.distance_km),
                nominal_cruise_ms: kmh_to_ms(s.nominal_cruise_kmh),
                nominal_dwell_s: s.nominal_dwell_s,
                offset_m: offset,
            };
            offset += seg.distance_m;
            seg
        })
        .collect()
}

/// Per-stop history of one train, indexed by station along its route.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub departures: Vec<f64>,
    pub arrivals: Vec<f64>,
    /// Commanded dwell at each intermediate arrival station.
    pub dwells: Vec<f64>,
    /// Extra dwell drawn at each intermediate arrival station.
    pub disturbances: Vec<f64>,
    pub cruise_commands_ms: Vec<f64>,
}

#[derive(Debug, Clone)]
struct TrainSlot {
    state: TrainState,
    plan: Option<PhasePlan>,
    /// Clock time at which the current dwell ends.
    depart_at: f64,
    awaiting: bool,
    finished_at: Option<f64>,
    log: TrainLog,
}

#[derive(Debug, Clone)]
pub struct World {
    phys: TrainPhysics,
    fleet: FleetConfig,
    disturbance: DisturbanceConfig,
    up: Vec<RouteSegment>,
    down: Vec<RouteSegment>,
    line_length_m: f64,
    clock: SimClock,
    rng: ChaCha8Rng,
    trains: Vec<TrainSlot>,
    pending: VecDeque<DecisionRequest>,
    ledger: EnergyLedger,
    trace: Option<Vec<PowerSample>>,
    order_inversions: usize,
}

const DEPART_EPS: f64 = 1e-9;

impl World {
    pub fn new(
        line: &LineDataset,
        phys: &TrainPhysics,
        fleet: &FleetConfig,
        disturbance: &DisturbanceConfig,
        dt: f64,
        seed: u64,
    ) -> Result<Self> {
        line.validate()?;
        phys.validate()?;
        fleet.validate()?;
        disturbance.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("env", "dt must be > 0"));
        }
        let up = route(line);
        let down = route(&reverse_direction(line));
        let trains = initial_departures(fleet)
            .into_iter()
            .map(|(id, t0)| {
                let direction = if id < fleet.trains_up { Direction::Up } else { Direction::Down };
                let mut state = TrainState::new(id, direction);
                state.dwell_remaining_s = t0;
                TrainSlot {
                    state,
                    plan: None,
                    depart_at: t0,
                    awaiting: false,
                    finished_at: None,
                    log: TrainLog::default(),
                }
            })
            .collect();
        Ok(World {
            phys: phys.clone(),
            fleet: fleet.clone(),
            disturbance: disturbance.clone(),
            line_length_m: km_to_m(line.total_length_km()),
            up,
            down,
            clock: SimClock { dt, step_count: 0 },
            rng: ChaCha8Rng::seed_from_u64(seed),
            trains,
            pending: VecDeque::new(),
            ledger: EnergyLedger::default(),
            trace: None,
            order_inversions: 0,
        })
    }

    /// Starts recording one [`PowerSample`] per tick.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[PowerSample]> {
        self.trace.as_deref()
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "P_T_sum_kW", "P_B_sum_kW", "P_R_kW", "overlap_flag"])?;
        for s in self.trace.iter().flatten() {
            w.write_record([
                format!("{:.1}", s.t),
                format!("{}", s.p_t_sum_kw),
                format!("{}", s.p_b_sum_kw),
                format!("{}", s.p_r_kw),
                (s.overlap as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn physics(&self) -> &TrainPhysics {
        &self.phys
    }

    pub fn fleet(&self) -> &FleetConfig {
        &self.fleet
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn time(&self) -> f64 {
        self.clock.t()
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn num_trains(&self) -> usize {
        self.trains.len()
    }

    pub fn segments_per_run(&self) -> usize {
        self.up.len()
    }

    pub fn line_length_m(&self) -> f64 {
        self.line_length_m
    }

    pub fn train(&self, id: usize) -> &TrainState {
        &self.trains[id].state
    }

    pub fn train_log(&self, id: usize) -> &TrainLog {
        &self.trains[id].log
    }

    pub fn is_finished(&self, id: usize) -> bool {
        self.trains[id].finished_at.is_some()
    }

    pub fn all_finished(&self) -> bool {
        self.trains.iter().all(|t| t.finished_at.is_some())
    }

    /// Same-direction order inversions seen so far; zero under nominal commands.
    pub fn order_inversions(&self) -> usize {
        self.order_inversions
    }

    pub fn route_of(&self, id: usize) -> &[RouteSegment] {
        match self.trains[id].state.direction {
            Direction::Up => &self.up,
            Direction::Down => &self.down,
        }
    }

    /// Distance travelled along the train's own route.
    pub fn progress_m(&self, id: usize) -> f64 {
        let slot = &self.trains[id];
        let route = self.route_of(id);
        match route.get(slot.state.segment_index) {
            Some(seg) => seg.offset_m + slot.state.position_in_segment_m,
            None => self.line_length_m,
        }
    }

    /// Position in the fixed up-direction frame, metres from the up origin.
    pub fn line_position_m(&self, id: usize) -> f64 {
        match self.trains[id].state.direction {
            Direction::Up => self.progress_m(id),
            Direction::Down => self.line_length_m - self.progress_m(id),
        }
    }

    /// Remaining distance to the station the train is heading for (or
    /// standing at); zero at the terminal.
    pub fn distance_to_next_m(&self, id: usize) -> f64 {
        let slot = &self.trains[id];
        if slot.finished_at.is_some() {
            return 0.0;
        }
        let route = self.route_of(id);
        let seg = &route[slot.state.segment_index];
        if slot.state.phase.is_moving() {
            (seg.distance_m - slot.state.position_in_segment_m).max(0.0)
        } else {
            seg.distance_m
        }
    }

    pub fn nominal_command(&self, req: &DecisionRequest) -> (f64, f64) {
        let seg = &self.route_of(req.train_id)[req.segment_index];
        (seg.nominal_cruise_ms, seg.nominal_dwell_s)
    }

    /// Runs the world until some train needs a command, returning every
    /// outstanding request. Empty means the run is over.
    pub fn advance(&mut self) -> Vec<DecisionRequest> {
        loop {
            if !self.pending.is_empty() {
                return self.pending.iter().copied().collect();
            }
            if self.all_finished() {
                return Vec::new();
            }
            self.collect_requests();
            if !self.pending.is_empty() {
                continue;
            }
            self.tick();
        }
    }

    pub fn pending(&self) -> Option<&DecisionRequest> {
        self.pending.front()
    }

    /// Gives the oldest pending request its command: cruise speed for the
    /// coming segment and commanded dwell at its arrival station.
    pub fn apply_decision(&mut self, cruise_ms: f64, dwell_s: f64) -> Result<DecisionRequest> {
        let req = self.pending.pop_front().ok_or(Error::NoPendingDecision)?;
        let seg = self.route_of(req.train_id)[req.segment_index];
        let cruise = cruise_ms.min(self.phys.speed_limit_ms);
        let plan = plan_profile(seg.distance_m, cruise, &self.phys, self.clock.dt)?;
        let slot = &mut self.trains[req.train_id];
        slot.plan = Some(plan);
        slot.state.commanded_cruise_ms = plan.commanded_cruise_ms;
        slot.state.commanded_next_dwell_s = if req.last_segment { 0.0 } else { dwell_s.max(0.0) };
        slot.awaiting = false;
        slot.log.cruise_commands_ms.push(cruise);
        Ok(req)
    }

    fn collect_requests(&mut self) {
        let horizon = self.clock.t() + self.clock.dt + DEPART_EPS;
        for (id, slot) in self.trains.iter_mut().enumerate() {
            let ready = slot.state.phase == Phase::Dwelling
                && slot.finished_at.is_none()
                && slot.plan.is_none()
                && !slot.awaiting
                && slot.depart_at <= horizon;
            if ready {
                slot.awaiting = true;
                let n = match slot.state.direction {
                    Direction::Up => self.up.len(),
                    Direction::Down => self.down.len(),
                };
                self.pending.push_back(DecisionRequest {
                    train_id: id,
                    segment_index: slot.state.segment_index,
                    departure_time: slot.depart_at,
                    last_segment: slot.state.segment_index + 1 == n,
                });
            }
        }
    }

    fn tick(&mut self) {
        let t0 = self.clock.t();
        let dt = self.clock.dt;
        let (p_t_now, p_b_now) = network_power(self.trains.iter().map(|s| &s.state), &self.phys);
        let overlap = p_t_now > 0.0 && p_b_now > 0.0;
        let mut traction_kws = 0.0;
        let mut braking_kws = 0.0;
        for id in 0..self.trains.len() {
            let (t, b) = self.tick_train(id, t0, dt);
            traction_kws += t;
            braking_kws += b;
        }
        let mut sample = integrate_energy(
            &mut self.ledger,
            traction_kws / dt,
            braking_kws / dt,
            overlap,
            self.phys.beta3,
            dt,
        );
        self.clock.step_count += 1;
        let t1 = self.clock.t();
        for slot in &mut self.trains {
            if slot.state.phase == Phase::Dwelling && slot.finished_at.is_none() {
                slot.state.dwell_remaining_s = (slot.depart_at - t1).max(0.0);
            }
        }
        self.check_order();
        if let Some(trace) = &mut self.trace {
            sample.t = t0;
            trace.push(sample);
        }
    }

    /// Moves one train through `[t0, t0 + dt)`; returns traction and braking kW·s.
    fn tick_train(&mut self, id: usize, t0: f64, dt: f64) -> (f64, f64) {
        let n_segments = self.route_of(id).len();
        let slot = &mut self.trains[id];
        let mut start = t0;
        match slot.state.phase {
            Phase::Finished => return (0.0, 0.0),
            Phase::Dwelling => {
                let Some(plan) = slot.plan else { return (0.0, 0.0) };
                if slot.depart_at >= t0 + dt - DEPART_EPS && slot.depart_at > t0 {
                    return (0.0, 0.0);
                }
                start = slot.depart_at.max(t0);
                slot.log.departures.push(start);
                let next_dwell = slot.state.commanded_next_dwell_s;
                slot.state.depart(&plan, next_dwell, start);
            }
            _ => {}
        }
        let plan = slot.plan.expect("moving train has a plan");
        let budget = t0 + dt - start;
        let e = step_train(&mut slot.state, &self.phys, &plan, start, budget);
        if let Some(after) = e.arrived_after {
            let t_arr = start + after;
            slot.log.arrivals.push(t_arr);
            slot.plan = None;
            if slot.state.segment_index + 1 == n_segments {
                slot.state.phase = Phase::Finished;
                slot.state.dwell_remaining_s = 0.0;
                slot.state.segment_index = n_segments;
                slot.finished_at = Some(t_arr);
            } else {
                let eps = sample_disturbance(&self.disturbance, &mut self.rng);
                slot.log.dwells.push(slot.state.commanded_next_dwell_s);
                slot.log.disturbances.push(eps);
                slot.state.dwell_remaining_s += eps;
                slot.state.segment_index += 1;
                slot.state.position_in_segment_m = 0.0;
                slot.depart_at = t_arr + slot.state.dwell_remaining_s;
            }
        }
        (e.traction_kws(), e.braking_kws)
    }

    fn check_order(&mut self) {
        let groups = [
            (0, self.fleet.trains_up),
            (self.fleet.trains_up, self.fleet.num_trains),
        ];
        for (lo, hi) in groups {
            for id in lo + 1..hi {
                // Train `id` left after `id - 1`; it must never be ahead.
                if self.progress_m(id) > self.progress_m(id - 1) + 1e-6 {
                    self.order_inversions += 1;
                }
            }
        }
    }

    /// Clock time at which the last train reached its terminal.
    pub fn total_time(&self) -> Result<f64> {
        self.trains
            .iter()
            .map(|t| t.finished_at.ok_or(Error::NotFinished))
            .try_fold(0.0_f64, |acc, t| Ok(acc.max(t?)))
    }

    /// Runs to completion with every train on its nominal commands.
    pub fn run_nominal(&mut self) -> Result<EnergyLedger> {
        loop {
            let reqs = self.advance();
            let Some(req) = reqs.first().copied() else { break };
            let (cruise, dwell) = self.nominal_command(&req);
            self.apply_decision(cruise, dwell)?;
        }
        Ok(self.ledger)
    }
}
