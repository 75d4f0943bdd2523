//! Single-train physics.
//!
//! Forces are in kN, speeds in m/s, distances in m, power in kW. Traction
//! and braking follow a constant-force plateau below a corner speed and a
//! hyperbolic (constant-power) law above it; resistance is the Davis
//! quadratic. Motion is integrated with fixed-step explicit Euler on speed,
//! with phase changes located inside the step so that a transition never
//! wastes the remainder of a tick.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this the step budget is considered spent.
const TIME_EPS: f64 = 1e-12;
/// Lowest peak speed tried when a segment is too short for the commanded speed.
const MIN_PEAK_SPEED_MS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TractionParams {
    pub p1_kn: f64,
    pub p2_ms: f64,
    pub v1_ms: f64,
    q1: f64,
}

impl TractionParams {
    /// `q1` is derived as `p1 * (v1 + p2)` so the two branches meet at `v1`.
    pub fn new(p1_kn: f64, p2_ms: f64, v1_ms: f64) -> Result<Self> {
        if !(p1_kn > 0.0 && v1_ms > 0.0 && p2_ms >= 0.0) {
            return Err(Error::config("physics.traction", "need p1 > 0, v1 > 0, p2 >= 0"));
        }
        Ok(TractionParams {
            p1_kn,
            p2_ms,
            v1_ms,
            q1: p1_kn * (v1_ms + p2_ms),
        })
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakingParams {
    pub p3_kn: f64,
    pub p4_ms: f64,
    pub v2_ms: f64,
    q2: f64,
}

impl BrakingParams {
    pub fn new(p3_kn: f64, p4_ms: f64, v2_ms: f64) -> Result<Self> {
        if !(p3_kn > 0.0 && v2_ms > 0.0 && p4_ms >= 0.0) {
            return Err(Error::config("physics.braking", "need p3 > 0, v2 > 0, p4 >= 0"));
        }
        Ok(BrakingParams {
            p3_kn,
            p4_ms,
            v2_ms,
            q2: p3_kn * (v2_ms + p4_ms),
        })
    }

    pub fn q2(&self) -> f64 {
        self.q2
    }
}

/// Davis coefficients: `lambda1 v^2 + lambda2 v + lambda3` kN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl ResistanceParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda2 >= 0.0 && lambda3 > 0.0) {
            return Err(Error::config(
                "physics.resistance",
                "need lambda1 > 0, lambda2 >= 0, lambda3 > 0",
            ));
        }
        Ok(ResistanceParams {
            lambda1,
            lambda2,
            lambda3,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPhysics {
    pub mass_kg: f64,
    pub traction: TractionParams,
    pub braking: BrakingParams,
    pub resistance: ResistanceParams,
    /// Electrical to mechanical (traction).
    pub beta1: f64,
    /// Mechanical to electrical (braking).
    pub beta2: f64,
    /// Reuse efficiency of regenerated power.
    pub beta3: f64,
    /// Constant `G sin(theta)` in kN, positive opposing motion.
    pub gravity_component_kn: f64,
    pub speed_limit_ms: f64,
}

impl TrainPhysics {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass_kg > 0.0 && self.mass_kg.is_finite()) {
            return Err(Error::config("physics", "mass must be > 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::config("physics.efficiency", format!("{name} must be in (0, 1]")));
            }
        }
        if !(self.speed_limit_ms > 0.0) {
            return Err(Error::config("physics", "speed limit must be > 0"));
        }
        if !self.gravity_component_kn.is_finite() {
            return Err(Error::config("physics", "gravity component must be finite"));
        }
        Ok(())
    }

    /// m/s² produced by `force_kn` on this train.
    #[inline]
    fn accel(&self, force_kn: f64) -> f64 {
        force_kn * 1000.0 / self.mass_kg
    }

    /// Net acceleration under full traction.
    #[inline]
    pub fn traction_accel(&self, v: f64) -> f64 {
        self.accel(
            traction_force(v, &self.traction) - resistance_force(v, &self.resistance) - self.gravity_component_kn,
        )
    }

    /// Net deceleration (positive) under full service braking.
    #[inline]
    pub fn braking_decel(&self, v: f64) -> f64 {
        self.accel(braking_force(v, &self.braking) + resistance_force(v, &self.resistance) + self.gravity_component_kn)
    }

    /// Traction force needed to hold speed `v`.
    #[inline]
    fn holding_force(&self, v: f64) -> f64 {
        (resistance_force(v, &self.resistance) + self.gravity_component_kn).max(0.0)
    }
}

pub fn traction_force(v: f64, tp: &TractionParams) -> f64 {
    if v < tp.v1_ms {
        tp.p1_kn
    } else {
        tp.q1 / (v + tp.p2_ms)
    }
}

pub fn resistance_force(v: f64, rp: &ResistanceParams) -> f64 {
    rp.lambda1 * v * v + rp.lambda2 * v + rp.lambda3
}

/// Braking force magnitude; the integrator applies the sign.
pub fn braking_force(v: f64, bp: &BrakingParams) -> f64 {
    if v < bp.v2_ms {
        bp.p3_kn
    } else {
        bp.q2 / (v + bp.p4_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Dwelling,
    Accelerating,
    Cruising,
    Braking,
    Finished,
}

impl Phase {
    pub fn is_moving(self) -> bool {
        matches!(self, Phase::Accelerating | Phase::Cruising | Phase::Braking)
    }
}

/// Simulation-clock time at which each phase was last entered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimestamps {
    pub accel: Option<f64>,
    pub cruise: Option<f64>,
    pub decel: Option<f64>,
    pub dwell: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub segment_distance_m: f64,
    pub accel_distance_m: f64,
    pub cruise_distance_m: f64,
    pub brake_distance_m: f64,
    pub commanded_cruise_ms: f64,
    /// True when the segment was too short and the peak speed was lowered.
    pub lowered: bool,
}

impl PhasePlan {
    pub fn brake_start_m(&self) -> f64 {
        self.accel_distance_m + self.cruise_distance_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub train_id: usize,
    pub direction: Direction,
    pub segment_index: usize,
    pub position_in_segment_m: f64,
    pub speed_ms: f64,
    pub phase: Phase,
    pub dwell_remaining_s: f64,
    pub commanded_cruise_ms: f64,
    pub commanded_next_dwell_s: f64,
    pub timestamps: PhaseTimestamps,
}

impl TrainState {
    pub fn new(train_id: usize, direction: Direction) -> Self {
        TrainState {
            train_id,
            direction,
            segment_index: 0,
            position_in_segment_m: 0.0,
            speed_ms: 0.0,
            phase: Phase::Dwelling,
            dwell_remaining_s: 0.0,
            commanded_cruise_ms: 0.0,
            commanded_next_dwell_s: 0.0,
            timestamps: PhaseTimestamps::default(),
        }
    }

    /// Starts the next segment at clock time `t`.
    pub fn depart(&mut self, plan: &PhasePlan, next_dwell_s: f64, t: f64) {
        self.position_in_segment_m = 0.0;
        self.speed_ms = 0.0;
        self.phase = Phase::Accelerating;
        self.dwell_remaining_s = 0.0;
        self.commanded_cruise_ms = plan.commanded_cruise_ms;
        self.commanded_next_dwell_s = next_dwell_s;
        self.timestamps.accel = Some(t);
    }
}

/// Distance and time to run from `v_from` to `v_to` under constant-sign
/// acceleration `acc(v)`, Euler in speed with the crossing located exactly.
fn run_between(v_from: f64, v_to: f64, dt: f64, acc: impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    let rising = v_to > v_from;
    let (mut v, mut x, mut t) = (v_from, 0.0, 0.0);
    // Bounded so an unattainable target cannot spin forever.
    for _ in 0..10_000_000 {
        if (rising && v >= v_to) || (!rising && v <= v_to) {
            return Some((x, t));
        }
        let a = acc(v);
        if (rising && a <= 0.0) || (!rising && a >= 0.0) {
            return None;
        }
        let mut h = dt;
        let v_next = v + a * h;
        if (rising && v_next >= v_to) || (!rising && v_next <= v_to) {
            h = (v_to - v) / a;
            x += 0.5 * (v + v_to) * h;
            t += h;
            return Some((x, t));
        }
        x += 0.5 * (v + v_next) * h;
        v = v_next;
        t += h;
    }
    None
}

/// Distance covered accelerating from rest to `v` at full traction.
pub fn accel_distance(v: f64, phys: &TrainPhysics, dt: f64) -> Result<f64> {
    run_between(0.0, v, dt, |u| phys.traction_accel(u))
        .map(|(x, _)| x)
        .ok_or_else(|| Error::config("physics", format!("traction cannot reach {v:.3} m/s")))
}

/// Distance covered braking from `v` to rest at full service braking.
pub fn brake_distance(v: f64, phys: &TrainPhysics, dt: f64) -> Result<f64> {
    run_between(v, 0.0, dt, |u| -phys.braking_decel(u))
        .map(|(x, _)| x)
        .ok_or_else(|| Error::config("physics", format!("braking cannot stop from {v:.3} m/s")))
}

/// Splits a segment into accelerate / cruise / brake distances.
///
/// If accelerating to `cruise_ms` and braking back to rest does not fit in
/// `distance_m`, the peak speed is lowered by bisection to the largest value
/// that fits and the plan is marked `lowered` with zero cruise distance.
pub fn plan_profile(distance_m: f64, cruise_ms: f64, phys: &TrainPhysics, dt: f64) -> Result<PhasePlan> {
    if !(distance_m > 0.0) {
        return Err(Error::InfeasibleSegment { distance_m });
    }
    if !(cruise_ms > 0.0 && cruise_ms <= phys.speed_limit_ms * (1.0 + 1e-12)) {
        return Err(Error::config(
            "plan_profile",
            format!("cruise speed {cruise_ms:.3} m/s outside (0, limit]"),
        ));
    }
    let cruise_ms = cruise_ms.min(phys.speed_limit_ms);
    let footprint = |v: f64| -> Result<(f64, f64)> { Ok((accel_distance(v, phys, dt)?, brake_distance(v, phys, dt)?)) };

    let (acc, brk) = footprint(cruise_ms)?;
    if acc + brk <= distance_m {
        return Ok(PhasePlan {
            segment_distance_m: distance_m,
            accel_distance_m: acc,
            cruise_distance_m: distance_m - acc - brk,
            brake_distance_m: brk,
            commanded_cruise_ms: cruise_ms,
            lowered: false,
        });
    }

    let (acc_lo, brk_lo) = footprint(MIN_PEAK_SPEED_MS)?;
    if acc_lo + brk_lo > distance_m {
        return Err(Error::InfeasibleSegment { distance_m });
    }
    let (mut lo, mut hi) = (MIN_PEAK_SPEED_MS, cruise_ms);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (a, b) = footprint(mid)?;
        if a + b <= distance_m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (acc, brk) = footprint(lo)?;
    Ok(PhasePlan {
        segment_distance_m: distance_m,
        accel_distance_m: acc,
        cruise_distance_m: (distance_m - acc - brk).max(0.0),
        brake_distance_m: brk,
        commanded_cruise_ms: lo,
        lowered: true,
    })
}

/// Energy drawn and regenerated over one call to [`step_train`], in kW·s.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepEnergy {
    /// Traction energy while accelerating.
    pub accel_kws: f64,
    /// Resistance-balancing traction energy while cruising.
    pub cruise_kws: f64,
    /// Electrical energy produced while braking.
    pub braking_kws: f64,
    /// Seconds into the step at which the train arrived, if it did.
    pub arrived_after: Option<f64>,
}

impl StepEnergy {
    pub fn traction_kws(&self) -> f64 {
        self.accel_kws + self.cruise_kws
    }
}

/// Advances a moving train by `dt` seconds starting at clock time `t0`.
///
/// Acceleration runs at full traction until the commanded speed is reached
/// (then cruise at exactly that speed) or the braking point is crossed.
/// Braking runs at full service braking until the train reaches the end of
/// the segment or stops. Arrival parks the train at the platform with
/// `dwell_remaining = commanded_next_dwell`; any remaining time in the step
/// is left unused and reported through `arrived_after`.
pub fn step_train(ts: &mut TrainState, phys: &TrainPhysics, plan: &PhasePlan, t0: f64, dt: f64) -> StepEnergy {
    let mut out = StepEnergy::default();
    let mut elapsed = 0.0;
    let seg = plan.segment_distance_m;
    let brake_start = plan.brake_start_m();

    while dt - elapsed > TIME_EPS {
        let budget = dt - elapsed;
        let v = ts.speed_ms;
        let x = ts.position_in_segment_m;
        match ts.phase {
            Phase::Accelerating => {
                let a = phys.traction_accel(v);
                let force = traction_force(v, &phys.traction);
                let target = ts.commanded_cruise_ms;
                let mut h = budget;
                let mut next = None;
                if x >= brake_start {
                    next = Some(Phase::Braking);
                    h = 0.0;
                } else {
                    if a > 0.0 && v + a * h >= target {
                        h = ((target - v) / a).max(0.0);
                        next = Some(Phase::Cruising);
                    }
                    if let Some(hb) = time_to_cover(v, a, brake_start - x) {
                        if hb <= h {
                            h = hb;
                            next = Some(Phase::Braking);
                        }
                    }
                }
                let v_new = match next {
                    Some(Phase::Cruising) => target,
                    _ => (v + a * h).clamp(0.0, phys.speed_limit_ms),
                };
                out.accel_kws += force * 0.5 * (v + v_new) * h / phys.beta1;
                ts.position_in_segment_m = match next {
                    Some(Phase::Braking) => brake_start.max(x),
                    _ => x + 0.5 * (v + v_new) * h,
                };
                ts.speed_ms = v_new;
                elapsed += h;
                match next {
                    Some(Phase::Cruising) => {
                        ts.phase = Phase::Cruising;
                        ts.timestamps.cruise = Some(t0 + elapsed);
                    }
                    Some(Phase::Braking) => {
                        ts.phase = Phase::Braking;
                        ts.timestamps.decel = Some(t0 + elapsed);
                    }
                    _ => {}
                }
            }
            Phase::Cruising => {
                let mut h = budget;
                let remaining = brake_start - x;
                let reaches = v > 0.0 && remaining <= v * h;
                if reaches {
                    h = (remaining / v).max(0.0);
                }
                out.cruise_kws += phys.holding_force(v) * v * h / phys.beta1;
                ts.position_in_segment_m = if reaches { brake_start } else { x + v * h };
                elapsed += h;
                if reaches || v <= 0.0 {
                    ts.phase = Phase::Braking;
                    ts.timestamps.decel = Some(t0 + elapsed);
                }
            }
            Phase::Braking => {
                let d = phys.braking_decel(v);
                let force = braking_force(v, &phys.braking);
                let mut h = budget;
                let mut arrive = false;
                if d > 0.0 && v - d * h <= 0.0 {
                    h = v / d;
                    arrive = true;
                }
                if let Some(hx) = time_to_cover(v, -d, seg - x) {
                    if hx <= h {
                        h = hx;
                        arrive = true;
                    }
                }
                let v_new = if arrive { (v - d * h).max(0.0) } else { v - d * h };
                out.braking_kws += force * 0.5 * (v + v_new) * h * phys.beta2;
                ts.position_in_segment_m = (x + 0.5 * (v + v_new) * h).min(seg);
                ts.speed_ms = v_new.clamp(0.0, phys.speed_limit_ms);
                elapsed += h;
                if arrive {
                    // Stopping a few centimetres short is absorbed at the platform.
                    ts.position_in_segment_m = seg;
                    ts.speed_ms = 0.0;
                    ts.phase = Phase::Dwelling;
                    ts.dwell_remaining_s = ts.commanded_next_dwell_s;
                    ts.timestamps.dwell = Some(t0 + elapsed);
                    out.arrived_after = Some(elapsed);
                    break;
                }
            }
            Phase::Dwelling | Phase::Finished => break,
        }
    }
    out
}

/// Time for `x(h) = v h + a h^2 / 2` to reach `gap`, if that happens.
fn time_to_cover(v: f64, a: f64, gap: f64) -> Option<f64> {
    if gap <= 0.0 {
        return Some(0.0);
    }
    if a.abs() < 1e-15 {
        return (v > 0.0).then(|| gap / v);
    }
    let disc = v * v + 2.0 * a * gap;
    if disc < 0.0 {
        return None;
    }
    // Smallest positive root, written to avoid cancellation.
    let h = 2.0 * gap / (v + disc.sqrt());
    (h.is_finite() && h >= 0.0).then_some(h)
}

/// Instantaneous traction power in kW.
pub fn traction_power(ts: &TrainState, phys: &TrainPhysics) -> f64 {
    let v = ts.speed_ms;
    match ts.phase {
        Phase::Accelerating => traction_force(v, &phys.traction) * v / phys.beta1,
        Phase::Cruising => phys.holding_force(v) * v / phys.beta1,
        _ => 0.0,
    }
}

/// Instantaneous regenerated braking power in kW.
pub fn braking_power(ts: &TrainState, phys: &TrainPhysics) -> f64 {
    match ts.phase {
        Phase::Braking => braking_force(ts.speed_ms, &phys.braking) * ts.speed_ms * phys.beta2,
        _ => 0.0,
    }
}

/// One stop-to-stop run of a single train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRun {
    pub plan: PhasePlan,
    pub travel_time_s: f64,
    pub accel_kws: f64,
    pub cruise_kws: f64,
    pub braking_kws: f64,
}

/// Drives one train from rest over a full segment with step `dt`.
pub fn traverse_segment(distance_m: f64, cruise_ms: f64, phys: &TrainPhysics, dt: f64) -> Result<SegmentRun> {
    let plan = plan_profile(distance_m, cruise_ms, phys, dt)?;
    let mut ts = TrainState::new(0, Direction::Up);
    ts.depart(&plan, 0.0, 0.0);
    let mut run = SegmentRun {
        plan,
        travel_time_s: 0.0,
        accel_kws: 0.0,
        cruise_kws: 0.0,
        braking_kws: 0.0,
    };
    let mut t = 0.0;
    let mut steps: u64 = 0;
    while ts.phase.is_moving() {
        let e = step_train(&mut ts, phys, &plan, t, dt);
        run.accel_kws += e.accel_kws;
        run.cruise_kws += e.cruise_kws;
        run.braking_kws += e.braking_kws;
        if let Some(after) = e.arrived_after {
            run.travel_time_s = t + after;
        }
        steps += 1;
        t = steps as f64 * dt;
        if steps > 100_000_000 {
            return Err(Error::InfeasibleSegment { distance_m });
        }
    }
    Ok(run)
}
