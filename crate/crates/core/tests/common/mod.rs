#![allow(dead_code)]

use metro_regen::config::default_physics;
use metro_regen::dynamics::TrainPhysics;
use metro_regen::line_data::{LineDataset, SegmentRecord};
use metro_regen::mdp_env::{ActionBounds, EnvConfig, MetroEnv};
use metro_regen::network_sim::{DisturbanceConfig, FleetConfig};

/// Two trains (one each way) on a three-station line.
pub fn toy_env() -> MetroEnv {
    let seg = |a: &str, b: &str, d: f64| SegmentRecord {
        from_station: a.into(),
        to_station: b.into(),
        distance_km: d,
        nominal_cruise_kmh: 60.0,
        nominal_dwell_s: 30.0,
    };
    let line = LineDataset::new("toy", vec![seg("A", "B", 1.2), seg("B", "C", 0.9)], 80.0).unwrap();
    let cfg = EnvConfig {
        dt_s: 0.5,
        reward_scale_s: 100.0,
        time_horizon_s: 800.0,
        seed: 0,
        fleet: FleetConfig {
            num_trains: 2,
            headway_s: 120.0,
            trains_up: 1,
            trains_down: 1,
        },
        disturbance: DisturbanceConfig::none(),
        bounds: ActionBounds::default(),
    };
    MetroEnv::new(line, default_physics(), cfg).unwrap()
}

/// Result of the fine-step reference integration of one segment.
#[derive(Debug, Clone, Copy)]
pub struct OracleRun {
    pub travel_time_s: f64,
    pub accel_kws: f64,
    pub cruise_kws: f64,
    pub braking_kws: f64,
}

fn traction_kn(p: &TrainPhysics, v: f64) -> f64 {
    let t = &p.traction;
    if v < t.v1_ms {
        t.p1_kn
    } else {
        t.p1_kn * (t.v1_ms + t.p2_ms) / (v + t.p2_ms)
    }
}

fn braking_kn(p: &TrainPhysics, v: f64) -> f64 {
    let b = &p.braking;
    if v < b.v2_ms {
        b.p3_kn
    } else {
        b.p3_kn * (b.v2_ms + b.p4_ms) / (v + b.p4_ms)
    }
}

fn resistance_kn(p: &TrainPhysics, v: f64) -> f64 {
    let r = &p.resistance;
    r.lambda1 * v * v + r.lambda2 * v + r.lambda3 + p.gravity_component_kn
}

fn decel(p: &TrainPhysics, v: f64) -> f64 {
    (braking_kn(p, v) + resistance_kn(p, v)) * 1000.0 / p.mass_kg
}

/// Stopping distance under full braking as a function of speed:
/// cumulative trapezoid quadrature of `u / decel(u)` on a fine speed grid.
pub struct StopTable {
    du: f64,
    cum: Vec<f64>,
}

impl StopTable {
    pub fn new(p: &TrainPhysics) -> Self {
        let du = 1e-4;
        let n = (p.speed_limit_ms / du).ceil() as usize + 2;
        let f = |u: f64| u / decel(p, u);
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let (a, b) = (i as f64 * du, (i + 1) as f64 * du);
            cum.push(cum[i] + 0.5 * (f(a) + f(b)) * du);
        }
        StopTable { du, cum }
    }

    pub fn distance(&self, v: f64) -> f64 {
        let s = (v / self.du).max(0.0);
        let i = (s as usize).min(self.cum.len() - 2);
        let w = s - i as f64;
        self.cum[i] * (1.0 - w) + self.cum[i + 1] * w
    }
}

/// Plain fixed-step integration with no event location: accelerate, hold
/// the cruise speed, brake once the stopping distance reaches the
/// remaining distance, stop at zero speed or the platform.
pub fn brute_force_run(p: &TrainPhysics, stops: &StopTable, distance_m: f64, cruise_ms: f64, h: f64) -> OracleRun {
    #[derive(PartialEq)]
    enum Mode {
        Accel,
        Cruise,
        Brake,
    }
    let (mut x, mut v, mut t) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut mode = Mode::Accel;
    let mut out = OracleRun {
        travel_time_s: 0.0,
        accel_kws: 0.0,
        cruise_kws: 0.0,
        braking_kws: 0.0,
    };
    loop {
        if mode != Mode::Brake && distance_m - x <= stops.distance(v) {
            mode = Mode::Brake;
        }
        match mode {
            Mode::Accel => {
                let a = (traction_kn(p, v) - resistance_kn(p, v)) * 1000.0 / p.mass_kg;
                let vn = (v + a * h).min(cruise_ms);
                out.accel_kws += traction_kn(p, v) * 0.5 * (v + vn) * h / p.beta1;
                x += 0.5 * (v + vn) * h;
                v = vn;
                if v >= cruise_ms {
                    mode = Mode::Cruise;
                }
            }
            Mode::Cruise => {
                out.cruise_kws += resistance_kn(p, v) * v * h / p.beta1;
                x += v * h;
            }
            Mode::Brake => {
                let vn = (v - decel(p, v) * h).max(0.0);
                out.braking_kws += braking_kn(p, v) * 0.5 * (v + vn) * h * p.beta2;
                x += 0.5 * (v + vn) * h;
                v = vn;
            }
        }
        t += h;
        if mode == Mode::Brake && (v <= 0.0 || x >= distance_m) {
            break;
        }
    }
    out.travel_time_s = t;
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Central finite-difference check of an analytic gradient.
/// Returns the worst relative error (with a small absolute floor).
pub fn worst_fd_error(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[i]).abs() / (fd.abs().max(grad[i].abs()).max(1e-6));
        worst = worst.max(err);
    }
    worst
}
