//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so every criterion reports even when an earlier one
//! fails. Set `ACCEPTANCE_SKIP_TRAINING=1` to skip the two training criteria
//! (7 and 8) during development; they are reported as SKIP.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use metro_regen::config::{default_env, default_physics, default_ppo, RunConfig};
use metro_regen::dynamics::traverse_segment;
use metro_regen::line_data::{reverse_direction, LineDataset};
use metro_regen::mdp_env::MetroEnv;
use metro_regen::network_sim::{initial_departures, DisturbanceConfig, World};
use metro_regen::ppo::checkpoint::Checkpoint;
use metro_regen::ppo::evaluate::{evaluate, evaluation_seeds, EvalMode};
use metro_regen::ppo::loss::{losses, losses_and_grad, probability_ratio, LossWeights, Sample};
use metro_regen::ppo::policy::{log_prob, ActorCritic};
use metro_regen::ppo::trainer::{IterationLog, Trainer};
use metro_regen::report::{median, truncate_1dp, ComparisonReport, RunReport, Stat};
use metro_regen::units::{km_to_m, kmh_to_ms};

use common::{brute_force_run, rel_err, worst_fd_error, StopTable};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Option<Outcome> {
    Some(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn physics_oracle() -> Option<Outcome> {
    let start = Instant::now();
    let phys = default_physics();
    let line = LineDataset::xiamen_line1();
    let stops = StopTable::new(&phys);
    let rows: Vec<_> = line
        .segments
        .iter()
        .map(|s| {
            let (d, v) = (km_to_m(s.distance_km), kmh_to_ms(s.nominal_cruise_kmh));
            let sim = traverse_segment(d, v, &phys, 0.1).expect("feasible segment");
            let oracle = brute_force_run(&phys, &stops, d, v, 0.001);
            let errs = [
                rel_err(sim.travel_time_s, oracle.travel_time_s),
                rel_err(sim.accel_kws, oracle.accel_kws),
                rel_err(sim.cruise_kws, oracle.cruise_kws),
                rel_err(sim.braking_kws, oracle.braking_kws),
            ];
            errs.iter().copied().fold(0.0, f64::max)
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let worst = rows.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= 0.005 && secs < 10.0,
        format!("{} segments, worst relative error {:.3e} (limit 5e-3), {secs:.2} s (limit 10 s)", rows.len(), worst),
    )
}

fn energy_identities() -> Option<Outcome> {
    let env = MetroEnv::new(LineDataset::xiamen_line1(), default_physics(), default_env()).unwrap();
    let beta3 = env.physics().beta3;
    let results: Vec<(bool, bool, bool, f64)> = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let mut env = env.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
            env.reset(rng.random::<u64>() >> 24).unwrap();
            let (mut identity, mut bounds) = (true, true);
            let (mut ticks, mut reward_sum) = (0u64, 0.0);
            while !env.is_done() {
                let a = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
                let r = env.step(a).unwrap();
                let l = r.info.ledger;
                identity &= l.e_total_kwh == l.e_t_kwh - l.e_r_kwh;
                bounds &= l.e_r_kwh >= 0.0
                    && l.e_r_kwh <= l.e_t_kwh
                    && l.e_r_kwh <= beta3 * l.e_b_gross_kwh * (1.0 + 1e-12);
                ticks += r.info.overlap_ticks_gained;
                reward_sum += r.reward;
            }
            let l = *env.world().unwrap().ledger();
            let dt = env.config().dt_s;
            let telescopes = ticks == l.overlap_ticks && ticks as f64 * dt == l.overlap_seconds;
            let reward_gap = (reward_sum * env.config().reward_scale_s - l.overlap_seconds).abs();
            (identity, bounds, telescopes, reward_gap)
        })
        .collect();
    let identity = results.iter().all(|r| r.0);
    let bounds = results.iter().all(|r| r.1);
    let telescopes = results.iter().all(|r| r.2);
    let gap = results.iter().map(|r| r.3).fold(0.0, f64::max);
    outcome(
        identity && bounds && telescopes,
        format!(
            "100 episodes: E_total = E_T - E_R bitwise: {identity}; 0 <= E_R <= min(E_T, b3*E_B) every step: {bounds}; \
             overlap ticks telescope exactly: {telescopes} (scaled float reward sum within {gap:.1e} s)"
        ),
    )
}

fn timetable() -> Option<Outcome> {
    let line = LineDataset::xiamen_line1();
    let phys = default_physics();
    let env_cfg = default_env();
    let dt = env_cfg.dt_s;
    let mut world = World::new(&line, &phys, &env_cfg.fleet, &DisturbanceConfig::none(), dt, 0).unwrap();
    world.run_nominal().unwrap();
    let reversed = reverse_direction(&line);
    let schedule = |l: &LineDataset, t0: f64| {
        let mut t = t0;
        let mut out = vec![t];
        for s in &l.segments[..l.segments.len() - 1] {
            let run = traverse_segment(km_to_m(s.distance_km), kmh_to_ms(s.nominal_cruise_kmh), &phys, dt).unwrap();
            t += run.travel_time_s + s.nominal_dwell_s;
            out.push(t);
        }
        out
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (id, t0) in initial_departures(&env_cfg.fleet) {
        let l = if id < env_cfg.fleet.trains_up { &line } else { &reversed };
        let expect = schedule(l, t0);
        let got = &world.train_log(id).departures;
        if got.len() != expect.len() {
            return outcome(false, format!("train {id}: {} departures, expected {}", got.len(), expect.len()));
        }
        for (g, e) in got.iter().zip(&expect) {
            worst = worst.max((g - e).abs());
            count += 1;
        }
    }
    outcome(
        worst <= dt,
        format!("{count} departures, worst deviation from the closed-form timetable {worst:.3e} s (limit {dt} s)"),
    )
}

fn random_fixture(rng: &mut ChaCha8Rng) -> (ActorCritic, Vec<Sample>) {
    let input = 5;
    let mut ac = ActorCritic::with_layers(input, &[8, 8], rng);
    for p in ac.params.iter_mut() {
        *p += rng.random_range(-0.5..0.5);
    }
    let batch = (0..10)
        .map(|_| {
            let obs: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, lp, _) = ac.act(&obs, rng).unwrap();
            Sample {
                obs,
                action: a,
                old_log_prob: lp + rng.random_range(-0.5..0.5),
                advantage: rng.random_range(-2.0..2.0),
                value_target: rng.random_range(-1.5..1.5),
            }
        })
        .collect();
    (ac, batch)
}

fn gradients() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let clip = 0.2;
    let cases = [
        ("L_clip", LossWeights::SURROGATE),
        ("L_vf", LossWeights::VALUE),
        ("L_s", LossWeights::ENTROPY),
        ("total", LossWeights::ppo(0.5, 0.1)),
    ];
    let mut worst = [0.0_f64; 4];
    for _ in 0..20 {
        let (ac, batch) = random_fixture(&mut rng);
        for (k, (_, w)) in cases.iter().enumerate() {
            let (_, grad) = losses_and_grad(&ac, &batch, clip, *w);
            let f = |p: &[f64]| {
                let mut probe = ac.clone();
                probe.params.copy_from_slice(p);
                losses(&probe, &batch, clip, *w).total
            };
            worst[k] = worst[k].max(worst_fd_error(f, &ac.params, &grad, 1e-5));
        }
    }
    let detail = cases
        .iter()
        .zip(worst)
        .map(|((name, _), e)| format!("{name} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        worst.iter().all(|&e| e <= 1e-4),
        format!("20 draws, width-8 networks, worst relative error: {detail} (limit 1e-4)"),
    )
}

fn ppo_mechanics() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst_ratio, mut worst_mean, mut clip_violations, mut checked) = (0.0_f64, 0.0_f64, 0usize, 0usize);
    for _ in 0..20 {
        let (ac, mut batch) = random_fixture(&mut rng);
        let eps = 0.2;
        // Perturbed old log-probs: clip bound pointwise.
        for s in &batch {
            let r = probability_ratio(&ac, s);
            let clipped = -(r * s.advantage).min(r.clamp(1.0 - eps, 1.0 + eps) * s.advantage);
            let unclipped = -(r * s.advantage);
            if clipped < unclipped {
                clip_violations += 1;
            }
            checked += 1;
        }
        // theta_old = theta: ratios are 1 and the loss is -mean(A).
        for s in batch.iter_mut() {
            let (m, ls) = ac.policy_forward(&s.obs).unwrap();
            s.old_log_prob = log_prob(&s.action, &m, &ls);
        }
        for s in &batch {
            worst_ratio = worst_ratio.max((probability_ratio(&ac, s) - 1.0).abs());
        }
        let mean_adv = batch.iter().map(|s| s.advantage).sum::<f64>() / batch.len() as f64;
        let l = losses(&ac, &batch, eps, LossWeights::SURROGATE).surrogate;
        worst_mean = worst_mean.max((l + mean_adv).abs());
    }
    outcome(
        worst_ratio <= 1e-12 && worst_mean <= 1e-12 && clip_violations == 0,
        format!(
            "|ratio - 1| <= {worst_ratio:.1e}, |L_clip + mean(A)| <= {worst_mean:.1e}, \
             clip more favourable in {clip_violations} of {checked} samples"
        ),
    )
}

fn determinism() -> Option<Outcome> {
    let cfg = RunConfig::shipped();
    let mut ppo = default_ppo();
    ppo.total_iterations = 3;
    let run = || {
        let env = MetroEnv::new(cfg.line.clone(), cfg.physics.clone(), cfg.env.clone()).unwrap();
        let mut t = Trainer::new(ppo.clone(), env).unwrap();
        let logs = t.train(|_, _| Ok(())).unwrap();
        // Throughput is wall-clock and excluded from the comparison.
        let masked: Vec<String> = logs
            .iter()
            .map(|r| format!("{},{:?},{:?},{:?},{:?}", r.iter, r.mean_ep_reward, r.pg_loss, r.value_loss, r.entropy_loss))
            .collect();
        (masked, Checkpoint::from_trainer(&t).to_json().unwrap())
    };
    let (log_a, ck_a) = run();
    let (log_b, ck_b) = run();
    let env = MetroEnv::new(cfg.line.clone(), cfg.physics.clone(), cfg.env.clone()).unwrap();
    let ck = Checkpoint::from_json(&ck_a).unwrap();
    let seeds = evaluation_seeds(3);
    let eval = |c: &Checkpoint| format!("{:?}", c.evaluate(&env, &seeds, EvalMode::Deterministic).unwrap());
    let reloaded = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
    let (e1, e2, e3) = (eval(&ck), eval(&ck), eval(&reloaded));
    let logs_same = log_a == log_b;
    let cks_same = ck_a == ck_b;
    let eval_same = e1 == e2 && e2 == e3;
    outcome(
        logs_same && cks_same && eval_same,
        format!(
            "training logs identical: {logs_same} (steps_per_sec excluded), checkpoints byte-identical: {cks_same}, \
             evaluation identical across runs and reload: {eval_same}"
        ),
    )
}

struct SeedRun {
    seed: u64,
    logs: Vec<IterationLog>,
    overlap_ratio: f64,
    energy_ratio: f64,
}

fn train_seeds() -> (Vec<SeedRun>, f64, f64, usize) {
    let cfg = RunConfig::shipped();
    let env = MetroEnv::new(cfg.line.clone(), cfg.physics.clone(), cfg.env.clone()).unwrap();
    let eval_seeds = evaluation_seeds(20);
    let mut base_env = env.clone();
    let base: Vec<_> = eval_seeds.iter().map(|&s| base_env.run_baseline(s).unwrap()).collect();
    let base_overlap = median(&base.iter().map(|e| e.ledger.overlap_seconds).collect::<Vec<_>>());
    let base_energy = median(&base.iter().map(|e| e.ledger.e_total_kwh).collect::<Vec<_>>());
    let ppo = cfg.ppo.clone();
    let steps = ppo.total_iterations * ppo.n_steps;
    let runs = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let mut p = ppo.clone();
            p.seed = seed;
            let mut t = Trainer::new(p, env.clone()).unwrap();
            let logs = t.train(|_, _| Ok(())).unwrap();
            let eps = evaluate(t.policy(), &env, &eval_seeds, EvalMode::Deterministic).unwrap();
            let overlap = median(&eps.iter().map(|e| e.ledger.overlap_seconds).collect::<Vec<_>>());
            let energy = median(&eps.iter().map(|e| e.ledger.e_total_kwh).collect::<Vec<_>>());
            SeedRun {
                seed,
                logs,
                overlap_ratio: overlap / base_overlap,
                energy_ratio: energy / base_energy,
            }
        })
        .collect();
    (runs, base_overlap, base_energy, steps)
}

fn learning(runs: &[SeedRun], base_overlap: f64, base_energy: f64, steps: usize) -> Option<Outcome> {
    let passing = runs.iter().filter(|r| r.overlap_ratio >= 1.15 && r.energy_ratio <= 0.98).count();
    let per_seed = runs
        .iter()
        .map(|r| format!("seed {}: overlap x{:.3}, E_total x{:.3}", r.seed, r.overlap_ratio, r.energy_ratio))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(
        passing >= 3,
        format!(
            "{passing}/5 seeds meet overlap >= 1.15x and E_total <= 0.98x the baseline medians \
             ({base_overlap:.1} s, {base_energy:.1} kWh) after {steps} steps each [{per_seed}]"
        ),
    )
}

/// The 10-iteration moving average never decreases over the first 100 iterations.
fn monotone_moving_average(logs: &[IterationLog]) -> (bool, usize) {
    let r: Vec<f64> = logs.iter().take(100).map(|l| l.mean_ep_reward).collect();
    if r.len() < 100 {
        return (false, 0);
    }
    let ma: Vec<f64> = r.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    let drops = ma.windows(2).filter(|w| w[1] < w[0]).count();
    (drops == 0, drops)
}

fn reward_curve(runs: &[SeedRun]) -> Option<Outcome> {
    let checks: Vec<(u64, bool, usize)> = runs
        .iter()
        .map(|r| {
            let (ok, drops) = monotone_moving_average(&r.logs);
            (r.seed, ok, drops)
        })
        .collect();
    let passing = checks.iter().filter(|c| c.1).count();
    let per_seed = checks
        .iter()
        .map(|(s, _, d)| format!("seed {s}: {d} decreases"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(
        passing >= 3,
        format!("{passing}/5 seeds have a nondecreasing 10-iteration moving average over iterations 1-100 [{per_seed}]"),
    )
}

fn fixture_report(label: &str, e_t: f64, overlap: f64) -> RunReport {
    let stat = |x: f64| Stat {
        mean: x,
        std: 0.0,
        median: x,
    };
    RunReport {
        label: label.into(),
        config_hash: "fixture".into(),
        n_seeds: 1,
        e_t_kwh: stat(e_t),
        e_r_kwh: stat(0.0),
        e_total_kwh: stat(e_t),
        overlap_seconds: stat(overlap),
        total_time_s: stat(0.0),
        episodes: Vec::new(),
    }
}

fn table_deltas() -> Option<Outcome> {
    let cmp = ComparisonReport::new(
        fixture_report("no-action", 378_862.9, 4_734.1),
        fixture_report("ppo", 337_342.6, 7_006.2),
    )
    .unwrap();
    let t = format!("{:.1}", truncate_1dp(cmp.traction_reduction_pct));
    let o = format!("{:.1}", truncate_1dp(cmp.overlap_increase_pct));
    outcome(
        t == "10.9" && o == "47.9",
        format!(
            "traction reduction {t}% ({:.4}), overlap increase {o}% ({:.4})",
            cmp.traction_reduction_pct, cmp.overlap_increase_pct
        ),
    )
}

/// Training-outcome criteria. Their result is printed but does not fail the run.
const STATISTICAL: [u32; 2] = [7, 8];

fn main() {
    let skip_training = std::env::var_os("ACCEPTANCE_SKIP_TRAINING").is_some_and(|v| v != "0");
    let mut results: Vec<(u32, &str, Option<Outcome>)> = vec![
        (1, "physics oracle equivalence", physics_oracle()),
        (2, "energy identities", energy_identities()),
        (3, "timetable reproduction", timetable()),
        (4, "gradient correctness", gradients()),
        (5, "PPO mechanics", ppo_mechanics()),
        (6, "determinism", determinism()),
    ];
    if skip_training {
        results.push((7, "learning improvement", None));
        results.push((8, "reward-curve sanity", None));
    } else {
        let (runs, bo, be, steps) = train_seeds();
        results.push((7, "learning improvement", learning(&runs, bo, be, steps)));
        results.push((8, "reward-curve sanity", reward_curve(&runs)));
    }
    results.push((9, "comparison delta arithmetic", table_deltas()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, o) in &results {
        match o {
            Some(o) => {
                println!("[{}] {id}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                if !o.pass && !STATISTICAL.contains(id) {
                    failed += 1;
                }
            }
            None => println!("[SKIP] {id}. {name}"),
        }
    }
    let stat_failed = results
        .iter()
        .filter(|(id, _, o)| STATISTICAL.contains(id) && o.as_ref().is_some_and(|o| !o.pass))
        .count();
    if stat_failed > 0 {
        println!("note: {stat_failed} training-outcome criteria failed; they are reported but do not set the exit status");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
