//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 configuration or validation failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::line_data::load_line;
use crate::mdp_env::{EpisodeSummary, MetroEnv};
use crate::ppo::checkpoint::Checkpoint;
use crate::ppo::evaluate::{evaluation_seeds, run_episode, EvalMode};
use crate::ppo::trainer::{read_log_csv, write_log_csv, IterationLog, Trainer};
use crate::report::{ComparisonReport, RunReport};

#[derive(Debug, Parser)]
#[command(name = "metro-regen", version, about = "Metro regenerative-braking simulator and PPO rescheduler")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the no-action baseline over a list of seeds.
    Baseline(BaselineArgs),
    /// Train a policy.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Evaluate(EvaluateArgs),
    /// Compare a baseline report with a candidate report.
    Compare(CompareArgs),
    /// Parse and validate a line file (or every input of a run config).
    ValidateData(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML run file or a JSON snapshot); defaults to the shipped Xiamen setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Seeds as a list or range: `0,3,7` or `0..50`.
    #[arg(long, alias = "seed")]
    pub seeds: Option<String>,
    /// Write per-tick power traces and decision logs for every seed.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Overrides the PPO seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the total iteration count.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also keep a checkpoint every N iterations (0 keeps only the latest).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Seeds to evaluate on; defaults to `--episodes` held-out seeds.
    #[arg(long, alias = "seed")]
    pub seeds: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    /// Sample actions instead of using the policy mean.
    #[arg(long)]
    pub sampled: bool,
    #[arg(long, default_value = "ppo")]
    pub label: String,
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub baseline: PathBuf,
    pub candidate: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// A line CSV to check.
    pub line: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parses `a,b,c`, `a..b` (exclusive) or a single number.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |m: String| Error::config("--seeds", m);
    let num = |s: &str| s.trim().parse::<u64>().map_err(|e| bad(format!("{s:?}: {e}")));
    let seeds = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if b <= a {
            return Err(bad(format!("empty range {text}")));
        }
        (a..b).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if seeds.is_empty() {
        return Err(bad("no seeds given".into()));
    }
    Ok(seeds)
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::shipped(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::config(dir.display().to_string(), format!("output directory not writable: {e}")))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_snapshot(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write(&dir.join("config_snapshot.json"), &cfg.snapshot().to_json())
}

fn write_decisions_csv(path: &Path, ep: &EpisodeSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for d in &ep.decisions {
        w.serialize(d)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one episode per seed in parallel, optionally tracing each to `dir`.
fn run_episodes(
    env: &MetroEnv,
    seeds: &[u64],
    trace_dir: Option<(&Path, &str)>,
    episode: impl Fn(&mut MetroEnv, u64) -> Result<EpisodeSummary> + Sync,
) -> Result<Vec<EpisodeSummary>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut env = env.clone();
            env.set_trace(trace_dir.is_some());
            let ep = episode(&mut env, seed)?;
            if let Some((dir, label)) = trace_dir {
                let world = env.world().expect("episode ran");
                world.write_trace_csv(fs::File::create(dir.join(format!("trace_{label}_{seed}.csv")))?)?;
                write_decisions_csv(&dir.join(format!("decisions_{label}_{seed}.csv")), &ep)?;
            }
            Ok(ep)
        })
        .collect()
}

pub fn cmd_baseline(args: &BaselineArgs) -> Result<RunReport> {
    let cfg = load_config(&args.common)?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![cfg.env.seed],
    };
    let env = MetroEnv::new(cfg.line.clone(), cfg.physics.clone(), cfg.env.clone())?;
    let out = cfg.out_dir.clone();
    prepare_out(&out)?;
    let trace = args.trace.then_some((out.as_path(), "baseline"));
    let eps = run_episodes(&env, &seeds, trace, |env, seed| env.run_baseline(seed))?;
    let report = RunReport::from_episodes("no-action", cfg.config_hash(), &eps);
    write(&out.join("baseline_report.json"), &report.to_json()?)?;
    report.write_episodes_csv(&out.join("baseline_episodes.csv"))?;
    write_snapshot(&cfg, &out)?;
    Ok(report)
}

pub fn cmd_train(args: &TrainArgs) -> Result<Checkpoint> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.seed {
        cfg.ppo.seed = s;
    }
    if let Some(n) = args.iterations {
        cfg.ppo.total_iterations = n;
    }
    cfg.ppo.validate()?;
    let out = cfg.out_dir.clone();
    prepare_out(&out)?;
    let env = MetroEnv::new(cfg.line.clone(), cfg.physics.clone(), cfg.env.clone())?;
    let log_path = out.join("training_log.csv");
    let (mut trainer, mut log): (Trainer, Vec<IterationLog>) = match &args.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let trainer = ck.resume(env, Some(cfg.ppo.clone()))?;
            let mut prior = if log_path.exists() { read_log_csv(&log_path)? } else { Vec::new() };
            prior.retain(|r| r.iter <= ck.iteration());
            (trainer, prior)
        }
        None => (Trainer::new(cfg.ppo.clone(), env)?, Vec::new()),
    };
    trainer.set_dump_dir(&out);
    write_snapshot(&cfg, &out)?;
    let every = args.checkpoint_every;
    let new_rows = trainer.train(|row, t| {
        if every > 0 && row.iter % every == 0 {
            Checkpoint::from_trainer(t).save(&out.join(format!("checkpoint_iter{:05}.json", row.iter)))?;
        }
        Ok(())
    })?;
    log.extend(new_rows);
    write_log_csv(&log_path, &log)?;
    let ck = Checkpoint::from_trainer(&trainer);
    ck.save(&out.join("checkpoint.json"))?;
    Ok(ck)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<RunReport> {
    let cfg = load_config(&args.common)?;
    let ck = Checkpoint::load(&args.checkpoint)?;
    let env = MetroEnv::new(cfg.line.clone(), cfg.physics.clone(), cfg.env.clone())?;
    ck.check_compatible(&env)?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => evaluation_seeds(args.episodes),
    };
    let mode = if args.sampled { EvalMode::Sampled } else { EvalMode::Deterministic };
    let out = cfg.out_dir.clone();
    prepare_out(&out)?;
    let trace = args.trace.then_some((out.as_path(), args.label.as_str()));
    let eps = run_episodes(&env, &seeds, trace, |env, seed| run_episode(&ck.policy, env, seed, mode))?;
    let report = RunReport::from_episodes(&args.label, cfg.config_hash(), &eps);
    write(&out.join(format!("eval_report_{}.json", args.label)), &report.to_json()?)?;
    report.write_episodes_csv(&out.join(format!("eval_episodes_{}.csv", args.label)))?;
    write_snapshot(&cfg, &out)?;
    Ok(report)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<ComparisonReport> {
    let base = RunReport::load(&args.baseline)?;
    let cand = RunReport::load(&args.candidate)?;
    let cmp = ComparisonReport::new(base, cand)?;
    if let Some(out) = &args.out {
        prepare_out(out)?;
        write(&out.join("comparison.json"), &cmp.to_json()?)?;
        write(&out.join("comparison.txt"), &cmp.to_table())?;
    }
    Ok(cmp)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<String> {
    let mut lines = Vec::new();
    if let Some(p) = &args.line {
        let l = load_line(p)?;
        lines.push(format!(
            "{}: {} segments, {} stations, {:.2} km",
            p.display(),
            l.segments.len(),
            l.station_count(),
            l.total_length_km()
        ));
    }
    if args.config.is_some() || args.line.is_none() {
        let cfg = load_config(&CommonArgs {
            config: args.config.clone(),
            out: None,
        })?;
        MetroEnv::new(cfg.line.clone(), cfg.physics.clone(), cfg.env.clone())?;
        lines.push(format!(
            "config ok: {} ({} segments, {:.2} km), {} trains, hash {}",
            cfg.line.name,
            cfg.line.segments.len(),
            cfg.line.total_length_km(),
            cfg.env.fleet.num_trains,
            cfg.config_hash()
        ));
    }
    Ok(lines.join("\n"))
}

fn dispatch(cli: &Cli) -> Result<String> {
    Ok(match &cli.command {
        Command::Baseline(a) => {
            let r = cmd_baseline(a)?;
            format!(
                "baseline over {} seed(s): E_T {:.1} kWh, E_R {:.1} kWh, E_total {:.1} kWh, overlap {:.1} s",
                r.n_seeds, r.e_t_kwh.mean, r.e_r_kwh.mean, r.e_total_kwh.mean, r.overlap_seconds.mean
            )
        }
        Command::Train(a) => {
            let ck = cmd_train(a)?;
            format!("trained to iteration {}", ck.iteration())
        }
        Command::Evaluate(a) => {
            let r = cmd_evaluate(a)?;
            format!(
                "{} over {} seed(s): E_T {:.1} kWh, E_R {:.1} kWh, E_total {:.1} kWh, overlap {:.1} s",
                r.label, r.n_seeds, r.e_t_kwh.mean, r.e_r_kwh.mean, r.e_total_kwh.mean, r.overlap_seconds.mean
            )
        }
        Command::Compare(a) => cmd_compare(a)?.to_table(),
        Command::ValidateData(a) => cmd_validate(a)?,
    })
}

/// Entry point returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_configuration() {
                2
            } else {
                1
            }
        }
    }
}
