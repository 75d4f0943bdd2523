//! C ABI over the metro-regen environment and trained policies.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns an [`MrStatus`]; on failure
//! [`mr_last_error_message`] describes the most recent error on the calling
//! thread. Panics never cross the boundary; they surface as `MR_PANIC`.
//!
//! Observations written by the env calls are the policy input: the feature
//! rows of every train, rotated so the deciding train comes first.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use metro_regen::config::RunConfig;
use metro_regen::mdp_env::{MetroEnv, Observation, ACTION_DIM};
use metro_regen::network_sim::EnergyLedger;
use metro_regen::ppo::Checkpoint;
use metro_regen::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrStatus {
    MrOk = 0,
    MrNullPointer = 1,
    MrInvalidArgument = 2,
    MrConfig = 3,
    MrEpisodeFinished = 4,
    MrNotFinished = 5,
    MrIo = 6,
    MrIncompatible = 7,
    MrRuntime = 8,
    MrPanic = 9,
}

/// Opaque environment handle.
pub struct MrEnv {
    env: MetroEnv,
    obs: Option<Observation>,
}

/// Opaque policy handle loaded from a checkpoint.
pub struct MrPolicy {
    checkpoint: Checkpoint,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MrLedger {
    pub e_t_kwh: f64,
    pub e_b_gross_kwh: f64,
    pub e_r_kwh: f64,
    pub e_total_kwh: f64,
    pub overlap_seconds: f64,
}

impl From<&EnergyLedger> for MrLedger {
    fn from(l: &EnergyLedger) -> Self {
        MrLedger {
            e_t_kwh: l.e_t_kwh,
            e_b_gross_kwh: l.e_b_gross_kwh,
            e_r_kwh: l.e_r_kwh,
            e_total_kwh: l.e_total_kwh,
            overlap_seconds: l.overlap_seconds,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MrStepResult {
    pub reward: f64,
    /// Nonzero once the episode has ended.
    pub done: c_int,
    pub sim_time_s: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> MrStatus {
    match e {
        Error::EpisodeFinished | Error::NoPendingDecision => MrStatus::MrEpisodeFinished,
        Error::NotFinished => MrStatus::MrNotFinished,
        Error::Io(_) | Error::MissingFile { .. } => MrStatus::MrIo,
        Error::Incompatible(_) => MrStatus::MrIncompatible,
        Error::Dimension { .. } => MrStatus::MrInvalidArgument,
        e if e.is_configuration() => MrStatus::MrConfig,
        _ => MrStatus::MrRuntime,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (MrStatus, String)>) -> MrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MrStatus::MrOk,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MrStatus::MrPanic
        }
    }
}

fn lift(e: Error) -> (MrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MrStatus, String) {
    (MrStatus::MrNullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (MrStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MrStatus::MrInvalidArgument, "path is not UTF-8".to_string()))?;
    Ok(Path::new(s))
}

unsafe fn write_obs(obs: &Observation, out: *mut f64, len: usize) -> Result<(), (MrStatus, String)> {
    if out.is_null() {
        return Ok(());
    }
    let input = obs.policy_input();
    if len != input.len() {
        return Err((
            MrStatus::MrInvalidArgument,
            format!("observation buffer holds {len} values, need {}", input.len()),
        ));
    }
    ptr::copy_nonoverlapping(input.as_ptr(), out, len);
    Ok(())
}

fn boxed_env(cfg: RunConfig) -> Result<*mut MrEnv, (MrStatus, String)> {
    let env = MetroEnv::new(cfg.line, cfg.physics, cfg.env).map_err(lift)?;
    Ok(Box::into_raw(Box::new(MrEnv { env, obs: None })))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates an environment on the shipped Xiamen configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mr_env_new_default(out: *mut *mut MrEnv) -> MrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = boxed_env(RunConfig::shipped())?;
        Ok(())
    })
}

/// Creates an environment from a TOML run file or JSON config snapshot.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_env_new_from_config(path: *const c_char, out: *mut *mut MrEnv) -> MrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::load(path_arg(path)?).map_err(lift)?;
        *out = boxed_env(cfg)?;
        Ok(())
    })
}

/// Releases an environment. Null is ignored.
///
/// # Safety
/// `env` must come from an `mr_env_new_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mr_env_free(env: *mut MrEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Length of the observation vector, or 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mr_env_observation_len(env: *const MrEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.observation_len())
}

/// Decisions per episode, or 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mr_env_episode_length(env: *const MrEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.episode_length())
}

/// Starts an episode. `obs_out` may be null; otherwise it must hold
/// `obs_len == mr_env_observation_len(env)` doubles.
///
/// # Safety
/// `env` must be a live handle and `obs_out` null or valid for `obs_len` writes.
#[no_mangle]
pub unsafe extern "C" fn mr_env_reset(env: *mut MrEnv, seed: u64, obs_out: *mut f64, obs_len: usize) -> MrStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let obs = e.env.reset(seed).map_err(lift)?;
        write_obs(&obs, obs_out, obs_len)?;
        e.obs = Some(obs);
        Ok(())
    })
}

unsafe fn finish_step(
    e: &mut MrEnv,
    r: metro_regen::mdp_env::StepResult,
    obs_out: *mut f64,
    obs_len: usize,
    result: *mut MrStepResult,
) -> Result<(), (MrStatus, String)> {
    write_obs(&r.observation, obs_out, obs_len)?;
    if let Some(res) = result.as_mut() {
        *res = MrStepResult {
            reward: r.reward,
            done: r.done as c_int,
            sim_time_s: r.info.sim_time_s,
        };
    }
    e.obs = Some(r.observation);
    Ok(())
}

/// Applies a raw action in `[-1, 1]^2` (clamped) to the deciding train.
///
/// # Safety
/// `env` must be live, `action` must point to 2 doubles, `obs_out` null or
/// valid for `obs_len` writes, `result` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mr_env_step(
    env: *mut MrEnv,
    action: *const f64,
    obs_out: *mut f64,
    obs_len: usize,
    result: *mut MrStepResult,
) -> MrStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        if action.is_null() {
            return Err(null("action"));
        }
        let a: [f64; ACTION_DIM] = [*action, *action.add(1)];
        let r = e.env.step(a).map_err(lift)?;
        finish_step(e, r, obs_out, obs_len, result)
    })
}

/// Applies the nominal timetable command to the deciding train.
///
/// # Safety
/// As for [`mr_env_step`], without the action pointer.
#[no_mangle]
pub unsafe extern "C" fn mr_env_step_nominal(
    env: *mut MrEnv,
    obs_out: *mut f64,
    obs_len: usize,
    result: *mut MrStepResult,
) -> MrStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let r = e.env.step_nominal().map_err(lift)?;
        finish_step(e, r, obs_out, obs_len, result)
    })
}

/// Current energy ledger of the running (or finished) episode.
///
/// # Safety
/// `env` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_env_ledger(env: *const MrEnv, out: *mut MrLedger) -> MrStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let world = e.env.world().ok_or_else(|| (MrStatus::MrNotFinished, "no episode has been started".to_string()))?;
        *out = MrLedger::from(world.ledger());
        Ok(())
    })
}

/// Runs a complete no-action episode. `total_time_s` may be null.
///
/// # Safety
/// `env` must be live, `out` writable, `total_time_s` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mr_env_run_baseline(env: *mut MrEnv, seed: u64, out: *mut MrLedger, total_time_s: *mut f64) -> MrStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = e.env.run_baseline(seed).map_err(lift)?;
        *out = MrLedger::from(&s.ledger);
        if let Some(t) = total_time_s.as_mut() {
            *t = s.total_time_s;
        }
        e.obs = None;
        Ok(())
    })
}

/// Loads a policy from a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_policy_load(path: *const c_char, out: *mut *mut MrPolicy) -> MrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let checkpoint = Checkpoint::load(path_arg(path)?).map_err(lift)?;
        *out = Box::into_raw(Box::new(MrPolicy { checkpoint }));
        Ok(())
    })
}

/// Releases a policy. Null is ignored.
///
/// # Safety
/// `policy` must come from [`mr_policy_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mr_policy_free(policy: *mut MrPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Errors with `MR_INCOMPATIBLE` unless the policy was trained on `env`'s
/// configuration.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn mr_policy_check(policy: *const MrPolicy, env: *const MrEnv) -> MrStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        p.checkpoint.check_compatible(&e.env).map_err(lift)
    })
}

/// Deterministic action (the policy mean) for one observation.
///
/// # Safety
/// `policy` must be live, `obs` valid for `obs_len` reads, `action_out`
/// valid for 2 writes.
#[no_mangle]
pub unsafe extern "C" fn mr_policy_act(policy: *const MrPolicy, obs: *const f64, obs_len: usize, action_out: *mut f64) -> MrStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if obs.is_null() {
            return Err(null("obs"));
        }
        if action_out.is_null() {
            return Err(null("action_out"));
        }
        let input = std::slice::from_raw_parts(obs, obs_len);
        let (mean, _) = p.checkpoint.policy.policy_forward(input).map_err(lift)?;
        ptr::copy_nonoverlapping(mean.as_ptr(), action_out, ACTION_DIM);
        Ok(())
    })
}
