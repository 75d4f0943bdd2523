use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::ptr;

use metro_regen::config::{default_env, default_physics, default_ppo, RunConfig};
use metro_regen::line_data::LineDataset;
use metro_regen::mdp_env::MetroEnv;
use metro_regen::ppo::{Checkpoint, Trainer};
use metro_regen_ffi::*;

fn last_error() -> String {
    let p = mr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn default_env_handle() -> *mut MrEnv {
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { mr_env_new_default(&mut env) }, MrStatus::MrOk);
    assert!(!env.is_null());
    env
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(mr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_the_api() {
    let header = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/metro_regen.h")).unwrap();
    for name in [
        "mr_env_new_default",
        "mr_env_step",
        "mr_env_ledger",
        "mr_policy_act",
        "MR_OK",
        "MR_PANIC",
        "typedef struct MrEnv MrEnv",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn full_episode_through_the_c_api_matches_the_library() {
    let env = default_env_handle();
    unsafe {
        let n = mr_env_observation_len(env);
        let steps = mr_env_episode_length(env);
        assert_eq!(n, 20 * 8);
        assert_eq!(steps, 460);
        let mut obs = vec![0.0; n];
        assert_eq!(mr_env_reset(env, 5, obs.as_mut_ptr(), n), MrStatus::MrOk);

        let mut lib = MetroEnv::new(LineDataset::xiamen_line1(), default_physics(), default_env()).unwrap();
        let lib_obs = lib.reset(5).unwrap();
        assert_eq!(obs, lib_obs.policy_input());

        let mut res = MrStepResult::default();
        let mut k = 0;
        while res.done == 0 {
            let a = [((k as f64) * 0.3).sin(), ((k as f64) * 0.7).cos()];
            assert_eq!(mr_env_step(env, a.as_ptr(), obs.as_mut_ptr(), n, &mut res), MrStatus::MrOk);
            let r = lib.step(a).unwrap();
            assert_eq!(res.reward, r.reward);
            assert_eq!(obs, r.observation.policy_input());
            k += 1;
        }
        assert_eq!(k, steps);

        let mut ledger = MrLedger::default();
        assert_eq!(mr_env_ledger(env, &mut ledger), MrStatus::MrOk);
        let l = lib.world().unwrap().ledger();
        assert_eq!(ledger.e_total_kwh, l.e_total_kwh);
        assert_eq!(ledger.overlap_seconds, l.overlap_seconds);
        assert_eq!(ledger.e_total_kwh, ledger.e_t_kwh - ledger.e_r_kwh);

        let a = [0.0, 0.0];
        assert_eq!(mr_env_step(env, a.as_ptr(), ptr::null_mut(), 0, ptr::null_mut()), MrStatus::MrEpisodeFinished);
        assert!(!last_error().is_empty());
        mr_env_free(env);
    }
}

#[test]
fn baseline_matches_the_library() {
    let env = default_env_handle();
    let mut ledger = MrLedger::default();
    let mut total = 0.0;
    assert_eq!(unsafe { mr_env_run_baseline(env, 9, &mut ledger, &mut total) }, MrStatus::MrOk);
    let mut lib = MetroEnv::new(LineDataset::xiamen_line1(), default_physics(), default_env()).unwrap();
    let s = lib.run_baseline(9).unwrap();
    assert_eq!(ledger.e_t_kwh, s.ledger.e_t_kwh);
    assert_eq!(ledger.e_r_kwh, s.ledger.e_r_kwh);
    assert_eq!(total, s.total_time_s);
    unsafe { mr_env_free(env) };
}

#[test]
fn null_and_size_errors_are_reported() {
    unsafe {
        assert_eq!(mr_env_new_default(ptr::null_mut()), MrStatus::MrNullPointer);
        assert_eq!(mr_env_reset(ptr::null_mut(), 0, ptr::null_mut(), 0), MrStatus::MrNullPointer);
        assert!(last_error().contains("env"));
        assert_eq!(mr_env_observation_len(ptr::null()), 0);
        mr_env_free(ptr::null_mut());
        mr_policy_free(ptr::null_mut());

        let env = default_env_handle();
        let mut ledger = MrLedger::default();
        assert_eq!(mr_env_ledger(env, &mut ledger), MrStatus::MrNotFinished);
        let mut small = [0.0; 3];
        assert_eq!(mr_env_reset(env, 0, small.as_mut_ptr(), small.len()), MrStatus::MrInvalidArgument);
        assert!(last_error().contains("observation buffer"));
        assert_eq!(mr_env_step(env, ptr::null(), ptr::null_mut(), 0, ptr::null_mut()), MrStatus::MrNullPointer);
        mr_env_free(env);
    }
}

#[test]
fn bad_paths_map_to_status_codes() {
    let mut env = ptr::null_mut();
    let missing = CString::new("/nonexistent/run.toml").unwrap();
    assert_eq!(unsafe { mr_env_new_from_config(missing.as_ptr(), &mut env) }, MrStatus::MrIo);
    assert!(last_error().contains("/nonexistent/run.toml"));
    assert!(env.is_null());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("run.toml");
    fs::write(&bad, "line = 3\n").unwrap();
    assert_eq!(unsafe { mr_env_new_from_config(cstr(&bad).as_ptr(), &mut env) }, MrStatus::MrConfig);

    let mut policy = ptr::null_mut();
    assert_eq!(unsafe { mr_policy_load(missing.as_ptr(), &mut policy) }, MrStatus::MrIo);
    assert_eq!(unsafe { mr_policy_load(ptr::null(), &mut policy) }, MrStatus::MrNullPointer);
}

#[test]
fn policy_round_trip() {
    let cfg = RunConfig::shipped();
    let env = MetroEnv::new(cfg.line.clone(), cfg.physics.clone(), cfg.env.clone()).unwrap();
    let mut ppo = default_ppo();
    ppo.total_iterations = 1;
    ppo.n_steps = 64;
    let mut trainer = Trainer::new(ppo, env.clone()).unwrap();
    trainer.train(|_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    Checkpoint::from_trainer(&trainer).save(&path).unwrap();

    unsafe {
        let mut policy = ptr::null_mut();
        assert_eq!(mr_policy_load(cstr(&path).as_ptr(), &mut policy), MrStatus::MrOk);
        let handle = default_env_handle();
        assert_eq!(mr_policy_check(policy, handle), MrStatus::MrOk);

        let n = mr_env_observation_len(handle);
        let mut obs = vec![0.0; n];
        assert_eq!(mr_env_reset(handle, 1, obs.as_mut_ptr(), n), MrStatus::MrOk);
        let mut action = [0.0; 2];
        assert_eq!(mr_policy_act(policy, obs.as_ptr(), n, action.as_mut_ptr()), MrStatus::MrOk);
        assert_eq!(action, trainer.policy().policy_forward(&obs).unwrap().0);
        assert_eq!(mr_policy_act(policy, obs.as_ptr(), n - 1, action.as_mut_ptr()), MrStatus::MrInvalidArgument);

        mr_env_free(handle);
        mr_policy_free(policy);
    }
}
