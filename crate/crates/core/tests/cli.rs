use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use metro_regen::ppo::trainer::read_log_csv;
use metro_regen::report::RunReport;

const PHYSICS: &str = include_str!("../../../data/default_physics.toml");

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metro-regen"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A three-station, two-train setup small enough to train in well under a second.
fn small_run(dir: &Path) -> PathBuf {
    fs::write(
        dir.join("line.csv"),
        "from,to,distance_km,cruise_kmh,dwell_s\nA,B,1.2,60,30\nB,C,0.9,55,25\n",
    )
    .unwrap();
    fs::write(dir.join("physics.toml"), PHYSICS).unwrap();
    fs::write(
        dir.join("env.toml"),
        r#"dt_s = 0.5
reward_scale_s = 100.0
time_horizon_s = 800.0
seed = 3

[fleet]
num_trains = 2
headway_s = 120.0
trains_up = 1
trains_down = 1

[disturbance]
probability_per_stop = 0.5
max_extra_dwell_s = 20.0
distribution = "uniform"
exp_scale_s = 10.0

[bounds]
cruise_min_kmh = 40.0
cruise_max_kmh = 80.0
dwell_min_s = 15.0
dwell_max_s = 60.0
"#,
    )
    .unwrap();
    fs::write(
        dir.join("ppo.toml"),
        "n_steps = 24\nbatch_size = 8\ngamma = 0.99\nclip_range = 0.2\nvf_coef = 0.5\nent_coef = 0.1\n\
         learning_rate = 3e-4\nepochs_per_update = 2\ntotal_iterations = 4\nhidden = 16\nseed = 0\n",
    )
    .unwrap();
    let run = dir.join("run.toml");
    fs::write(
        &run,
        "line = \"line.csv\"\nphysics = \"physics.toml\"\nenv = \"env.toml\"\nppo = \"ppo.toml\"\nout = \"out\"\n",
    )
    .unwrap();
    run
}

fn masked_log(path: &Path) -> Vec<String> {
    read_log_csv(path)
        .unwrap()
        .iter()
        .map(|r| format!("{} {:?} {:?} {:?} {:?}", r.iter, r.mean_ep_reward, r.pg_loss, r.value_loss, r.entropy_loss))
        .collect()
}

#[test]
fn missing_line_file_is_a_configuration_error() {
    let o = run(&["validate-data", "/nonexistent/line.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/line.csv"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    assert_eq!(run(&["baseline", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn validate_data_accepts_shipped_line() {
    let line = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/xiamen_line1.csv");
    let o = run(&["validate-data", line]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("23 segments"), "{text}");
    assert!(text.contains("24 stations"), "{text}");
}

#[test]
fn malformed_line_reports_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "from,to,distance_km,cruise_kmh,dwell_s\nA,B,1.2,60,30\nB,C,-0.9,55,25\n").unwrap();
    let o = run(&["validate-data", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("distance"), "{}", stderr(&o));
}

#[test]
fn baseline_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run(dir.path());
    let o = run(&["baseline", "--config", cfg.to_str().unwrap(), "--seeds", "0..4", "--trace"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out");
    let report = RunReport::load(&out.join("baseline_report.json")).unwrap();
    assert_eq!(report.n_seeds, 4);
    assert_eq!(report.episodes.len(), 4);
    for f in ["baseline_episodes.csv", "config_snapshot.json", "trace_baseline_0.csv", "decisions_baseline_3.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    // The snapshot reproduces the same run.
    let snap_out = dir.path().join("snap");
    let o = run(&[
        "baseline",
        "--config",
        out.join("config_snapshot.json").to_str().unwrap(),
        "--out",
        snap_out.to_str().unwrap(),
        "--seeds",
        "0..4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let again = RunReport::load(&snap_out.join("baseline_report.json")).unwrap();
    assert_eq!(again.config_hash, report.config_hash);
    assert_eq!(again.episodes, report.episodes);
}

#[test]
fn train_evaluate_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    let o = run(&["train", "--config", cfg, "--checkpoint-every", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["training_log.csv", "checkpoint.json", "checkpoint_iter00002.json", "checkpoint_iter00004.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let header = fs::read_to_string(out.join("training_log.csv")).unwrap();
    assert!(header.starts_with("iter,mean_ep_reward,pg_loss,value_loss,entropy_loss,steps_per_sec"));
    assert_eq!(read_log_csv(&out.join("training_log.csv")).unwrap().len(), 4);

    let ck = out.join("checkpoint.json");
    let o = run(&["evaluate", "--config", cfg, "--checkpoint", ck.to_str().unwrap(), "--episodes", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&["baseline", "--config", cfg, "--seeds", &format!("{}..{}", 1u64 << 40, (1u64 << 40) + 3)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let cmp_dir = dir.path().join("cmp");
    let o = run(&[
        "compare",
        out.join("baseline_report.json").to_str().unwrap(),
        out.join("eval_report_ppo.json").to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(cmp_dir.join("comparison.json").exists());
    assert!(fs::read_to_string(cmp_dir.join("comparison.txt")).unwrap().contains("no-action"));
}

#[test]
fn same_seed_gives_same_log_and_checkpoint() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = small_run(d.path());
        let o = run(&["train", "--config", cfg.to_str().unwrap(), "--seed", "11"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (oa, ob) = (a.path().join("out"), b.path().join("out"));
    assert_eq!(masked_log(&oa.join("training_log.csv")), masked_log(&ob.join("training_log.csv")));
    assert_eq!(
        fs::read(oa.join("checkpoint.json")).unwrap(),
        fs::read(ob.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn resume_continues_the_iteration_counter() {
    let full = tempfile::tempdir().unwrap();
    let cfg = small_run(full.path());
    assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));

    let split = tempfile::tempdir().unwrap();
    let cfg = small_run(split.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(run(&["train", "--config", cfg, "--iterations", "2"]).status.code(), Some(0));
    let ck = split.path().join("out/checkpoint.json");
    let o = run(&["train", "--config", cfg, "--resume", ck.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("iteration 4"));

    let (fo, so) = (full.path().join("out"), split.path().join("out"));
    assert_eq!(masked_log(&fo.join("training_log.csv")), masked_log(&so.join("training_log.csv")));
    assert_eq!(
        fs::read(fo.join("checkpoint.json")).unwrap(),
        fs::read(so.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn compare_refuses_mismatched_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run(dir.path());
    let o = run(&["baseline", "--config", cfg.to_str().unwrap(), "--seeds", "0,1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut other = RunReport::load(&dir.path().join("out/baseline_report.json")).unwrap();
    other.config_hash = "different".into();
    let other_path = dir.path().join("other.json");
    fs::write(&other_path, other.to_json().unwrap()).unwrap();
    let o = run(&[
        "compare",
        dir.path().join("out/baseline_report.json").to_str().unwrap(),
        other_path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_rejects_checkpoint_from_another_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run(dir.path());
    assert_eq!(
        run(&["train", "--config", cfg.to_str().unwrap(), "--iterations", "1"]).status.code(),
        Some(0)
    );
    let ck = dir.path().join("out/checkpoint.json");
    // Shipped configuration: different line, fleet and hash.
    let o = run(&["evaluate", "--checkpoint", ck.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
