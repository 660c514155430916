use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fleetlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fleetlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_error(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn baseline_all_lists_six_policies() {
    let out = fleetlab(&["baseline", "--domain", "hot-cold", "--drivers", "2", "--horizon", "20", "--episodes", "2"]);
    let v = stdout_json(&out);
    let names: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(names.len(), 6);
    assert!(v["mpdm-demand"]["mean"].is_number());
}

#[test]
fn eval_twice_gives_identical_numbers() {
    let args = ["eval", "--domain", "regional", "--drivers", "2", "--horizon", "30", "--policy", "mpdm-random", "--seed", "4"];
    assert_eq!(stdout_json(&fleetlab(&args)), stdout_json(&fleetlab(&args)));
}

#[test]
fn errors_are_machine_readable() {
    let e = stderr_error(&fleetlab(&["eval", "--domain", "regional", "--checkpoint", "/definitely/missing.flck"]));
    assert_eq!(e["error"], "io");
    let e = stderr_error(&fleetlab(&["train", "--domain", "regional", "--out", "/tmp/x", "--seeds", ""]));
    assert!(e["error"].is_string());
    let e = stderr_error(&fleetlab(&["train", "--domain", "regional"]));
    assert_eq!(e["error"], "invalid_config");
    let e = stderr_error(&fleetlab(&["bogus"]));
    assert_eq!(e["error"], "usage");
    let e = stderr_error(&fleetlab(&["eval", "--domain", "distribute", "--variant", "30-30", "--policy", "mrm-simple"]));
    assert_eq!(e["error"], "invalid_config");
}

#[test]
fn train_from_config_with_flag_overrides_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            "domain = \"regional\"\nseeds = [0, 1]\nbudget = 5\neval_every = 1\neval_episodes = 1\nout_dir = {:?}\n\n[scenario]\ndrivers = 2\nhorizon = 20.0\n\n[trainer]\nprecision = \"f32\"\n",
            run.display().to_string()
        ),
    )
    .unwrap();
    let out = fleetlab(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--budget",
        "2",
        "--set",
        "learning_starts=4",
        "--set",
        "ppo.clip=0.1",
        "--quiet",
    ]);
    let s = stdout_json(&out);
    assert_eq!(s["budget"], 2);
    assert_eq!(s["seeds"].as_array().unwrap().len(), 2);
    for f in ["summary.json", "curves.csv", "curves_mean.csv", "evals.csv", "arrows.csv", "config.toml"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let saved = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(saved.contains("learning_starts = 4"));

    let ck = run.join("seed-0").join("best.flck");
    let e = stdout_json(&fleetlab(&[
        "eval", "--domain", "regional", "--drivers", "2", "--horizon", "20", "--checkpoint", ck.to_str().unwrap(), "--episodes", "2",
    ]));
    assert_eq!(e["episodes"], 2);

    let r = fleetlab(&["report", run.to_str().unwrap()]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.starts_with("| run |"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn gen_data_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let v = stdout_json(&fleetlab(&[
            "gen-data", "--seed", "7", "--days", "2", "--daily-orders", "150", "--out", d.to_str().unwrap(),
        ]));
        assert!(v["rows"].as_u64().unwrap() > 0);
    }
    for f in ["orders.csv", "grid.txt"] {
        let read = |p: &Path| std::fs::read(p.join(f)).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
    }
    let e = stderr_error(&fleetlab(&["gen-data", "--days", "0", "--out", a.path().to_str().unwrap()]));
    assert_eq!(e["error"], "invalid_config");
}
