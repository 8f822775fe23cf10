use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_fkbma");

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("design.json");
    fs::write(
        &path,
        r#"{
  "scenario": "study1/s2",
  "replications": 3,
  "external_test_size": 200,
  "seed": 5,
  "sampler": {"burn_in": 60, "n_samples": 40, "thin": 1}
}"#,
    )
    .unwrap();
    path
}

fn run(config: &Path, out: &Path, threads: &str) -> std::process::Output {
    Command::new(BIN)
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("FKBMA_THREADS", threads)
        .output()
        .unwrap()
}

#[test]
fn reruns_are_byte_identical_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&cfg, &a, "1").status.success());
    assert!(run(&cfg, &b, "3").status.success());
    for f in ["trials.csv", "summary.csv", "config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let trials = fs::read_to_string(a.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3);
    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["all", "converged"]);
}

#[test]
fn overrides_apply_and_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("o");
    let st = Command::new(BIN)
        .args(["run", "--reps", "2", "--seed", "9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success());
    assert_eq!(fs::read_to_string(out.join("trials.csv")).unwrap().lines().count(), 3);
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["seed"], 9);
    assert_eq!(written["replications"], 2);
}

#[test]
fn bad_config_exits_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"scenario": "study1/s1", "thresholds": {"B1": 1.5}}"#).unwrap();
    let out = Command::new(BIN).args(["validate", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("B1"));
    let out = Command::new(BIN).args(["validate", "--config", "/nonexistent.json"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn invalid_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = run(&cfg, &dir.path().join("t"), "zero");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("FKBMA_THREADS"));
}

#[test]
fn scenarios_lists_all_ids() {
    let out = Command::new(BIN).arg("scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 24);
    assert!(text.contains("study2/s4"));
}
