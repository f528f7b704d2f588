use std::path::Path;
use std::process::{Command, Output};

fn distkf(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_distkf"));
    cmd.args(args).env_remove("DISTKF_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("DISTKF_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_passes_on_paper_fixture() {
    let o = distkf(&["verify", "--model", "paper-linear"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("DKF≡FIE k≤5: PASS")), "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let o = distkf(&["run", "--frobnicate"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(distkf(&["--mode", "x"], None).status.code(), Some(2));
    assert_eq!(distkf(&["run", "--mode", "kalman"], None).status.code(), Some(2));
}

#[test]
fn validation_errors_exit_nonzero_with_message() {
    let o = distkf(&["run", "--steps", "0"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("steps"));
    let o = distkf(&["run", "--model", "unheard-of"], None);
    assert_eq!(o.status.code(), Some(1));
    let o = distkf(&["run", "--model", "reactor-chain", "--mode", "dkf", "--steps", "3"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_then_monitors_on_stored_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = distkf(&["run", "--model", "reactor-chain", "--steps", "40", "--seed", "5", "--out", out], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let record = dir.path().join("reactor-chain.json");
    assert!(record.exists() && dir.path().join("reactor-chain.csv").exists());
    let o = distkf(&["monitors", "--record", record.to_str().unwrap(), "--out", out], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("weak coupling: 40 satisfied"));
    assert!(dir.path().join("reactor-chain_monitors.json").exists());

    let text = std::fs::read_to_string(&record).unwrap().replacen("\"seed\": 5", "\"seed\": 6", 1);
    std::fs::write(&record, text).unwrap();
    let o = distkf(&["monitors", "--record", record.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = distkf_harness::registry::fixture("decoupled-linear").unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let env_out = dir.path().join("env-out");
    let o = distkf(&["run", "--config", path.to_str().unwrap(), "--steps", "7"], Some(&env_out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(env_out.join("decoupled-linear.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn montecarlo_500_runs_gives_500_entries_per_instant() {
    let dir = tempfile::tempdir().unwrap();
    let o = distkf(&["montecarlo", "--runs", "500", "--no-monitors", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("paper-linear-4state_ensemble.csv")).unwrap();
    let mut per_k = std::collections::BTreeMap::<u64, usize>::new();
    for row in r.records() {
        *per_k.entry(row.unwrap()[2].parse().unwrap()).or_default() += 1;
    }
    assert_eq!(per_k.len(), 51);
    assert!(per_k.values().all(|&n| n == 500));
}
