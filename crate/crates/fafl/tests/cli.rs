//! End-to-end checks of the `fafl` binary: exit codes, error prefixes and
//! artifact emission through a real process.

use std::path::Path;
use std::process::Command;

fn fafl(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fafl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.conf");
    std::fs::write(
        &path,
        "clients = 3\nrounds = 2\ndata.samples = 90\ndata.features = 2\n\
train.batch_size = 16\nmech.select_count = 2\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_metrics_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = fafl(
        &["run", "--config", &cfg, "--mechanism", "fedavg", "--rounds", "2", "--seed", "1", "--out", "m.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert!(text.starts_with("round,accuracy"));
    assert_eq!(text.lines().count(), 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("final_accuracy"), "{stdout}");
}

#[test]
fn config_errors_exit_one_with_greppable_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = fafl(&["run", "--config", &cfg, "--alpha", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[E-CONFIG]"), "{stderr}");
    assert!(stderr.contains("alpha must lie in [0,1]"), "{stderr}");
    assert_eq!(stderr.lines().count(), 1, "one machine-greppable line: {stderr}");
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = fafl(&["run", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = fafl(&["report", "--in-dir", "does-not-exist"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[E-RUNTIME]"), "{stderr}");
}

#[test]
fn sweep_report_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = fafl(
        &[
            "sweep", "--config", &cfg, "--alphas", "0.2,0.7", "--mechanisms", "fedavg,ltf",
            "--seeds", "1", "--out-dir", "cache",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 cells (4 computed, 0 cached)"));

    // Idempotent rerun via the cache.
    let out = fafl(
        &[
            "sweep", "--config", &cfg, "--alphas", "0.2,0.7", "--mechanisms", "fedavg,ltf",
            "--seeds", "1", "--out-dir", "cache",
        ],
        dir.path(),
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 cells (0 computed, 4 cached)"));

    let out = fafl(
        &["report", "--in-dir", "cache", "--csv", "summary.csv", "--svg", "panels.svg"],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "header plus one row per cell");
    let svg = std::fs::read_to_string(dir.path().join("panels.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn validate_config_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "clients = 5\nnot_a_key = 1\n").unwrap();
    let out = fafl(&["validate-config", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2") && stderr.contains("not_a_key"), "{stderr}");
}

#[test]
fn master_secret_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_fafl"))
        .args(["run", "--config", &cfg, "--out", "m.csv"])
        .env("FAFL_MASTER_SECRET", "11".repeat(32))
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_fafl"))
        .args(["run", "--config", &cfg, "--out", "m.csv"])
        .env("FAFL_MASTER_SECRET", "not-hex")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
