//! End-to-end checks of the command-line binary.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ddpgpp"))
}

fn text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: [&str; 8] = [
    "--set",
    "burn_in=64",
    "--set",
    "batch_size=32",
    "--set",
    "hidden_sizes=16,16",
    "--eval-episodes",
    "2",
];

#[test]
fn run_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = bin()
        .args([
            "run", "--env", "lqr2d", "--algo", "td3", "--seed", "3", "--steps", "200",
        ])
        .args(["--eval-every", "100", "--out"])
        .arg(&out_dir)
        .args(SMALL)
        .args(["--set", "policy_delay=4"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = text(&out);
    assert!(stdout.contains("policy_delay = 4"), "{stdout}");
    assert!(stdout.contains("seed = 3"));

    let csv = std::fs::read_to_string(out_dir.join("progress.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("100,"));
    assert!(lines[2].starts_with("200,"));
    assert!(out_dir.join("config.txt").exists());
    assert!(out_dir.join("actor.mlp").exists());

    let ev = bin()
        .args(["eval", "--episodes", "3", "--checkpoint"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        ev.status.success(),
        "{}",
        String::from_utf8_lossy(&ev.stderr)
    );
    let line = text(&ev);
    assert!(line.starts_with("lqr2d over 3 episodes: "), "{line}");
    assert!(line.contains(" ± "));
}

#[test]
fn config_file_is_applied_before_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test\nenv = pendulum\nseed = 9\ntau = 0.01\n").unwrap();
    let out = bin()
        .args([
            "run",
            "--steps",
            "100",
            "--eval-every",
            "100",
            "--seed",
            "4",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .args(SMALL)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = text(&out);
    assert!(stdout.contains("env = pendulum"));
    assert!(stdout.contains("seed = 4"));
    assert!(stdout.contains("tau = 0.01"));
}

#[test]
fn relative_out_dir_uses_root_variable() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("DDPGPP_OUT_ROOT", dir.path())
        .args([
            "run",
            "--steps",
            "100",
            "--eval-every",
            "100",
            "--out",
            "nested/run",
        ])
        .args(SMALL)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("nested/run/progress.csv").exists());
}

#[test]
fn bad_input_fails_with_message() {
    let out = bin()
        .args(["run", "--set", "no_such_key=1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = bin()
        .args(["run", "--env", "cartpole", "--steps", "10"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = bin().args(["run", "--bogus"]).output().unwrap();
    assert!(!out.status.success());
}
