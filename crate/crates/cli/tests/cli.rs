use std::path::Path;
use std::process::{Command, Output};

fn gdro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdro"))
        .args(args)
        .env_remove("GDRO_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn simulate(dir: &Path, name: &str, mode: &str) -> std::path::PathBuf {
    let cfg = dir.join(format!("{name}.toml"));
    std::fs::write(
        &cfg,
        format!("mode = \"{mode}\"\nseed = 3\nsteps = 20\npopulation_size = 300\nbatch_size = 64\n"),
    )
    .unwrap();
    let out = dir.join(name);
    let o = gdro(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with(mode));
    out
}

#[test]
fn simulate_replay_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let rollout = simulate(dir.path(), "r", "rollout_gdro");
    let baseline = simulate(dir.path(), "b", "baseline_grpo");

    let trace = rollout.join("trace.jsonl");
    let o = gdro(&["replay", "--trace", trace.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), std::fs::read_to_string(rollout.join("diagnostics.csv")).unwrap());

    let replayed = dir.path().join("replayed.csv");
    let o = gdro(&["replay", "--trace", trace.to_str().unwrap(), "--out", replayed.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(&replayed).unwrap(),
        std::fs::read(rollout.join("diagnostics.csv")).unwrap()
    );

    let o = gdro(&[
        "report",
        "--a",
        trace.to_str().unwrap(),
        "--b",
        baseline.join("trace.jsonl").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["mode_a"], "rollout_gdro");
    assert_eq!(report["mode_b"], "baseline_grpo");
    assert_eq!(report["steps"], 20);
    assert_eq!(report["mean_rollouts_delta"], 0.0);
}

#[test]
fn seed_override_changes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "steps = 5\npopulation_size = 200\nbatch_size = 32\n").unwrap();
    let mut traces = Vec::new();
    for seed in ["1", "1", "2"] {
        let out = dir.path().join(format!("out{}", traces.len()));
        let o = Command::new(env!("CARGO_BIN_EXE_gdro"))
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("GDRO_SEED", seed)
            .output()
            .unwrap();
        assert!(o.status.success());
        traces.push(std::fs::read(out.join("trace.jsonl")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    assert_ne!(traces[0], traces[2]);
}

#[test]
fn sqrt_law_prints_the_closed_form() {
    let o = gdro(&["sqrt-law", "--v", "1,4", "--q", "0.5,0.5", "--budget", "4"]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let n: Vec<f64> = r["allocation"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    // n proportional to sqrt(v) with mean 4 under equal shares.
    assert!((n[0] - 8.0 / 3.0).abs() < 1e-12);
    assert!((n[1] - 16.0 / 3.0).abs() < 1e-12);
}

#[test]
fn theory_check_suites_pass() {
    for suite in ["lse", "sqrt", "softmin", "rollout-game"] {
        let o = gdro(&["theory-check", "--suite", suite, "--json", "--seed", "5"]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", stdout(&o));
        let r: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
        assert_eq!(r["suite"], suite);
        assert_eq!(r["pass"], true);
        assert_eq!(r["failed_checks"], 0);
    }
}

#[test]
fn errors_exit_with_code_two() {
    let o = gdro(&["sqrt-law", "--v", "1", "--q", "0.5,0.5", "--budget", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("same number"));

    let o = gdro(&["sqrt-law", "--v", "1,2", "--q", "0.5,0.5", "--budget", "-1"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let o = gdro(&["replay", "--trace", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "batch_size = 0\n").unwrap();
    let o = gdro(&["simulate", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
