use gdro_core::runner::{
    compare_runs, parse_complete_trace, parse_trace, replay_diagnostics, run, write_outputs, Mode, RunConfig, SEED_ENV,
};
use gdro_core::GdroError;

fn small(mode: Mode, seed: u64) -> RunConfig {
    RunConfig {
        mode,
        seed,
        steps: 30,
        population_size: 300,
        batch_size: 64,
        ..RunConfig::default()
    }
}

#[test]
fn baseline_uses_fixed_rollouts_and_no_adversary() {
    let mut c = small(Mode::BaselineGrpo, 1);
    c.batch_size = 256;
    c.population_size = 2000;
    c.steps = 3;
    let t = run(&c).unwrap().trace;
    for s in &t.steps {
        assert_eq!(s.rollouts_total, 256 * 4);
        assert!(s.prompt_adversary.is_none());
        assert!(s.budgeter.is_none());
        assert!(s.diagnostic_inputs.allocation.iter().all(|&n| n == 4.0));
        assert_eq!(s.diagnostics.delta_mu, 0.0);
    }
}

#[test]
fn zero_steps_echo_the_config() {
    let c = RunConfig {
        steps: 0,
        ..small(Mode::PromptGdro, 3)
    };
    let t = run(&c).unwrap().trace;
    assert!(t.steps.is_empty());
    let text = t.to_jsonl();
    let parsed = parse_trace(&text).unwrap();
    assert_eq!(parsed.config.as_ref(), Some(&c));
    assert!(parsed.steps.is_empty());
    assert_eq!(replay_diagnostics(&text).unwrap(), t.diagnostics_csv());
    assert_eq!(t.diagnostics_csv().lines().count(), 1);
}

#[test]
fn runs_are_pure_functions_of_the_config() {
    for mode in [Mode::BaselineGrpo, Mode::PromptGdro, Mode::RolloutGdro] {
        let a = run(&small(mode, 5)).unwrap().trace.to_jsonl();
        let b = run(&small(mode, 5)).unwrap().trace.to_jsonl();
        let other = run(&small(mode, 6)).unwrap().trace.to_jsonl();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }
}

#[test]
fn trace_round_trips_through_text() {
    let t = run(&small(Mode::RolloutGdro, 2)).unwrap().trace;
    let back = parse_complete_trace(&t.to_jsonl()).unwrap();
    assert_eq!(back.config, t.config);
    assert_eq!(back.steps, t.steps);
    assert_eq!(back.summary, t.summary);
    assert_eq!(back.to_jsonl(), t.to_jsonl());
}

#[test]
fn replay_matches_live_diagnostics_and_reports_bad_lines() {
    let t = run(&small(Mode::PromptGdro, 4)).unwrap().trace;
    let text = t.to_jsonl();
    assert_eq!(replay_diagnostics(&text).unwrap(), t.diagnostics_csv());

    assert_eq!(replay_diagnostics("").unwrap().lines().count(), 1);

    // Cut the file in the middle of the third record.
    let lines: Vec<&str> = text.lines().collect();
    let mut truncated = lines[..2].join("\n");
    truncated.push('\n');
    truncated.push_str(&lines[2][..lines[2].len() / 2]);
    match replay_diagnostics(&truncated) {
        Err(GdroError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }

    // Dropping a step breaks contiguity.
    let mut gapped: Vec<&str> = lines.clone();
    gapped.remove(3);
    assert!(matches!(replay_diagnostics(&gapped.join("\n")), Err(GdroError::Parse { .. })));
}

#[test]
fn modes_do_not_couple() {
    let p = run(&small(Mode::PromptGdro, 8)).unwrap().trace;
    let r = run(&small(Mode::RolloutGdro, 8)).unwrap().trace;
    for s in &p.steps {
        assert!(s.budgeter.is_none());
        assert_eq!(s.rollouts_total, 64 * 4);
    }
    for s in &r.steps {
        assert!(s.prompt_adversary.is_none());
        let b = s.budgeter.as_ref().unwrap();
        if b.feasible {
            assert_eq!(s.rollouts_total, 64 * 4);
            assert_eq!(b.realized_mean, 4.0);
        }
    }
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let c = RunConfig {
        batch_size: 0,
        ..small(Mode::BaselineGrpo, 0)
    };
    assert!(matches!(run(&c), Err(GdroError::Config(_))));
    let c = RunConfig {
        mean_budget: 4.01,
        ..small(Mode::RolloutGdro, 0)
    };
    assert!(matches!(run(&c), Err(GdroError::Config(_))));
}

#[test]
fn comparison_with_itself_is_all_zero() {
    let t = run(&small(Mode::PromptGdro, 9)).unwrap().trace;
    let c = compare_runs(&t, &t).unwrap();
    assert_eq!(c.worst_bin_pass_at_k_delta, 0.0);
    assert_eq!(c.mean_wse_reduction, 0.0);
    assert_eq!(c.mass_ge3_delta, 0.0);
    assert_eq!(c.mass_ge8_delta, 0.0);
    assert_eq!(c.mean_rollouts_delta, 0.0);
    assert!(c.per_bin_pass_at_k_delta.iter().flatten().all(|&d| d == 0.0));
}

#[test]
fn comparison_rejects_structural_mismatch() {
    let a = run(&small(Mode::PromptGdro, 9)).unwrap().trace;
    let mut cfg = small(Mode::PromptGdro, 9);
    cfg.bin_edges = vec![0.25, 0.5, 0.75];
    let b = run(&cfg).unwrap().trace;
    assert!(matches!(compare_runs(&a, &b), Err(GdroError::Argument(_))));
}

#[test]
fn rollout_mode_reduces_mean_wse_against_baseline() {
    let base = RunConfig {
        steps: 200,
        ..RunConfig::default()
    };
    let r = run(&RunConfig {
        mode: Mode::RolloutGdro,
        ..base.clone()
    })
    .unwrap()
    .trace;
    let b = run(&RunConfig {
        mode: Mode::BaselineGrpo,
        ..base
    })
    .unwrap()
    .trace;
    let c = compare_runs(&r, &b).unwrap();
    assert!(c.mean_wse_reduction > 0.0, "{c:?}");
    assert_eq!(c.mean_rollouts_delta, 0.0);
}

#[test]
fn outputs_are_written_and_seed_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, small(Mode::RolloutGdro, 1).to_toml_string()).unwrap();
    std::env::set_var(SEED_ENV, "42");
    let loaded = RunConfig::load(&cfg_path);
    std::env::set_var(SEED_ENV, "not-a-number");
    let bad = RunConfig::load(&cfg_path);
    std::env::remove_var(SEED_ENV);
    let loaded = loaded.unwrap();
    assert_eq!(loaded.seed, 42);
    assert!(matches!(bad, Err(GdroError::Config(_))));

    let out = dir.path().join("out");
    write_outputs(&run(&loaded).unwrap(), &out).unwrap();
    for name in [
        "trace.jsonl",
        "diagnostics.csv",
        "summary.json",
        "prompt_adversary.csv",
        "budgeter.csv",
        "tracker.csv",
        "population.txt",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "rollout_gdro");
    let budgeter = std::fs::read_to_string(out.join("budgeter.csv")).unwrap();
    assert!(budgeter.lines().count() > 30);
}

#[test]
fn standard_config_file_matches_defaults() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/standard.toml")).unwrap();
    assert_eq!(RunConfig::from_toml_str(&text).unwrap(), RunConfig::default());
}
