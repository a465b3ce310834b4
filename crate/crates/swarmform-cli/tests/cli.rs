//! End-to-end tests of the `swarmform` binary: every subcommand, file
//! contracts, determinism, and the machine-readable error path.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swarmform"))
}

fn tmp(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn swarmform");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn list_scenarios_prints_all_and_exports_toml() {
    let out = run_ok(bin().arg("list-scenarios"));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in [
        "basic-linear",
        "basic-spiral",
        "move-into-formation",
        "switch-formation",
        "node-failure",
    ] {
        assert!(text.contains(name), "missing {name} in: {text}");
    }

    let dir = tmp("exported-scenarios");
    run_ok(bin().args(["list-scenarios", "--export"]).arg(&dir));
    let exported = std::fs::read_dir(&dir).unwrap().count();
    assert_eq!(exported, 5);
    let text = std::fs::read_to_string(dir.join("switch-formation.toml")).unwrap();
    assert!(text.contains("gap_width"));
}

#[test]
fn train_accepts_scenario_file_path() {
    let dir = tmp("scenario-files");
    run_ok(bin().args(["list-scenarios", "--export"]).arg(&dir));
    let scenario_file = dir.join("basic-linear.toml");
    let out_dir = tmp("train-from-file");
    run_ok(
        bin()
            .args(["train", "--scenario"])
            .arg(&scenario_file)
            .args(["--seed", "1", "--iters", "1", "--out"])
            .arg(&out_dir),
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["scenario"]["name"], "basic-linear");
}

#[test]
fn inspect_topology_emits_failover_matrix() {
    let out = run_ok(bin().args([
        "inspect-topology",
        "--n",
        "5",
        "--lf",
        "1.0",
        "--fail",
        "1",
    ]));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["head"], 2);
    assert_eq!(json["alive"], serde_json::json!([2, 3, 4, 5]));
    assert_eq!(
        json["adjacency"],
        serde_json::json!([[0, 0, 0, 0], [1, 0, 1, 0], [1, 1, 0, 0], [1, 0, 1, 0]])
    );
    assert_eq!(json["spanning_tree"], true);
    assert_eq!(json["molloy_reed"], 2.6);
}

#[test]
fn train_writes_log_params_and_config_echo() {
    let dir = tmp("train-smoke");
    run_ok(
        bin()
            .args(["train", "--scenario", "basic-linear", "--seed", "7", "--iters", "3", "--out"])
            .arg(&dir),
    );
    let log = std::fs::read_to_string(dir.join("convergence.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["iteration"], 1);
    assert_eq!(first["pop_size"], 34); // round(10 + 5 ln 112)

    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("params.json")).unwrap()).unwrap();
    assert_eq!(params["n_agents"], 5);
    assert_eq!(params["layout"]["inputs"], 5);
    assert_eq!(params["params"].as_array().unwrap().len(), 5 * 112);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    // Omitted hyperparameters fall back to the standard defaults and are
    // echoed into the summary.
    assert_eq!(summary["config"]["eta_alpha"], 0.02);
    assert_eq!(summary["config"]["sigma"], 0.2);
    assert_eq!(summary["config"]["beta"], 0.84);
    assert_eq!(summary["config"]["tau"], 0.1);
    assert_eq!(summary["config"]["cost_weights"]["k1"], 0.15);
    assert_eq!(summary["ablation"]["constraint_enabled"], true);
    assert_eq!(summary["seed"], 7);
}

#[test]
fn no_constraint_flag_lands_in_ablation_field() {
    let dir = tmp("train-ablate");
    run_ok(
        bin()
            .args([
                "train",
                "--scenario",
                "basic-linear",
                "--seed",
                "1",
                "--iters",
                "2",
                "--no-constraint",
                "--out",
            ])
            .arg(&dir),
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ablation"]["constraint_enabled"], false);
}

#[test]
fn eval_is_deterministic_and_plot_renders() {
    let train_dir = tmp("train-for-eval");
    run_ok(
        bin()
            .args(["train", "--scenario", "node-failure", "--seed", "3", "--iters", "2", "--out"])
            .arg(&train_dir),
    );
    let params = train_dir.join("params.json");

    let eval_a = tmp("eval-a");
    let eval_b = tmp("eval-b");
    for dir in [&eval_a, &eval_b] {
        run_ok(
            bin()
                .arg("eval")
                .arg(&params)
                .args(["--seed", "3", "--out"])
                .arg(dir),
        );
    }
    for name in [
        "trajectory.csv",
        "error.csv",
        "speed_heading.csv",
        "events.json",
        "summary.json",
    ] {
        let a = std::fs::read(eval_a.join(name)).unwrap();
        let b = std::fs::read(eval_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    // The failure scenario records the head change at t = 20 s.
    let events: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_a.join("events.json")).unwrap())
            .unwrap();
    let head_change = events.as_array().unwrap().iter().find(|e| {
        e["kind"] == "head_changed" && e["time"] == 20.0
    });
    assert!(head_change.is_some(), "no head change event: {events}");

    run_ok(bin().arg("plot").arg(&eval_a));
    for name in ["trajectory.svg", "error.svg", "speed.svg", "heading.svg"] {
        let svg = std::fs::read_to_string(eval_a.join(name)).unwrap();
        assert!(svg.starts_with("<svg"), "{name} is not svg");
    }
}

#[test]
fn errors_are_machine_readable_json() {
    let out = bin()
        .args(["train", "--scenario", "does-not-exist", "--iters", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr must be JSON");
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("does-not-exist"));

    let out = bin().arg("plot").arg(tmp("missing-dir")).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
}

#[test]
fn out_root_env_var_is_honored_but_flag_wins() {
    let root = tmp("env-root");
    run_ok(
        bin()
            .env("SWARMFORM_OUT", &root)
            .args(["train", "--scenario", "basic-linear", "--seed", "2", "--iters", "1"]),
    );
    assert!(root.join("train-basic-linear-seed2").join("summary.json").exists());

    let explicit = tmp("explicit-out");
    run_ok(
        bin()
            .env("SWARMFORM_OUT", &root)
            .args(["train", "--scenario", "basic-linear", "--seed", "5", "--iters", "1", "--out"])
            .arg(&explicit),
    );
    assert!(explicit.join("summary.json").exists());
    assert!(!root.join("train-basic-linear-seed5").exists());
}
