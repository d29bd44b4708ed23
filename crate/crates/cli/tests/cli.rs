use std::path::Path;
use std::process::{Command, Output};

fn airhockey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airhockey"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8_lossy(&o.stderr).to_string();
    assert_eq!(s.trim_end().lines().count(), 1, "{s}");
    s.trim_end().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn train_eval_collect_table_replay() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("runs/touch");
    let cfg = dir.path().join("touch.json");
    let json = serde_json::json!({
        "task_id": "Touch",
        "algorithm": "ppo",
        "seeds": [0],
        "total_steps": 400,
        "eval_every": 400,
        "n_eval_episodes": 2,
        "ppo": {"rollout_len": 200, "hidden": [8]},
        "output_dir": run,
    });
    std::fs::write(&cfg, json.to_string()).unwrap();
    let o = airhockey(&["train", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let policy = run.join("policy_seed0.json");
    assert!(policy.exists() && run.join("curve.csv").exists() && run.join("metrics.csv").exists());

    let o = airhockey(&["eval", "--policy", p(&policy), "--task", "Touch", "--episodes", "2", "--seeds", "1,2"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["per_seed"].as_array().unwrap().len(), 2);

    let data = dir.path().join("data");
    let o = airhockey(&["collect-expert", "--policy", p(&policy), "--steps", "300", "--out", p(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read_dir(&data).unwrap().next().unwrap().unwrap().path();
    let o = airhockey(&["replay-verify", "--file", p(&first)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));

    let o = airhockey(&["table", "--runs", p(&dir.path().join("runs"))]);
    assert!(o.status.success());
    let md = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(md.lines().nth(2).unwrap().starts_with("| PPO |"));
    assert!(dir.path().join("runs/results_table.csv").exists());
}

#[test]
fn errors_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = airhockey(&["eval", "--policy", "/nonexistent.json", "--task", "Reach"]);
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("error kind=policy message="));

    let o = airhockey(&["eval", "--policy", "x.json", "--task", "Hover"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).starts_with("error kind=usage"));

    let cfg = dir.path().join("bc.json");
    std::fs::write(&cfg, r#"{"task_id": "Reach", "algorithm": "bc"}"#).unwrap();
    let o = airhockey(&["train", "--config", p(&cfg)]);
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("error kind=missing_dataset"));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let json = serde_json::json!({"task_id": "Reach", "algorithm": "iql", "dataset_dir": empty});
    std::fs::write(&cfg, json.to_string()).unwrap();
    let o = airhockey(&["train", "--config", p(&cfg)]);
    assert_eq!(stderr_line(&o), "error kind=empty_dataset message=\"empty dataset\"");

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{}\n").unwrap();
    let o = airhockey(&["replay-verify", "--file", p(&bad)]);
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("error kind=dataset"));
}
