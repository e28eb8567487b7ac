use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn adapt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adapt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn missing_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let output = adapt(&["run", "--config", "no-such-file.toml"], dir.path());
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("no-such-file.toml"));
}

#[test]
fn malformed_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "strategy = \"adapt\"\nparallelism = 0\n").unwrap();
    assert_eq!(adapt(&["run", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.toml"), "strategy = \"adapt\"\nbogus = 1\n").unwrap();
    assert_eq!(adapt(&["run", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(adapt(&["run", "--strategy", "react"], dir.path()).status.code(), Some(2));
}

#[test]
fn run_from_config_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let gen = adapt(
        &["gen-tasks", "--targets", "stick,beehive,torch", "--out", "tasks.jsonl"],
        dir.path(),
    );
    assert!(gen.status.success());
    fs::write(
        dir.path().join("run.toml"),
        r#"
strategy = "adapt"
tasks = "tasks.jsonl"
out_dir = "out"
parallelism = 2

[controller]
d_max = 3
record_tree = false

[executor_backend]
kind = "scripted"
scripted = { competence = 1 }
"#,
    )
    .unwrap();
    let output = adapt(&["run", "--config", "run.toml"], dir.path());
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(stdout(&output).lines().any(|l| l.starts_with("success rate") && l.ends_with(" 100.0%")));
    let results = fs::read_to_string(dir.path().join("out/results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(dir.path().join("out/summary.json").is_file());

    let summary = adapt(&["summarize", "out/results.jsonl", "--json"], dir.path());
    let json: serde_json::Value = serde_json::from_slice(&summary.stdout).unwrap();
    assert_eq!(json["episodes"], 3);
    assert_eq!(json["per_depth"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_emits_one_row_per_depth() {
    let dir = tempfile::tempdir().unwrap();
    let output = adapt(
        &["sweep-depth", "--max", "4", "--out", "sweep", "--strategy", "adapt", "--seed", "1"],
        dir.path(),
    );
    assert!(output.status.success());
    let csv = stdout(&output);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("d_max,strategy,episodes,success_rate"));
    assert!(lines[4].starts_with("4,adapt,45,100.0,"));
    for d in 1..=4 {
        assert!(dir.path().join(format!("sweep/d_max_{d}/summary.json")).is_file());
    }
}

#[test]
fn oracle_replays_gold_actions() {
    let dir = tempfile::tempdir().unwrap();
    let output = adapt(&["oracle", "beehive"], dir.path());
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("> craft 1 beehive using 6 oak planks, 3 honeycomb"));
    assert!(text.trim_end().ends_with("goal reached: true"));
    assert_eq!(adapt(&["oracle", "unobtainium"], dir.path()).status.code(), Some(1));
}

#[test]
fn gen_tasks_filters_splits() {
    let dir = tempfile::tempdir().unwrap();
    let output = adapt(&["gen-tasks", "--split", "test"], dir.path());
    assert!(output.status.success());
    for line in stdout(&output).lines() {
        let task: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(task["split"], "test");
    }
}

#[test]
fn summarize_needs_existing_records() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(adapt(&["summarize", "missing.jsonl"], dir.path()).status.code(), Some(1));
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let output = adapt(&["summarize", "empty.jsonl"], dir.path());
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("no records"));
}

#[test]
fn bundled_configs_load() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let scripted = adapt_harness::RunConfig::load(&configs.join("scripted.toml")).unwrap();
    assert_eq!(scripted.controller.d_max, 4);
    assert!(scripted.out_dir.ends_with("runs/scripted"));
    let http = adapt_harness::RunConfig::load(&configs.join("http.toml")).unwrap();
    assert_eq!(http.executor_backend.api_key_env.as_deref(), Some("OPENAI_API_KEY"));
    assert!(http.tasks.is_none());
}
