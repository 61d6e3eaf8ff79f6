//! End-to-end tests of the command-line interface: exit codes, output
//! formats, file emission and reproducibility.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use stagesim::metrics::SummaryReport;

fn stagesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagesim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn temp_path(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("stagesim-test-{}-{name}", std::process::id()));
    path
}

#[test]
fn models_lists_bundled_names() {
    let out = stagesim(&["models"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in [
        "circleci:original",
        "circleci:a",
        "circleci:b",
        "circleci:c",
    ] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn run_emits_the_metric_table() {
    let out = stagesim(&[
        "run",
        "--model",
        "circleci:b",
        "--seed",
        "1",
        "--events",
        "2000",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for row in [
        "Event rejection rate",
        "Availability",
        "Max queue size",
        "Mean time in queue",
        "Throughput",
        "Recovery time",
    ] {
        assert!(text.contains(row), "missing row {row}: {text}");
    }
}

#[test]
fn same_seed_runs_write_identical_summaries() {
    let first = temp_path("summary-a.json");
    let second = temp_path("summary-b.json");
    for path in [&first, &second] {
        let out = stagesim(&[
            "run",
            "--model",
            "circleci:a",
            "--seed",
            "7",
            "--events",
            "3000",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    let a = fs::read(&first).unwrap();
    let b = fs::read(&second).unwrap();
    assert_eq!(a, b, "summary files are byte-identical");
    fs::remove_file(first).ok();
    fs::remove_file(second).ok();
}

#[test]
fn summary_json_parses_back_losslessly() {
    let path = temp_path("summary-roundtrip.json");
    let out = stagesim(&[
        "run",
        "--model",
        "circleci:c",
        "--seed",
        "3",
        "--events",
        "2000",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let from_stdout: SummaryReport = serde_json::from_str(&stdout(&out)).unwrap();
    let from_file: SummaryReport =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(from_stdout, from_file);
    assert_eq!(
        from_file.injected,
        from_file.rejected + from_file.succeeded + from_file.failed
    );
    fs::remove_file(path).ok();
}

#[test]
fn samples_stream_is_emitted_as_json_lines() {
    let path = temp_path("samples.jsonl");
    let out = stagesim(&[
        "run",
        "--model",
        "circleci:b",
        "--seed",
        "1",
        "--events",
        "500",
        "--poll-period",
        "10",
        "--samples",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = fs::read_to_string(&path).unwrap();
    let mut saw_depth = false;
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).expect("each line is JSON");
        assert!(value.get("tick").is_some() && value.get("name").is_some());
        if value["name"].as_str().unwrap().starts_with("queue_depth:") {
            saw_depth = true;
        }
    }
    assert!(saw_depth, "queue depth samples present");
    fs::remove_file(path).ok();
}

#[test]
fn unknown_model_is_a_config_error() {
    let out = stagesim(&["run", "--model", "circleci:z"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown model"));
}

#[test]
fn budget_abort_is_a_runtime_error() {
    let out = stagesim(&[
        "run",
        "--model",
        "circleci:original",
        "--events",
        "5000",
        "--max-ticks",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("budget"));
}

#[test]
fn compare_requires_two_models() {
    let out = stagesim(&["compare", "--models", "circleci:a"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("at least two"));
}

#[test]
fn compare_renders_one_column_per_model() {
    let out = stagesim(&[
        "compare",
        "--models",
        "circleci:a,circleci:a",
        "--seed",
        "5",
        "--events",
        "2000",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    assert_eq!(header.matches("circleci:a").count(), 2);
    // Identical model and seed: identical columns.
    for line in text.lines().skip(2) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() >= 3 {
            let (a, b) = (cells[cells.len() - 2], cells[cells.len() - 1]);
            assert_eq!(a, b, "columns differ in line {line}");
        }
    }
}

const CUSTOM_MODEL: &str = r#"
seed = 9
events = 1500

[scenario]
rate = 800.0
keyspace_mean = 50.0
keyspace_std = 10.0

[model]
entry = "front"

[[model.stages]]
name = "front"
kind = "proxy"
wraps = "guard"
[model.stages.queue]
workers = 64

[[model.stages]]
name = "guard"
kind = "timeout"
wraps = "shield"
deadline = 400

[[model.stages]]
name = "shield"
kind = "breaker"
wraps = "store"
window = 20
failure_threshold = 0.5
cooldown = 1000

[[model.stages]]
name = "store"
kind = "cache"
wraps = "db"
mode = "read_through"
capacity = 128
ttl = 5000

[[model.stages]]
name = "db"
kind = "server"
mean_latency = 30.0
availability = 0.99
[model.stages.queue]
capacity = 10
workers = 32
"#;

#[test]
fn config_file_model_runs() {
    let path = temp_path("custom.toml");
    fs::write(&path, CUSTOM_MODEL).unwrap();
    let out = stagesim(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: SummaryReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report.injected, 1500);
    assert_eq!(
        report.injected,
        report.rejected + report.succeeded + report.failed
    );
    assert!(
        report.availability > 0.9,
        "cache + breaker keep most events fine"
    );
    fs::remove_file(path).ok();
}

#[test]
fn config_file_errors_exit_2() {
    let path = temp_path("broken.toml");
    fs::write(
        &path,
        "[model]\nentry = \"x\"\n[[model.stages]]\nname = \"x\"\nkind = \"nonsense\"\n",
    )
    .unwrap();
    let out = stagesim(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown kind"));
    fs::remove_file(path).ok();
}

#[test]
fn config_cycle_is_reported() {
    let path = temp_path("cycle.toml");
    fs::write(
        &path,
        r#"
[model]
entry = "a"
[[model.stages]]
name = "a"
kind = "proxy"
wraps = "b"
[[model.stages]]
name = "b"
kind = "proxy"
wraps = "a"
"#,
    )
    .unwrap();
    let out = stagesim(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cycle"));
    fs::remove_file(path).ok();
}

#[test]
fn compare_flags_mismatched_scenarios_but_still_emits() {
    let path = temp_path("other-scenario.toml");
    fs::write(&path, CUSTOM_MODEL).unwrap();
    let out = stagesim(&[
        "compare",
        "--models",
        &format!("circleci:b,{}", path.to_str().unwrap()),
        "--seed",
        "2",
        "--events",
        "1000",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("warning"), "mismatch flagged");
    assert!(stdout(&out).contains("Availability"), "table still emitted");
    fs::remove_file(path).ok();
}

#[test]
fn csv_format_has_header_and_rows() {
    let out = stagesim(&[
        "compare",
        "--models",
        "circleci:b,circleci:c",
        "--events",
        "1000",
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("model,injected,"));
    assert_eq!(lines.count(), 2);
}
