use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn scratch(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn restore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restore"))
        .args(args)
        .env_remove("RESTORE_SETTINGS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("document on stdout")
}

#[test]
fn missing_feeder_exits_one() {
    let out = restore(&["solve", "no-such-feeder.toml", data("case1.event.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-feeder.toml"));
}

#[test]
fn infeasible_island_exits_two() {
    // no load flows, so every bus sits at the source voltage, above its cap
    let feeder = scratch("tight.feeder.toml");
    std::fs::write(
        &feeder,
        r#"format = "restoration-feeder"
version = 1
name = "tight"
s_base_kva = 1000.0

[levels]
weights = [1.0]

[defaults]
kv = 4.16
vmin = 0.85
vmax = 0.9

[[buses]]
id = "a"
phases = "a"

[[buses]]
id = "b"
phases = "a"

[[lines]]
from = "a"
to = "b"
phases = "a"
ampacity = [400.0]
r = [[0.1]]
x = [[0.1]]

[[loads]]
bus = "b"
level = 1
kw = [50.0, 0.0, 0.0]
kvar = [10.0, 0.0, 0.0]

[[sources]]
id = "G"
bus = "a"
kind = "diesel"
p_kw = 100.0
q_kvar = 100.0
"#,
    )
    .unwrap();
    let event = scratch("none.event.json");
    std::fs::write(&event, "{}").unwrap();
    let out = restore(&["solve", feeder.to_str().unwrap(), event.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    assert_eq!(doc["failures"][0]["infeasible"], true);
}

#[test]
fn solve_writes_valid_document() {
    let out = restore(&[
        "solve",
        data("ieee13.feeder.toml").to_str().unwrap(),
        data("case1.event.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["kind"], "solve");
    assert!((doc["summary"]["objective"].as_f64().unwrap() - 210.2).abs() < 1e-9);
    assert!(restore_cli::document::validate_document(&doc).is_ok());
}

#[test]
fn schema_rejects_broken_document() {
    let path = scratch("broken.json");
    std::fs::write(&path, r#"{"schema_version": "1.0", "kind": "solve", "summary": {"objective": "lots"}}"#).unwrap();
    let out = restore(&["validate", "--result", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let doc = json(&out);
    assert_eq!(doc["valid"], false);
    assert!(!doc["result_errors"].as_array().unwrap().is_empty());
}

#[test]
fn sweeps_repeat_under_a_seed() {
    let feeder = data("ieee13.feeder.toml");
    let run = || {
        let out = restore(&["sweep", feeder.to_str().unwrap(), "--scenarios", "3", "--seed", "7", "--no-timings"]);
        assert_eq!(out.status.code(), Some(0));
        out.stdout
    };
    let first = run();
    assert_eq!(first, run());
    let doc: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(doc["aggregate"]["scenarios"], 3);
}

#[test]
fn settings_file_from_environment() {
    let bad = scratch("bad.settings.toml");
    std::fs::write(&bad, "solver_tol = -1.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_restore"))
        .args(["validate", data("ieee13.feeder.toml").to_str().unwrap()])
        .env("RESTORE_SETTINGS", &bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver_tol"));

    let good = scratch("good.settings.toml");
    std::fs::write(&good, "oracle_max_loads = 12\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_restore"))
        .args(["validate", data("ieee13.feeder.toml").to_str().unwrap()])
        .env("RESTORE_SETTINGS", &good)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
