use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn catalyst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catalyst"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_protocol_is_a_usage_error() {
    let o = catalyst(&["convert", "no_such_protocol"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown protocol"));
    assert_eq!(code(&catalyst(&["convert", "recurrence", "--params", "bogus=1"])), 4);
    assert_eq!(code(&catalyst(&["frobnicate"])), 4);
    assert_eq!(code(&catalyst(&["convert", "recurrence", "--k", "2"])), 4);
}

#[test]
fn cap_exceeded_exits_three() {
    assert_eq!(code(&catalyst(&["convert", "random", "--params", "n=13"])), 3);
}

#[test]
fn convert_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = catalyst(&[
        "convert", "recurrence", "--params", "copies=2", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line = String::from_utf8(o.stdout).unwrap();
    assert_eq!(line.lines().count(), 1);
    assert!(line.starts_with("convert,recurrence,s1,4,2,2,2,0.6724,"));
    for f in ["report.json", "protocol.json", "summary.csv", "input_block.json", "target.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(out.join("catalyst/branch_1.json").exists());
    assert!(out.join("catalyst/branch_2.json").exists());
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["pass"], Value::Bool(true));
    assert_eq!(report["tolerances"]["equality"].as_f64(), Some(1e-9));
    assert!(report["versions"]["catalyst_core"].is_string());
    let proto = read_json(&out.join("protocol.json"));
    assert_eq!(proto["block_size"].as_u64(), Some(2));
    assert_eq!(proto["steps"].as_array().unwrap().len(), 4);
}

#[test]
fn tradeoff_is_convert_with_s4() {
    let a = catalyst(&["tradeoff", "five_qubit_t"]);
    let b = catalyst(&["convert", "five_qubit_t", "--variant", "s4", "--k", "1"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let r: Value = serde_json::from_slice(&a.stdout).unwrap();
    let p = r["result"]["multishot_success_probability"].as_f64().unwrap();
    let s = r["result"]["success_probability"].as_f64().unwrap();
    assert!((s - p / 5.0).abs() < 1e-9);
}

#[test]
fn verify_accepts_fresh_and_rejects_tampered_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reuse");
    assert_eq!(code(&catalyst(&["reuse", "recurrence_deterministic", "--out", out.to_str().unwrap()])), 0);
    let path = out.join("report.json");
    assert_eq!(code(&catalyst(&["verify", path.to_str().unwrap()])), 0);

    let mut report = read_json(&path);
    let v = report["result"]["success_probability"].as_f64().unwrap();
    report["result"]["success_probability"] = Value::from(v - 1e-3);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string_pretty(&report).unwrap()).unwrap();
    let o = catalyst(&["verify", tampered.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("success_probability"));

    let mut flipped = read_json(&path);
    flipped["result"]["checks"][0]["pass"] = Value::Bool(false);
    std::fs::write(&tampered, serde_json::to_string(&flipped).unwrap()).unwrap();
    assert_eq!(code(&catalyst(&["verify", tampered.to_str().unwrap()])), 2);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let args = ["convert", "random", "--seed", "42", "--params", "n=4,m=2"];
    let a = catalyst(&args);
    let b = catalyst(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = catalyst(&["convert", "random", "--seed", "43", "--params", "n=4,m=2"]);
    assert_ne!(a.stdout, c.stdout);
    let r: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(r["config"]["params"]["seed"], Value::from("42"));
}

#[test]
fn channel_trivial_code_has_zero_eps() {
    let o = catalyst(&["channel", "trivial"]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["result"]["eps"].as_f64(), Some(0.0));
    assert!(r["result"]["g3_vs_target"]["max"].as_f64().unwrap() < 1e-12);
}

#[test]
fn list_protocols_as_json() {
    let o = catalyst(&["list-protocols", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let list: Value = serde_json::from_slice(&o.stdout).unwrap();
    let keys: Vec<&str> = list.as_array().unwrap().iter().map(|p| p["key"].as_str().unwrap()).collect();
    assert!(keys.contains(&"five_qubit_t"));
    assert!(keys.contains(&"recurrence"));
}
