use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn causalkv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causalkv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_put_skew(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(&path, r#"{"skews_ms": [0, 8], "puts": 20}"#).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_put_skew(dir.path());
    let mut csv = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = causalkv(&[
            "run-experiment",
            "put-skew",
            "--seed",
            "3",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["metrics.csv", "trace.jsonl", "verdict.json"] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        csv.push(fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
    let text = String::from_utf8(csv[0].clone()).unwrap();
    assert!(text.starts_with("protocol,preset,param,metric,value"));
    assert!(text.contains("skew_ms=8"));
}

#[test]
fn check_accepts_a_written_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_put_skew(dir.path());
    let out = dir.path().join("run");
    let o = causalkv(&["run-experiment", "put-skew", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let o = causalkv(&["check", out.join("trace.jsonl").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = String::from_utf8(o.stdout).unwrap();
    // two protocols x two skews
    assert_eq!(lines.lines().count(), 4);
    assert!(lines.lines().all(|l| l.contains("\"pass\":true")));
}

#[test]
fn unknown_preset_is_rejected() {
    let o = causalkv(&["run-experiment", "no-such-preset"]);
    assert!(!o.status.success());
}

#[test]
fn malformed_config_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("syntax.json", "{ not json"),
        ("unknown.json", r#"{"no_such_field": 1}"#),
        ("array.json", "[1, 2]"),
    ] {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        let o = causalkv(&["run-experiment", "put-skew", "--config", path.to_str().unwrap(), "--dump-config"]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{name}");
    }
}

#[test]
fn dump_config_shows_patched_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_put_skew(dir.path());
    let o = causalkv(&["run-experiment", "put-skew", "--config", &config, "--dump-config"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["preset"], "put-skew");
    assert_eq!(v["puts"], 20);
    assert_eq!(v["skews_ms"], serde_json::json!([0, 8]));
}

#[test]
fn missing_trace_file_exits_with_error() {
    let o = causalkv(&["check", "/nonexistent/trace.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}
