use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn attrlabel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrlabel")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = attrlabel(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn fixtures_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok_json(&["fixtures", "--seed", "7", "--images", "30", "--out", &s(&a)]);
    ok_json(&["fixtures", "--seed", "7", "--images", "30", "--out", &s(&b)]);
    ok_json(&["fixtures", "--seed", "8", "--images", "30", "--out", &s(&c)]);
    let ta = tree(&a);
    assert!(!ta.is_empty());
    assert_eq!(ta, tree(&b));
    assert_ne!(ta, tree(&c));
}

#[test]
fn quota_only_plan() {
    let v = ok_json(&["plan", "--dataset", "x", "--goal", "1000", "--quota-only"]);
    assert_eq!(v["quota"], 60);
    let v = ok_json(&["plan", "--dataset", "x", "--goal", "1000", "--fraction", "1/10", "--quota-only"]);
    assert_eq!(v["quota"], 100);
}

#[test]
fn flags_override_run_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"fraction": "1/10", "datasets": {"x": {"goal": 2000}}}"#).unwrap();
    let v = ok_json(&["--run-config", &s(&cfg), "plan", "--dataset", "x", "--quota-only"]);
    assert_eq!(v["quota"], 200);
    let v = ok_json(&["--run-config", &s(&cfg), "plan", "--dataset", "x", "--goal", "1000", "--quota-only"]);
    assert_eq!(v["quota"], 100);
    let v = ok_json(&["--run-config", &s(&cfg), "plan", "--dataset", "x", "--fraction", "0.06", "--quota-only"]);
    assert_eq!(v["quota"], 120);
}

fn error_of(out: &Output) -> (i32, String) {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    (out.status.code().unwrap(), v["error"].as_str().unwrap().to_string())
}

#[test]
fn exit_codes_and_json_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(error_of(&attrlabel(&["plan", "--dataset", "x", "--quota-only"])), (2, "config".into()));
    assert_eq!(error_of(&attrlabel(&["no-such-command"])), (2, "config".into()));
    assert_eq!(
        error_of(&attrlabel(&["plan", "--dataset", "x", "--goal", "10", "--fraction", "3/2", "--quota-only"])),
        (2, "config".into())
    );

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"no_such_field": 1}"#).unwrap();
    assert_eq!(error_of(&attrlabel(&["--run-config", &s(&bad), "plan", "--dataset", "x"])), (2, "config".into()));

    let missing = tmp.path().join("missing");
    let out = attrlabel(&["agreement", "--export", &s(&missing), "--out", &s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));

    let help = attrlabel(&["--help"]);
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("simulate"));
}

#[test]
fn simulate_then_agreement_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let sim = ok_json(&["simulate", "--items", "400", "--disagree", "0.1", "--seed", "3", "--out", &s(&out)]);
    assert_eq!(sim["exclusive_overlap"], 0);
    assert_eq!(sim["replay_identical"], true);

    let export = out.join("export").join("sim");
    let agr = tmp.path().join("agr");
    let pooled = ok_json(&["agreement", "--export", &s(&export), "--out", &s(&agr)]);
    for row in pooled.as_array().unwrap() {
        let pd = row["pd"].as_f64().unwrap();
        if row["attribute"] == "group" {
            assert_eq!(pd, 0.0);
        } else {
            assert!((0.05..0.16).contains(&pd), "{row}");
        }
    }
    for f in ["agreement.json", "pd.csv", "fleiss.csv", "patterns.csv"] {
        assert!(agr.join(f).is_file(), "missing {f}");
    }

    let rep = tmp.path().join("rep");
    ok_json(&["report", "--export", &s(&out.join("export")), "--out", &s(&rep)]);
    assert!(rep.join("distribution.json").is_file());
    assert!(rep.join("distribution.csv").is_file());
    assert!(std::fs::read_dir(&rep).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));
}
