use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn pcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcl"))
        .args(args)
        .env_remove("PCL_UNTYPED")
        .env_remove("PCL_THREADS")
        .env_remove("PCL_FORMAT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn every_fixture_parses() {
    let mut seen = 0;
    for entry in fs::read_dir(fixtures()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "pcl") {
            let o = pcl(&["parse", path.to_str().unwrap()]);
            assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
            assert!(stdout(&o).contains("BS1 = "));
            seen += 1;
        }
    }
    assert!(seen >= 7);
}

#[test]
fn parse_lists_the_basic_sequences_of_cr() {
    let o = pcl(&["parse", &fixture("cr.pcl")]);
    let out = stdout(&o);
    assert!(out.contains("BS1 = Init.BS1"), "{out}");
    assert!(out.contains("BS2 = Init.BS2"));
    assert!(out.contains("BS3 = Resp.BS1"));
    assert!(!out.contains("BS4"));
}

#[test]
fn syntax_errors_carry_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.pcl");
    fs::write(&empty, "").unwrap();
    let o = pcl(&["parse", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1:1"), "{}", stderr(&o));
}

#[test]
fn exit_status_follows_the_verdict() {
    let cr = fixture("cr.pcl");
    let holds = pcl(&["check", &cr, "--axiom", "VER", "--threads", "1"]);
    assert_eq!(holds.status.code(), Some(0), "{}", stderr(&holds));
    assert!(stdout(&holds).contains("holds-within-bounds"));

    let fails = pcl(&["check", &cr, "--axiom", "gamma1", "--untyped"]);
    assert_eq!(fails.status.code(), Some(1));
    let out = stdout(&fails);
    assert!(out.contains("counterexample"));
    assert!(out.contains("witnessing events"));
}

#[test]
fn per_sequence_checking_with_precedence() {
    let o = pcl(&["check", &fixture("cr.pcl"), "--axiom", "GAMMA1", "--honesty", "--precedence", "on"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    for label in ["Init.BS1", "Init.BS2", "Resp.BS1"] {
        assert!(out.contains(label), "{out}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let cr = fixture("cr.pcl");
    let unknown = pcl(&["check", &cr, "--axiom", "NOPE"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("VER"), "catalogue listed: {}", stderr(&unknown));

    let dh = pcl(&["check", &fixture("dh_min.pcl"), "--axiom", "DH2"]);
    assert_eq!(dh.status.code(), Some(2));
    assert!(stderr(&dh).contains("dh"), "{}", stderr(&dh));

    let case = pcl(&["repro", "no-such-case"]);
    assert_eq!(case.status.code(), Some(2));
    assert!(stderr(&case).contains("hash3"));

    let missing = pcl(&["parse", "/nonexistent/protocol.pcl"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn schemas_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mine.pcl");
    fs::write(&path, "axiom MINE [X:thread, t:term] : [receive t]_X exists thread* Z. Send(Z, t);\n").unwrap();
    let o = pcl(&["check", &fixture("cr.pcl"), "--schema", path.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("MINE on CR: holds-within-bounds"));
}

/// Structured output with timings removed.
fn without_timings(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("elapsed_ms");
            m.values_mut().for_each(without_timings);
        }
        Value::Array(a) => a.iter_mut().for_each(without_timings),
        _ => {}
    }
}

#[test]
fn structured_output_is_stable() {
    let mut outs = Vec::new();
    for _ in 0..2 {
        let o = pcl(&["repro", "gamma1-untyped", "--format", "json"]);
        assert_eq!(o.status.code(), Some(0));
        let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
        without_timings(&mut v);
        outs.push(v);
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0]["agrees"], true);
    assert_eq!(outs[0]["verdicts"][0]["outcome"], "counterexample");
    assert!(outs[0]["verdicts"][0]["witness"]["run"]["events"].is_array());
}

#[test]
fn report_written_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = pcl(&["repro", "hash3", "--format", "structured", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["case"], "hash3");
}

#[test]
fn bounds_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_pcl"))
        .args(["runs", &fixture("cr.pcl"), "--format", "text"])
        .env("PCL_THREADS", "1")
        .env("PCL_LENGTH", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().last().unwrap().ends_with(" runs"));
    assert!(!out.contains("(3 events)"));
}

#[test]
fn runs_are_limited() {
    let o = pcl(&["runs", &fixture("cr.pcl"), "--limit", "3"]);
    assert!(o.status.success());
    assert!(stdout(&o).ends_with("3 runs\n"));
}

#[test]
fn catalogue_and_cases_are_listed() {
    let o = pcl(&["axioms"]);
    let out = stdout(&o);
    for name in ["VER", "SEC", "AR1", "AR3", "DH1", "HASH3", "HASH4", "GAMMA1"] {
        assert!(out.contains(name), "{name} missing");
    }
    let o = pcl(&["repro", "--list", "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 8);
}
