use std::process::{Command, Output};

use serde_json::Value;

fn mirrorgw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirrorgw"))
        .args(args)
        .env_remove("MIRRORGW_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn values(doc: &Value, kind: &str) -> Vec<String> {
    doc["records"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["kind"] == kind)
        .map(|r| r["value"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn septic_row() {
    let out = mirrorgw(&["bps", "--model", "n=7;a=7", "--insertions", "2,2", "--dmax", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["model"]["spec"], "n=7;a=7");
    assert_eq!(
        values(&doc, "bps"),
        ["1707797", "510787745643", "222548537108926490", "113635631482486991647224"]
    );
    assert!(doc["checks"].as_array().unwrap().iter().all(|c| c["status"] == "pass"));
}

#[test]
fn coefficient_suite_passes() {
    let out = mirrorgw(&["verify", "--suite", "coeffs", "--model", "n=5;a=3", "--dmax", "6"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    let checks = doc["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    assert!(checks.iter().all(|c| c["status"] == "pass"));
}

#[test]
fn klein_values_do_not_depend_on_the_draw() {
    let base = ["open", "--model", "n=5;a=5", "--what", "klein", "--dmax", "2"];
    let one = mirrorgw(&[&base[..], &["--seed", "1"]].concat());
    let two = mirrorgw(&[&base[..], &["--seed", "2"]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, two.stdout);
    assert_eq!(values(&json(&one), "klein"), ["45/4", "582725/4"]);
}

#[test]
fn output_is_deterministic() {
    let args = ["descendants", "--model", "n=4;a=2", "--dmax", "3"];
    assert_eq!(mirrorgw(&args).stdout, mirrorgw(&args).stdout);
}

#[test]
fn csv_matches_json() {
    let base = ["bps", "--model", "n=5;a=5", "--insertions", "1,1", "--dmax", "3"];
    let j = json(&mirrorgw(&base));
    let c = mirrorgw(&[&base[..], &["--format", "csv"]].concat());
    let mut reader = csv::Reader::from_reader(c.stdout.as_slice());
    let rows: Vec<Vec<String>> = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    let want: Vec<Vec<String>> = j["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| ["kind", "degree", "insertions", "value"].iter().map(|k| r[k].as_str().unwrap().to_string()).collect())
        .collect();
    assert_eq!(rows, want);
}

#[test]
fn invalid_model_is_a_structured_error() {
    let out = mirrorgw(&["bps", "--model", "n=4;a=5", "--insertions", "1,1"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_input");
}

#[test]
fn failing_suite_exits_nonzero() {
    // the coefficient identities need a Fano model
    let out = mirrorgw(&["verify", "--suite", "coeffs", "--model", "n=5;a=5", "--dmax", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let doc = json(&out);
    assert!(doc["checks"].as_array().unwrap().iter().any(|c| c["status"] == "fail"));
}

#[test]
fn output_directory_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mirrorgw"))
        .args(["open", "--model", "n=5;a=5", "--what", "disk", "--dmax", "2", "--format", "csv"])
        .env("MIRRORGW_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("open-disk-n_5_a_5.csv")).unwrap();
    assert!(text.starts_with("kind,degree,insertions,value\ndisk,1/2,,30\n"), "{text}");
}
