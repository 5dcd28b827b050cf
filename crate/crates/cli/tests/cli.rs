use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/m3_golden.json")
}

fn repfactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repfactor"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_golden() {
    let out = repfactor(&["validate", s(&golden())]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("G=3 H=3 dim E=4"), "{}", stdout(&out));
}

#[test]
fn validate_rejects_malformed_pair_with_location() {
    let dir = TempDir::new().unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(golden()).unwrap()).unwrap();
    value["E"]["generators"][0][1][0] = serde_json::json!([1.0]);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, value.to_string()).unwrap();
    let out = repfactor(&["validate", s(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("E.generators[0][1][0]"), "{err}");
}

#[test]
fn factorize_writes_a_report() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("qons.json");
    let out = repfactor(&[
        "factorize",
        "--method",
        "qons",
        "--instance",
        s(&golden()),
        "--emit-unitaries",
        "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["pass"], true);
    let methods = json["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 1);
    // θ = id factors through M = B = C⊕M₂.
    assert_eq!(methods[0]["report"]["dim_module"], 5);
    assert!(methods[0]["report"]["unitary_matrix"].is_array());
}

#[test]
fn factorize_unit_vector_fails_without_one() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("uv.json");
    let out = repfactor(&[
        "factorize",
        "--method",
        "unit-vector",
        "--instance",
        s(&golden()),
        "--report",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("not applicable"));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let out = repfactor(&["factorize", "--method", "bogus", "--instance", "x", "--report", "y"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown method"));
}

#[test]
fn random_then_verify() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("inst.json");
    assert!(
        repfactor(&["random", "--seed", "3", "--max-dim", "10", "--out", s(&inst)])
            .status
            .success()
    );
    let out = repfactor(&["verify", "--instance", s(&inst)]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS oracle.mss"));
}

#[test]
fn random_from_spec_and_product_system() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"b_blocks": [[1, 1], [2, 1]], "c_blocks": [[1, 1]], "e_mult": [1, 1], "m_mult": [[1], [1]], "endomorphism": true}"#,
    )
    .unwrap();
    let inst = dir.path().join("endo.json");
    assert!(
        repfactor(&["random", "--spec", s(&spec), "--seed", "8", "--out", s(&inst)])
            .status
            .success()
    );
    let report = dir.path().join("ps.json");
    let out = repfactor(&[
        "product-system",
        "--instance",
        s(&inst),
        "--steps",
        "3",
        "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["steps"], 3);
    assert_eq!(json["multiplication"].as_array().unwrap().len(), 3);
}

#[test]
fn product_system_needs_an_endomorphism() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("inst.json");
    assert!(repfactor(&["random", "--seed", "0", "--out", s(&inst)])
        .status
        .success());
    let out = repfactor(&["product-system", "--instance", s(&inst), "--steps", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn broken_theta_fails_only_the_homomorphism_check() {
    let dir = TempDir::new().unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(golden()).unwrap()).unwrap();
    let images = value["theta"]["images"].as_array_mut().unwrap();
    for m in images.iter_mut() {
        let rows = m.as_array().unwrap().clone();
        let n = rows.len();
        *m = serde_json::Value::Array(
            (0..n)
                .map(|i| serde_json::Value::Array((0..n).map(|j| rows[j][i].clone()).collect()))
                .collect(),
        );
    }
    let path = dir.path().join("broken.json");
    std::fs::write(&path, value.to_string()).unwrap();
    assert_eq!(repfactor(&["validate", s(&path)]).status.code(), Some(2));
    let out = repfactor(&["verify", "--instance", s(&path), "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let failed: Vec<&str> = json["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["theta.homomorphism"]);
}
