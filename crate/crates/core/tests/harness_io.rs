//! Instance files: parsing, validation diagnostics and verification reports.

use std::path::PathBuf;

use repfactor_core::harness::json::{self, RawInstance};
use repfactor_core::harness::{generate_random_instance, golden_m3, read_raw, run_verification, sample_spec};
use repfactor_core::numkernel::subspace_equal;
use repfactor_core::{Error, Instance, VerificationConfig, DEFAULT_TOL};

fn golden_raw() -> RawInstance {
    read_raw(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/m3_golden.json")).unwrap()
}

/// Adds `delta` to entry (0, 0) of the image of an off-diagonal domain
/// element, which leaves θ(1) untouched.
fn perturbed_theta(delta: f64) -> RawInstance {
    let mut raw = golden_raw();
    let traceless = |m: &json::RawMatrix| m.iter().enumerate().all(|(i, row)| row[i] == [0.0, 0.0]);
    let k = raw
        .theta
        .domain
        .iter()
        .position(traceless)
        .expect("off-diagonal element");
    raw.theta.images[k][0][0][0] += delta;
    raw
}

#[test]
fn malformed_complex_pair_is_located() {
    let mut raw = golden_raw();
    raw.e.generators[2][0][1] = vec![1.0];
    match Instance::from_raw(&raw, DEFAULT_TOL) {
        Err(Error::Parse { location, .. }) => assert_eq!(location, "E.generators[2][0][1]"),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn syntax_errors_report_line_and_column() {
    let text = "{\n  \"E\": [1, \n";
    match json::from_str(text) {
        Err(Error::Parse { location, .. }) => assert!(location.starts_with("line "), "{location}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let mut value: serde_json::Value = serde_json::from_str(&golden_m3().to_json()).unwrap();
    value["E"]["extra"] = serde_json::json!(1);
    assert!(matches!(json::from_str(&value.to_string()), Err(Error::Parse { .. })));
}

#[test]
fn wrong_generator_shape_is_a_dimension_mismatch() {
    let mut raw = golden_raw();
    raw.e.dim_h = 4;
    assert!(matches!(
        Instance::from_raw(&raw, DEFAULT_TOL),
        Err(Error::DimensionMismatch { .. })
    ));
}

/// The transpose is unital and *-preserving but reverses products.
fn transposed_theta() -> RawInstance {
    let mut raw = golden_raw();
    raw.theta.images = raw
        .theta
        .domain
        .iter()
        .map(|m| {
            (0..m.len())
                .map(|i| (0..m.len()).map(|j| m[j][i].clone()).collect())
                .collect()
        })
        .collect();
    raw
}

#[test]
fn perturbed_theta_is_rejected() {
    let err = Instance::from_raw(&perturbed_theta(0.05), DEFAULT_TOL).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
}

#[test]
fn anti_multiplicative_theta_names_the_basis_pair() {
    let err = Instance::from_raw(&transposed_theta(), DEFAULT_TOL).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Validation(_)), "{msg}");
    assert!(msg.contains("basis pair"), "{msg}");
}

#[test]
fn lenient_load_isolates_the_homomorphism_check() {
    let inst = Instance::from_raw_lenient(&perturbed_theta(0.05), DEFAULT_TOL).unwrap();
    assert!(inst.theta_error.is_some());
    let report = run_verification(&inst, &VerificationConfig::default());
    assert!(!report.pass);
    let failed: Vec<&str> = report.failed().map(|c| c.name.as_str()).collect();
    assert_eq!(failed, ["theta.homomorphism"]);
    assert!(report.methods.iter().all(|m| m.status.starts_with("not applicable")));
}

#[test]
fn tiny_perturbations_are_absorbed() {
    assert!(Instance::from_raw(&perturbed_theta(1e-13), DEFAULT_TOL).is_ok());
}

#[test]
fn json_round_trip_preserves_the_instance() {
    for inst in [golden_m3(), generate_random_instance(&sample_spec(7, 10), 7).unwrap()] {
        let text = inst.to_json();
        let back = Instance::from_raw(&json::from_str(&text).unwrap(), DEFAULT_TOL).unwrap();
        for (a, b) in [(&inst.e, &back.e), (&inst.f, &back.f)] {
            let (eq, dist) = subspace_equal(a.space(), b.space(), DEFAULT_TOL).unwrap();
            assert!(eq, "{dist:e}");
        }
        for x in inst.theta.domain().basis() {
            assert!((inst.theta.apply(x) - back.theta.apply(x)).norm() < 1e-12);
        }
        assert_eq!(inst.oracle.is_some(), back.oracle.is_some());
    }
}

#[test]
fn reports_are_reproducible() {
    let inst = generate_random_instance(&sample_spec(3, 10), 3).unwrap();
    let cfg = VerificationConfig::default();
    let a = run_verification(&inst, &cfg);
    let b = run_verification(&inst, &cfg);
    assert!(a.pass);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.render_text(), b.render_text());
    assert!(a.methods.iter().all(|m| m.elapsed_ms.is_none()));
}

#[test]
fn golden_report_lists_the_missing_unit_vector() {
    let report = run_verification(&golden_m3(), &VerificationConfig::default());
    assert!(report.pass, "{:?}", report.failed().collect::<Vec<_>>());
    let uv = report.methods.iter().find(|m| m.label == "unit-vector").unwrap();
    assert!(uv.status.contains("no unit vector"), "{}", uv.status);
    assert!(report.checks.iter().any(|c| c.name == "oracle.mss"));
}
