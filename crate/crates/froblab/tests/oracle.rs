//! Values against the independent high-precision oracle (tools/oracle) and
//! the frozen derived constants.

use froblab::certify::{evaluate_fixture, fixture_dir, load_fixtures, FixtureRecord};
use froblab::elliptic::ModularParameter;
use froblab::{orbitspace, C64};
use serde_json::Value;

fn records(name: &str) -> Vec<FixtureRecord> {
    let all = load_fixtures(&fixture_dir().join("elliptic.json")).expect("fixtures/elliptic.json");
    let out: Vec<_> = all.into_iter().filter(|r| r.fn_name == name).collect();
    assert!(!out.is_empty(), "no {name} records");
    out
}

fn check(name: &str) {
    for r in records(name) {
        let got = evaluate_fixture(&r).unwrap_or_else(|e| panic!("{name}{:?}: {e}", r.args));
        let err = (got - r.expected).norm();
        assert!(err <= r.abs_tol, "{name}{:?}: got {got}, expected {}, |Δ| = {err:e} > {:e}", r.args, r.expected, r.abs_tol);
    }
}

#[test]
fn theta1_and_derivatives() {
    check("theta1");
}

#[test]
fn g1_both_routes() {
    check("g1");
    check("eta_logderiv");
}

#[test]
fn weierstrass_wp_and_zeta() {
    check("wp");
    check("zeta_w");
}

#[test]
fn jacobi_forms_at_explicit_points() {
    check("phi");
}

#[test]
fn intersection_form_in_phi_chart() {
    check("gphi");
}

#[test]
fn frozen_forms_output() {
    let text = std::fs::read_to_string(fixture_dir().join("derived.json")).unwrap();
    let d: Value = serde_json::from_str(&text).unwrap();
    let c = |v: &Value| C64::new(v[0].as_f64().unwrap(), v[1].as_f64().unwrap());
    for rec in d["forms"].as_array().unwrap() {
        let tau = ModularParameter::new(c(&rec["tau"])).unwrap();
        let n = rec["n"].as_u64().unwrap() as usize;
        let p = orbitspace::seeded_point(n, tau, rec["seed"].as_u64().unwrap(), rec["delta"].as_f64().unwrap()).unwrap();
        let f = orbitspace::extract_jacobi_forms(&p).unwrap();
        let tol = rec["abs_tol"].as_f64().unwrap();
        for (k, want) in rec["phi"].as_array().unwrap().iter().enumerate() {
            assert!((f.phi[k] - c(want)).norm() < tol, "φ_{k}: {} vs {}", f.phi[k], c(want));
        }
        let weights: Vec<i64> = rec["weights"].as_array().unwrap().iter().map(|w| w.as_i64().unwrap()).collect();
        assert_eq!(weights, f.weights.iter().map(|&w| w as i64).collect::<Vec<_>>());
    }
}
