use froblab::certify::{self, Suite, Tolerances};
use froblab::elliptic::ModularParameter;
use froblab::frobenius;
use froblab::orbitspace::{self, OrbitPoint};
use froblab::C64;

fn point(n: usize, tau: C64, seed: u64) -> OrbitPoint {
    orbitspace::seeded_point(n, ModularParameter::new(tau).unwrap(), seed, orbitspace::DEFAULT_DELTA).unwrap()
}

#[test]
fn critical_points_match_the_contour_count() {
    for n in [2, 3] {
        let p = point(n, C64::new(0.3, 1.2), 11);
        let cd = frobenius::critical_points(&p).unwrap();
        assert_eq!(cd.count, frobenius::expected_count(n));
        assert_eq!(cd.count, n + 3);
        let ac = frobenius::argument_principle_count(&p, &cd).unwrap();
        assert!((ac.value - cd.count as f64).norm() < 1e-8, "{}", ac.value);
        assert!(cd.newton_residual < 1e-11);
    }
}

#[test]
fn canonical_frame_diagonalizes_both_metrics() {
    let p = point(2, C64::new(0.0, 1.2), 7);
    let cd = frobenius::critical_points(&p).unwrap();
    let frame = frobenius::canonical_frame(&p, cd).unwrap();
    let r = frobenius::intersection_canonical_check(&p, &frame).unwrap();
    assert!(r.eta_off_diagonal < 1e-8 && r.g_off_diagonal < 1e-8, "{r:?}");
    assert!(r.ratio_residual < 1e-8);
    assert!((r.eta_scale + 1.0).norm() < 1e-8, "κ = {}", r.eta_scale);
    assert!(r.unit_residual < 1e-8 && r.euler_residual < 1e-8);
}

#[test]
fn wdvv_at_rank_two() {
    let w = frobenius::wdvv_certify(&point(2, C64::new(0.3, 1.2), 13)).unwrap();
    assert!(w.symmetry < 1e-7);
    assert!(w.unit < 1e-7);
    assert!(w.euler < 1e-6);
    assert!(w.associativity < 1e-6);
    assert!(w.potential < 1e-5);
    assert!(w.eigen_match < 1e-6);
}

#[test]
fn rotation_coefficients_solve_darboux_egoroff() {
    let r = frobenius::darboux_egoroff_check(&point(2, C64::new(0.0, 2.0), 11)).unwrap();
    assert!(r.rotation_identity < 1e-5 && r.sum_identity < 1e-5, "{r:?}");
    assert!(r.asymmetry < 1e-8);
}

#[test]
fn report_is_deterministic_and_sorted() {
    let p = point(2, C64::new(0.0, 1.2), 7);
    let tol = Tolerances::default();
    let a = certify::certify(&p, Suite::Wdvv, &tol, None);
    let b = certify::certify(&p, Suite::Wdvv, &tol, None);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.claims.windows(2).all(|w| w[0].id <= w[1].id));
    assert!(a.all_pass(), "{:?}", a.failures().map(|c| &c.id).collect::<Vec<_>>());
    assert_eq!(a.measured_constants.critical_count, Some(5));
}

#[test]
fn missing_fixtures_fail_the_fixture_claims_only() {
    let p = point(2, C64::new(0.0, 1.2), 7);
    let r = certify::certify(&p, Suite::Elliptic, &Tolerances::default(), None);
    let failed: Vec<&str> = r.failures().map(|c| c.id.as_str()).collect();
    assert_eq!(failed, vec!["elliptic/g1-dedekind", "elliptic/oracle-fixtures"]);
}
