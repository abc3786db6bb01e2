use froblab::elliptic::ModularParameter;
use froblab::geometry::{self, ChartLabel, ChartOptions, ConstantField, DerivConfig, MetricTensor, PencilField, SaitoMethod, Variance};
use froblab::linalg;
use froblab::orbitspace::{self, GroupElement, OrbitPoint};
use froblab::C64;

fn point(n: usize, tau: C64, seed: u64) -> OrbitPoint {
    orbitspace::seeded_point(n, ModularParameter::new(tau).unwrap(), seed, orbitspace::DEFAULT_DELTA).unwrap()
}

#[test]
fn constant_metric_has_no_connection() {
    let p = point(2, C64::new(0.0, 1.2), 7);
    let g = geometry::intersection_form_v(2).mat;
    let field = ConstantField(g);
    let cfg = DerivConfig::for_point(&p);
    let ch = geometry::christoffel_multi(&field, &p.coords(), &cfg).unwrap().remove(0);
    assert!(ch.max_abs() < 1e-12, "Γ = {:e}", ch.max_abs());
    let r = geometry::curvature_multi(&field, &p.coords(), &cfg).unwrap().remove(0);
    assert!(r.raw < 1e-12 && r.standard < 1e-12);
}

#[test]
fn pullback_of_flat_metric_is_flat_in_every_chart() {
    let p = point(2, C64::new(0.3, 1.2), 11);
    let root = geometry::flat_coords(&p).unwrap().root;
    for chart in [ChartLabel::PhiChart, ChartLabel::TChart] {
        let field = PencilField { n: 2, chart, members: vec![Some(0.0)], branch: Some(root) };
        let r = geometry::curvature_norm(&field, &p).unwrap();
        assert!(r.scaled < 1e-8, "{chart:?}: {:e}", r.scaled);
        let ch = geometry::christoffel(&field, &p).unwrap();
        assert!(ch.compatibility_residual() < 1e-10);
    }
}

#[test]
fn transport_round_trip() {
    let p = point(3, C64::new(0.0, 2.0), 7);
    let cd = geometry::chart_data(&p, None, false, &ChartOptions::default()).unwrap();
    let g = geometry::intersection_form_v(3);
    for chart in [ChartLabel::PhiChart, ChartLabel::TChart] {
        let there = geometry::transport(&g, &cd, chart).unwrap();
        let back = geometry::transport(&there, &cd, ChartLabel::VChart).unwrap();
        assert!(linalg::max_abs(&(&back.mat - &g.mat)) < 1e-10);
    }
}

#[test]
fn cauchy_and_analytic_jacobians_agree() {
    let p = point(2, C64::new(0.0, 1.2), 7);
    let cd = geometry::chart_data(&p, None, false, &ChartOptions::default()).unwrap();
    for chart in [ChartLabel::PhiChart, ChartLabel::TChart] {
        let j = geometry::jacobian(&p, ChartLabel::VChart, chart).unwrap();
        let a = cd.jacobian(chart);
        assert!(linalg::max_abs(&(&j.j - &a)) < 1e-9 * linalg::max_abs(&a));
    }
}

#[test]
fn eta_is_constant_in_flat_coordinates() {
    let a = geometry::saito_metric(&point(2, C64::new(0.3, 1.2), 7), ChartLabel::TChart, SaitoMethod::Directional).unwrap();
    let b = geometry::saito_metric(&point(2, C64::new(0.3, 1.2), 13), ChartLabel::TChart, SaitoMethod::Directional).unwrap();
    let labels = ChartLabel::TChart.coordinate_names(2);
    let (worst, bad) = geometry::entry_mismatches(&a.mat, &b.mat, &labels, 1e-7);
    assert!(bad.is_empty(), "worst {worst:e}");
    let pat = geometry::eta_pattern(&a.mat, 2);
    assert!((pat.t0_tau - C64::new(0.0, -2.0 * std::f64::consts::PI)).norm() < 1e-9);
    assert!((pat.t1_vex + 1.0 / 3.0).norm() < 1e-9);
    assert_eq!(pat.antidiagonal, Some(4));
    assert!((pat.constant + 2.0).norm() < 1e-9);
}

#[test]
fn saito_metric_routes_agree() {
    let p = point(3, C64::new(0.0, 2.0), 11);
    let cd = geometry::chart_data(&p, None, true, &ChartOptions::default()).unwrap();
    let hess = geometry::saito_from_hessian(&cd).unwrap();
    let dir = geometry::saito_metric(&p, ChartLabel::PhiChart, SaitoMethod::Directional).unwrap();
    let e = MetricTensor::new(ChartLabel::PhiChart, Variance::Contravariant, hess.clone());
    assert_eq!(e.variance, Variance::Contravariant);
    assert!(linalg::max_abs(&(&dir.mat - &hess)) < 1e-9 * linalg::max_abs(&hess));
}

#[test]
fn flat_coordinates_top_and_bottom() {
    for n in [2, 3] {
        let p = point(n, C64::new(0.3, 1.2), 7);
        let cd = geometry::chart_data(&p, None, false, &ChartOptions::default()).unwrap();
        assert!((cd.t[1] - cd.phi[1]).norm() < 1e-12);
        assert!((cd.t[n] - n as f64 * cd.root).norm() < 1e-12);
        assert!((cd.root.powi(n as i32) - cd.phi[n]).norm() < 1e-12 * cd.phi[n].norm().max(1.0));
        for k in 1..=n {
            let tk = geometry::big_t(&cd.t, n, k) * (n as f64).powi(1 - k as i32);
            assert!((k as f64 * cd.phi[k] - tk).norm() < 1e-10 * tk.norm().max(1.0), "n={n} k={k}");
        }
    }
}

#[test]
fn t0_shift_under_exceptional_translation() {
    let p = point(2, C64::new(0.0, 1.2), 7);
    for (le, me) in [(1, 0), (-1, 1), (0, 1)] {
        let law = geometry::t0_translation_law(&p, le, me).unwrap();
        assert!(law.t0_residual < 1e-9 && law.invariance < 1e-9, "{le} {me}: {law:?}");
    }
    // λ_ex = 0 moves nothing but u
    let q = orbitspace::act(
        &GroupElement::Translation { lambda: vec![0; 3], lambda_ex: 0, mu: vec![0; 3], mu_ex: 2 },
        &p,
    )
    .unwrap();
    let a = geometry::flat_coords(&p).unwrap();
    let b = geometry::flat_coords_with(&q, Some(a.root)).unwrap();
    assert!((a.t[0] - b.t[0]).norm() < 1e-10);
}

#[test]
fn closed_form_agrees_off_the_known_entries() {
    // The directional and closed-form constructions agree everywhere except
    // in the φ₀ row and the (i+j−2)φ block; this pins down where.
    let p = point(2, C64::new(0.3, 1.2), 7);
    let dir = geometry::saito_metric(&p, ChartLabel::PhiChart, SaitoMethod::Directional).unwrap().mat;
    let closed = geometry::saito_metric(&p, ChartLabel::PhiChart, SaitoMethod::ClosedForm).unwrap().mat;
    let labels = ChartLabel::PhiChart.coordinate_names(2);
    let (_, bad) = geometry::entry_mismatches(&dir, &closed, &labels, 1e-7);
    let mut cells: Vec<(String, String)> = bad.iter().map(|e| (e.row.clone(), e.col.clone())).collect();
    cells.sort();
    assert_eq!(cells, vec![("phi0".into(), "phi2".into()), ("phi2".into(), "phi2".into())]);
}
