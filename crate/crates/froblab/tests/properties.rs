//! Property tests: quasi-periodicity, modularity, the group law and the
//! invariance of λ and of the Jacobi forms.

use std::f64::consts::PI;

use froblab::elliptic::{self, ModularParameter, I};
use froblab::orbitspace::{self, act, GroupElement, OrbitPoint, Superpotential};
use froblab::C64;
use proptest::prelude::*;

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn tau_strategy() -> impl Strategy<Value = ModularParameter> {
    (-0.5f64..0.5, 0.8f64..2.0).prop_map(|(re, im)| ModularParameter::new(C64::new(re, im)).unwrap())
}

fn z_strategy() -> impl Strategy<Value = C64> {
    (-0.45f64..0.45, -0.35f64..0.35).prop_map(|(re, im)| C64::new(re, im))
}

fn point_strategy(n: usize) -> impl Strategy<Value = OrbitPoint> {
    (0u64..10_000, prop_oneof![Just(C64::new(0.3, 1.2)), Just(C64::new(0.0, 2.0))])
        .prop_map(move |(seed, tau)| orbitspace::seeded_point(n, ModularParameter::new(tau).unwrap(), seed, orbitspace::DEFAULT_DELTA).unwrap())
}

fn theta(z: C64, tau: &ModularParameter) -> C64 {
    elliptic::theta1(z, tau, 0).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn theta_quasi_periodicity(z in z_strategy(), tau in tau_strategy()) {
        let t = tau.tau();
        let a = theta(z, &tau);
        prop_assert!(rel(theta(z + 1.0, &tau), -a) < 1e-12);
        let factor = -(-2.0 * PI * I * (z + t / 2.0)).exp();
        prop_assert!(rel(theta(z + t, &tau), factor * a) < 1e-11);
        prop_assert!(rel(theta(-z, &tau), -a) < 1e-13);
    }

    #[test]
    fn theta_modular_s_and_t(z in z_strategy(), tau in tau_strategy()) {
        let t = tau.tau();
        let d0 = elliptic::theta1(C64::default(), &tau, 1).unwrap().value;
        // T: θ₁(z, τ+1)/θ₁′(0, τ+1) = θ₁(z, τ)/θ₁′(0, τ)
        let tt = ModularParameter::new(t + 1.0).unwrap();
        let d1 = elliptic::theta1(C64::default(), &tt, 1).unwrap().value;
        prop_assert!(rel(theta(z, &tt) / d1, theta(z, &tau) / d0) < 1e-11);
        // S: θ₁(z/τ, −1/τ)/θ₁′(0, −1/τ) = τ^{−1} e^{πiz²/τ} θ₁(z, τ)/θ₁′(0, τ)
        let ts = ModularParameter::new(-1.0 / t).unwrap();
        let ds = elliptic::theta1(C64::default(), &ts, 1).unwrap().value;
        let rhs = (PI * I * z * z / t).exp() * theta(z, &tau) / (t * d0);
        prop_assert!(rel(theta(z / t, &ts) / ds, rhs) < 1e-10);
    }

    #[test]
    fn wp_is_even_and_periodic(z in z_strategy(), tau in tau_strategy()) {
        prop_assume!(z.norm() > 0.05);
        let w = |x: C64| elliptic::wp(x, &tau, 0).unwrap().value;
        let a = w(z);
        prop_assert!(rel(w(-z), a) < 1e-12);
        prop_assert!(rel(w(z + 1.0), a) < 1e-11);
        prop_assert!(rel(w(z + tau.tau()), a) < 1e-10);
    }

    #[test]
    fn g1_is_the_theta_ratio(tau in tau_strategy()) {
        let j = elliptic::theta1_jet(C64::default(), &tau, 3).unwrap();
        let direct = j[3].value / (12.0 * PI * I * j[1].value);
        prop_assert!(rel(elliptic::g1(&tau).unwrap(), direct) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn seeded_points_are_reproducible(seed in 0u64..1_000_000, n in 2usize..5) {
        let tau = ModularParameter::new(C64::new(0.3, 1.2)).unwrap();
        let a = orbitspace::seeded_point(n, tau, seed, orbitspace::DEFAULT_DELTA).unwrap();
        let b = orbitspace::seeded_point(n, tau, seed, orbitspace::DEFAULT_DELTA).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        prop_assert!(a.genericity(orbitspace::DEFAULT_DELTA).min_separation >= orbitspace::DEFAULT_DELTA);
    }

    #[test]
    fn permutations_compose(p in point_strategy(3), a in 0usize..4, b in 0usize..4, c in 0usize..4, d in 0usize..4) {
        let g1 = GroupElement::swap(3, a, b);
        let g2 = GroupElement::swap(3, c, d);
        let lhs = act(&g2, &act(&g1, &p).unwrap()).unwrap();
        let rhs = act(&g2.after(&g1).unwrap(), &p).unwrap();
        for (x, y) in lhs.coords().iter().zip(rhs.coords()) {
            prop_assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn translations_compose(p in point_strategy(2), l in -1i64..2, le in -1i64..2, m in -1i64..2, me in -1i64..2) {
        let g1 = GroupElement::Translation { lambda: vec![l, -l, 0], lambda_ex: le, mu: vec![0, m, -m], mu_ex: me };
        let g2 = GroupElement::Translation { lambda: vec![0, m, -m], lambda_ex: me, mu: vec![l, 0, -l], mu_ex: le };
        let lhs = act(&g2, &act(&g1, &p).unwrap()).unwrap();
        let rhs = act(&g2.after(&g1).unwrap(), &p).unwrap();
        let (x, y) = (lhs.coords(), rhs.coords());
        // u agrees modulo the integers, everything else exactly
        let du = x[0] - y[0];
        prop_assert!((du.re - du.re.round()).abs() < 1e-12 && du.im.abs() < 1e-12);
        for (a, b) in x[1..].iter().zip(&y[1..]) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn modular_elements_compose(p in point_strategy(2)) {
        let s = GroupElement::s_generator();
        let t = GroupElement::t_generator();
        let lhs = act(&s, &act(&t, &p).unwrap()).unwrap();
        let rhs = act(&s.after(&t).unwrap(), &p).unwrap();
        for (x, y) in lhs.coords().iter().zip(rhs.coords()) {
            prop_assert!((x - y).norm() < 1e-12 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn lambda_is_elliptic(p in point_strategy(2), z in z_strategy()) {
        let sp = Superpotential::new(&p);
        let a = match sp.value(z) {
            Ok(a) => a,
            Err(_) => return Ok(()), // on a pole
        };
        prop_assert!(rel(sp.value(z + 1.0).unwrap(), a) < 1e-11);
        prop_assert!(rel(sp.value(z + p.tau.tau()).unwrap(), a) < 1e-10);
    }

    #[test]
    fn forms_are_invariant(p in point_strategy(2), a in 0usize..3, b in 0usize..3, le in -1i64..2) {
        let swap = GroupElement::swap(2, a, b);
        prop_assert!(orbitspace::verify_invariance(&p, &swap).unwrap() < 1e-9);
        let tr = GroupElement::Translation { lambda: vec![1, -1, 0], lambda_ex: le, mu: vec![0, 1, -1], mu_ex: 1 };
        prop_assert!(orbitspace::verify_invariance(&p, &tr).unwrap() < 1e-9);
    }

    #[test]
    fn weight_ladder_under_modular_generators(p in point_strategy(2)) {
        prop_assert!(orbitspace::verify_invariance(&p, &GroupElement::s_generator()).unwrap() < 1e-8);
        prop_assert!(orbitspace::verify_invariance(&p, &GroupElement::t_generator()).unwrap() < 1e-8);
    }
}
