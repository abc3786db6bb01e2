//! Jacobi θ₁ and the Weierstrass functions built from it.
//!
//! Everything here is derived from one primitive, the sine q-series
//! θ₁(z,τ) = 2 Σ_{m≥0} (−1)^m q^{(m+1/2)²} sin((2m+1)πz) with q = e^{iπτ}.
//! z-derivatives are taken term by term, so the whole jet θ₁, θ₁′, … comes
//! out of a single pass.
//!
//! Conventions:
//! - g₁(τ) = θ₁‴(0)/(12πi θ₁′(0)), which makes the Laurent expansion of ℘ at
//!   the origin start `1/z² + 0 + O(z²)`.
//! - ℘ = −(log θ₁)″ + 4πi g₁, ζ = θ₁′/θ₁ − 4πi g₁ z, σ = θ₁/θ₁′(0)·e^{−2πi g₁ z²}.
//!
//! Arguments are never reduced modulo the lattice.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const I: C64 = C64::new(0.0, 1.0);

/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 500;
/// Highest z-derivative of θ₁ served by [`theta1_jet`].
pub const MAX_THETA_ORDER: usize = 12;
/// Highest derivative of ℘ served by [`wp`].
pub const MAX_WP_ORDER: usize = 8;
/// Points closer than this to Z + τZ are rejected by ℘, ζ and friends.
pub const LATTICE_GUARD: f64 = 1e-9;

const TRUNCATION_REL: f64 = 1e-16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("invalid modular parameter: Im(tau) = {0} is not positive")]
    InvalidTau(f64),
    #[error("theta series needs more than {MAX_TERMS} terms at z = {0}; reduce z modulo the lattice first")]
    SeriesDivergence(C64),
    #[error("argument {0} lies on the period lattice")]
    OnLattice(C64),
    #[error("derivative order {0} exceeds the supported maximum {1}")]
    DerivOrder(usize, usize),
}

/// A point τ of the upper half plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "C64", into = "C64")]
pub struct ModularParameter {
    tau: C64,
}

impl ModularParameter {
    pub fn new(tau: C64) -> Result<Self, EllipticError> {
        if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(EllipticError::InvalidTau(tau.im));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> C64 {
        self.tau
    }

    /// q = e^{iπτ}.
    pub fn nome(&self) -> C64 {
        (I * PI * self.tau).exp()
    }
}

impl TryFrom<C64> for ModularParameter {
    type Error = EllipticError;

    fn try_from(tau: C64) -> Result<Self, Self::Error> {
        Self::new(tau)
    }
}

impl From<ModularParameter> for C64 {
    fn from(t: ModularParameter) -> C64 {
        t.tau
    }
}

/// A function value with an absolute bound on the series truncation error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticValue {
    pub value: C64,
    pub est_error: f64,
}

/// θ₁^{(k)}(z, τ) for k = 0..=order, all from one pass over the series.
pub fn theta1_jet(
    z: C64,
    tau: &ModularParameter,
    order: usize,
) -> Result<Vec<EllipticValue>, EllipticError> {
    if order > MAX_THETA_ORDER {
        return Err(EllipticError::DerivOrder(order, MAX_THETA_ORDER));
    }
    let q = tau.nome();
    let q2 = q * q;
    let qa = q.norm();
    let w = (I * PI * z).exp();
    let w2 = w * w;
    let winv = w.inv();
    let winv2 = winv * winv;
    // d^k/dz^k sin(az) = a^k (i^k e^{iaz} − (−i)^k e^{−iaz}) / 2i
    let mut ik = vec![C64::new(1.0, 0.0); order + 1];
    let mut mik = vec![C64::new(1.0, 0.0); order + 1];
    for k in 1..=order {
        ik[k] = ik[k - 1] * I;
        mik[k] = mik[k - 1] * -I;
    }

    let mut sums = vec![C64::new(0.0, 0.0); order + 1];
    let mut scale = vec![0.0f64; order + 1];
    let mut qpow = (I * PI * tau.tau() / 4.0).exp(); // q^{(m+1/2)²}
    let mut qstep = q2; // q^{2(m+1)}
    let mut wp = w; // w^{2m+1}
    let mut wm = winv;
    let wmax = w.norm().max(winv.norm());

    for m in 0..MAX_TERMS {
        let a = (2 * m + 1) as f64 * PI;
        let base = if m % 2 == 0 { -I * qpow } else { I * qpow };
        let mag = qpow.norm() * (wp.norm() + wm.norm());
        if !mag.is_finite() {
            return Err(EllipticError::SeriesDivergence(z));
        }
        if m > 0 {
            // ratio of the next term bound to this one; the tail is geometric once it drops below 1
            let ratio = qa.powi(2 * m as i32 + 2)
                * wmax
                * wmax
                * (((2 * m + 3) as f64) / ((2 * m + 1) as f64)).powi(order as i32);
            let mut ak = 1.0;
            let mut done = ratio < 0.5;
            let mut bounds = vec![0.0; order + 1];
            for k in 0..=order {
                bounds[k] = mag * ak;
                if bounds[k] > TRUNCATION_REL * scale[k] {
                    done = false;
                }
                ak *= a;
            }
            if done {
                return Ok(sums
                    .into_iter()
                    .zip(bounds)
                    .map(|(value, b)| EllipticValue {
                        value,
                        est_error: b / (1.0 - ratio),
                    })
                    .collect());
            }
        }
        let mut ak = 1.0;
        for k in 0..=order {
            let term = base * ak * (ik[k] * wp - mik[k] * wm);
            sums[k] += term;
            scale[k] += mag * ak;
            ak *= a;
        }
        qpow *= qstep;
        qstep *= q2;
        wp *= w2;
        wm *= winv2;
    }
    Err(EllipticError::SeriesDivergence(z))
}

/// ∂^k_z θ₁(z, τ).
pub fn theta1(z: C64, tau: &ModularParameter, deriv_order: usize) -> Result<EllipticValue, EllipticError> {
    if deriv_order > 6 {
        return Err(EllipticError::DerivOrder(deriv_order, 6));
    }
    Ok(theta1_jet(z, tau, deriv_order)?[deriv_order])
}

/// g₁(τ) = θ₁‴(0)/(12πi θ₁′(0)).
pub fn g1(tau: &ModularParameter) -> Result<C64, EllipticError> {
    let jet = theta1_jet(C64::new(0.0, 0.0), tau, 3)?;
    Ok(jet[3].value / (12.0 * PI * I * jet[1].value))
}

/// Distance from z to the nearest point of Z + τZ.
pub fn lattice_distance(z: C64, tau: &ModularParameter) -> f64 {
    let t = tau.tau();
    let b = z.im / t.im;
    let a = z.re - b * t.re;
    let (a0, b0) = (a.round(), b.round());
    let mut best = f64::INFINITY;
    for da in -1..=1 {
        for db in -1..=1 {
            let w = C64::new(a0 + da as f64, 0.0) + (b0 + db as f64) * t;
            best = best.min((z - w).norm());
        }
    }
    best
}

fn guard(z: C64, tau: &ModularParameter) -> Result<(), EllipticError> {
    if lattice_distance(z, tau) < LATTICE_GUARD {
        Err(EllipticError::OnLattice(z))
    } else {
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Derivatives of log θ₁: entry j−1 holds (d/dz)^j log θ₁(z) for j = 1..=order.
///
/// Uses θ^{(m+1)} = Σ_{j=0}^{m} C(m,j) θ^{(j)} ℓ_{m+1−j} with ℓ_j = (log θ)^{(j)}.
pub fn log_theta_jet(
    z: C64,
    tau: &ModularParameter,
    order: usize,
) -> Result<Vec<EllipticValue>, EllipticError> {
    guard(z, tau)?;
    let th = theta1_jet(z, tau, order)?;
    Ok(log_derivatives(&th, order))
}

pub(crate) fn log_derivatives(th: &[EllipticValue], order: usize) -> Vec<EllipticValue> {
    let t0 = th[0].value;
    let t0n = t0.norm();
    // ell[j] for j = 1..=order; index 0 unused
    let mut ell = vec![C64::new(0.0, 0.0); order + 1];
    let mut err = vec![0.0f64; order + 1];
    for m in 0..order {
        let mut acc = th[m + 1].value;
        let mut e = th[m + 1].est_error;
        for j in 1..=m {
            let c = binomial(m, j);
            acc -= c * th[j].value * ell[m + 1 - j];
            e += c * (th[j].est_error * ell[m + 1 - j].norm() + th[j].value.norm() * err[m + 1 - j]);
        }
        ell[m + 1] = acc / t0;
        err[m + 1] = (e + ell[m + 1].norm() * th[0].est_error) / t0n;
    }
    (1..=order)
        .map(|j| EllipticValue {
            value: ell[j],
            est_error: err[j],
        })
        .collect()
}

/// ℘^{(k)}(z, τ).
pub fn wp(z: C64, tau: &ModularParameter, deriv_order: usize) -> Result<EllipticValue, EllipticError> {
    if deriv_order > MAX_WP_ORDER {
        return Err(EllipticError::DerivOrder(deriv_order, MAX_WP_ORDER));
    }
    let ell = log_theta_jet(z, tau, deriv_order + 2)?;
    let mut v = ell[deriv_order + 1];
    v.value = -v.value;
    if deriv_order == 0 {
        v.value += 4.0 * PI * I * g1(tau)?;
    }
    Ok(v)
}

/// ℘, ℘′, …, ℘^{(order)} at one point.
pub fn wp_jet(z: C64, tau: &ModularParameter, order: usize) -> Result<Vec<C64>, EllipticError> {
    if order > MAX_WP_ORDER {
        return Err(EllipticError::DerivOrder(order, MAX_WP_ORDER));
    }
    let ell = log_theta_jet(z, tau, order + 2)?;
    let c = 4.0 * PI * I * g1(tau)?;
    Ok((0..=order)
        .map(|k| if k == 0 { c - ell[1].value } else { -ell[k + 1].value })
        .collect())
}

/// Weierstrass ζ(z, τ) = θ₁′/θ₁ − 4πi g₁ z.
pub fn zeta_w(z: C64, tau: &ModularParameter) -> Result<EllipticValue, EllipticError> {
    let ell = log_theta_jet(z, tau, 1)?;
    Ok(EllipticValue {
        value: ell[0].value - 4.0 * PI * I * g1(tau)? * z,
        est_error: ell[0].est_error,
    })
}

/// Weierstrass σ(z, τ) = θ₁(z)/θ₁′(0)·exp(−2πi g₁ z²).
pub fn sigma_w(z: C64, tau: &ModularParameter) -> Result<EllipticValue, EllipticError> {
    let th = theta1_jet(z, tau, 0)?[0];
    let d0 = theta1_jet(C64::new(0.0, 0.0), tau, 3)?;
    let g = d0[3].value / (12.0 * PI * I * d0[1].value);
    let f = (-2.0 * PI * I * g * z * z).exp() / d0[1].value;
    Ok(EllipticValue {
        value: th.value * f,
        est_error: th.est_error * f.norm(),
    })
}

/// ∂θ₁/∂τ through the heat equation ∂_τθ₁ = θ₁″/(4πi).
pub fn theta1_dtau(z: C64, tau: &ModularParameter) -> Result<C64, EllipticError> {
    let jet = theta1_jet(z, tau, 2)?;
    Ok(jet[2].value / (4.0 * PI * I))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(re: f64, im: f64) -> ModularParameter {
        ModularParameter::new(C64::new(re, im)).unwrap()
    }

    #[test]
    fn theta_is_odd() {
        let tau = t(0.0, 1.0);
        assert_eq!(theta1(C64::new(0.0, 0.0), &tau, 0).unwrap().value.norm(), 0.0);
        let a = theta1(C64::new(0.25, 0.0), &tau, 0).unwrap().value;
        let b = theta1(C64::new(-0.25, 0.0), &tau, 0).unwrap().value;
        assert!((a + b).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_tau() {
        assert!(matches!(
            ModularParameter::new(C64::new(0.3, 0.0)),
            Err(EllipticError::InvalidTau(_))
        ));
        assert!(ModularParameter::new(C64::new(0.3, -1.0)).is_err());
    }

    #[test]
    fn huge_imaginary_part_diverges() {
        let tau = t(0.0, 1.0);
        let r = theta1(C64::new(0.1, 400.0), &tau, 0);
        assert!(matches!(r, Err(EllipticError::SeriesDivergence(_))));
    }

    #[test]
    fn g1_period_one() {
        let a = g1(&t(0.2, 1.1)).unwrap();
        let b = g1(&t(1.2, 1.1)).unwrap();
        assert!((a - b).norm() < 1e-13 * a.norm());
    }

    #[test]
    fn wp_even_and_principal_part() {
        let tau = t(0.0, 1.3);
        let z = C64::new(0.31, 0.11);
        let d = wp(z, &tau, 0).unwrap().value - wp(-z, &tau, 0).unwrap().value;
        assert!(d.norm() < 1e-12);
        let tau = t(0.0, 1.0);
        for j in 0..8 {
            let z = 1e-3 * C64::from_polar(1.0, j as f64 * PI / 4.0);
            let v = z * z * wp(z, &tau, 0).unwrap().value;
            assert!((v - 1.0).norm() < 1e-5);
        }
    }

    #[test]
    fn zeta_odd_and_derivative() {
        let tau = t(0.0, 1.5);
        let z = C64::new(0.27, 0.0);
        let s = zeta_w(z, &tau).unwrap().value + zeta_w(-z, &tau).unwrap().value;
        assert!(s.norm() < 1e-12);
        let tau = t(0.0, 1.0);
        let z = C64::new(0.3, 0.2);
        let ell = log_theta_jet(z, &tau, 2).unwrap();
        let dzeta = ell[1].value - 4.0 * PI * I * g1(&tau).unwrap();
        assert!((dzeta + wp(z, &tau, 0).unwrap().value).norm() < 1e-10);
    }

    #[test]
    fn on_lattice_rejected() {
        let tau = t(0.1, 1.0);
        let z = C64::new(1.1, 1.0);
        assert!(matches!(wp(z, &tau, 0), Err(EllipticError::OnLattice(_))));
        assert!(matches!(zeta_w(C64::new(0.0, 1e-12), &tau), Err(EllipticError::OnLattice(_))));
    }

    #[test]
    fn sigma_log_derivative_is_zeta() {
        let tau = t(0.3, 1.2);
        let z = C64::new(0.21, -0.13);
        let ds = crate::contour::cauchy_derivative(|w| sigma_w(w, &tau).unwrap().value, z, 1, 1e-2).unwrap();
        let dl = ds / sigma_w(z, &tau).unwrap().value;
        let zw = zeta_w(z, &tau).unwrap().value;
        assert!((dl - zw).norm() < 1e-11, "{dl} vs {zw}");
    }

    #[test]
    fn est_error_is_tiny_for_moderate_arguments() {
        let tau = t(0.3, 1.2);
        let v = theta1(C64::new(0.3, 0.4), &tau, 3).unwrap();
        assert!(v.est_error < 1e-14 * v.value.norm().max(1.0));
    }
}
