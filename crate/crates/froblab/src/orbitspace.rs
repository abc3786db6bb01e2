//! Points of Ω = C ⊕ C^{n+1} ⊕ H, the group action, the superpotential λ and
//! the Jacobi forms φ₀..φ_n read off from its Laurent data.
//!
//! The superpotential is
//!
//! λ(z) = e^{−2πiu} ∏_{i=0..n} θ₁(z − v_i + v_ex) / (θ₁(z)^n θ₁(z + (n+1)v_ex))
//!
//! with v_n = −(v₀ + … + v_{n−1}). The Euler field is E = −(1/2πi)∂_u, so
//! E(λ) = λ and every φ_k has index 1.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{self, ContourError, ContourSpec};
use crate::elliptic::{self, lattice_distance, EllipticError, ModularParameter, I};
use crate::linalg::{self, CMat};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const COND_CAP: f64 = 1e8;
pub const DEFAULT_RADIUS_FACTOR: f64 = 0.25;
pub const RADIUS_CAP: f64 = 0.2;
const POLE_GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("n ≥ 2 required (got n = {0})")]
    InvalidRank(usize),
    #[error("expected {expected} independent v entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("z = {0} lies on the pole divisor of λ")]
    OnPoleDivisor(C64),
    #[error("point is not generic: {0}")]
    NonGeneric(String),
    #[error("invalid group element: {0}")]
    InvalidGroupElement(String),
    #[error("triangular solve is ill-conditioned (estimate {0:e})")]
    IllConditioned(f64),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Contour(#[from] ContourError),
}

/// On-disk form of a point: complex numbers as `[re, im]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct PointFile {
    n: usize,
    u: C64,
    v: Vec<C64>,
    v_ex: C64,
    tau: C64,
}

/// A point (u, v₀..v_{n−1}, v_ex, τ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PointFile", into = "PointFile")]
pub struct OrbitPoint {
    n: usize,
    pub u: C64,
    v: Vec<C64>,
    pub v_ex: C64,
    pub tau: ModularParameter,
}

impl TryFrom<PointFile> for OrbitPoint {
    type Error = OrbitError;

    fn try_from(f: PointFile) -> Result<Self, OrbitError> {
        OrbitPoint::new(f.n, f.u, f.v, f.v_ex, ModularParameter::new(f.tau)?)
    }
}

impl From<OrbitPoint> for PointFile {
    fn from(p: OrbitPoint) -> Self {
        PointFile {
            n: p.n,
            u: p.u,
            v: p.v,
            v_ex: p.v_ex,
            tau: p.tau.tau(),
        }
    }
}

/// Separation data behind the genericity flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Genericity {
    /// smallest lattice distance between two of the zeros and poles of λ
    pub min_separation: f64,
    /// smallest lattice distance from v_ex to the points (j + lτ)/n
    pub divisor_distance: f64,
    pub delta: f64,
}

impl Genericity {
    pub fn is_generic(&self) -> bool {
        self.min_separation >= self.delta && self.divisor_distance >= self.delta
    }
}

impl OrbitPoint {
    pub fn new(n: usize, u: C64, v: Vec<C64>, v_ex: C64, tau: ModularParameter) -> Result<Self, OrbitError> {
        if n < 2 {
            return Err(OrbitError::InvalidRank(n));
        }
        if v.len() != n {
            return Err(OrbitError::Dimension {
                expected: n,
                got: v.len(),
            });
        }
        let all_finite = std::iter::once(u)
            .chain(v.iter().copied())
            .chain(std::iter::once(v_ex))
            .all(|c| c.re.is_finite() && c.im.is_finite());
        if !all_finite {
            return Err(OrbitError::NonGeneric("non-finite coordinate".into()));
        }
        Ok(Self { n, u, v, v_ex, tau })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The independent entries v₀..v_{n−1}.
    pub fn v(&self) -> &[C64] {
        &self.v
    }

    /// v₀..v_n with v_n = −Σ_{i<n} v_i.
    pub fn all_v(&self) -> Vec<C64> {
        let mut all = self.v.clone();
        all.push(-self.v.iter().sum::<C64>());
        all
    }

    /// Dimension of every chart, n + 3.
    pub fn dim(&self) -> usize {
        self.n + 3
    }

    /// VChart coordinates (u, v₀..v_{n−1}, v_ex, τ).
    pub fn coords(&self) -> Vec<C64> {
        let mut x = Vec::with_capacity(self.n + 3);
        x.push(self.u);
        x.extend_from_slice(&self.v);
        x.push(self.v_ex);
        x.push(self.tau.tau());
        x
    }

    pub fn from_coords(n: usize, x: &[C64]) -> Result<Self, OrbitError> {
        if x.len() != n + 3 {
            return Err(OrbitError::Dimension {
                expected: n + 3,
                got: x.len(),
            });
        }
        Self::new(n, x[0], x[1..=n].to_vec(), x[n + 1], ModularParameter::new(x[n + 2])?)
    }

    /// Zeros v_i − v_ex of λ, i = 0..n.
    pub fn zeros(&self) -> Vec<C64> {
        self.all_v().into_iter().map(|v| v - self.v_ex).collect()
    }

    /// Poles 0 and −(n+1)v_ex of λ.
    pub fn poles(&self) -> [C64; 2] {
        [C64::default(), -((self.n + 1) as f64) * self.v_ex]
    }

    pub fn genericity(&self, delta: f64) -> Genericity {
        let mut pts = self.zeros();
        pts.extend_from_slice(&self.poles());
        let mut min_sep = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                min_sep = min_sep.min(lattice_distance(pts[i] - pts[j], &self.tau));
            }
        }
        let n = self.n as f64;
        let t = self.tau.tau();
        let mut div = f64::INFINITY;
        for j in 0..self.n {
            for l in 0..self.n {
                let w = (C64::new(j as f64, 0.0) + l as f64 * t) / n;
                div = div.min(lattice_distance(self.v_ex - w, &self.tau));
            }
        }
        Genericity {
            min_separation: min_sep,
            divisor_distance: div,
            delta,
        }
    }

    pub fn require_generic(&self, delta: f64) -> Result<Genericity, OrbitError> {
        let g = self.genericity(delta);
        if g.is_generic() {
            Ok(g)
        } else {
            Err(OrbitError::NonGeneric(format!(
                "separation {:.3e}, divisor distance {:.3e}, delta {delta}",
                g.min_separation, g.divisor_distance
            )))
        }
    }

    /// Lattice distance from the origin to the nearest other zero or pole of λ,
    /// or the nearest nonzero lattice point.
    pub fn clearance_at_origin(&self) -> f64 {
        let t = self.tau.tau();
        let mut d = C64::new(1.0, 0.0).norm().min(t.norm()).min((t - 1.0).norm()).min((t + 1.0).norm());
        for z in self.zeros() {
            d = d.min(lattice_distance(z, &self.tau));
        }
        d.min(lattice_distance(self.poles()[1], &self.tau))
    }

    /// ⟨a, b⟩ = Σ_{i=0..n} a_i b_i − n(n+1) a_ex b_ex on full vectors.
    pub fn pairing(n: usize, a: &[C64], a_ex: C64, b: &[C64], b_ex: C64) -> C64 {
        let s: C64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        s - (n * (n + 1)) as f64 * a_ex * b_ex
    }

    /// The point with u replaced.
    pub fn with_u(&self, u: C64) -> Self {
        let mut p = self.clone();
        p.u = u;
        p
    }
}

/// Elements of the extended affine Jacobi group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GroupElement {
    /// new v_i = old v_{σ(i)} for i = 0..n
    Permutation(Vec<usize>),
    /// lattice vectors of length n+1 with zero sum, plus the exceptional integers
    Translation {
        lambda: Vec<i64>,
        lambda_ex: i64,
        mu: Vec<i64>,
        mu_ex: i64,
    },
    Modular { a: i64, b: i64, c: i64, d: i64 },
}

impl GroupElement {
    pub fn swap(n: usize, i: usize, j: usize) -> Self {
        let mut s: Vec<usize> = (0..=n).collect();
        s.swap(i, j);
        GroupElement::Permutation(s)
    }

    pub fn s_generator() -> Self {
        GroupElement::Modular { a: 0, b: -1, c: 1, d: 0 }
    }

    pub fn t_generator() -> Self {
        GroupElement::Modular { a: 1, b: 1, c: 0, d: 1 }
    }

    fn validate(&self, n: usize) -> Result<(), OrbitError> {
        match self {
            GroupElement::Permutation(s) => {
                let mut seen = vec![false; n + 1];
                if s.len() != n + 1 {
                    return Err(OrbitError::InvalidGroupElement(format!("permutation of length {}", s.len())));
                }
                for &i in s {
                    if i > n || seen[i] {
                        return Err(OrbitError::InvalidGroupElement("not a permutation".into()));
                    }
                    seen[i] = true;
                }
                Ok(())
            }
            GroupElement::Translation { lambda, mu, .. } => {
                if lambda.len() != n + 1 || mu.len() != n + 1 {
                    return Err(OrbitError::InvalidGroupElement("translation length".into()));
                }
                if lambda.iter().sum::<i64>() != 0 || mu.iter().sum::<i64>() != 0 {
                    return Err(OrbitError::InvalidGroupElement("translation vectors must sum to zero".into()));
                }
                Ok(())
            }
            GroupElement::Modular { a, b, c, d } => {
                if a * d - b * c != 1 {
                    return Err(OrbitError::InvalidGroupElement(format!("determinant {}", a * d - b * c)));
                }
                Ok(())
            }
        }
    }

    /// The element acting as `self` after `first`, when the two are of the
    /// same kind. Translations compose up to an integer shift of u.
    pub fn after(&self, first: &GroupElement) -> Option<GroupElement> {
        match (self, first) {
            (GroupElement::Permutation(s2), GroupElement::Permutation(s1)) => {
                // v'' _i = v'_{s2(i)} = v_{s1(s2(i))}
                Some(GroupElement::Permutation(s2.iter().map(|&i| s1[i]).collect()))
            }
            (
                GroupElement::Translation {
                    lambda: l2,
                    lambda_ex: le2,
                    mu: m2,
                    mu_ex: me2,
                },
                GroupElement::Translation {
                    lambda: l1,
                    lambda_ex: le1,
                    mu: m1,
                    mu_ex: me1,
                },
            ) => Some(GroupElement::Translation {
                lambda: l1.iter().zip(l2).map(|(a, b)| a + b).collect(),
                lambda_ex: le1 + le2,
                mu: m1.iter().zip(m2).map(|(a, b)| a + b).collect(),
                mu_ex: me1 + me2,
            }),
            (
                GroupElement::Modular { a, b, c, d },
                GroupElement::Modular {
                    a: a1,
                    b: b1,
                    c: c1,
                    d: d1,
                },
            ) => Some(GroupElement::Modular {
                a: a * a1 + b * c1,
                b: a * b1 + b * d1,
                c: c * a1 + d * c1,
                d: c * b1 + d * d1,
            }),
            _ => None,
        }
    }
}

/// The action of one group element.
pub fn act(g: &GroupElement, p: &OrbitPoint) -> Result<OrbitPoint, OrbitError> {
    let n = p.n;
    g.validate(n)?;
    let tau = p.tau.tau();
    let all = p.all_v();
    match g {
        GroupElement::Permutation(s) => {
            let w: Vec<C64> = (0..n).map(|i| all[s[i]]).collect();
            OrbitPoint::new(n, p.u, w, p.v_ex, p.tau)
        }
        GroupElement::Translation {
            lambda,
            lambda_ex,
            mu,
            mu_ex,
        } => {
            let lc: Vec<C64> = lambda.iter().map(|&l| C64::new(l as f64, 0.0)).collect();
            let lex = C64::new(*lambda_ex as f64, 0.0);
            let lv = OrbitPoint::pairing(n, &lc, lex, &all, p.v_ex);
            let ll = OrbitPoint::pairing(n, &lc, lex, &lc, lex);
            let u = p.u - lv - 0.5 * ll * tau;
            let w: Vec<C64> = (0..n)
                .map(|i| all[i] + lambda[i] as f64 * tau + mu[i] as f64)
                .collect();
            let v_ex = p.v_ex + *lambda_ex as f64 * tau + *mu_ex as f64;
            OrbitPoint::new(n, u, w, v_ex, p.tau)
        }
        GroupElement::Modular { a, b, c, d } => {
            let j = *c as f64 * tau + *d as f64;
            let vv = OrbitPoint::pairing(n, &all, p.v_ex, &all, p.v_ex);
            let u = p.u + *c as f64 * vv / (2.0 * j);
            let w: Vec<C64> = p.v.iter().map(|x| x / j).collect();
            let t2 = (*a as f64 * tau + *b as f64) / j;
            OrbitPoint::new(n, u, w, p.v_ex / j, ModularParameter::new(t2)?)
        }
    }
}

/// Fast evaluation of λ and its derivatives at one point.
#[derive(Clone, Debug)]
pub struct Superpotential {
    n: usize,
    /// v_ex − v_i, i = 0..n
    shifts: Vec<C64>,
    /// (n+1)v_ex
    b: C64,
    pref: C64,
    tau: ModularParameter,
}

/// θ₁ at w = w₀ + mτ + l with w₀ in the period cell centred at 0:
/// returns θ₁(w₀), the log of the quasi-periodicity factor
/// θ₁(w)/θ₁(w₀) = (−1)^{m+l} e^{−πim²τ − 2πimw₀}, and (log θ₁)^{(j)}(w) for j = 1..=order.
/// Keeps the series short and the product of factors finite far from the cell.
fn reduced_theta(w: C64, tau: &ModularParameter, order: usize) -> Result<(C64, C64, Vec<C64>), OrbitError> {
    let t = tau.tau();
    let m = (w.im / t.im).round();
    let w1 = w - m * t;
    let l = w1.re.round();
    let w0 = w1 - l;
    let log_factor = PI * I * (m + l) - PI * I * m * m * t - 2.0 * PI * I * m * w0;
    let th = elliptic::theta1_jet(w0, tau, order)?;
    let mut ell: Vec<C64> = elliptic::log_derivatives(&th, order).into_iter().map(|e| e.value).collect();
    if let Some(first) = ell.first_mut() {
        *first -= 2.0 * PI * I * m;
    }
    Ok((th[0].value, log_factor, ell))
}

/// Log-derivatives of the individual theta factors at one z.
struct FactorJets {
    /// ℓ_j(z + shift_i), j = 1..=order, one row per numerator factor
    num: Vec<Vec<C64>>,
    den0: Vec<C64>,
    denb: Vec<C64>,
    value: C64,
}

impl Superpotential {
    pub fn new(p: &OrbitPoint) -> Self {
        Self {
            n: p.n,
            shifts: p.all_v().into_iter().map(|v| p.v_ex - v).collect(),
            b: (p.n + 1) as f64 * p.v_ex,
            pref: (-2.0 * PI * I * p.u).exp(),
            tau: p.tau,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check_poles(&self, z: C64) -> Result<(), OrbitError> {
        if lattice_distance(z, &self.tau) < POLE_GUARD || lattice_distance(z + self.b, &self.tau) < POLE_GUARD {
            return Err(OrbitError::OnPoleDivisor(z));
        }
        Ok(())
    }

    pub fn value(&self, z: C64) -> Result<C64, OrbitError> {
        self.check_poles(z)?;
        let th = |w: C64| reduced_theta(w, &self.tau, 0);
        let mut num = self.pref;
        let mut log_factor = C64::default();
        for s in &self.shifts {
            let (t, lf, _) = th(z + *s)?;
            num *= t;
            log_factor += lf;
        }
        let (t0, lf0, _) = th(z)?;
        let (tb, lfb, _) = th(z + self.b)?;
        log_factor -= self.n as f64 * lf0 + lfb;
        Ok(num * log_factor.exp() / (t0.powi(self.n as i32) * tb))
    }

    fn factors(&self, z: C64, order: usize) -> Result<FactorJets, OrbitError> {
        self.check_poles(z)?;
        let jet = |w: C64| reduced_theta(w, &self.tau, order);
        let mut value = self.pref;
        let mut log_factor = C64::default();
        let mut num = Vec::with_capacity(self.n + 1);
        for s in &self.shifts {
            let (t, lf, l) = jet(z + *s)?;
            value *= t;
            log_factor += lf;
            num.push(l);
        }
        let (t0, lf0, den0) = jet(z)?;
        let (tb, lfb, denb) = jet(z + self.b)?;
        log_factor -= self.n as f64 * lf0 + lfb;
        value *= log_factor.exp() / (t0.powi(self.n as i32) * tb);
        Ok(FactorJets { num, den0, denb, value })
    }

    /// (log λ)^{(j)}(z) for j = 1..=order.
    pub fn log_derivative(&self, z: C64, order: usize) -> Result<Vec<C64>, OrbitError> {
        let f = self.factors(z, order)?;
        Ok(Self::combine(&f, self.n, order))
    }

    fn combine(f: &FactorJets, n: usize, order: usize) -> Vec<C64> {
        (0..order)
            .map(|j| f.num.iter().map(|l| l[j]).sum::<C64>() - n as f64 * f.den0[j] - f.denb[j])
            .collect()
    }

    /// λ, λ′, …, λ^{(order)} for order ≤ 3.
    pub fn jet(&self, z: C64, order: usize) -> Result<Vec<C64>, OrbitError> {
        let order = order.min(3);
        let f = self.factors(z, order.max(1))?;
        let l = Self::combine(&f, self.n, order.max(1));
        let lam = f.value;
        let mut out = vec![lam];
        if order >= 1 {
            out.push(lam * l[0]);
        }
        if order >= 2 {
            out.push(lam * (l[1] + l[0] * l[0]));
        }
        if order >= 3 {
            out.push(lam * (l[2] + 3.0 * l[0] * l[1] + l[0] * l[0] * l[0]));
        }
        Ok(out)
    }

    /// λ(z) and ∂λ/∂x for x = (u, v₀..v_{n−1}, v_ex, τ), written into `grad`.
    ///
    /// Each partial derivative is λ times a sum of θ₁′/θ₁ or θ₁″/θ₁ terms; the
    /// τ-derivative uses the heat equation.
    pub fn moduli_gradient(&self, z: C64, grad: &mut [C64]) -> Result<C64, OrbitError> {
        let n = self.n;
        let f = self.factors(z, 2)?;
        let lam = f.value;
        let heat = |l: &[C64]| (l[1] + l[0] * l[0]) / (4.0 * PI * I);
        grad[0] = -2.0 * PI * I * lam;
        let last = f.num[n][0];
        for k in 0..n {
            grad[1 + k] = lam * (last - f.num[k][0]);
        }
        let s1: C64 = f.num.iter().map(|l| l[0]).sum();
        grad[n + 1] = lam * (s1 - (n + 1) as f64 * f.denb[0]);
        let st: C64 = f.num.iter().map(|l| heat(l)).sum();
        grad[n + 2] = lam * (st - n as f64 * heat(&f.den0) - heat(&f.denb));
        Ok(lam)
    }
}

/// λ(z) at a point.
pub fn lambda_eval(z: C64, p: &OrbitPoint) -> Result<C64, OrbitError> {
    Superpotential::new(p).value(z)
}

/// Radius of the Laurent circle at the origin.
pub fn laurent_radius(p: &OrbitPoint, factor: f64) -> f64 {
    (factor * p.clearance_at_origin()).min(RADIUS_CAP)
}

/// Radius of the circle around the second pole −(n+1)v_ex.
fn second_pole_radius(p: &OrbitPoint, factor: f64) -> f64 {
    let c = p.poles()[1];
    let t = p.tau.tau();
    let mut d = 1.0f64.min(t.norm());
    d = d.min(lattice_distance(c, &p.tau));
    for z in p.zeros() {
        d = d.min(lattice_distance(z - c, &p.tau));
    }
    (factor * d).min(RADIUS_CAP)
}

/// φ_k = diag_k · (coefficient of B_k). With these factors φ_k is the
/// Laurent coefficient of λ at z^{−k} for k ≥ 1, because ℘^{(k−2)} starts
/// with (−1)^k (k−1)!/z^k.
pub fn normalization_diagonal(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            if k < 2 {
                1.0
            } else {
                let f: f64 = (1..k).map(|i| i as f64).product();
                if k % 2 == 0 {
                    f
                } else {
                    -f
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobiForms {
    /// φ₀..φ_n after the normalization diagonal
    pub phi: Vec<C64>,
    /// raw coefficients of λ in the basis B₀..B_n
    pub basis_coeffs: Vec<C64>,
    pub weights: Vec<i32>,
    pub index: i32,
    /// relative mismatch of the surplus residue equation at −(n+1)v_ex
    pub extraction_residual: f64,
    /// size of the Laurent orders of λ below −n, relative to the largest coefficient
    pub laurent_consistency: f64,
    pub cond_estimate: f64,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ExtractOptions {
    pub radius_factor: f64,
    pub min_samples: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            radius_factor: DEFAULT_RADIUS_FACTOR,
            min_samples: 32,
        }
    }
}

pub fn extract_jacobi_forms(p: &OrbitPoint) -> Result<JacobiForms, OrbitError> {
    extract_with(p, &ExtractOptions::default())
}

/// Solves λ = Σ c̃_k B_k from the Laurent data at 0 and checks the residue at
/// the second pole.
pub fn extract_with(p: &OrbitPoint, opts: &ExtractOptions) -> Result<JacobiForms, OrbitError> {
    let n = p.n;
    let sp = Superpotential::new(p);
    let tau = p.tau;
    let b = sp.b;
    let zb = elliptic::zeta_w(b, &tau)?.value;
    let g = elliptic::g1(&tau)?;
    let r = laurent_radius(p, opts.radius_factor);
    let spec = ContourSpec::new(C64::default(), r, opts.min_samples)?;
    // component 0 is λ, then B₁..B_n
    let dim = n + 1;
    let orders: Vec<i32> = (-(n as i32) - 3..=0).collect();
    let q = contour::laurent_block(
        |z: C64, out: &mut [C64]| -> Result<(), OrbitError> {
            let f = sp.factors(z, n.max(2))?;
            out[0] = f.value;
            // ζ(z) − ζ(z+b) + ζ(b), with ζ = ℓ₁ − 4πi g₁ z
            out[1] = f.den0[0] - f.denb[0] + 4.0 * PI * I * g * b + zb;
            for k in 2..=n {
                let mut w = -f.den0[k - 1];
                if k == 2 {
                    w += 4.0 * PI * I * g;
                }
                out[k] = w;
            }
            Ok(())
        },
        dim,
        &spec,
        &orders,
    )?;
    let idx = |k: i32| (k - orders[0]) as usize;
    // rows: orders −n..0, columns: basis B₀..B_n
    let mut a = CMat::zeros(n + 1, n + 1);
    let mut rhs = vec![C64::default(); n + 1];
    for (row, k) in (-(n as i32)..=0).enumerate() {
        rhs[row] = q.coeffs[idx(k)][0];
        a[(row, 0)] = if k == 0 { C64::new(1.0, 0.0) } else { C64::default() };
        for j in 1..=n {
            a[(row, j)] = q.coeffs[idx(k)][j];
        }
    }
    let cond = linalg::cond_estimate(&a);
    if !(cond <= COND_CAP) {
        return Err(OrbitError::IllConditioned(cond));
    }
    let coeffs = linalg::solve(&a, &rhs).ok_or(OrbitError::IllConditioned(f64::INFINITY))?;
    let biggest = (orders[0]..=0)
        .map(|k| q.coeffs[idx(k)][0].norm())
        .fold(f64::MIN_POSITIVE, f64::max);
    let below = (orders[0]..-(n as i32))
        .map(|k| q.coeffs[idx(k)][0].norm() * r.powi(k + n as i32))
        .fold(0.0, f64::max);

    // surplus equation: res_{−b} λ = −c̃₁
    let rb = second_pole_radius(p, opts.radius_factor);
    let spec_b = ContourSpec::new(-b, rb, opts.min_samples)?;
    let res_b = contour::laurent_block(
        |z: C64, out: &mut [C64]| -> Result<(), OrbitError> {
            out[0] = sp.value(z)?;
            Ok(())
        },
        1,
        &spec_b,
        &[-1],
    )?
    .coeffs[0][0];
    let mismatch = (res_b + coeffs[1]).norm() / coeffs[1].norm().max(f64::MIN_POSITIVE);

    let diag = normalization_diagonal(n);
    Ok(JacobiForms {
        phi: coeffs.iter().zip(&diag).map(|(c, d)| c * d).collect(),
        basis_coeffs: coeffs,
        weights: (0..=n as i32).map(|k| -k).collect(),
        index: 1,
        extraction_residual: mismatch,
        laurent_consistency: below / biggest,
        cond_estimate: cond,
        radius: r,
    })
}

/// Residual report of the generating-function comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratingReport {
    /// Taylor coefficients G_k of the generating function at z = 0
    pub taylor: Vec<C64>,
    /// G_k / φ_{n−k} for k = 0..=min(orders, n)
    pub fitted: Vec<C64>,
}

/// Taylor coefficients of
/// G(z) = e^{−2πi(u + n g₁ z²)} ∏ θ₁(z + v_i − v_ex) / (θ₁′(0)^n θ₁(z + (n+1)v_ex))
/// against the extracted φ_{n−k}.
pub fn generating_function_check(p: &OrbitPoint, orders: usize) -> Result<GeneratingReport, OrbitError> {
    let n = p.n;
    let forms = extract_jacobi_forms(p)?;
    let tau = p.tau;
    let g = elliptic::g1(&tau)?;
    let d0 = elliptic::theta1_jet(C64::default(), &tau, 1)?[1].value;
    let all = p.all_v();
    let b = (n + 1) as f64 * p.v_ex;
    let r = laurent_radius(p, DEFAULT_RADIUS_FACTOR);
    let ks: Vec<usize> = (0..=orders).collect();
    let d = contour::cauchy_derivatives(
        |z: C64, out: &mut [C64]| -> Result<(), OrbitError> {
            let th = |w: C64| -> Result<C64, OrbitError> { Ok(elliptic::theta1_jet(w, &tau, 0)?[0].value) };
            let mut v = (-2.0 * PI * I * (p.u + n as f64 * g * z * z)).exp();
            for vi in &all {
                v *= th(z + vi - p.v_ex)?;
            }
            out[0] = v / (d0.powi(n as i32) * th(z + b)?);
            Ok(())
        },
        1,
        C64::default(),
        &ks,
        r,
        32,
    )?;
    let mut fact = 1.0;
    let taylor: Vec<C64> = d
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if k > 0 {
                fact *= k as f64;
            }
            v[0] / fact
        })
        .collect();
    let fitted = (0..=orders.min(n)).map(|k| taylor[k] / forms.phi[n - k]).collect();
    Ok(GeneratingReport { taylor, fitted })
}

/// Max relative residual of φ_k(g·p) against the expected transform of φ_k(p).
pub fn verify_invariance(p: &OrbitPoint, g: &GroupElement) -> Result<f64, OrbitError> {
    let q = act(g, p)?;
    let a = extract_jacobi_forms(p)?;
    let b = extract_jacobi_forms(&q)?;
    let factor = match g {
        GroupElement::Modular { c, d, .. } => *c as f64 * p.tau.tau() + *d as f64,
        _ => C64::new(1.0, 0.0),
    };
    let mut worst = 0.0f64;
    for k in 0..=p.n {
        // weight −k: φ_k(γp) = (cτ+d)^{−k} φ_k(p)
        let expect = a.phi[k] * factor.powi(-(k as i32));
        let scale = expect.norm().max(f64::MIN_POSITIVE);
        worst = worst.max((b.phi[k] - expect).norm() / scale);
    }
    Ok(worst)
}

/// Reproducible generic point: v_i, v_ex = a + bτ with a, b uniform in
/// [−0.4, 0.4), u uniform in the square of half-width 0.25; non-generic draws
/// are rejected.
pub fn seeded_point(n: usize, tau: ModularParameter, seed: u64, delta: f64) -> Result<OrbitPoint, OrbitError> {
    if n < 2 {
        return Err(OrbitError::InvalidRank(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = tau.tau();
    for _ in 0..10_000 {
        let lattice = |rng: &mut ChaCha8Rng| {
            let a: f64 = rng.gen_range(-0.4..0.4);
            let b: f64 = rng.gen_range(-0.4..0.4);
            C64::new(a, 0.0) + b * t
        };
        let v: Vec<C64> = (0..n).map(|_| lattice(&mut rng)).collect();
        let v_ex = lattice(&mut rng);
        let u = C64::new(rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25));
        let p = OrbitPoint::new(n, u, v, v_ex, tau)?;
        if p.genericity(delta).is_generic() {
            return Ok(p);
        }
    }
    Err(OrbitError::NonGeneric(format!("no generic point found for seed {seed}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau() -> ModularParameter {
        ModularParameter::new(C64::new(0.3, 1.2)).unwrap()
    }

    #[test]
    fn rank_guard() {
        let r = OrbitPoint::new(1, C64::default(), vec![C64::default()], C64::default(), tau());
        assert_eq!(r, Err(OrbitError::InvalidRank(1)));
        assert!(r.unwrap_err().to_string().contains("n ≥ 2 required"));
    }

    #[test]
    fn seeded_is_reproducible() {
        let a = seeded_point(2, tau(), 7, DEFAULT_DELTA).unwrap();
        let b = seeded_point(2, tau(), 7, DEFAULT_DELTA).unwrap();
        assert_eq!(a, b);
        assert!(a.genericity(DEFAULT_DELTA).is_generic());
    }

    #[test]
    fn euler_index_from_prefactor() {
        let p = seeded_point(2, tau(), 3, DEFAULT_DELTA).unwrap();
        let z = C64::new(0.17, 0.31);
        let lam = lambda_eval(z, &p).unwrap();
        let d = contour::cauchy_derivative(|u| lambda_eval(z, &p.with_u(u)).unwrap(), p.u, 1, 1e-2).unwrap();
        assert!((-d / (2.0 * PI * I) - lam).norm() < 1e-10 * lam.norm());
    }

    #[test]
    fn gradient_matches_cauchy() {
        let p = seeded_point(3, tau(), 5, DEFAULT_DELTA).unwrap();
        let sp = Superpotential::new(&p);
        let z = C64::new(0.23, 0.19);
        let mut g = vec![C64::default(); p.dim()];
        sp.moduli_gradient(z, &mut g).unwrap();
        let x0 = p.coords();
        for j in 0..p.dim() {
            let d = contour::cauchy_derivative(
                |s| {
                    let mut x = x0.clone();
                    x[j] += s;
                    lambda_eval(z, &OrbitPoint::from_coords(3, &x).unwrap()).unwrap()
                },
                C64::default(),
                1,
                1e-3,
            )
            .unwrap();
            assert!((d - g[j]).norm() < 1e-9 * g[j].norm().max(1.0), "coordinate {j}");
        }
    }

    #[test]
    fn normalization_is_laurent() {
        assert_eq!(normalization_diagonal(4), vec![1.0, 1.0, 1.0, -2.0, 6.0]);
    }
}
