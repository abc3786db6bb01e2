//! Canonical coordinates u_i = λ(q_i) at the critical points of λ, the
//! residue formulas for the metric and the structure constants, and the
//! Frobenius checks built on them (unit, Euler, associativity, potential,
//! Darboux–Egoroff).
//!
//! Flat-coordinate derivatives of λ at fixed z are ∂λ/∂t^α = Σ_a ∂λ/∂x_a
//! (∂x/∂t)_{aα}, with ∂λ/∂x from [`Superpotential::moduli_gradient`]. At a
//! critical point ∂u_i/∂x = ∂λ/∂x(q_i), so the matrix G = ∂u/∂x needs no
//! differentiation of q_i.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::contour::{self, ContourError, ContourSpec};
use crate::elliptic::{lattice_distance, ModularParameter, I};
use crate::geometry::{self, ChartData, ChartLabel, ChartOptions, GeometryError};
use crate::linalg::{self, CMat};
use crate::orbitspace::{OrbitError, OrbitPoint, Superpotential};

/// Newton seeds per side of the fundamental cell.
pub const GRID: usize = 24;
/// Seeds closer than this to a pole of λ are dropped.
pub const POLE_EXCLUSION: f64 = 0.02;
/// Critical points closer than this modulo the lattice are merged.
pub const DEDUP: f64 = 1e-4;
/// Smallest admissible |λ″(q_i)|.
pub const SECOND_DERIV_FLOOR: f64 = 1e-8;
const NEWTON_ITERS: usize = 60;
const NEWTON_STEP_CAP: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrobeniusError {
    #[error("found {found} critical points, expected {expected}")]
    RootCountMismatch { found: usize, expected: usize },
    #[error("near the discriminant: {0}")]
    NearDiscriminant(String),
    #[error("square-root branch: {0}")]
    BranchObstruction(String),
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Contour(#[from] ContourError),
}

impl From<crate::elliptic::EllipticError> for FrobeniusError {
    fn from(e: crate::elliptic::EllipticError) -> Self {
        FrobeniusError::Orbit(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanonicalData {
    /// critical points in the cell {a + bτ : a, b ∈ [0, 1)}
    pub q: Vec<C64>,
    /// u_i = λ(q_i)
    pub u_vals: Vec<C64>,
    /// λ″(q_i)
    pub second_derivs: Vec<C64>,
    pub count: usize,
    /// max |λ′(q_i)|
    pub newton_residual: f64,
}

impl CanonicalData {
    /// Smallest pairwise distance of the critical values, relative to the largest |u_i|.
    pub fn min_value_gap(&self) -> f64 {
        let scale = self.u_vals.iter().map(|u| u.norm()).fold(f64::MIN_POSITIVE, f64::max);
        let mut gap = f64::INFINITY;
        for i in 0..self.count {
            for j in i + 1..self.count {
                gap = gap.min((self.u_vals[i] - self.u_vals[j]).norm());
            }
        }
        gap / scale
    }
}

/// Pole degree of λ′: n + 1 at z = 0 plus 2 at z = −(n+1)v_ex.
pub fn expected_count(n: usize) -> usize {
    n + 3
}

fn reduce_to_cell(z: C64, tau: &ModularParameter) -> C64 {
    let t = tau.tau();
    let b = z.im / t.im;
    let a = z.re - b * t.re;
    let (a, b) = (a - a.floor(), b - b.floor());
    C64::new(a, 0.0) + b * t
}

/// Newton on (log λ)′ from `z`; `None` if it wanders onto a pole or stalls.
fn newton(sp: &Superpotential, tau: &ModularParameter, mut z: C64) -> Option<C64> {
    for _ in 0..NEWTON_ITERS {
        let l = sp.log_derivative(z, 2).ok()?;
        let mut step = l[0] / l[1];
        if !step.re.is_finite() || !step.im.is_finite() {
            return None;
        }
        if step.norm() > NEWTON_STEP_CAP {
            step *= NEWTON_STEP_CAP / step.norm();
        }
        z = reduce_to_cell(z - step, tau);
        if step.norm() < 1e-14 {
            return Some(z);
        }
    }
    // accept slow final convergence if the last step was already tiny
    let l = sp.log_derivative(z, 2).ok()?;
    ((l[0] / l[1]).norm() < 1e-12).then_some(z)
}

fn finish(p: &OrbitPoint, sp: &Superpotential, q: Vec<C64>) -> Result<CanonicalData, FrobeniusError> {
    let mut u_vals = Vec::with_capacity(q.len());
    let mut second = Vec::with_capacity(q.len());
    let mut resid = 0.0f64;
    for &z in &q {
        let j = sp.jet(z, 2)?;
        u_vals.push(j[0]);
        second.push(j[2]);
        resid = resid.max(j[1].norm());
    }
    if let Some((i, s)) = second.iter().enumerate().find(|(_, s)| s.norm() < SECOND_DERIV_FLOOR) {
        return Err(FrobeniusError::NearDiscriminant(format!(
            "|λ″(q_{i})| = {:.3e} at n = {}",
            s.norm(),
            p.n()
        )));
    }
    Ok(CanonicalData {
        count: q.len(),
        q,
        u_vals,
        second_derivs: second,
        newton_residual: resid,
    })
}

/// Critical points of λ by Newton from a GRID × GRID lattice of seeds.
pub fn critical_points(p: &OrbitPoint) -> Result<CanonicalData, FrobeniusError> {
    let sp = Superpotential::new(p);
    let tau = p.tau;
    let t = tau.tau();
    let poles = p.poles();
    let mut found: Vec<C64> = Vec::new();
    for i in 0..GRID {
        for j in 0..GRID {
            let seed = C64::new((i as f64 + 0.5) / GRID as f64, 0.0) + (j as f64 + 0.5) / GRID as f64 * t;
            if poles.iter().any(|&c| lattice_distance(seed - c, &tau) < POLE_EXCLUSION) {
                continue;
            }
            let Some(z) = newton(&sp, &tau, seed) else { continue };
            if !found.iter().any(|&w| lattice_distance(w - z, &tau) < DEDUP) {
                found.push(z);
            }
        }
    }
    let expected = expected_count(p.n());
    if found.len() != expected {
        return Err(FrobeniusError::RootCountMismatch {
            found: found.len(),
            expected,
        });
    }
    found.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    finish(p, &sp, found)
}

/// Critical points at a nearby point, continued from `seeds` in order.
pub fn track_critical_points(p: &OrbitPoint, seeds: &[C64]) -> Result<CanonicalData, FrobeniusError> {
    let sp = Superpotential::new(p);
    let mut q = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let z = newton(&sp, &p.tau, s)
            .ok_or_else(|| FrobeniusError::NearDiscriminant(format!("Newton lost the critical point near {s}")))?;
        // keep the representative next to the seed
        let shift = s - z;
        let t = p.tau.tau();
        let b = (shift.im / t.im).round();
        let a = (shift.re - b * t.re).round();
        q.push(z + a + b * t);
    }
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            if lattice_distance(q[i] - q[j], &p.tau) < DEDUP {
                return Err(FrobeniusError::NearDiscriminant("two critical points merged".into()));
            }
        }
    }
    finish(p, &sp, q)
}

/// Outcome of the argument-principle count of zeros of λ′ in one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ArgumentCount {
    /// (1/2πi)(∮_{∂cell} − Σ_poles ∮_{small circle}) λ″/λ′ dz
    pub value: C64,
    pub count: i64,
    /// distance of `value` from the integer `count`
    pub residual: f64,
}

/// Counts zeros of λ′ in a cell by integrating λ″/λ′ = ℓ + ℓ′/ℓ, ℓ = (log λ)′,
/// over the cell boundary and subtracting the pole contributions.
pub fn argument_principle_count(p: &OrbitPoint, cd: &CanonicalData) -> Result<ArgumentCount, FrobeniusError> {
    let sp = Superpotential::new(p);
    let tau = p.tau;
    let t = tau.tau();
    let f = |z: C64| -> Result<C64, FrobeniusError> {
        let l = sp.log_derivative(z, 2)?;
        Ok(l[0] + l[1] / l[0])
    };
    let mut special: Vec<C64> = cd.q.clone();
    special.extend_from_slice(&p.poles());

    // place the cell so that its edges stay away from every special point
    let edge_distance = |c: C64| -> f64 {
        special
            .iter()
            .map(|&s| {
                let w = s - c;
                let b = w.im / t.im;
                let a = w.re - b * t.re;
                let fa = (a - a.round()).abs() * t.im.min(1.0);
                let fb = (b - b.round()).abs() * t.im;
                fa.min(fb)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut corner = C64::default();
    let mut best = -1.0;
    for i in 0..16 {
        for j in 0..16 {
            let c = C64::new(i as f64 / 16.0, 0.0) + j as f64 / 16.0 * t;
            let d = edge_distance(c);
            if d > best {
                best = d;
                corner = c;
            }
        }
    }

    // opposite edges cancel node by node, so the rule only needs to be shared
    let m = 256;
    let mut boundary = C64::default();
    let edges = [(corner, C64::new(1.0, 0.0)), (corner + 1.0, t), (corner + 1.0 + t, C64::new(-1.0, 0.0)), (corner + t, -t)];
    for (start, dir) in edges {
        for k in 0..m {
            let s = (k as f64 + 0.5) / m as f64;
            boundary += f(start + s * dir)? * dir / m as f64;
        }
    }
    let mut poles_sum = C64::default();
    for c in p.poles() {
        let mut r = 0.2f64;
        for &s in &special {
            let d = lattice_distance(s - c, &tau);
            if d > 1e-12 {
                r = r.min(0.5 * d);
            }
        }
        let spec = ContourSpec::new(c, r, 64)?;
        let mut err = None;
        let res = contour::residue(
            |z| match f(z) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    C64::new(f64::NAN, 0.0)
                }
            },
            &spec,
        );
        if let Some(e) = err {
            return Err(e);
        }
        poles_sum += res?;
    }
    let value = boundary / (2.0 * PI * I) - poles_sum;
    let count = value.re.round() as i64;
    Ok(ArgumentCount {
        value,
        count,
        residual: (value - count as f64).norm(),
    })
}

/// η_ii = 1/λ″(q_i): the residue of dz²/dλ at a simple critical point.
pub fn eta_canonical(cd: &CanonicalData) -> Result<Vec<C64>, FrobeniusError> {
    cd.second_derivs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.norm() < SECOND_DERIV_FLOOR {
                Err(FrobeniusError::NearDiscriminant(format!("|λ″(q_{i})| = {:.3e}", s.norm())))
            } else {
                Ok(s.inv())
            }
        })
        .collect()
}

/// Radius of a circle around q_i that excludes the other critical points and the poles.
fn critical_radius(p: &OrbitPoint, cd: &CanonicalData, i: usize) -> f64 {
    let mut d = 1.0f64.min(p.tau.tau().norm());
    for (j, &w) in cd.q.iter().enumerate() {
        if j != i {
            d = d.min(lattice_distance(w - cd.q[i], &p.tau));
        }
    }
    for c in p.poles() {
        d = d.min(lattice_distance(c - cd.q[i], &p.tau));
    }
    (0.25 * d).min(0.05)
}

/// Degrees of the flat coordinates: d₀ = 1, d_α = (n+1−α)/n, zero for v_ex and τ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeVector {
    pub d: Vec<f64>,
}

impl DegreeVector {
    pub fn new(n: usize) -> Self {
        let mut d: Vec<f64> = (0..=n).map(|a| if a == 0 { 1.0 } else { (n + 1 - a) as f64 / n as f64 }).collect();
        d.extend([0.0, 0.0]);
        Self { d }
    }

    /// Components of the Euler field Σ d_α t^α ∂_α at the flat coordinates `t`.
    pub fn euler_field(&self, t: &[C64]) -> Vec<C64> {
        self.d.iter().zip(t).map(|(d, t)| *d * t).collect()
    }
}

/// Everything at one point that lives in canonical coordinates.
#[derive(Clone, Debug)]
pub struct CanonicalFrame {
    pub canon: CanonicalData,
    pub chart: ChartData,
    /// G_{ia} = ∂u_i/∂x_a
    pub du_dx: CMat,
    /// U_{iα} = ∂u_i/∂t^α
    pub du_dt: CMat,
    /// ∂x/∂t
    pub dx_dt: CMat,
    /// η* and g* in TChart
    pub eta_t: CMat,
    pub g_t: CMat,
}

pub fn canonical_frame(p: &OrbitPoint, canon: CanonicalData) -> Result<CanonicalFrame, FrobeniusError> {
    let chart = geometry::chart_data(p, None, true, &ChartOptions::default())?;
    canonical_frame_with(p, canon, chart)
}

fn canonical_frame_with(p: &OrbitPoint, canon: CanonicalData, chart: ChartData) -> Result<CanonicalFrame, FrobeniusError> {
    let d = p.dim();
    let sp = Superpotential::new(p);
    let mut du_dx = CMat::zeros(d, d);
    let mut row = vec![C64::default(); d];
    for (i, &q) in canon.q.iter().enumerate() {
        sp.moduli_gradient(q, &mut row)?;
        for a in 0..d {
            du_dx[(i, a)] = row[a];
        }
    }
    let dx_dt = linalg::inverse(&chart.j_t).ok_or_else(|| FrobeniusError::IllConditioned("VChart→TChart Jacobian".into()))?;
    let du_dt = &du_dx * &dx_dt;
    let eta_phi = geometry::saito_from_hessian(&chart)?;
    let eta_phi = geometry::MetricTensor::new(ChartLabel::PhiChart, geometry::Variance::Contravariant, eta_phi);
    let eta_t = geometry::transport(&eta_phi, &chart, ChartLabel::TChart)?.mat;
    let g_t = geometry::intersection_form(&chart, ChartLabel::TChart)?.mat;
    Ok(CanonicalFrame {
        canon,
        chart,
        du_dx,
        du_dt,
        dx_dt,
        eta_t,
        g_t,
    })
}

impl CanonicalFrame {
    /// η* pushed to canonical coordinates.
    pub fn eta_u(&self) -> CMat {
        &self.du_dt * &self.eta_t * self.du_dt.transpose()
    }

    /// g* pushed to canonical coordinates.
    pub fn g_u(&self) -> CMat {
        let gv = geometry::intersection_form_v(self.chart.n).mat;
        &self.du_dx * gv * self.du_dx.transpose()
    }

    /// κ_i = η_u^{ii} / λ″(q_i); all equal when η* is the residue metric up to scale.
    pub fn eta_scales(&self) -> Vec<C64> {
        let e = self.eta_u();
        (0..self.canon.count).map(|i| e[(i, i)] / self.canon.second_derivs[i]).collect()
    }

    /// Mean of [`Self::eta_scales`] and the largest relative deviation from it.
    pub fn eta_scale(&self) -> (C64, f64) {
        let k = self.eta_scales();
        let mean = k.iter().sum::<C64>() / k.len() as f64;
        let spread = k.iter().map(|x| (x - mean).norm()).fold(0.0, f64::max) / mean.norm();
        (mean, spread)
    }
}

fn off_diagonal(m: &CMat) -> f64 {
    let d = m.nrows();
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            if i == j {
                diag = diag.max(m[(i, j)].norm());
            } else {
                off = off.max(m[(i, j)].norm());
            }
        }
    }
    off / diag.max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanonicalReport {
    /// largest off-diagonal entry of η_u relative to its largest diagonal entry
    pub eta_off_diagonal: f64,
    pub g_off_diagonal: f64,
    /// max_i |g^{ii}/(u_i η^{ii}) − 1|
    pub ratio_residual: f64,
    /// η_u^{ii}/λ″(q_i), mean and relative spread
    pub eta_scale: C64,
    pub eta_scale_spread: f64,
    /// det g*_T / ∏u_i at the point and relative change at a nearby point
    pub det_ratio: C64,
    pub det_ratio_change: f64,
    /// pushforward of ∂/∂t⁰ against (1, …, 1)
    pub unit_residual: f64,
    /// pushforward of the Euler field against (u_i)
    pub euler_residual: f64,
}

fn det_ratio(frame: &CanonicalFrame) -> C64 {
    let prod: C64 = frame.canon.u_vals.iter().product();
    frame.g_t.determinant() / prod
}

pub fn intersection_canonical_check(p: &OrbitPoint, frame: &CanonicalFrame) -> Result<CanonicalReport, FrobeniusError> {
    let eta_u = frame.eta_u();
    let g_u = frame.g_u();
    let cnt = frame.canon.count;
    let mut ratio = 0.0f64;
    for i in 0..cnt {
        let r = g_u[(i, i)] / (frame.canon.u_vals[i] * eta_u[(i, i)]);
        ratio = ratio.max((r - 1.0).norm());
    }
    let (scale, spread) = frame.eta_scale();

    // a nearby point along v₀
    let n = p.n();
    let mut x = p.coords();
    x[1] += C64::new(0.5, 0.3) * geometry::moduli_radius(p);
    let q = OrbitPoint::from_coords(n, &x)?;
    let canon_q = track_critical_points(&q, &frame.canon.q)?;
    let chart_q = geometry::chart_data(&q, Some(frame.chart.root), true, &ChartOptions::default())?;
    let frame_q = canonical_frame_with(&q, canon_q, chart_q)?;
    let r0 = det_ratio(frame);
    let r1 = det_ratio(&frame_q);

    let umax = frame.canon.u_vals.iter().map(|u| u.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let unit = (0..cnt).map(|i| (frame.du_dt[(i, 0)] - 1.0).norm()).fold(0.0, f64::max);
    let e = DegreeVector::new(n).euler_field(&frame.chart.coords(ChartLabel::TChart));
    let mut euler = 0.0f64;
    for i in 0..cnt {
        let v: C64 = (0..p.dim()).map(|a| frame.du_dt[(i, a)] * e[a]).sum();
        euler = euler.max((v - frame.canon.u_vals[i]).norm() / umax);
    }
    Ok(CanonicalReport {
        eta_off_diagonal: off_diagonal(&eta_u),
        g_off_diagonal: off_diagonal(&g_u),
        ratio_residual: ratio,
        eta_scale: scale,
        eta_scale_spread: spread,
        det_ratio: r0,
        det_ratio_change: (r1 - r0).norm() / r0.norm(),
        unit_residual: unit,
        euler_residual: euler,
    })
}

/// c_{αβγ} in TChart with its first index raised by η*.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureTensor {
    pub chart: ChartLabel,
    pub dim: usize,
    /// c_{αβγ} at index (α·dim + β)·dim + γ
    pub c: Vec<C64>,
    /// c^γ_{αβ} = η^{γδ}c_{δαβ}, same layout with γ first
    pub raised: Vec<C64>,
}

impl StructureTensor {
    pub fn get(&self, a: usize, b: usize, c: usize) -> C64 {
        self.c[(a * self.dim + b) * self.dim + c]
    }

    pub fn up(&self, g: usize, a: usize, b: usize) -> C64 {
        self.raised[(g * self.dim + a) * self.dim + b]
    }

    /// Largest |c_{αβγ} − c_{σ(αβγ)}| relative to the largest entry.
    pub fn symmetry_residual(&self) -> f64 {
        let d = self.dim;
        let scale = self.c.iter().map(|c| c.norm()).fold(f64::MIN_POSITIVE, f64::max);
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let v = self.get(a, b, c);
                    for w in [self.get(b, a, c), self.get(a, c, b), self.get(c, b, a), self.get(b, c, a), self.get(c, a, b)] {
                        worst = worst.max((v - w).norm());
                    }
                }
            }
        }
        worst / scale
    }
}

/// c_{αβγ} = (1/κ) Σ_i res_{q_i} ∂_αλ ∂_βλ ∂_γλ / λ′ dz, with κ the measured
/// ratio between η* and the residue metric ([`CanonicalFrame::eta_scale`]).
/// Each residue is a contour integral around q_i.
pub fn structure_constants(p: &OrbitPoint, frame: &CanonicalFrame, kappa: C64) -> Result<StructureTensor, FrobeniusError> {
    let d = p.dim();
    let sp = Superpotential::new(p);
    let mut total = vec![C64::default(); d * d * d];
    let mut grad = vec![C64::default(); d];
    let mut dl = vec![C64::default(); d];
    for i in 0..frame.canon.count {
        let spec = ContourSpec::new(frame.canon.q[i], critical_radius(p, &frame.canon, i), 32)?;
        let q = contour::laurent_block(
            |z: C64, out: &mut [C64]| -> Result<(), FrobeniusError> {
                let lam = sp.moduli_gradient(z, &mut grad)?;
                let lp = lam * sp.log_derivative(z, 1)?[0];
                for al in 0..d {
                    dl[al] = (0..d).map(|a| grad[a] * frame.dx_dt[(a, al)]).sum();
                }
                for a in 0..d {
                    for b in 0..d {
                        let ab = dl[a] * dl[b] / lp;
                        for c in 0..d {
                            out[(a * d + b) * d + c] = ab * dl[c];
                        }
                    }
                }
                Ok(())
            },
            d * d * d,
            &spec,
            &[-1],
        )?;
        for (t, v) in total.iter_mut().zip(&q.coeffs[0]) {
            *t += v / kappa;
        }
    }
    let eta = &frame.eta_t;
    let mut raised = vec![C64::default(); d * d * d];
    for g in 0..d {
        for a in 0..d {
            for b in 0..d {
                raised[(g * d + a) * d + b] = (0..d).map(|s| eta[(g, s)] * total[(s * d + a) * d + b]).sum();
            }
        }
    }
    Ok(StructureTensor {
        chart: ChartLabel::TChart,
        dim: d,
        c: total,
        raised,
    })
}

/// The same constants from λ″(q_i) and ∂u_i/∂t directly, without contours.
pub fn structure_constants_pointwise(frame: &CanonicalFrame, kappa: C64) -> Vec<C64> {
    let d = frame.du_dt.ncols();
    let mut c = vec![C64::default(); d * d * d];
    for i in 0..frame.canon.count {
        let w = (kappa * frame.canon.second_derivs[i]).inv();
        for a in 0..d {
            for b in 0..d {
                let ab = frame.du_dt[(i, a)] * frame.du_dt[(i, b)] * w;
                for g in 0..d {
                    c[(a * d + b) * d + g] += ab * frame.du_dt[(i, g)];
                }
            }
        }
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WdvvReport {
    pub symmetry: f64,
    /// contour residues against the pointwise formula
    pub residue_consistency: f64,
    /// |c_{0βγ} − η_{βγ}| relative to max |η_{βγ}|
    pub unit: f64,
    /// |E^σ c_σ^{αβ} − g^{αβ}| relative to max |g^{αβ}|
    pub euler: f64,
    /// relative to max|c^μ_{αβ}|·max|c_{μγδ}|
    pub associativity: f64,
    /// |∂_γ g^{αβ}/(d_α+d_β) − c_γ^{αβ}| relative to max |c_γ^{αβ}|
    pub potential: f64,
    /// index pairs with d_α + d_β = 0, left out of `potential`
    pub skipped_pairs: Vec<(String, String)>,
    /// eigenvalues of η^{-1}g against u_i, relative to max|u_i|
    pub eigen_match: f64,
    pub eigen_min_gap: f64,
    /// c^k_{ij} in canonical coordinates against δ_{ij}δ_{jk}
    pub multiplication_table: f64,
    pub eta_scale: C64,
}

fn max_norm<'a>(it: impl IntoIterator<Item = &'a C64>) -> f64 {
    it.into_iter().map(|c| c.norm()).fold(f64::MIN_POSITIVE, f64::max)
}

/// Matches two multisets greedily by nearest value; largest distance.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap_or((0, f64::INFINITY));
        if k < used.len() {
            used[k] = true;
        }
        worst = worst.max(d);
    }
    worst
}

/// ∂g*_T/∂t^γ for every γ by Cauchy circles along the t-coordinate lines.
pub fn intersection_form_t_derivatives(p: &OrbitPoint, frame: &CanonicalFrame) -> Result<Vec<CMat>, FrobeniusError> {
    let n = p.n();
    let d = p.dim();
    let gv = geometry::intersection_form_v(n).mat;
    let x0 = p.coords();
    let root = frame.chart.root;
    let opts = ChartOptions::nested();
    let mut out = Vec::with_capacity(d);
    for g in 0..d {
        let dir: Vec<C64> = (0..d).map(|a| frame.dx_dt[(a, g)]).collect();
        let der = contour::directional_derivative(
            |x: &[C64], o: &mut [C64]| -> Result<(), FrobeniusError> {
                let q = OrbitPoint::from_coords(n, x)?;
                let cd = geometry::chart_data(&q, Some(root), false, &opts)?;
                let m = &cd.j_t * &gv * cd.j_t.transpose();
                o.copy_from_slice(m.as_slice());
                Ok(())
            },
            d * d,
            &x0,
            &dir,
            1,
            geometry::moduli_radius(p),
            32,
        )?;
        out.push(CMat::from_column_slice(d, d, &der));
    }
    Ok(out)
}

/// All WDVV-side checks at one point.
pub fn wdvv_certify(p: &OrbitPoint) -> Result<WdvvReport, FrobeniusError> {
    let canon = critical_points(p)?;
    let frame = canonical_frame(p, canon)?;
    wdvv_with_frame(p, &frame)
}

pub fn wdvv_with_frame(p: &OrbitPoint, frame: &CanonicalFrame) -> Result<WdvvReport, FrobeniusError> {
    let n = p.n();
    let d = p.dim();
    let (kappa, _) = frame.eta_scale();
    let st = structure_constants(p, frame, kappa)?;
    let pointwise = structure_constants_pointwise(frame, kappa);
    let cscale = max_norm(&st.c);
    let residue_consistency = st.c.iter().zip(&pointwise).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / cscale;

    let eta = &frame.eta_t;
    let eta_cov = linalg::inverse(eta).ok_or_else(|| FrobeniusError::IllConditioned("η*".into()))?;
    let unit = {
        let mut w = 0.0f64;
        for b in 0..d {
            for g in 0..d {
                w = w.max((st.get(0, b, g) - eta_cov[(b, g)]).norm());
            }
        }
        w / max_norm(eta_cov.iter())
    };

    // c_σ^{αβ} = η^{αμ} c^β_{σμ}
    let mut c_up2 = vec![C64::default(); d * d * d];
    for s in 0..d {
        for a in 0..d {
            for b in 0..d {
                c_up2[(s * d + a) * d + b] = (0..d).map(|m| eta[(a, m)] * st.up(b, s, m)).sum();
            }
        }
    }
    let up2 = |s: usize, a: usize, b: usize| c_up2[(s * d + a) * d + b];
    let t = frame.chart.coords(ChartLabel::TChart);
    let degrees = DegreeVector::new(n);
    let e = degrees.euler_field(&t);
    let g_t = &frame.g_t;
    let mut euler = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let v: C64 = (0..d).map(|s| e[s] * up2(s, a, b)).sum();
            euler = euler.max((v - g_t[(a, b)]).norm());
        }
    }
    euler /= max_norm(g_t.iter());

    let mut assoc = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            for g in 0..d {
                for dl in 0..d {
                    let lhs: C64 = (0..d).map(|m| st.up(m, a, b) * st.get(m, g, dl)).sum();
                    let rhs: C64 = (0..d).map(|m| st.up(m, a, g) * st.get(m, b, dl)).sum();
                    assoc = assoc.max((lhs - rhs).norm());
                }
            }
        }
    }
    assoc /= max_norm(&st.raised) * cscale;

    let dg = intersection_form_t_derivatives(p, frame)?;
    let names = ChartLabel::TChart.coordinate_names(n);
    let mut skipped = Vec::new();
    let mut potential = 0.0f64;
    let mut pscale = f64::MIN_POSITIVE;
    for a in 0..d {
        for b in a..d {
            let deg = degrees.d[a] + degrees.d[b];
            if deg.abs() < 1e-12 {
                skipped.push((names[a].clone(), names[b].clone()));
                continue;
            }
            for g in 0..d {
                let target = up2(g, a, b);
                pscale = pscale.max(target.norm());
                potential = potential.max((dg[g][(a, b)] / deg - target).norm());
            }
        }
    }
    potential /= pscale;

    let endo = g_t * &eta_cov;
    let ev = linalg::eigenvalues(&endo).ok_or_else(|| FrobeniusError::IllConditioned("η⁻¹g eigenvalues".into()))?;
    let umax = max_norm(&frame.canon.u_vals);
    let eigen_match = multiset_distance(&frame.canon.u_vals, &ev) / umax;

    let dt_du = linalg::inverse(&frame.du_dt).ok_or_else(|| FrobeniusError::IllConditioned("∂u/∂t".into()))?;
    let eta_u = frame.eta_u();
    let mut table = 0.0f64;
    let cnt = frame.canon.count;
    for i in 0..cnt {
        for j in 0..cnt {
            for k in 0..cnt {
                let mut v = C64::default();
                for a in 0..d {
                    for b in 0..d {
                        let ab = dt_du[(a, i)] * dt_du[(b, j)];
                        for g in 0..d {
                            v += st.get(a, b, g) * ab * dt_du[(g, k)];
                        }
                    }
                }
                let raised = eta_u[(k, k)] * v;
                let expect = if i == j && j == k { 1.0 } else { 0.0 };
                table = table.max((raised - expect).norm());
            }
        }
    }

    Ok(WdvvReport {
        symmetry: st.symmetry_residual(),
        residue_consistency,
        unit,
        euler,
        associativity: assoc,
        potential,
        skipped_pairs: skipped,
        eigen_match,
        eigen_min_gap: frame.canon.min_value_gap(),
        multiplication_table: table,
        eta_scale: kappa,
    })
}

/// Values at one point needed for the rotation coefficients.
struct RotationState {
    /// β_ij
    beta: CMat,
    /// √η_ii on the branch in use
    roots: Vec<C64>,
    q: Vec<C64>,
}

/// β_ij = (∂_j √η_ii)/√η_jj with η_ii = 1/(κλ″(q_i)); the derivative of
/// λ″(q_i(x), x) in x uses ∂q/∂x = −∂_xλ′/λ″.
fn rotation_state(
    p: &OrbitPoint,
    seeds: &[C64],
    kappa: C64,
    branches: Option<&[C64]>,
) -> Result<RotationState, FrobeniusError> {
    let d = p.dim();
    let canon = track_critical_points(p, seeds)?;
    let sp = Superpotential::new(p);
    let mut g = CMat::zeros(d, d);
    let mut deta = CMat::zeros(d, d);
    let mut roots = Vec::with_capacity(d);
    for i in 0..canon.count {
        let q = canon.q[i];
        let r = critical_radius(p, &canon, i);
        let der = contour::cauchy_derivatives(
            |z: C64, out: &mut [C64]| -> Result<(), FrobeniusError> {
                sp.moduli_gradient(z, out)?;
                Ok(())
            },
            d,
            q,
            &[0, 1, 2],
            r,
            32,
        )?;
        let jet = sp.jet(q, 3)?;
        let (l2, l3) = (jet[2], jet[3]);
        let eta = (kappa * l2).inv();
        for a in 0..d {
            g[(i, a)] = der[0][a];
            let dq = -der[1][a] / l2;
            let dl2 = l3 * dq + der[2][a];
            deta[(i, a)] = -eta * dl2 / l2;
        }
        let mut h = eta.sqrt();
        if let Some(b) = branches {
            if (h + b[i]).norm() < (h - b[i]).norm() {
                h = -h;
            }
        }
        roots.push(h);
    }
    let ginv = linalg::inverse(&g).ok_or_else(|| FrobeniusError::IllConditioned("∂u/∂x".into()))?;
    // ∂_j η_ii = Σ_a ∂_a η_ii (∂x/∂u)_{aj}
    let deta_u = &deta * &ginv;
    let mut beta = CMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                beta[(i, j)] = deta_u[(i, j)] / (2.0 * roots[i] * roots[j]);
            }
        }
    }
    Ok(RotationState { beta, roots, q: canon.q })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DarbouxEgoroffReport {
    /// max over distinct i, j, k of |∂_kβ_ij − β_ikβ_kj|, relative to max|β|²
    pub rotation_identity: f64,
    /// max over i ≠ j of |Σ_k ∂_kβ_ij|, relative to max|β|²
    pub sum_identity: f64,
    /// max |β_ij − β_ji| relative to max|β|; recorded only
    pub asymmetry: f64,
}

pub fn darboux_egoroff_check(p: &OrbitPoint) -> Result<DarbouxEgoroffReport, FrobeniusError> {
    let canon = critical_points(p)?;
    let frame = canonical_frame(p, canon)?;
    darboux_egoroff_with_frame(p, &frame)
}

pub fn darboux_egoroff_with_frame(p: &OrbitPoint, frame: &CanonicalFrame) -> Result<DarbouxEgoroffReport, FrobeniusError> {
    let n = p.n();
    let d = p.dim();
    let (kappa, _) = frame.eta_scale();
    let base = rotation_state(p, &frame.canon.q, kappa, None)?;
    let ginv = linalg::inverse(&frame.du_dx).ok_or_else(|| FrobeniusError::IllConditioned("∂u/∂x".into()))?;
    let x0 = p.coords();
    let mut dbeta = Vec::with_capacity(d);
    for k in 0..d {
        let dir: Vec<C64> = (0..d).map(|a| ginv[(a, k)]).collect();
        let der = contour::directional_derivative(
            |x: &[C64], out: &mut [C64]| -> Result<(), FrobeniusError> {
                let q = OrbitPoint::from_coords(n, x)?;
                let s = rotation_state(&q, &base.q, kappa, Some(&base.roots))?;
                out.copy_from_slice(s.beta.as_slice());
                Ok(())
            },
            d * d,
            &x0,
            &dir,
            1,
            geometry::moduli_radius(p),
            32,
        )?;
        dbeta.push(CMat::from_column_slice(d, d, &der));
    }
    let b = &base.beta;
    let bscale = max_norm(b.iter());
    let sq = bscale * bscale;
    let mut rot = 0.0f64;
    let mut sum = 0.0f64;
    let mut asym = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            asym = asym.max((b[(i, j)] - b[(j, i)]).norm());
            let s: C64 = (0..d).map(|k| dbeta[k][(i, j)]).sum();
            sum = sum.max(s.norm());
            for k in 0..d {
                if k != i && k != j {
                    rot = rot.max((dbeta[k][(i, j)] - b[(i, k)] * b[(k, j)]).norm());
                }
            }
        }
    }
    Ok(DarbouxEgoroffReport {
        rotation_identity: rot / sq,
        sum_identity: sum / sq,
        asymmetry: asym / bscale,
    })
}
