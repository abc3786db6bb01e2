//! Circle quadrature: Laurent coefficients, residues, fractional-power
//! residues and holomorphic derivatives.
//!
//! Nodes sit at `center + radius·e^{2πij/M}`. Every extraction starts at the
//! requested node count and doubles until two successive estimates agree to
//! [`REFINE_TOL`], measured against the natural scale `max|f|·radius^{−k}` of
//! the coefficient. The odd nodes of each level are new, so a doubling costs
//! one extra sweep over half the final node set.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::elliptic::EllipticError;

pub const MAX_SAMPLES: usize = 4096;
pub const MIN_SAMPLES: usize = 16;
pub const REFINE_TOL: f64 = 1e-9;
pub const DEFAULT_DERIV_RADIUS: f64 = 1e-2;
pub const DEFAULT_DERIV_SAMPLES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContourError {
    #[error("invalid contour: {0}")]
    InvalidSpec(String),
    #[error("quadrature did not settle: change {change:e} after {samples} nodes")]
    NonConvergent { samples: usize, change: f64 },
    #[error("branch obstruction: the root argument winds {winding:.3} times around the circle")]
    BranchObstruction { winding: f64 },
    #[error("integrand is not finite at {0}")]
    NonFinite(C64),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub center: C64,
    pub radius: f64,
    pub samples: usize,
    /// double the node count until successive estimates agree
    #[serde(default = "refine_default")]
    pub refine: bool,
}

fn refine_default() -> bool {
    true
}

impl ContourSpec {
    pub fn new(center: C64, radius: f64, samples: usize) -> Result<Self, ContourError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(ContourError::InvalidSpec(format!("radius {radius}")));
        }
        if samples < MIN_SAMPLES || !samples.is_power_of_two() || samples > MAX_SAMPLES {
            return Err(ContourError::InvalidSpec(format!("samples {samples}")));
        }
        if !center.re.is_finite() || !center.im.is_finite() {
            return Err(ContourError::InvalidSpec(format!("center {center}")));
        }
        Ok(Self {
            center,
            radius,
            samples,
            refine: true,
        })
    }

    /// Same circle, evaluated once at the given node count.
    pub fn without_refinement(mut self) -> Self {
        self.refine = false;
        self
    }

    pub fn circle(center: C64, radius: f64) -> Result<Self, ContourError> {
        Self::new(center, radius, 32)
    }
}

/// Laurent data of one function around one circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaurentWindow {
    pub coeffs: BTreeMap<i32, C64>,
    pub order_min: i32,
    pub order_max: i32,
    /// max |c_k| over a few orders below `order_min`, relative to the largest coefficient
    pub consistency_residual: f64,
    pub samples: usize,
}

impl LaurentWindow {
    pub fn get(&self, k: i32) -> C64 {
        self.coeffs.get(&k).copied().unwrap_or_default()
    }
}

/// Coefficients for several orders of a vector-valued integrand.
#[derive(Clone, Debug)]
pub struct Quadrature {
    /// `coeffs[o][d]` is order `orders[o]` of component `d`
    pub coeffs: Vec<Vec<C64>>,
    pub samples: usize,
    /// largest relative change at the last doubling
    pub change: f64,
}

/// Function values on the nodes of one circle, in angular order.
pub(crate) struct CircleSamples {
    pub center: C64,
    pub radius: f64,
    pub m: usize,
    pub dim: usize,
    pub vals: Vec<C64>,
}

impl CircleSamples {
    pub fn node(&self, j: usize) -> C64 {
        node(self.center, self.radius, j, self.m)
    }

    pub fn take<E, F>(
        f: &mut F,
        center: C64,
        radius: f64,
        m: usize,
        dim: usize,
    ) -> Result<Self, E>
    where
        F: FnMut(C64, &mut [C64]) -> Result<(), E>,
        E: From<ContourError>,
    {
        let mut vals = vec![C64::default(); m * dim];
        for j in 0..m {
            let z = node(center, radius, j, m);
            f(z, &mut vals[j * dim..(j + 1) * dim])?;
            check_finite(z, &vals[j * dim..(j + 1) * dim])?;
        }
        Ok(Self {
            center,
            radius,
            m,
            dim,
            vals,
        })
    }

    /// Adds the odd nodes of the next level.
    pub fn double<E, F>(&mut self, f: &mut F) -> Result<(), E>
    where
        F: FnMut(C64, &mut [C64]) -> Result<(), E>,
        E: From<ContourError>,
    {
        let m2 = 2 * self.m;
        let dim = self.dim;
        let mut vals = vec![C64::default(); m2 * dim];
        for j in 0..self.m {
            vals[2 * j * dim..(2 * j + 1) * dim].copy_from_slice(&self.vals[j * dim..(j + 1) * dim]);
            let z = node(self.center, self.radius, 2 * j + 1, m2);
            let out = &mut vals[(2 * j + 1) * dim..(2 * j + 2) * dim];
            f(z, out)?;
            check_finite(z, out)?;
        }
        self.vals = vals;
        self.m = m2;
        Ok(())
    }

    /// max |f_d| over the nodes, per component.
    pub fn fscale(&self) -> Vec<f64> {
        let mut s = vec![0.0f64; self.dim];
        for j in 0..self.m {
            for d in 0..self.dim {
                s[d] = s[d].max(self.vals[j * self.dim + d].norm());
            }
        }
        s
    }

    /// Trapezoid estimates of c_k using every `stride`-th node.
    pub fn coeffs(&self, orders: &[i32], stride: usize) -> Vec<Vec<C64>> {
        trapezoid(&self.vals, self.dim, self.m, stride, self.radius, orders)
    }
}

fn node(center: C64, radius: f64, j: usize, m: usize) -> C64 {
    center + C64::from_polar(radius, 2.0 * PI * j as f64 / m as f64)
}

fn check_finite(z: C64, v: &[C64]) -> Result<(), ContourError> {
    if v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(ContourError::NonFinite(z))
    }
}

/// c_k = (1/M) Σ_j f(z_j) (r ω^j)^{−k}.
fn trapezoid(
    vals: &[C64],
    dim: usize,
    m: usize,
    stride: usize,
    radius: f64,
    orders: &[i32],
) -> Vec<Vec<C64>> {
    let mm = m / stride;
    let twiddle: Vec<C64> = (0..mm)
        .map(|j| C64::from_polar(1.0, -2.0 * PI * j as f64 / mm as f64))
        .collect();
    orders
        .iter()
        .map(|&k| {
            let mut acc = vec![C64::default(); dim];
            for j in 0..mm {
                let idx = ((k as i64 * j as i64).rem_euclid(mm as i64)) as usize;
                let w = twiddle[idx];
                let row = &vals[j * stride * dim..(j * stride + 1) * dim];
                for d in 0..dim {
                    acc[d] += row[d] * w;
                }
            }
            let s = radius.powi(-k) / mm as f64;
            acc.into_iter().map(|a| a * s).collect()
        })
        .collect()
}

/// Refines `s` until the coefficients of the requested orders settle.
pub(crate) fn settle<E, F>(
    f: &mut F,
    s: &mut CircleSamples,
    orders: &[i32],
) -> Result<Quadrature, E>
where
    F: FnMut(C64, &mut [C64]) -> Result<(), E>,
    E: From<ContourError>,
{
    let mut prev = s.coeffs(orders, 1);
    loop {
        if 2 * s.m > MAX_SAMPLES {
            return Err(ContourError::NonConvergent {
                samples: s.m,
                change: f64::INFINITY,
            }
            .into());
        }
        s.double(f)?;
        let cur = s.coeffs(orders, 1);
        let change = relative_change(&prev, &cur, s, orders);
        if change <= REFINE_TOL {
            return Ok(Quadrature {
                coeffs: cur,
                samples: s.m,
                change,
            });
        }
        if s.m * 2 > MAX_SAMPLES {
            return Err(ContourError::NonConvergent {
                samples: s.m,
                change,
            }
            .into());
        }
        prev = cur;
    }
}

fn relative_change(prev: &[Vec<C64>], cur: &[Vec<C64>], s: &CircleSamples, orders: &[i32]) -> f64 {
    let fs = s.fscale();
    let mut worst = 0.0f64;
    for (o, &k) in orders.iter().enumerate() {
        for d in 0..s.dim {
            let scale = cur[o][d].norm().max(fs[d] * s.radius.powi(-k));
            if scale == 0.0 {
                continue;
            }
            worst = worst.max((cur[o][d] - prev[o][d]).norm() / scale);
        }
    }
    worst
}

/// Several Laurent orders of a vector-valued integrand at once.
pub fn laurent_block<E, F>(
    mut f: F,
    dim: usize,
    spec: &ContourSpec,
    orders: &[i32],
) -> Result<Quadrature, E>
where
    F: FnMut(C64, &mut [C64]) -> Result<(), E>,
    E: From<ContourError>,
{
    let mut s = CircleSamples::take(&mut f, spec.center, spec.radius, spec.samples, dim)?;
    if !spec.refine {
        let coeffs = s.coeffs(orders, 1);
        return Ok(Quadrature {
            coeffs,
            samples: s.m,
            change: f64::NAN,
        });
    }
    settle(&mut f, &mut s, orders)
}

fn scalar<F: FnMut(C64) -> C64>(mut f: F) -> impl FnMut(C64, &mut [C64]) -> Result<(), ContourError> {
    move |z, out| {
        out[0] = f(z);
        Ok(())
    }
}

/// c_k = (1/2πi)∮ f(z)(z−center)^{−k−1} dz.
pub fn laurent_coeff<F: FnMut(C64) -> C64>(f: F, spec: &ContourSpec, k: i32) -> Result<C64, ContourError> {
    let q = laurent_block(scalar(f), 1, spec, &[k])?;
    Ok(q.coeffs[0][0])
}

/// Coefficients for orders `order_min..=order_max`, plus a check that a few
/// orders below `order_min` vanish.
pub fn laurent_window<F: FnMut(C64) -> C64>(
    f: F,
    spec: &ContourSpec,
    order_min: i32,
    order_max: i32,
) -> Result<LaurentWindow, ContourError> {
    let orders: Vec<i32> = (order_min - 3..=order_max).collect();
    let q = laurent_block(scalar(f), 1, spec, &orders)?;
    let biggest = q.coeffs.iter().map(|c| c[0].norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut coeffs = BTreeMap::new();
    let mut below = 0.0f64;
    for (o, &k) in orders.iter().enumerate() {
        if k < order_min {
            below = below.max(q.coeffs[o][0].norm() * spec.radius.powi(k - order_min));
        } else {
            coeffs.insert(k, q.coeffs[o][0]);
        }
    }
    Ok(LaurentWindow {
        coeffs,
        order_min,
        order_max,
        consistency_residual: below / biggest,
        samples: q.samples,
    })
}

pub fn residue<F: FnMut(C64) -> C64>(f: F, spec: &ContourSpec) -> Result<C64, ContourError> {
    laurent_coeff(f, spec, -1)
}

/// Chooses among the n-th roots of `h0` the principal one, or the one nearest `reference`.
pub fn select_root(h0: C64, n_root: u32, reference: Option<C64>) -> C64 {
    let principal = h0.powf(1.0 / n_root as f64);
    match reference {
        None => principal,
        Some(r) => (0..n_root)
            .map(|k| principal * C64::from_polar(1.0, 2.0 * PI * k as f64 / n_root as f64))
            .min_by(|a, b| (a - r).norm().total_cmp(&(b - r).norm()))
            .unwrap_or(principal),
    }
}

/// Output of [`fractional_power_residues`].
#[derive(Clone, Debug)]
pub struct FractionalResidues {
    /// `values[t][d]`: res (z−c)^{e−p} h^{p/n} w_d(z) dz for term t = (p, e), with w_0 ≡ 1
    pub values: Vec<Vec<C64>>,
    /// the chosen root h(center)^{1/n}
    pub root: C64,
    pub samples: usize,
}

/// Residues at `center` of `(z−c)^{e−p} h(z)^{p/n} w_d(z)` for several terms
/// (p, e) and weights, sharing one set of samples. Plain Laurent coefficients
/// of h·w_d are the terms (n, e).
///
/// `f(z, out)` fills `out[0] = h(z)` and `out[1..]` with the weights. The
/// branch of h^{1/n} is the root of h(center) picked by [`select_root`],
/// continued along the circle by accumulating the argument from node to node.
pub fn fractional_power_residues<E, F>(
    mut f: F,
    weights: usize,
    n_root: u32,
    terms: &[(i32, i32)],
    reference: Option<C64>,
    spec: &ContourSpec,
) -> Result<FractionalResidues, E>
where
    F: FnMut(C64, &mut [C64]) -> Result<(), E>,
    E: From<ContourError>,
{
    if n_root == 0 {
        return Err(ContourError::InvalidSpec("n_root must be positive".into()).into());
    }
    let dim = weights + 1;
    let mut s = CircleSamples::take(&mut f, spec.center, spec.radius, spec.samples, dim)?;
    let mut prev: Option<Vec<Vec<C64>>> = None;
    loop {
        match branch_integrals(&s, n_root, terms, reference) {
            Ok((cur, root)) => {
                if !spec.refine {
                    return Ok(FractionalResidues {
                        values: cur,
                        root,
                        samples: s.m,
                    });
                }
                if let Some(p) = &prev {
                    let change = change_abs(p, &cur, &s, n_root, terms);
                    if change <= REFINE_TOL {
                        return Ok(FractionalResidues {
                            values: cur,
                            root,
                            samples: s.m,
                        });
                    }
                    if 2 * s.m > MAX_SAMPLES {
                        return Err(ContourError::NonConvergent { samples: s.m, change }.into());
                    }
                }
                prev = Some(cur);
            }
            Err(BranchFailure::Coarse) => {
                prev = None;
                if 2 * s.m > MAX_SAMPLES {
                    return Err(ContourError::NonConvergent {
                        samples: s.m,
                        change: f64::INFINITY,
                    }
                    .into());
                }
            }
            Err(BranchFailure::Winding(w)) => {
                return Err(ContourError::BranchObstruction { winding: w }.into());
            }
        }
        s.double(&mut f)?;
    }
}

enum BranchFailure {
    /// an argument jump between neighbouring nodes was too large to track
    Coarse,
    Winding(f64),
}

fn branch_integrals(
    s: &CircleSamples,
    n_root: u32,
    terms: &[(i32, i32)],
    reference: Option<C64>,
) -> Result<(Vec<Vec<C64>>, C64), BranchFailure> {
    let dim = s.dim;
    let m = s.m;
    let h0 = (0..m).map(|j| s.vals[j * dim]).sum::<C64>() / m as f64;
    if h0.norm() == 0.0 {
        return Err(BranchFailure::Winding(f64::NAN));
    }
    let root = select_root(h0, n_root, reference);
    let l0 = root.ln() * n_root as f64;
    let mut logs = Vec::with_capacity(m);
    let step = |a: C64, b: C64| (b / a).ln();
    let first = s.vals[0];
    let lead = step(h0, first);
    if lead.im.abs() > PI / 2.0 {
        // the circle is too wide for h to stay on one sheet around h(center)
        return Err(BranchFailure::Winding(lead.im / (2.0 * PI)));
    }
    let mut l = l0 + lead;
    logs.push(l);
    for j in 1..m {
        let d = step(s.vals[(j - 1) * dim], s.vals[j * dim]);
        if d.im.abs() > PI / 4.0 {
            return Err(BranchFailure::Coarse);
        }
        l += d;
        logs.push(l);
    }
    let closing = l + step(s.vals[(m - 1) * dim], first);
    let winding = (closing - logs[0]).im / (2.0 * PI);
    if winding.abs() > 0.5 {
        return Err(BranchFailure::Winding(winding));
    }
    let mut out = Vec::with_capacity(terms.len());
    for &(p, e) in terms {
        let mut acc = vec![C64::default(); dim];
        for j in 0..m {
            let z = s.node(j) - s.center;
            // res g = (1/M) Σ g(z_j)(z_j − c)
            let g = (logs[j] * (p as f64 / n_root as f64)).exp() * z.powi(1 - p + e);
            acc[0] += g;
            for d in 1..dim {
                acc[d] += g * s.vals[j * dim + d];
            }
        }
        out.push(acc.into_iter().map(|a| a / m as f64).collect());
    }
    Ok((out, root))
}

fn change_abs(prev: &[Vec<C64>], cur: &[Vec<C64>], s: &CircleSamples, n_root: u32, terms: &[(i32, i32)]) -> f64 {
    let fs = s.fscale();
    let mut worst = 0.0f64;
    for (pi, &(p, e)) in terms.iter().enumerate() {
        let base = fs[0].powf(p as f64 / n_root as f64) * s.radius.powi(1 - p + e);
        for d in 0..s.dim {
            let w = if d == 0 { 1.0 } else { fs[d] };
            let scale = cur[pi][d].norm().max(base * w);
            if scale > 0.0 {
                worst = worst.max((cur[pi][d] - prev[pi][d]).norm() / scale);
            }
        }
    }
    worst
}

/// res_{z=c} (z−c)^{−p} h(z)^{p/n} dz with the principal branch of h(c)^{1/n}.
pub fn fractional_power_residue<F: FnMut(C64) -> C64>(
    mut h: F,
    n_root: u32,
    power_num: i32,
    spec: &ContourSpec,
) -> Result<C64, ContourError> {
    let r = fractional_power_residues(
        |z, out: &mut [C64]| -> Result<(), ContourError> {
            out[0] = h(z);
            Ok(())
        },
        0,
        n_root,
        &[(power_num, 0)],
        None,
        spec,
    )?;
    Ok(r.values[0][0])
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// f^{(k)}(at) for each k in `orders`, for a vector-valued f.
pub fn cauchy_derivatives<E, F>(
    mut f: F,
    dim: usize,
    at: C64,
    orders: &[usize],
    radius: f64,
    samples: usize,
) -> Result<Vec<Vec<C64>>, E>
where
    F: FnMut(C64, &mut [C64]) -> Result<(), E>,
    E: From<ContourError>,
{
    let spec = ContourSpec::new(at, radius, samples).map_err(E::from)?;
    let ks: Vec<i32> = orders.iter().map(|&k| k as i32).collect();
    let q = laurent_block(&mut f, dim, &spec, &ks)?;
    Ok(q
        .coeffs
        .into_iter()
        .zip(orders)
        .map(|(c, &k)| c.into_iter().map(|v| v * factorial(k)).collect())
        .collect())
}

/// f^{(order)}(at) from a circle of the given radius.
pub fn cauchy_derivative<F: FnMut(C64) -> C64>(
    f: F,
    at: C64,
    order: usize,
    radius: f64,
) -> Result<C64, ContourError> {
    let d = cauchy_derivatives(scalar(f), 1, at, &[order], radius, DEFAULT_DERIV_SAMPLES)?;
    Ok(d[0][0])
}

/// Directional derivative d/ds F(base + s·dir) at s = 0 of a map on C^m,
/// with the circle radius measured in units of |dir|.
pub fn directional_derivative<E, F>(
    mut f: F,
    dim: usize,
    base: &[C64],
    dir: &[C64],
    order: usize,
    radius: f64,
    samples: usize,
) -> Result<Vec<C64>, E>
where
    F: FnMut(&[C64], &mut [C64]) -> Result<(), E>,
    E: From<ContourError>,
{
    let norm = dir.iter().map(|d| d.norm()).fold(0.0, f64::max);
    if norm == 0.0 {
        return Ok(vec![C64::default(); dim]);
    }
    let step = radius / norm;
    let mut x = base.to_vec();
    let d = cauchy_derivatives(
        |s, out: &mut [C64]| {
            for i in 0..x.len() {
                x[i] = base[i] + s * dir[i];
            }
            f(&x, out)
        },
        dim,
        C64::default(),
        &[order],
        step,
        samples,
    )?;
    Ok(d.into_iter().next().unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec0() -> ContourSpec {
        ContourSpec::new(C64::default(), 0.5, 32).unwrap()
    }

    #[test]
    fn simple_coefficients() {
        let s = spec0();
        assert!((laurent_coeff(|z| z.inv(), &s, -1).unwrap() - 1.0).norm() < 1e-14);
        assert!((laurent_coeff(|z| z * z, &s, 2).unwrap() - 1.0).norm() < 1e-14);
        assert!(laurent_coeff(|z| z * z, &s, 1).unwrap().norm() < 1e-14);
    }

    #[test]
    fn residue_of_simple_pole() {
        let a = C64::new(0.3, -0.2);
        let s = ContourSpec::new(a, 0.1, 32).unwrap();
        assert!((residue(|z| (z - a).inv(), &s).unwrap() - 1.0).norm() < 1e-13);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ContourSpec::new(C64::default(), 0.0, 32).is_err());
        assert!(ContourSpec::new(C64::default(), 1.0, 8).is_err());
        assert!(ContourSpec::new(C64::default(), 1.0, 48).is_err());
    }

    #[test]
    fn fractional_examples() {
        let s = ContourSpec::new(C64::default(), 0.3, 32).unwrap();
        let r = fractional_power_residue(|_| C64::new(1.0, 0.0), 2, 3, &s).unwrap();
        assert!(r.norm() < 1e-14);
        let r = fractional_power_residue(|z| 1.0 + z * z, 1, 1, &s).unwrap();
        assert!((r - 1.0).norm() < 1e-14);
        // h = (1+z)², n = 2: res z^{−1}(1+z) = 1 and res z^{−2}(1+z)² = 2
        let sq = |z: C64| (1.0 + z) * (1.0 + z);
        let r = fractional_power_residue(sq, 2, 1, &s).unwrap();
        assert!((r - 1.0).norm() < 1e-13);
        let r = fractional_power_residue(sq, 2, 2, &s).unwrap();
        assert!((r - 2.0).norm() < 1e-13);
    }

    #[test]
    fn winding_is_an_error() {
        let s = ContourSpec::new(C64::default(), 0.5, 32).unwrap();
        let r = fractional_power_residue(|z| z - 0.1, 2, 1, &s);
        assert!(matches!(r, Err(ContourError::BranchObstruction { .. })));
    }

    #[test]
    fn derivatives() {
        let d = cauchy_derivative(|z| z * z * z, C64::new(1.0, 0.0), 2, DEFAULT_DERIV_RADIUS).unwrap();
        assert!((d - 6.0).norm() < 1e-10);
        let d = cauchy_derivative(|z| z.exp(), C64::default(), 5, 0.5).unwrap();
        assert!((d - 1.0).norm() < 1e-10);
    }

    #[test]
    fn window_reports_vanishing_lower_orders() {
        let s = ContourSpec::new(C64::default(), 0.2, 32).unwrap();
        let w = laurent_window(|z| 2.0 / (z * z) + 1.0 / z + 3.0 + z, &s, -2, 1).unwrap();
        assert!((w.get(-2) - 2.0).norm() < 1e-13);
        assert!((w.get(0) - 3.0).norm() < 1e-13);
        assert!(w.consistency_residual < 1e-13);
    }

    #[test]
    fn nonconvergent_for_singular_integrand() {
        // a pole of 1/(z-0.5) sits right next to the circle of radius 0.4999
        let s = ContourSpec::new(C64::default(), 0.4999, 16).unwrap();
        let r = laurent_coeff(|z| (z - 0.5).inv(), &s, 30);
        assert!(matches!(r, Err(ContourError::NonConvergent { .. })));
    }
}
