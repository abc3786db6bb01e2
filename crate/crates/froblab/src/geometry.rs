//! Charts, Jacobians, the intersection form g*, the Saito metric η*, flat
//! coordinates and curvature.
//!
//! Three charts share the last two coordinates (v_ex, τ):
//! - VChart (u, v₀..v_{n−1}, v_ex, τ), where g* is constant;
//! - PhiChart (φ₀..φ_n, v_ex, τ);
//! - TChart (t⁰..tⁿ, v_ex, τ).
//!
//! Coordinates and their first and second derivatives along VChart are
//! read off one sampling of λ around z = 0: the moduli derivatives of λ are
//! exact θ-ratio expressions, so Jacobians and Hessians need no outer
//! difference quotients. Cauchy circles are used on top of that for the
//! Saito metric's defining derivative, Christoffel symbols and curvature.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{self, ContourError, ContourSpec};
use crate::elliptic::{self, EllipticError, ModularParameter, I};
use crate::linalg::{self, CMat};
use crate::orbitspace::{self, OrbitError, OrbitPoint};

/// Relative radius of moduli circles, in units of the point's separation.
pub const MODULI_RADIUS_FACTOR: f64 = 0.1;
pub const MODULI_RADIUS_CAP: f64 = 0.02;
/// Node count of nested moduli circles.
pub const NESTED_SAMPLES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("near the discriminant: {0}")]
    NearDiscriminant(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChartLabel {
    VChart,
    PhiChart,
    TChart,
}

impl ChartLabel {
    pub fn coordinate_names(&self, n: usize) -> Vec<String> {
        let mut names: Vec<String> = match self {
            ChartLabel::VChart => std::iter::once("u".to_string())
                .chain((0..n).map(|i| format!("v{i}")))
                .collect(),
            ChartLabel::PhiChart => (0..=n).map(|i| format!("phi{i}")).collect(),
            ChartLabel::TChart => (0..=n).map(|i| format!("t{i}")).collect(),
        };
        names.push("v_ex".into());
        names.push("tau".into());
        names
    }

    pub fn short(&self) -> &'static str {
        match self {
            ChartLabel::VChart => "v",
            ChartLabel::PhiChart => "phi",
            ChartLabel::TChart => "t",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    Covariant,
    Contravariant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricTensor {
    pub labels: ChartLabel,
    pub variance: Variance,
    pub mat: CMat,
}

impl MetricTensor {
    /// Symmetrizes on construction.
    pub fn new(labels: ChartLabel, variance: Variance, mat: CMat) -> Self {
        Self {
            labels,
            variance,
            mat: linalg::symmetrize(&mat),
        }
    }

    pub fn inverse(&self) -> Result<MetricTensor, GeometryError> {
        let inv = linalg::inverse(&self.mat).ok_or_else(|| GeometryError::IllConditioned("singular metric".into()))?;
        Ok(MetricTensor::new(
            self.labels,
            match self.variance {
                Variance::Covariant => Variance::Contravariant,
                Variance::Contravariant => Variance::Covariant,
            },
            inv,
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobianRecord {
    pub from: ChartLabel,
    pub to: ChartLabel,
    /// J[a][i] = ∂(target a)/∂(source i)
    pub j: CMat,
    pub cond_estimate: f64,
}

impl JacobianRecord {
    pub fn new(from: ChartLabel, to: ChartLabel, j: CMat) -> Result<Self, GeometryError> {
        let cond = linalg::cond_estimate(&j);
        if !(cond < orbitspace::COND_CAP) {
            return Err(GeometryError::IllConditioned(format!("Jacobian condition estimate {cond:e}")));
        }
        Ok(Self {
            from,
            to,
            j,
            cond_estimate: cond,
        })
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = linalg::inverse(&self.j).ok_or_else(|| GeometryError::IllConditioned("singular Jacobian".into()))?;
        JacobianRecord::new(self.to, self.from, inv)
    }
}

/// Constant contravariant g* on VChart: A⁻¹ = I − J/(n+1) on the v-block,
/// −1/(n(n+1)) for v_ex, and 1 for the (u, τ) pair.
pub fn intersection_form_v(n: usize) -> MetricTensor {
    let d = n + 3;
    let mut m = CMat::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            m[(1 + i, 1 + j)] = C64::new(delta - 1.0 / (n + 1) as f64, 0.0);
        }
    }
    m[(n + 1, n + 1)] = C64::new(-1.0 / (n * (n + 1)) as f64, 0.0);
    m[(0, n + 2)] = C64::new(1.0, 0.0);
    m[(n + 2, 0)] = C64::new(1.0, 0.0);
    MetricTensor::new(ChartLabel::VChart, Variance::Contravariant, m)
}

/// g = J g Jᵀ for a contravariant metric.
pub fn pushforward(metric: &MetricTensor, jac: &JacobianRecord) -> Result<MetricTensor, GeometryError> {
    if metric.variance != Variance::Contravariant {
        return Err(GeometryError::Shape("pushforward needs a contravariant metric".into()));
    }
    if metric.labels != jac.from {
        return Err(GeometryError::Shape(format!(
            "metric lives on {:?}, Jacobian starts at {:?}",
            metric.labels, jac.from
        )));
    }
    if jac.j.ncols() != metric.mat.nrows() {
        return Err(GeometryError::Shape("dimension mismatch".into()));
    }
    Ok(MetricTensor::new(
        jac.to,
        Variance::Contravariant,
        &jac.j * &metric.mat * jac.j.transpose(),
    ))
}

/// Signs in t⁰ = φ₀ + T0_THETA·(θ₁′/θ₁)((n+1)v_ex)·φ₁ + T0_G1·4πi g₁(τ)·φ₂.
pub const T0_THETA: f64 = 1.0;
pub const T0_G1: f64 = 1.0;

/// Coordinates of one point in all three charts, with first and optional
/// second derivatives along VChart.
#[derive(Clone, Debug)]
pub struct ChartData {
    pub n: usize,
    pub x: Vec<C64>,
    /// φ₀..φ_n
    pub phi: Vec<C64>,
    /// t⁰..tⁿ
    pub t: Vec<C64>,
    /// ∂(φ₀..φ_n, v_ex, τ)/∂x
    pub j_phi: CMat,
    /// ∂(t⁰..tⁿ, v_ex, τ)/∂x
    pub j_t: CMat,
    /// `hess_phi[a]` is the symmetric matrix ∂²y^a/∂x∂x for the PhiChart coordinates
    pub hess_phi: Option<Vec<CMat>>,
    pub hess_t: Option<Vec<CMat>>,
    /// the branch φ_n^{1/n} in use
    pub root: C64,
}

impl ChartData {
    pub fn jacobian(&self, chart: ChartLabel) -> CMat {
        match chart {
            ChartLabel::VChart => CMat::identity(self.n + 3, self.n + 3),
            ChartLabel::PhiChart => self.j_phi.clone(),
            ChartLabel::TChart => self.j_t.clone(),
        }
    }

    pub fn hessian(&self, chart: ChartLabel) -> Option<Vec<CMat>> {
        match chart {
            ChartLabel::VChart => Some(vec![CMat::zeros(self.n + 3, self.n + 3); self.n + 3]),
            ChartLabel::PhiChart => self.hess_phi.clone(),
            ChartLabel::TChart => self.hess_t.clone(),
        }
    }

    /// Coordinate values in the chart.
    pub fn coords(&self, chart: ChartLabel) -> Vec<C64> {
        let n = self.n;
        let tail = [self.x[n + 1], self.x[n + 2]];
        match chart {
            ChartLabel::VChart => self.x.clone(),
            ChartLabel::PhiChart => self.phi.iter().copied().chain(tail).collect(),
            ChartLabel::TChart => self.t.iter().copied().chain(tail).collect(),
        }
    }

    /// The unit field ∂/∂φ₀ in VChart components: one linear solve.
    pub fn unit_field(&self) -> Result<Vec<C64>, GeometryError> {
        let mut rhs = vec![C64::default(); self.n + 3];
        rhs[0] = C64::new(1.0, 0.0);
        linalg::solve(&self.j_phi, &rhs).ok_or_else(|| GeometryError::IllConditioned("VChart→PhiChart Jacobian".into()))
    }
}

/// Derivatives of log θ₁ in τ (through the heat equation) from the ratios
/// r_j = θ₁^{(j)}/θ₁ at one argument.
#[derive(Clone, Copy, Debug)]
struct TauTerms {
    theta: C64,
    /// ∂_w log θ
    l1: C64,
    l2: C64,
    l3: C64,
    /// ∂_τ log θ
    h: C64,
    /// ∂_w∂_τ log θ
    hw: C64,
    /// ∂_w²∂_τ log θ
    hww: C64,
    /// ∂_τ² log θ
    k: C64,
    /// ∂_w∂_τ² log θ
    kw: C64,
}

fn tau_terms(w: C64, tau: &ModularParameter, order: usize) -> Result<TauTerms, GeometryError> {
    let th = elliptic::theta1_jet(w, tau, order)?;
    let t0 = th[0].value;
    let r = |j: usize| if j <= order { th[j].value / t0 } else { C64::default() };
    let (r1, r2, r3, r4, r5) = (r(1), r(2), r(3), r(4), r(5));
    let h4 = 4.0 * PI * I;
    Ok(TauTerms {
        theta: t0,
        l1: r1,
        l2: r2 - r1 * r1,
        l3: r3 - 3.0 * r1 * r2 + 2.0 * r1 * r1 * r1,
        h: r2 / h4,
        hw: (r3 - r2 * r1) / h4,
        hww: (r4 - 2.0 * r1 * r3 + 2.0 * r1 * r1 * r2 - r2 * r2) / h4,
        k: (r4 - r2 * r2) / (h4 * h4),
        kw: ((r5 - r4 * r1) - 2.0 * r2 * (r3 - r2 * r1)) / (h4 * h4),
    })
}

/// First and second derivatives of log λ in the moduli at one z.
fn log_lambda_moduli(
    sp_n: usize,
    x: &[C64],
    z: C64,
    tau: &ModularParameter,
    hessian: bool,
) -> Result<(C64, Vec<C64>, Vec<C64>), GeometryError> {
    let n = sp_n;
    let d = n + 3;
    let v: Vec<C64> = {
        let mut a = x[1..=n].to_vec();
        a.push(-a.iter().sum::<C64>());
        a
    };
    let v_ex = x[n + 1];
    let b = (n + 1) as f64 * v_ex;
    let order = if hessian { 4 } else { 2 };
    let num: Vec<TauTerms> = v
        .iter()
        .map(|vi| tau_terms(z + v_ex - vi, tau, order))
        .collect::<Result<_, _>>()?;
    let den0 = tau_terms(z, tau, order)?;
    let denb = tau_terms(z + b, tau, order)?;
    let mut lam = (-2.0 * PI * I * x[0]).exp();
    for t in &num {
        lam *= t.theta;
    }
    lam /= den0.theta.powi(n as i32) * denb.theta;

    let mut g = vec![C64::default(); d];
    g[0] = C64::new(0.0, -2.0 * PI);
    for k in 0..n {
        g[1 + k] = num[n].l1 - num[k].l1;
    }
    g[n + 1] = num.iter().map(|t| t.l1).sum::<C64>() - (n + 1) as f64 * denb.l1;
    g[n + 2] = num.iter().map(|t| t.h).sum::<C64>() - n as f64 * den0.h - denb.h;

    let mut hmat = Vec::new();
    if hessian {
        hmat = vec![C64::default(); d * d];
        let mut set = |i: usize, j: usize, val: C64| {
            hmat[i * d + j] = val;
            hmat[j * d + i] = val;
        };
        let np1 = (n + 1) as f64;
        for k in 0..n {
            for m in k..n {
                let diag = if k == m { num[k].l2 } else { C64::default() };
                set(1 + k, 1 + m, diag + num[n].l2);
            }
            set(1 + k, n + 1, num[n].l2 - num[k].l2);
            set(1 + k, n + 2, num[n].hw - num[k].hw);
        }
        set(
            n + 1,
            n + 1,
            num.iter().map(|t| t.l2).sum::<C64>() - np1 * np1 * denb.l2,
        );
        set(n + 1, n + 2, num.iter().map(|t| t.hw).sum::<C64>() - np1 * denb.hw);
        set(
            n + 2,
            n + 2,
            num.iter().map(|t| t.k).sum::<C64>() - n as f64 * den0.k - denb.k,
        );
    }
    Ok((lam, g, hmat))
}

/// Options shared by chart evaluations.
#[derive(Clone, Copy, Debug)]
pub struct ChartOptions {
    pub radius_factor: f64,
    pub min_samples: usize,
    pub refine: bool,
}

impl ChartOptions {
    /// One pass at 32 nodes; used inside nested moduli circles, where the
    /// base point has already been checked with refinement on.
    pub fn nested() -> Self {
        Self {
            refine: false,
            ..Self::default()
        }
    }
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            radius_factor: orbitspace::DEFAULT_RADIUS_FACTOR,
            min_samples: 32,
            refine: true,
        }
    }
}

fn pair_index(d: usize, i: usize, j: usize) -> usize {
    // upper triangle, row-major
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * d - i * (i + 1) / 2 + j
}

/// Constant Laurent terms κ_k(τ) of ℘^{(k−2)} at 0 for k = 0..=n, and their
/// first two τ-derivatives. Only even k ≥ 4 are nonzero.
fn wp_constants(n: usize, tau: &ModularParameter) -> Result<[Vec<C64>; 3], GeometryError> {
    let mut out = [vec![C64::default(); n + 1], vec![C64::default(); n + 1], vec![C64::default(); n + 1]];
    if n < 4 {
        return Ok(out);
    }
    let ks: Vec<usize> = (4..=n).step_by(2).collect();
    let kappa = |t: C64, res: &mut [C64]| -> Result<(), GeometryError> {
        let tp = ModularParameter::new(t)?;
        let spec = ContourSpec::new(C64::default(), 0.2f64.min(0.25 * t.norm().min(1.0)), 32)?;
        for (slot, &k) in ks.iter().enumerate() {
            let c = contour::laurent_coeff(
                |z| elliptic::wp_jet(z, &tp, k - 2).map(|w| w[k - 2]).unwrap_or(C64::new(f64::NAN, 0.0)),
                &spec,
                0,
            )?;
            res[slot] = c;
        }
        Ok(())
    };
    let t0 = tau.tau();
    let r = (0.1 * t0.im).min(0.05);
    let d = contour::cauchy_derivatives(kappa, ks.len(), t0, &[0, 1, 2], r, 32)?;
    for (slot, &k) in ks.iter().enumerate() {
        for o in 0..3 {
            out[o][k] = d[o][slot];
        }
    }
    Ok(out)
}

/// g₁ and its first two τ-derivatives.
fn g1_derivatives(tau: &ModularParameter) -> Result<[C64; 3], GeometryError> {
    let th = elliptic::theta1_jet(C64::default(), tau, 7)?;
    let t = |j: usize| th[j].value;
    let c = 12.0 * PI * I;
    let h = 4.0 * PI * I;
    let (t1, t3, t5, t7) = (t(1), t(3), t(5), t(7));
    let g = t3 / (c * t1);
    let g1 = (t5 * t1 - t3 * t3) / (c * h * t1 * t1);
    let g2 = ((t7 * t1 - t5 * t3) * t1 - 2.0 * t3 * (t5 * t1 - t3 * t3)) / (c * h * h * t1 * t1 * t1);
    Ok([g, g1, g2])
}

/// Evaluates the chart maps at `p`. `branch` picks the root of φ_n^{1/n}
/// nearest to it (principal root when `None`).
pub fn chart_data(
    p: &OrbitPoint,
    branch: Option<C64>,
    hessian: bool,
    opts: &ChartOptions,
) -> Result<ChartData, GeometryError> {
    let n = p.n();
    let d = n + 3;
    let x = p.coords();
    let tau = p.tau;
    let r = orbitspace::laurent_radius(p, opts.radius_factor);
    let mut spec = ContourSpec::new(C64::default(), r, opts.min_samples)?;
    if !opts.refine {
        spec = spec.without_refinement();
    }
    let npairs = d * (d + 1) / 2;
    // weights: Λ_x (d), then Λ_xΛ_y and Λ_xy over pairs when requested
    let weights = if hessian { d + 2 * npairs } else { d };
    let mut terms: Vec<(i32, i32)> = (1..=n).map(|a| ((n + 1 - a) as i32, 0)).collect();
    // c_{−k}(λ) = res z^{k−1−n} h for k = 0..=n
    terms.extend((0..=n).map(|k| (n as i32, k as i32 - 1)));
    let fr = contour::fractional_power_residues(
        |z: C64, out: &mut [C64]| -> Result<(), GeometryError> {
            let (lam, g, h) = log_lambda_moduli(n, &x, z, &tau, hessian)?;
            out[0] = lam * z.powi(n as i32);
            out[1..=d].copy_from_slice(&g);
            if hessian {
                for i in 0..d {
                    for j in i..d {
                        let pi = pair_index(d, i, j);
                        out[1 + d + pi] = g[i] * g[j];
                        out[1 + d + npairs + pi] = h[i * d + j];
                    }
                }
            }
            Ok(())
        },
        weights,
        n as u32,
        &terms,
        branch,
        &spec,
    )?;
    let nn = n as f64;
    let val = |ti: usize, w: usize| fr.values[ti][w];

    // Laurent part: c_{−k}, ∂c_{−k}, ∂²c_{−k}
    let lterm = |k: usize| n + k;
    let mut c = vec![C64::default(); n + 1];
    let mut dc = vec![vec![C64::default(); d]; n + 1];
    let mut hc = vec![CMat::zeros(d, d); n + 1];
    for k in 0..=n {
        c[k] = val(lterm(k), 0);
        for i in 0..d {
            dc[k][i] = val(lterm(k), 1 + i);
        }
        if hessian {
            for i in 0..d {
                for j in i..d {
                    let pi = pair_index(d, i, j);
                    let v = val(lterm(k), 1 + d + pi) + val(lterm(k), 1 + d + npairs + pi);
                    hc[k][(i, j)] = v;
                    hc[k][(j, i)] = v;
                }
            }
        }
    }
    // φ₀ = c₀ − Σ_{k even ≥ 4} (φ_k / lead_k) κ_k(τ)
    let diag = orbitspace::normalization_diagonal(n);
    let kap = wp_constants(n, &tau)?;
    let mut phi = c.clone();
    let mut dphi = dc.clone();
    let mut hphi = hc.clone();
    for k in (4..=n).step_by(2) {
        let s = 1.0 / diag[k];
        phi[0] -= s * c[k] * kap[0][k];
        for i in 0..d {
            dphi[0][i] -= s * dc[k][i] * kap[0][k];
        }
        dphi[0][n + 2] -= s * c[k] * kap[1][k];
        if hessian {
            for i in 0..d {
                for j in 0..d {
                    let mut v = s * hc[k][(i, j)] * kap[0][k];
                    if i == n + 2 {
                        v += s * dc[k][j] * kap[1][k];
                    }
                    if j == n + 2 {
                        v += s * dc[k][i] * kap[1][k];
                    }
                    if i == n + 2 && j == n + 2 {
                        v += s * c[k] * kap[2][k];
                    }
                    hphi[0][(i, j)] -= v;
                }
            }
        }
    }

    // t^α for α = 1..n
    let mut t = vec![C64::default(); n + 1];
    let mut dt = vec![vec![C64::default(); d]; n + 1];
    let mut ht = vec![CMat::zeros(d, d); n + 1];
    for a in 1..=n {
        let pw = (n + 1 - a) as f64;
        let ti = a - 1;
        t[a] = nn / pw * val(ti, 0);
        for i in 0..d {
            dt[a][i] = val(ti, 1 + i);
        }
        if hessian {
            for i in 0..d {
                for j in i..d {
                    let pi = pair_index(d, i, j);
                    let v = pw / nn * val(ti, 1 + d + pi) + val(ti, 1 + d + npairs + pi);
                    ht[a][(i, j)] = v;
                    ht[a][(j, i)] = v;
                }
            }
        }
    }

    // t⁰ = φ₀ + T0_THETA·L·φ₁ + T0_G1·4πi g₁ φ₂ with L = (θ₁′/θ₁)((n+1)v_ex)
    let bpt = (n + 1) as f64 * x[n + 1];
    let tb = tau_terms(bpt, &tau, if hessian { 5 } else { 3 })?;
    let np1 = (n + 1) as f64;
    let l = tb.l1;
    let mut dl = vec![C64::default(); d];
    dl[n + 1] = np1 * tb.l2;
    dl[n + 2] = tb.hw;
    let mut hl = CMat::zeros(d, d);
    if hessian {
        hl[(n + 1, n + 1)] = np1 * np1 * tb.l3;
        hl[(n + 1, n + 2)] = np1 * tb.hww;
        hl[(n + 2, n + 1)] = np1 * tb.hww;
        hl[(n + 2, n + 2)] = tb.kw;
    }
    let gd = g1_derivatives(&tau)?;
    let fg = 4.0 * PI * I * T0_G1;
    let gfun = |o: usize| fg * gd[o];
    t[0] = phi[0] + T0_THETA * l * phi[1] + gfun(0) * phi[2];
    for i in 0..d {
        dt[0][i] = dphi[0][i] + T0_THETA * (l * dphi[1][i] + dl[i] * phi[1]) + gfun(0) * dphi[2][i];
    }
    dt[0][n + 2] += gfun(1) * phi[2];
    if hessian {
        for i in 0..d {
            for j in 0..d {
                let mut v = hphi[0][(i, j)]
                    + T0_THETA * (l * hphi[1][(i, j)] + dl[i] * dphi[1][j] + dl[j] * dphi[1][i] + hl[(i, j)] * phi[1])
                    + gfun(0) * hphi[2][(i, j)];
                if i == n + 2 {
                    v += gfun(1) * dphi[2][j];
                }
                if j == n + 2 {
                    v += gfun(1) * dphi[2][i];
                }
                if i == n + 2 && j == n + 2 {
                    v += gfun(2) * phi[2];
                }
                ht[0][(i, j)] = v;
            }
        }
    }

    let assemble = |rows: &Vec<Vec<C64>>| {
        let mut j = CMat::zeros(d, d);
        for a in 0..=n {
            for i in 0..d {
                j[(a, i)] = rows[a][i];
            }
        }
        j[(n + 1, n + 1)] = C64::new(1.0, 0.0);
        j[(n + 2, n + 2)] = C64::new(1.0, 0.0);
        j
    };
    let pad = |mut h: Vec<CMat>| {
        h.push(CMat::zeros(d, d));
        h.push(CMat::zeros(d, d));
        h
    };
    Ok(ChartData {
        n,
        x: x.clone(),
        j_phi: assemble(&dphi),
        j_t: assemble(&dt),
        hess_phi: hessian.then(|| pad(hphi)),
        hess_t: hessian.then(|| pad(ht)),
        phi,
        t,
        root: fr.root,
    })
}

/// Radius for circles in the moduli, measured in units of the largest
/// component of the direction vector.
pub fn moduli_radius(p: &OrbitPoint) -> f64 {
    let g = p.genericity(orbitspace::DEFAULT_DELTA);
    (MODULI_RADIUS_FACTOR * g.min_separation.min(g.divisor_distance)).min(MODULI_RADIUS_CAP)
}

fn chart_values(p: &OrbitPoint, chart: ChartLabel, branch: Option<C64>) -> Result<Vec<C64>, GeometryError> {
    match chart {
        ChartLabel::VChart => Ok(p.coords()),
        ChartLabel::PhiChart => {
            let f = orbitspace::extract_jacobi_forms(p)?;
            let n = p.n();
            let x = p.coords();
            Ok(f.phi.into_iter().chain([x[n + 1], x[n + 2]]).collect())
        }
        ChartLabel::TChart => {
            let fc = flat_coords_with(p, branch)?;
            let n = p.n();
            let x = p.coords();
            Ok(fc.t.into_iter().chain([x[n + 1], x[n + 2]]).collect())
        }
    }
}

/// Jacobian between charts. Entries ∂(target)/∂x are Cauchy derivatives of
/// the coordinate maps along each VChart coordinate; other directions come
/// from inversion.
pub fn jacobian(p: &OrbitPoint, from: ChartLabel, to: ChartLabel) -> Result<JacobianRecord, GeometryError> {
    let d = p.dim();
    let from_v = |chart: ChartLabel| -> Result<CMat, GeometryError> {
        if chart == ChartLabel::VChart {
            return Ok(CMat::identity(d, d));
        }
        let x0 = p.coords();
        let branch = if chart == ChartLabel::TChart {
            Some(flat_coords_with(p, None)?.root)
        } else {
            None
        };
        let mut j = CMat::zeros(d, d);
        for col in 0..d {
            let mut dir = vec![C64::default(); d];
            dir[col] = C64::new(1.0, 0.0);
            let dcol = contour::directional_derivative(
                |x: &[C64], out: &mut [C64]| -> Result<(), GeometryError> {
                    let q = OrbitPoint::from_coords(p.n(), x)?;
                    out.copy_from_slice(&chart_values(&q, chart, branch)?);
                    Ok(())
                },
                d,
                &x0,
                &dir,
                1,
                contour::DEFAULT_DERIV_RADIUS.min(moduli_radius(p)),
                contour::DEFAULT_DERIV_SAMPLES,
            )?;
            for a in 0..d {
                j[(a, col)] = dcol[a];
            }
        }
        Ok(j)
    };
    let a = from_v(from)?;
    let b = from_v(to)?;
    let ainv = linalg::inverse(&a).ok_or_else(|| GeometryError::IllConditioned("singular chart Jacobian".into()))?;
    JacobianRecord::new(from, to, b * ainv)
}

/// Flat coordinates t⁰..tⁿ and the branch root used.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlatCoords {
    pub t: Vec<C64>,
    pub root: C64,
}

pub fn flat_coords(p: &OrbitPoint) -> Result<FlatCoords, GeometryError> {
    flat_coords_with(p, None)
}

pub fn flat_coords_with(p: &OrbitPoint, branch: Option<C64>) -> Result<FlatCoords, GeometryError> {
    let cd = chart_data(p, branch, false, &ChartOptions::default())?;
    Ok(FlatCoords { t: cd.t, root: cd.root })
}

/// T_n^k = Σ_{i₁+…+i_k = n, i_j ≥ 1} t^{n+1−i₁}⋯t^{n+1−i_k}.
pub fn big_t(t: &[C64], n: usize, k: usize) -> C64 {
    // dp[s] = sum over compositions of s into the parts used so far
    let mut dp = vec![C64::default(); n + 1];
    dp[0] = C64::new(1.0, 0.0);
    for _ in 0..k {
        let mut next = vec![C64::default(); n + 1];
        for s in 0..=n {
            if dp[s] == C64::default() {
                continue;
            }
            for i in 1..=n - s {
                next[s + i] += dp[s] * t[n + 1 - i];
            }
        }
        dp = next;
    }
    dp[n]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaitoMethod {
    Directional,
    ClosedForm,
}

/// η* in PhiChart by differentiating g*_Φ along ∂/∂φ₀ with a Cauchy circle.
fn saito_directional_phi(p: &OrbitPoint) -> Result<CMat, GeometryError> {
    let n = p.n();
    let d = n + 3;
    let opts = ChartOptions::default();
    let base = chart_data(p, None, false, &opts)?;
    let e = base.unit_field()?;
    let gv = intersection_form_v(n).mat;
    let x0 = p.coords();
    let der = contour::directional_derivative(
        |x: &[C64], out: &mut [C64]| -> Result<(), GeometryError> {
            let q = OrbitPoint::from_coords(n, x)?;
            let cd = chart_data(&q, Some(base.root), false, &opts)?;
            let g = &cd.j_phi * &gv * cd.j_phi.transpose();
            out.copy_from_slice(g.as_slice());
            Ok(())
        },
        d * d,
        &x0,
        &e,
        1,
        moduli_radius(p),
        32,
    )?;
    Ok(CMat::from_column_slice(d, d, &der))
}

/// η* in PhiChart from the first and second chart derivatives:
/// ∂_e(J g Jᵀ) = (∂_eJ) g Jᵀ + J g (∂_eJ)ᵀ.
pub fn saito_from_hessian(cd: &ChartData) -> Result<CMat, GeometryError> {
    let n = cd.n;
    let d = n + 3;
    let e = cd.unit_field()?;
    let h = cd
        .hess_phi
        .as_ref()
        .ok_or_else(|| GeometryError::Unsupported("chart data without Hessian".into()))?;
    let mut dj = CMat::zeros(d, d);
    for a in 0..d {
        for i in 0..d {
            dj[(a, i)] = (0..d).map(|k| h[a][(i, k)] * e[k]).sum();
        }
    }
    let gv = intersection_form_v(n).mat;
    let m = &dj * &gv * cd.j_phi.transpose();
    Ok(&m + m.transpose())
}

/// The closed-form PhiChart matrix of η*.
///
/// (i+j−2)φ_{i+j−2} for i, j ≥ 2 (zero past n) and η(dφ_i, dφ₀) = 0 for
/// i ≥ 2; the φ₁ row is zero except η(dφ₁, dφ₀) = (log θ₁)″((n+1)v_ex)·φ₁
/// and η(dφ₁, dv_ex) = −1/(n+1); η(dφ₀, dv_ex) = (θ₁′/θ₁)((n+1)v_ex)/(n+1)
/// and η(dφ₀, dτ) = −2πi. The (φ₀, φ₀) entry is fixed by η(dt⁰, dt⁰) = 0.
pub fn saito_closed_form_phi(p: &OrbitPoint, phi: &[C64]) -> Result<CMat, GeometryError> {
    let n = p.n();
    let d = n + 3;
    let np1 = (n + 1) as f64;
    let b = np1 * p.v_ex;
    let tb = tau_terms(b, &p.tau, 3)?;
    let mut m = CMat::zeros(d, d);
    let mut set = |i: usize, j: usize, v: C64| {
        m[(i, j)] = v;
        m[(j, i)] = v;
    };
    for i in 2..=n {
        for j in 2..=n {
            let s = i + j - 2;
            if s <= n {
                set(i, j, s as f64 * phi[s]);
            }
        }
    }
    set(1, 0, tb.l2 * phi[1]);
    set(1, n + 1, C64::new(-1.0 / np1, 0.0));
    set(0, n + 1, tb.l1 / np1);
    set(0, n + 2, C64::new(0.0, -2.0 * PI));
    // η(dt⁰, dt⁰) = 0 with dt⁰ = dφ₀ + A dφ₁ + B dφ₂ + C dv_ex + D dτ
    let g = g1_derivatives(&p.tau)?;
    let a = T0_THETA * tb.l1;
    let bb = T0_G1 * 4.0 * PI * I * g[0];
    let cc = T0_THETA * np1 * tb.l2 * phi[1];
    let dd = T0_THETA * tb.hw * phi[1] + T0_G1 * 4.0 * PI * I * g[1] * phi[2];
    let mut coef = vec![C64::default(); d];
    coef[0] = C64::new(1.0, 0.0);
    coef[1] = a;
    coef[2] += bb;
    coef[n + 1] = cc;
    coef[n + 2] = dd;
    let mut rest = C64::default();
    for i in 0..d {
        for j in 0..d {
            if i == 0 && j == 0 {
                continue;
            }
            rest += coef[i] * coef[j] * m[(i, j)];
        }
    }
    m[(0, 0)] = -rest;
    Ok(m)
}

/// η* in the requested chart.
pub fn saito_metric(p: &OrbitPoint, chart: ChartLabel, method: SaitoMethod) -> Result<MetricTensor, GeometryError> {
    let cd = chart_data(p, None, false, &ChartOptions::default())?;
    let phi_mat = match method {
        SaitoMethod::Directional => saito_directional_phi(p)?,
        SaitoMethod::ClosedForm => saito_closed_form_phi(p, &cd.phi)?,
    };
    let eta_phi = MetricTensor::new(ChartLabel::PhiChart, Variance::Contravariant, phi_mat);
    transport(&eta_phi, &cd, chart)
}

/// Moves a contravariant PhiChart or VChart metric to another chart with the
/// analytic Jacobians in `cd`.
pub fn transport(m: &MetricTensor, cd: &ChartData, to: ChartLabel) -> Result<MetricTensor, GeometryError> {
    if m.labels == to {
        return Ok(m.clone());
    }
    let from_v = cd.jacobian(m.labels);
    let to_v = cd.jacobian(to);
    let inv = linalg::inverse(&from_v).ok_or_else(|| GeometryError::IllConditioned("chart Jacobian".into()))?;
    let jac = JacobianRecord::new(m.labels, to, to_v * inv)?;
    pushforward(m, &jac)
}

/// g* in the requested chart at the chart data's point.
pub fn intersection_form(cd: &ChartData, chart: ChartLabel) -> Result<MetricTensor, GeometryError> {
    transport(&intersection_form_v(cd.n), cd, chart)
}

/// A family of contravariant metrics on one chart, evaluated at VChart points.
pub trait MetricField {
    fn chart(&self) -> ChartLabel;
    fn count(&self) -> usize;
    /// The metrics at x together with the chart Jacobian ∂y/∂x.
    fn eval(&self, x: &[C64]) -> Result<(Vec<CMat>, CMat), GeometryError>;
    /// ∂g^{ij}/∂y^c for every member, indexed [member][c], when available in closed form.
    fn derivatives(&self, _x: &[C64]) -> Option<Result<Vec<Vec<CMat>>, GeometryError>> {
        None
    }
}

/// ∂_c (J g Jᵀ) in chart coordinates y for a constant VChart metric g:
/// the VChart partials H_a g Jᵀ + J g H_aᵀ, with (H_a)_{ib} = ∂²y^i/∂x^b∂x^a,
/// recombined through J⁻¹.
fn pushforward_derivatives(cd: &ChartData, chart: ChartLabel, g: &CMat) -> Result<Vec<CMat>, GeometryError> {
    let d = cd.n + 3;
    let j = cd.jacobian(chart);
    let hess = cd
        .hessian(chart)
        .ok_or_else(|| GeometryError::Unsupported("chart data without Hessian".into()))?;
    let w = chart_directions(&j)?;
    let jt = j.transpose();
    let partials: Vec<CMat> = (0..d)
        .map(|a| {
            let mut h = CMat::zeros(d, d);
            for (i, hi) in hess.iter().enumerate().take(d) {
                for b in 0..d {
                    h[(i, b)] = hi[(b, a)];
                }
            }
            let left = &h * g * &jt;
            &left + left.transpose()
        })
        .collect();
    Ok((0..d)
        .map(|c| {
            let mut m = CMat::zeros(d, d);
            for (a, pa) in partials.iter().enumerate() {
                m += pa * w[(a, c)];
            }
            m
        })
        .collect())
}

/// g* + s·η* for a list of s values (s = 0 is g* alone), with η* from the
/// analytic Hessian. A `None` entry stands for η* alone.
pub struct PencilField {
    pub n: usize,
    pub chart: ChartLabel,
    pub members: Vec<Option<f64>>,
    pub branch: Option<C64>,
}

impl MetricField for PencilField {
    fn chart(&self) -> ChartLabel {
        self.chart
    }

    fn count(&self) -> usize {
        self.members.len()
    }

    fn eval(&self, x: &[C64]) -> Result<(Vec<CMat>, CMat), GeometryError> {
        let q = OrbitPoint::from_coords(self.n, x)?;
        let needs_eta = self.members.iter().any(|m| m.map_or(true, |s| s != 0.0));
        let cd = chart_data(&q, self.branch, needs_eta, &ChartOptions::nested())?;
        let g = intersection_form(&cd, self.chart)?.mat;
        let eta = if needs_eta {
            let e = MetricTensor::new(ChartLabel::PhiChart, Variance::Contravariant, saito_from_hessian(&cd)?);
            Some(transport(&e, &cd, self.chart)?.mat)
        } else {
            None
        };
        let mats = self
            .members
            .iter()
            .map(|m| match (m, &eta) {
                (Some(s), Some(e)) => &g + e * C64::new(*s, 0.0),
                (Some(_), None) => g.clone(),
                (None, Some(e)) => e.clone(),
                (None, None) => unreachable!(),
            })
            .collect();
        Ok((mats, cd.jacobian(self.chart)))
    }

    /// Closed form for g* alone, from the chart Hessian.
    fn derivatives(&self, x: &[C64]) -> Option<Result<Vec<Vec<CMat>>, GeometryError>> {
        if self.members.iter().any(|m| *m != Some(0.0)) {
            return None;
        }
        let run = || {
            let q = OrbitPoint::from_coords(self.n, x)?;
            let cd = chart_data(&q, self.branch, true, &ChartOptions::nested())?;
            let dm = pushforward_derivatives(&cd, self.chart, &intersection_form_v(self.n).mat)?;
            Ok(vec![dm; self.members.len()])
        };
        Some(run())
    }
}

/// A constant metric on VChart, for testing.
pub struct ConstantField(pub CMat);

impl MetricField for ConstantField {
    fn chart(&self) -> ChartLabel {
        ChartLabel::VChart
    }

    fn count(&self) -> usize {
        1
    }

    fn eval(&self, _x: &[C64]) -> Result<(Vec<CMat>, CMat), GeometryError> {
        let d = self.0.nrows();
        Ok((vec![self.0.clone()], CMat::identity(d, d)))
    }
}

/// Christoffel symbols at one point, in both conventions.
#[derive(Clone, Debug)]
pub struct Christoffel {
    pub dim: usize,
    /// Γ^k_{ij}, stored at [(k·d + i)·d + j]
    pub second_kind: Vec<C64>,
    /// Γ_k^{ij} = −g^{is} Γ^j_{sk}, stored at [(k·d + i)·d + j]
    pub contravariant: Vec<C64>,
    /// g^{ij} at the point
    pub metric: CMat,
    /// ∂_c g^{ij}, stored at [c][(i, j)]
    pub dmetric: Vec<CMat>,
}

impl Christoffel {
    pub fn gamma(&self, k: usize, i: usize, j: usize) -> C64 {
        self.second_kind[(k * self.dim + i) * self.dim + j]
    }

    /// Γ_k^{ij}
    pub fn upper(&self, k: usize, i: usize, j: usize) -> C64 {
        self.contravariant[(k * self.dim + i) * self.dim + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.contravariant.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest violation of ∂_k g^{ij} = Γ_k^{ij} + Γ_k^{ji} and
    /// g^{is}Γ_s^{jk} = g^{js}Γ_s^{ik}, relative to the largest term.
    pub fn compatibility_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let lhs = self.dmetric[k][(i, j)];
                    let rhs = self.upper(k, i, j) + self.upper(k, j, i);
                    worst = worst.max((lhs - rhs).norm());
                    scale = scale.max(lhs.norm());
                    let a: C64 = (0..d).map(|s| self.metric[(i, s)] * self.upper(s, j, k)).sum();
                    let b: C64 = (0..d).map(|s| self.metric[(j, s)] * self.upper(s, i, k)).sum();
                    worst = worst.max((a - b).norm());
                    scale = scale.max(a.norm());
                }
            }
        }
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }
}

/// How moduli circles are laid out.
#[derive(Clone, Copy, Debug)]
pub struct DerivConfig {
    pub radius: f64,
    pub samples: usize,
}

impl DerivConfig {
    pub fn for_point(p: &OrbitPoint) -> Self {
        Self {
            radius: moduli_radius(p),
            samples: NESTED_SAMPLES,
        }
    }
}

/// Fixed-node Cauchy derivative of a vector map along x + s·dir, with the
/// radius measured against max|dir|.
fn nested_derivative<F>(f: F, dim: usize, x: &[C64], dir: &[C64], order: usize, cfg: &DerivConfig) -> Result<Vec<C64>, GeometryError>
where
    F: Fn(&[C64]) -> Result<Vec<C64>, GeometryError>,
{
    let norm = dir.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if norm == 0.0 {
        return Ok(vec![C64::default(); dim]);
    }
    let step = cfg.radius / norm;
    let m = cfg.samples;
    let mut acc = vec![C64::default(); dim];
    let mut y = x.to_vec();
    for j in 0..m {
        let w = C64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64);
        for i in 0..x.len() {
            y[i] = x[i] + step * w * dir[i];
        }
        let v = f(&y)?;
        let tw = w.powi(-(order as i32));
        for a in 0..dim {
            acc[a] += v[a] * tw;
        }
    }
    let fact: f64 = (1..=order).map(|k| k as f64).product();
    let scale = fact / (m as f64 * step.powi(order as i32));
    Ok(acc.into_iter().map(|a| a * scale).collect())
}

fn chart_directions(j: &CMat) -> Result<CMat, GeometryError> {
    linalg::inverse(j).ok_or_else(|| GeometryError::IllConditioned("chart Jacobian".into()))
}

fn christoffel_from(metric: &CMat, dmetric: Vec<CMat>) -> Result<Christoffel, GeometryError> {
    let d = metric.nrows();
    let cov = linalg::inverse(metric).ok_or_else(|| GeometryError::IllConditioned("singular metric".into()))?;
    // ∂_c g_{ij} = −(G ∂_c M G)_{ij}
    let dcov: Vec<CMat> = dmetric.iter().map(|dm| -(&cov * dm * &cov)).collect();
    let mut second = vec![C64::default(); d * d * d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut acc = C64::default();
                for s in 0..d {
                    acc += metric[(k, s)] * (dcov[i][(s, j)] + dcov[j][(i, s)] - dcov[s][(i, j)]);
                }
                second[(k * d + i) * d + j] = 0.5 * acc;
            }
        }
    }
    // Γ_k^{ij} = ½∂_k g^{ij} + ½ g_{kq}(g^{is}∂_s g^{jq} − g^{js}∂_s g^{iq}):
    // one multiplication by the inverse metric instead of two
    let mut a = vec![C64::default(); d * d * d]; // a[(q·d + i)·d + j]
    for q in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut acc = C64::default();
                for s in 0..d {
                    acc += metric[(i, s)] * dmetric[s][(j, q)] - metric[(j, s)] * dmetric[s][(i, q)];
                }
                a[(q * d + i) * d + j] = acc;
            }
        }
    }
    let mut upper = vec![C64::default(); d * d * d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let t: C64 = (0..d).map(|q| cov[(k, q)] * a[(q * d + i) * d + j]).sum();
                upper[(k * d + i) * d + j] = 0.5 * (dmetric[k][(i, j)] + t);
            }
        }
    }
    Ok(Christoffel {
        dim: d,
        second_kind: second,
        contravariant: upper,
        metric: metric.clone(),
        dmetric,
    })
}

/// Christoffel symbols of every member of the field at x.
pub fn christoffel_multi(field: &dyn MetricField, x: &[C64], cfg: &DerivConfig) -> Result<Vec<Christoffel>, GeometryError> {
    let (mats, j) = field.eval(x)?;
    if let Some(dm) = field.derivatives(x) {
        return mats.iter().zip(dm?).map(|(m, dmm)| christoffel_from(m, dmm)).collect();
    }
    let d = j.nrows();
    let count = field.count();
    let w = chart_directions(&j)?;
    // dm[member][c]
    let mut dm: Vec<Vec<CMat>> = vec![Vec::with_capacity(d); count];
    for c in 0..d {
        let dir: Vec<C64> = w.column(c).iter().copied().collect();
        let der = nested_derivative(
            |y| {
                let (ms, _) = field.eval(y)?;
                Ok(ms.iter().flat_map(|m| m.as_slice().to_vec()).collect())
            },
            count * d * d,
            x,
            &dir,
            1,
            cfg,
        )?;
        for (m, chunk) in der.chunks(d * d).enumerate() {
            dm[m].push(CMat::from_column_slice(d, d, chunk));
        }
    }
    mats.iter()
        .zip(dm)
        .map(|(m, dmm)| christoffel_from(m, dmm))
        .collect()
}

pub fn christoffel(field: &dyn MetricField, p: &OrbitPoint) -> Result<Christoffel, GeometryError> {
    let mut v = christoffel_multi(field, &p.coords(), &DerivConfig::for_point(p))?;
    Ok(v.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureReport {
    /// max |R^{ijk}_l|
    pub raw: f64,
    /// raw divided by max(‖g‖·‖∂Γ‖, ‖Γ‖²)
    pub scaled: f64,
    pub christoffel_max: f64,
    /// max |R^a_{bcd}| of the same connection, from the second-kind symbols
    pub standard: f64,
}

/// Contravariant Riemann tensor
/// R^{ijk}_l = g^{is}(∂_sΓ_l^{jk} − ∂_lΓ_s^{jk}) + Γ_s^{ik}Γ_l^{sj} − Γ_s^{ij}Γ_l^{sk}
/// for every member of the field. With Γ_k^{ij} = −g^{is}Γ^j_{sk} this is
/// g^{is}g^{jt} contracted with the usual R^k_{tsl} up to sign; the quadratic
/// terms come with this sign, which is also what makes the pullback of a
/// constant metric flat in every chart.
pub fn curvature_multi(field: &dyn MetricField, x: &[C64], cfg: &DerivConfig) -> Result<Vec<CurvatureReport>, GeometryError> {
    let base = christoffel_multi(field, x, cfg)?;
    let (_, j) = field.eval(x)?;
    let d = j.nrows();
    let count = field.count();
    let w = chart_directions(&j)?;
    let d3 = d * d * d;
    // dg[member][s] = ∂_s of (Γ_·^{··}, Γ^·_{··}) laid out back to back
    let mut dg: Vec<Vec<Vec<C64>>> = vec![Vec::with_capacity(d); count];
    for s in 0..d {
        let dir: Vec<C64> = w.column(s).iter().copied().collect();
        let der = nested_derivative(
            |y| {
                let cs = christoffel_multi(field, y, cfg)?;
                Ok(cs
                    .iter()
                    .flat_map(|c| c.contravariant.iter().chain(&c.second_kind).copied().collect::<Vec<_>>())
                    .collect())
            },
            count * 2 * d3,
            x,
            &dir,
            1,
            cfg,
        )?;
        for (m, chunk) in der.chunks(2 * d3).enumerate() {
            dg[m].push(chunk.to_vec());
        }
    }
    let mut out = Vec::with_capacity(count);
    for (m, ch) in base.iter().enumerate() {
        let up = |k: usize, i: usize, jj: usize| ch.upper(k, i, jj);
        let dup = |s: usize, k: usize, i: usize, jj: usize| dg[m][s][(k * d + i) * d + jj];
        let gam = |a: usize, b: usize, c: usize| ch.gamma(a, b, c);
        let dgam = |s: usize, a: usize, b: usize, c: usize| dg[m][s][d3 + (a * d + b) * d + c];
        let mut raw = 0.0f64;
        let mut standard = 0.0f64;
        let mut dmax = 0.0f64;
        for s in 0..d {
            for v in &dg[m][s][..d3] {
                dmax = dmax.max(v.norm());
            }
        }
        for i in 0..d {
            for jj in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut r = C64::default();
                        for s in 0..d {
                            r += ch.metric[(i, s)] * (dup(s, l, jj, k) - dup(l, s, jj, k));
                            r += up(s, i, k) * up(l, s, jj) - up(s, i, jj) * up(l, s, k);
                        }
                        raw = raw.max(r.norm());
                        // R^i_{jkl} = ∂_kΓ^i_{lj} − ∂_lΓ^i_{kj} + Γ^i_{ke}Γ^e_{lj} − Γ^i_{le}Γ^e_{kj}
                        let mut q = dgam(k, i, l, jj) - dgam(l, i, k, jj);
                        for e in 0..d {
                            q += gam(i, k, e) * gam(e, l, jj) - gam(i, l, e) * gam(e, k, jj);
                        }
                        standard = standard.max(q.norm());
                    }
                }
            }
        }
        let gmax = linalg::max_abs(&ch.metric);
        let cmax = ch.max_abs();
        let denom = (gmax * dmax).max(cmax * cmax).max(f64::EPSILON * gmax * gmax);
        out.push(CurvatureReport {
            raw,
            scaled: if denom > 0.0 { raw / denom } else { raw },
            christoffel_max: cmax,
            standard,
        });
    }
    Ok(out)
}

pub fn curvature_norm(field: &dyn MetricField, p: &OrbitPoint) -> Result<CurvatureReport, GeometryError> {
    let mut v = curvature_multi(field, &p.coords(), &DerivConfig::for_point(p))?;
    Ok(v.remove(0))
}

/// Solves t(x) = target for x by Newton's method from `guess`.
pub fn invert_t_chart(
    n: usize,
    target: &[C64],
    guess: &[C64],
    branch: Option<C64>,
) -> Result<Vec<C64>, GeometryError> {
    let opts = ChartOptions::default();
    let mut x = guess.to_vec();
    let scale = target.iter().map(|c| c.norm()).fold(1.0, f64::max);
    for _ in 0..30 {
        let q = OrbitPoint::from_coords(n, &x)?;
        let cd = chart_data(&q, branch, false, &opts)?;
        let y = cd.coords(ChartLabel::TChart);
        let resid: Vec<C64> = y.iter().zip(target).map(|(a, b)| a - b).collect();
        let err = resid.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if err < 1e-14 * scale {
            return Ok(x);
        }
        let step = linalg::solve(&cd.j_t, &resid).ok_or_else(|| GeometryError::IllConditioned("TChart Jacobian".into()))?;
        for i in 0..x.len() {
            x[i] -= step[i];
        }
    }
    let q = OrbitPoint::from_coords(n, &x)?;
    let y = chart_data(&q, branch, false, &opts)?.coords(ChartLabel::TChart);
    let err = y.iter().zip(target).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if err < 1e-11 * scale {
        Ok(x)
    } else {
        Err(GeometryError::IllConditioned(format!("TChart inversion stalled at {err:e}")))
    }
}

/// Second derivative along the t⁰ coordinate line of the TChart entries of
/// g* and of its Christoffel symbols, relative to their size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearityReport {
    pub metric: f64,
    pub christoffel: f64,
}

pub fn t0_linearity(p: &OrbitPoint) -> Result<LinearityReport, GeometryError> {
    let n = p.n();
    let d = n + 3;
    let cfg = DerivConfig::for_point(p);
    let base = chart_data(p, None, false, &ChartOptions::default())?;
    let t0 = base.coords(ChartLabel::TChart);
    let x0 = p.coords();
    let field = PencilField {
        n,
        chart: ChartLabel::TChart,
        members: vec![Some(0.0)],
        branch: Some(base.root),
    };
    // step along t⁰ comparable to the moduli radius mapped through J
    let e = base.unit_field()?;
    let enorm = e.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let step = cfg.radius / enorm;
    let m = cfg.samples;
    let mut acc_g = vec![C64::default(); d * d];
    let mut acc_c = vec![C64::default(); d * d * d];
    let mut gmax = 0.0f64;
    let mut cmax = 0.0f64;
    let mut guess = x0.clone();
    for j in 0..m {
        let w = C64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64);
        let mut target = t0.clone();
        target[0] += step * w;
        for i in 0..d {
            guess[i] = x0[i] + step * w * e[i];
        }
        let x = invert_t_chart(n, &target, &guess, Some(base.root))?;
        let ch = christoffel_multi(&field, &x, &cfg)?.remove(0);
        let tw = w.powi(-2);
        for (a, v) in ch.metric.as_slice().iter().enumerate() {
            acc_g[a] += v * tw;
            gmax = gmax.max(v.norm());
        }
        for (a, v) in ch.contravariant.iter().enumerate() {
            acc_c[a] += v * tw;
            cmax = cmax.max(v.norm());
        }
    }
    // second derivative ≈ 2/(m step²) Σ f w^{−2}; compare with size/step² scale
    let sc = 2.0 / (m as f64 * step * step);
    let gd = acc_g.iter().map(|v| (v * sc).norm()).fold(0.0, f64::max);
    let cd = acc_c.iter().map(|v| (v * sc).norm()).fold(0.0, f64::max);
    let rel = |v: f64, s: f64| if s > 0.0 { v * step * step / s } else { v };
    Ok(LinearityReport {
        metric: rel(gd, gmax),
        christoffel: rel(cd, cmax),
    })
}

/// Σ_k e^k ∂_k(∂φ_i/∂v_ex) for i = 0..n, with e the unit field in VChart and
/// ∂/∂v_ex the VChart partial.
pub fn phi0_vex_derivatives(cd: &ChartData) -> Result<Vec<C64>, GeometryError> {
    let n = cd.n;
    let e = cd.unit_field()?;
    let h = cd
        .hess_phi
        .as_ref()
        .ok_or_else(|| GeometryError::Unsupported("chart data without Hessian".into()))?;
    Ok((0..=n).map(|i| (0..n + 3).map(|k| e[k] * h[i][(n + 1, k)]).sum()).collect())
}

/// The lemma values: −n(θ₁′/θ₁)((n+1)v_ex) for i = 0, n for i = 1, 0 above.
pub fn phi0_vex_expected(p: &OrbitPoint) -> Result<Vec<C64>, GeometryError> {
    let n = p.n();
    let tb = tau_terms((n + 1) as f64 * p.v_ex, &p.tau, 1)?;
    let mut out = vec![C64::default(); n + 1];
    out[0] = -(n as f64) * tb.l1;
    out[1] = C64::new(n as f64, 0.0);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TranslationLaw {
    /// |t⁰(gp) − t⁰(p) + 2πi(n+1)λ_ex t¹(p)| relative to the size of the shift
    pub t0_residual: f64,
    /// max_{α≥1} |t^α(gp) − t^α(p)| relative to max |t^α|
    pub invariance: f64,
}

/// Flat coordinates under the exceptional translation v_ex ↦ v_ex + λ_ex τ + μ_ex.
/// Expected: t⁰ ↦ t⁰ − 2πi(n+1)λ_ex t¹, other flat coordinates fixed.
pub fn t0_translation_law(p: &OrbitPoint, lambda_ex: i64, mu_ex: i64) -> Result<TranslationLaw, GeometryError> {
    let n = p.n();
    let g = orbitspace::GroupElement::Translation {
        lambda: vec![0; n + 1],
        lambda_ex,
        mu: vec![0; n + 1],
        mu_ex,
    };
    let q = orbitspace::act(&g, p)?;
    let a = flat_coords(p)?;
    let b = flat_coords_with(&q, Some(a.root))?;
    let shift = -2.0 * PI * I * ((n + 1) as i64 * lambda_ex) as f64 * a.t[1];
    let scale = shift.norm().max(a.t[0].norm()).max(f64::MIN_POSITIVE);
    let tmax = a.t[1..].iter().map(|t| t.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let inv = (1..=n).map(|k| (b.t[k] - a.t[k]).norm()).fold(0.0, f64::max);
    Ok(TranslationLaw {
        t0_residual: (b.t[0] - a.t[0] - shift).norm() / scale,
        invariance: inv / tmax,
    })
}

/// Shape of η* in TChart.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaPattern {
    /// α + β of the antidiagonal carrying the t²..tⁿ block
    pub antidiagonal: Option<usize>,
    /// value on that antidiagonal
    pub constant: C64,
    /// largest deviation from `constant` along the antidiagonal
    pub spread: f64,
    /// largest block entry off the antidiagonal
    pub off_pattern: f64,
    /// η(dt⁰, dτ)
    pub t0_tau: C64,
    /// η(dt¹, dv_ex)
    pub t1_vex: C64,
    /// largest remaining entry in the t⁰ and t¹ rows
    pub t0_t1_rows: f64,
}

pub fn eta_pattern(eta_t: &CMat, n: usize) -> EtaPattern {
    let scale = linalg::max_abs(eta_t).max(f64::MIN_POSITIVE);
    let mut best: Option<(usize, f64)> = None;
    for s in 4..=2 * n {
        let w = (2..=n)
            .filter(|&a| s >= a + 2 && s - a <= n)
            .map(|a| eta_t[(a, s - a)].norm())
            .fold(0.0, f64::max);
        if w > 1e-6 * scale && best.map_or(true, |(_, b)| w > b) {
            best = Some((s, w));
        }
    }
    let anti = best.map(|(s, _)| s);
    let mut constant = C64::default();
    let mut spread = 0.0f64;
    let mut off = 0.0f64;
    if let Some(s) = anti {
        let entries: Vec<C64> = (2..=n).filter(|&a| s >= a + 2 && s - a <= n).map(|a| eta_t[(a, s - a)]).collect();
        constant = entries.iter().sum::<C64>() / entries.len() as f64;
        spread = entries.iter().map(|e| (e - constant).norm()).fold(0.0, f64::max);
    }
    for a in 2..=n {
        for b in 2..=n {
            if Some(a + b) != anti {
                off = off.max(eta_t[(a, b)].norm());
            }
        }
    }
    let mut rows = 0.0f64;
    for b in 0..n + 3 {
        if b != n + 2 {
            rows = rows.max(eta_t[(0, b)].norm());
        }
        if b != n + 1 {
            rows = rows.max(eta_t[(1, b)].norm());
        }
    }
    EtaPattern {
        antidiagonal: anti,
        constant,
        spread,
        off_pattern: off,
        t0_tau: eta_t[(0, n + 2)],
        t1_vex: eta_t[(1, n + 1)],
        t0_t1_rows: rows,
    }
}

/// One entry where two matrices disagree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryMismatch {
    pub row: String,
    pub col: String,
    pub left: C64,
    pub right: C64,
}

/// Entries (upper triangle) differing by more than `tol` relative to the
/// largest entry of `a`, with the largest relative difference.
pub fn entry_mismatches(a: &CMat, b: &CMat, labels: &[String], tol: f64) -> (f64, Vec<EntryMismatch>) {
    let scale = linalg::max_abs(a).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    let mut list = Vec::new();
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            let r = (a[(i, j)] - b[(i, j)]).norm() / scale;
            worst = worst.max(r);
            if r > tol {
                list.push(EntryMismatch {
                    row: labels[i].clone(),
                    col: labels[j].clone(),
                    left: a[(i, j)],
                    right: b[(i, j)],
                });
            }
        }
    }
    (worst, list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbitspace::{seeded_point, DEFAULT_DELTA};

    fn point(n: usize, seed: u64) -> OrbitPoint {
        seeded_point(n, ModularParameter::new(C64::new(0.3, 1.2)).unwrap(), seed, DEFAULT_DELTA).unwrap()
    }

    #[test]
    fn intersection_form_n2() {
        let g = intersection_form_v(2);
        assert!((g.mat[(1, 1)] - 2.0 / 3.0).norm() < 1e-15);
        assert!((g.mat[(1, 2)] + 1.0 / 3.0).norm() < 1e-15);
        assert!((g.mat[(3, 3)] + 1.0 / 6.0).norm() < 1e-15);
        let cov = g.inverse().unwrap();
        assert!((cov.mat[(3, 3)] + 6.0).norm() < 1e-12);
        assert!((cov.mat[(1, 1)] - 2.0).norm() < 1e-12);
    }

    #[test]
    fn big_t_small_cases() {
        let t = vec![C64::default(), C64::new(2.0, 0.0), C64::new(3.0, 0.0)];
        // n = 2: T^1 = t^1, T^2 = (t^2)^2
        assert_eq!(big_t(&t, 2, 1), C64::new(2.0, 0.0));
        assert_eq!(big_t(&t, 2, 2), C64::new(9.0, 0.0));
    }

    #[test]
    fn chart_data_matches_extraction() {
        let p = point(3, 11);
        let cd = chart_data(&p, None, false, &ChartOptions::default()).unwrap();
        let f = orbitspace::extract_jacobi_forms(&p).unwrap();
        for k in 0..=3 {
            assert!((cd.phi[k] - f.phi[k]).norm() < 1e-10 * f.phi[k].norm().max(1.0), "phi{k}");
        }
    }

    #[test]
    fn hessian_matches_cauchy() {
        let p = point(2, 4);
        let opts = ChartOptions::default();
        let cd = chart_data(&p, None, true, &opts).unwrap();
        let h = cd.hess_t.clone().unwrap();
        let x0 = p.coords();
        let d = p.dim();
        for col in 0..d {
            let mut dir = vec![C64::default(); d];
            dir[col] = C64::new(1.0, 0.0);
            let der = contour::directional_derivative(
                |x: &[C64], out: &mut [C64]| -> Result<(), GeometryError> {
                    let q = OrbitPoint::from_coords(2, x)?;
                    let c = chart_data(&q, Some(cd.root), false, &opts)?;
                    out.copy_from_slice(c.j_t.as_slice());
                    Ok(())
                },
                d * d,
                &x0,
                &dir,
                1,
                1e-3,
                32,
            )
            .unwrap();
            let dj = CMat::from_column_slice(d, d, &der);
            for a in 0..d {
                for i in 0..d {
                    let exact = h[a][(i, col)];
                    assert!(
                        (dj[(a, i)] - exact).norm() < 1e-7 * exact.norm().max(1.0),
                        "a={a} i={i} col={col}: {} vs {}",
                        dj[(a, i)],
                        exact
                    );
                }
            }
        }
    }
}
