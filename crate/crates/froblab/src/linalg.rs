//! Small dense complex matrices.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().lu().try_inverse()
}

pub fn solve(m: &CMat, rhs: &[C64]) -> Option<Vec<C64>> {
    let b = nalgebra::DVector::from_column_slice(rhs);
    m.clone().lu().solve(&b).map(|x| x.iter().copied().collect())
}

pub fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// ‖A‖₁·‖A⁻¹‖₁, infinite when A is singular.
pub fn cond_estimate(m: &CMat) -> f64 {
    match inverse(m) {
        Some(inv) => norm1(m) * norm1(&inv),
        None => f64::INFINITY,
    }
}

pub fn eigenvalues(m: &CMat) -> Option<Vec<C64>> {
    m.clone().schur().eigenvalues().map(|v| v.iter().copied().collect())
}

/// (A + Aᵀ)/2.
pub fn symmetrize(m: &CMat) -> CMat {
    (m + m.transpose()) * C64::new(0.5, 0.0)
}

/// Largest |A_ij − A_ji| relative to the largest entry.
pub fn asymmetry(m: &CMat) -> f64 {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    max_abs(&(m - m.transpose())) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_eigen() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(2.0, 0.0)],
        );
        let inv = inverse(&m).unwrap();
        assert!((inv[(0, 0)] - 2.0 / 3.0).norm() < 1e-15);
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - 1.0).norm() < 1e-12 && (ev[1] - 3.0).norm() < 1e-12);
        assert!((cond_estimate(&m) - 3.0).abs() < 1e-12);
    }
}
