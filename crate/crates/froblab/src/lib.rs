//! Numerics for the Frobenius manifold structure on the orbit space of the
//! extended affine Jacobi group of type Ã_n.
//!
//! The modules build on each other in order: [`elliptic`] special functions,
//! [`contour`] quadrature, [`orbitspace`] points and Jacobi forms,
//! [`geometry`] charts and metrics, [`frobenius`] canonical coordinates and
//! the WDVV checks. [`certify`] collects residuals into reports.

pub mod certify;
pub mod contour;
pub mod elliptic;
pub mod frobenius;
pub mod geometry;
pub mod linalg;
pub mod orbitspace;

pub use num_complex::Complex64 as C64;
