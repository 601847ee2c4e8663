//! Eigenvalues of small dense real matrices.
//!
//! Real Schur decomposition from `nalgebra`, followed by a residual check on
//! every eigenvalue: the smallest singular value of `m - lambda I` equals
//! `min ||(m - lambda I) v||` over unit `v`, so it bounds the eigenpair
//! residual directly.

use nalgebra::{Complex, Matrix5};
use num_complex::Complex64;
use thiserror::Error;

pub const MAX_SCHUR_ITERATIONS: usize = 10_000;
/// Allowed eigenpair residual relative to the Frobenius norm of the matrix.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("Schur iteration did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("eigenvalue {value} has residual {residual:e} above {bound:e}")]
    Residual {
        value: Complex64,
        residual: f64,
        bound: f64,
    },
}

/// All five eigenvalues of `m`, sorted by decreasing real part.
pub fn eigenvalues(m: &Matrix5<f64>) -> Result<Vec<Complex64>, EigenError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let schur = m
        .clone_owned()
        .try_schur(f64::EPSILON, MAX_SCHUR_ITERATIONS)
        .ok_or(EigenError::NoConvergence(MAX_SCHUR_ITERATIONS))?;
    let mut values: Vec<Complex64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();

    let norm = m.norm();
    let bound = RESIDUAL_TOLERANCE * norm.max(f64::MIN_POSITIVE);
    let mc = m.map(|v| Complex::new(v, 0.0));
    for &value in &values {
        let shifted = mc - Matrix5::<Complex<f64>>::identity() * Complex::new(value.re, value.im);
        let residual = shifted.singular_values().min();
        if !(residual <= bound) {
            return Err(EigenError::Residual {
                value,
                residual,
                bound,
            });
        }
    }
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(values)
}
