//! Small dense helpers shared across modules.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Induced infinity norm: largest absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.amax()
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn symmetric_eig_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Eigenvalues of a symmetric matrix, sorted by decreasing modulus.
pub fn symmetric_eigenvalues_by_modulus(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
    eig.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    eig
}

/// `||M||_2` as the square root of the top eigenvalue of `M M^T`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m * m.transpose();
    symmetric_eig_bounds(&gram).1.max(0.0).sqrt()
}

/// Largest eigenvalue modulus from the full dense spectrum.
///
/// Symmetric input goes through the symmetric eigensolver; anything else
/// through a real Schur decomposition, since the dominant eigenvalue of a
/// non-symmetric matrix may be complex.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolveFailure);
    }
    if m.amax() == 0.0 {
        return Ok(0.0);
    }
    if is_symmetric(m, 1e-14) {
        let (lo, hi) = symmetric_eig_bounds(m);
        return Ok(lo.abs().max(hi.abs()));
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000 * m.nrows())
        .ok_or(Error::EigenSolveFailure)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}
