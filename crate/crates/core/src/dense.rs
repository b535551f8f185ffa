//! Small dense helpers on top of faer.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Singular values; falls back to the Hermitian eigenvalues of AᴴA when the SVD
/// iteration does not converge.
pub fn singular_values(m: MatRef<'_, c64>) -> Option<Vec<f64>> {
    if let Ok(s) = m.singular_values() {
        return Some(s);
    }
    if !m.norm_l2().is_finite() {
        return None;
    }
    let g = if m.nrows() >= m.ncols() { m.adjoint() * m } else { m * m.adjoint() };
    g.self_adjoint_eigenvalues(faer::Side::Lower)
        .ok()
        .map(|e| e.into_iter().map(|x| x.max(0.0).sqrt()).collect())
}

/// Largest singular value.
pub fn norm2(m: MatRef<'_, c64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values(m).map_or(f64::NAN, |s| s.into_iter().fold(0.0, f64::max))
}

/// 2-norm condition number.
pub fn cond2(m: MatRef<'_, c64>) -> f64 {
    match singular_values(m) {
        Some(s) => {
            let hi = s.iter().copied().fold(0.0, f64::max);
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            hi / lo
        }
        None => f64::INFINITY,
    }
}

/// Solves a·x = b with partial pivoting, checking the residual.
pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let x = a.partial_piv_lu().solve(b);
    let res = (a * &x - b).norm_l2();
    let scale = a.norm_l2() * x.norm_l2() + b.norm_l2();
    if !(res <= 1e-9 * scale) {
        return Err(Error::Numerical(format!("dense solve residual {res:.3e} (scale {scale:.3e})")));
    }
    Ok(x)
}

pub fn matpow(p: MatRef<'_, c64>, j: usize) -> Mat<c64> {
    let mut out = Mat::<c64>::identity(p.nrows(), p.ncols());
    for _ in 0..j {
        out = p * &out;
    }
    out
}

pub fn spectral_radius(m: MatRef<'_, c64>) -> Result<f64> {
    let ev = m
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalue computation failed: {e:?}")))?;
    Ok(ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn to_col(v: &[c64]) -> Mat<c64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn from_col(m: MatRef<'_, c64>) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
