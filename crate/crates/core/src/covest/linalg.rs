use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 5_000;

fn check_symmetric_input(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::param("matrix", "must be square"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("matrix", "non-finite entries"));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric_input(a)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(a)?.first().copied().unwrap_or(0.0))
}

/// Spectral norm of a symmetric matrix by power iteration, stopping when
/// the Rayleigh residual `|Ax - mu x|` drops below `1e-10 |mu|`. Falls back
/// to a full eigendecomposition if that does not happen within the
/// iteration cap (e.g. when `lambda` and `-lambda` are both dominant).
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    check_symmetric_input(a)?;
    let d = a.nrows();
    if d == 0 || a.amax() == 0.0 {
        return Ok(0.0);
    }
    let mut x = DVector::from_fn(d, |j, _| 1.0 + 0.1 * ((j + 1) as f64).sin());
    x.normalize_mut();
    for _ in 0..POWER_MAX_ITER {
        let y = a * &x;
        let mu = x.dot(&y);
        let resid = (&y - &x * mu).norm();
        if resid <= POWER_TOL * mu.abs() {
            return Ok(mu.abs());
        }
        let n = y.norm();
        if n == 0.0 {
            break;
        }
        x = y / n;
    }
    Ok(symmetric_eigenvalues(a)?
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs())))
}

/// Largest absolute entry.
pub fn sup_norm(a: &DMatrix<f64>) -> f64 {
    a.amax()
}
