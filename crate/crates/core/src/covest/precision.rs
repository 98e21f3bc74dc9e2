use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use super::linalg::min_eigenvalue;
use super::moments::symmetrize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub precision: DMatrix<f64>,
    /// Ridge added to the diagonal before inversion, if any.
    pub jitter: Option<f64>,
}

/// Invert a (thresholded) covariance. If its smallest eigenvalue is below
/// `eps0 / 2`, the diagonal is raised so that it equals `eps0 / 2`.
pub fn precision_estimate(sigma: &DMatrix<f64>, eps0: f64) -> Result<PrecisionEstimate> {
    if !(eps0 > 0.0) {
        return Err(Error::param("eps0", "must be positive"));
    }
    let lmin = min_eigenvalue(sigma)?;
    let d = sigma.nrows();
    let (a, jitter) = if lmin < eps0 / 2.0 {
        let j = eps0 / 2.0 - lmin;
        (sigma + DMatrix::identity(d, d) * j, Some(j))
    } else {
        (sigma.clone(), None)
    };
    let chol = Cholesky::new(a).ok_or(Error::NotPositiveDefinite)?;
    let mut precision = chol.inverse();
    symmetrize(&mut precision);
    Ok(PrecisionEstimate { precision, jitter })
}
