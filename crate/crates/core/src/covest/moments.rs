use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample mean, second-moment matrix and covariance of a training block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub mu_hat: DVector<f64>,
    pub m_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub m: usize,
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let d = a.nrows();
    for i in 0..d {
        for j in i + 1..d {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

/// `data` is `m x d`, one observation per row.
pub fn estimate_moments(data: &DMatrix<f64>) -> Result<MomentEstimates> {
    let m = data.nrows();
    if m < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: m,
        });
    }
    let mf = m as f64;
    let mu_hat: DVector<f64> = data.row_mean().transpose();
    let mut m_hat = data.tr_mul(data) / mf;
    let centred = DMatrix::from_fn(m, data.ncols(), |i, j| data[(i, j)] - mu_hat[j]);
    let mut sigma_hat = centred.tr_mul(&centred) / mf;
    symmetrize(&mut m_hat);
    symmetrize(&mut sigma_hat);
    Ok(MomentEstimates {
        mu_hat,
        m_hat,
        sigma_hat,
        m,
    })
}
