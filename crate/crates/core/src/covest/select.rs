use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::linalg::spectral_norm;
use super::moments::estimate_moments;
use super::threshold::{apply_threshold, ThresholdKind};
use crate::error::{Error, Result};
use crate::rng;

/// Random splits used when no count is given.
pub const DEFAULT_SPLITS: usize = 20;

/// Default candidate grid for the threshold constant.
pub const C_TH_GRID: [f64; 10] = [0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];

/// Choose `c_th` for `t = c_th d^{4/q} / sqrt(m)` by repeated random 2-fold
/// splits of the rows of `data`: threshold the covariance of one half and
/// score it by operator-norm distance to the covariance of the other.
pub fn select_c_th(
    data: &DMatrix<f64>,
    kind: ThresholdKind,
    q: f64,
    candidates: &[f64],
    splits: usize,
    seed: u64,
) -> Result<f64> {
    let (m, d) = data.shape();
    if m < 8 {
        return Err(Error::InsufficientData {
            needed: 8,
            available: m,
        });
    }
    if candidates.is_empty() || splits == 0 {
        return Err(Error::param("candidates", "need at least one candidate and split"));
    }
    let half = m / 2;
    let rate = (d as f64).powf(4.0 / q) / (half as f64).sqrt();
    let mut loss = vec![0.0; candidates.len()];
    let mut idx: Vec<usize> = (0..m).collect();
    for s in 0..splits {
        idx.shuffle(&mut rng::derive(seed, &[rng::label::SPLIT, s as u64]));
        let pick = |rows: &[usize]| DMatrix::from_fn(rows.len(), d, |i, j| data[(rows[i], j)]);
        let a = estimate_moments(&pick(&idx[..half]))?.sigma_hat;
        let b = estimate_moments(&pick(&idx[half..]))?.sigma_hat;
        for (l, &c) in loss.iter_mut().zip(candidates) {
            *l += spectral_norm(&(apply_threshold(&a, kind, c * rate) - &b))?;
        }
    }
    let best = loss
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| candidates[i])
        .unwrap_or(1.0);
    Ok(best)
}
