//! Lipschitz bound of the hidden-feature map in the hidden weights.
//!
//! For a bias-free network with `s(0) = 0`, swapping the layers one at a time
//! gives
//! `||f_H(x; W~) - f_H(x; W)|| <= sum_k L_k ||W~_k - W_k||_op ||x||` with
//! `L_k = prod_{i<k} r_i ||W~_i||_op * r_k * prod_{i>k} r_i ||W_i||_op`,
//! hence the check `lhs <= max_k L_k sqrt(H) ||x|| ||W~ - W||_F`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mlp::MlpModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `L_k` for each layer.
    pub layer_constants: Vec<f64>,
    pub holds: bool,
}

/// Largest singular value.
pub fn operator_norm(w: &DMatrix<f64>) -> f64 {
    w.singular_values().max()
}

fn frobenius_distance(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub fn lipschitz_bound_check(model: &MlpModel, theta_tilde: &[DMatrix<f64>], x: &[f64]) -> Result<LipschitzCheck> {
    if model.has_biases() {
        return Err(Error::HasBiases);
    }
    if let Some(a) = model.activations.iter().find(|a| !a.vanishes_at_zero()) {
        return Err(Error::Activation(format!("{a:?} does not vanish at zero")));
    }
    let h = model.depth();
    if theta_tilde.len() != h {
        return Err(Error::DimensionMismatch {
            expected: h,
            got: theta_tilde.len(),
        });
    }
    let perturbed = model.with_hidden_weights(theta_tilde.to_vec())?;
    let (_, f) = model.forward(x)?;
    let (_, ft) = perturbed.forward(x)?;
    let lhs = f.iter().zip(&ft).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();

    let rho: Vec<f64> = model.activations.iter().map(|a| a.lipschitz()).collect();
    let norms: Vec<f64> = model.weights.iter().map(operator_norm).collect();
    let norms_t: Vec<f64> = theta_tilde.iter().map(operator_norm).collect();
    let layer_constants: Vec<f64> = (0..h)
        .map(|k| {
            let before: f64 = (0..k).map(|i| rho[i] * norms_t[i]).product();
            let after: f64 = (k + 1..h).map(|i| rho[i] * norms[i]).product();
            before * rho[k] * after
        })
        .collect();
    let l_h = layer_constants.iter().cloned().fold(0.0, f64::max);
    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rhs = l_h * (h as f64).sqrt() * x_norm * frobenius_distance(theta_tilde, &model.weights);
    Ok(LipschitzCheck {
        lhs,
        rhs,
        layer_constants,
        holds: lhs <= rhs + 1e-9,
    })
}
