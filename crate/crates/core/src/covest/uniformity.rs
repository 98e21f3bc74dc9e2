use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linalg::{min_eigenvalue, spectral_norm, sup_norm};
use super::threshold::{threshold_all, ThresholdKind};
use crate::error::{Error, Result};

/// Parameters of the class of covariance matrices with variances at most
/// `M`, row-wise `l_r` sparsity `sum_j |s_ij|^r <= s0`, and smallest
/// eigenvalue at least `eps0`. `eps0 = None` drops the eigenvalue condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformityClassParams {
    pub r: f64,
    pub s0: f64,
    pub max_var: f64,
    pub eps0: Option<f64>,
}

impl UniformityClassParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.r) {
            return Err(Error::param("r", format!("{} not in [0, 1)", self.r)));
        }
        if !(self.s0 > 0.0) || !(self.max_var > 0.0) {
            return Err(Error::param("s0/M", "must be positive"));
        }
        if let Some(e) = self.eps0 {
            if !(e > 0.0) {
                return Err(Error::param("eps0", "must be positive"));
            }
        }
        Ok(())
    }
}

/// `|x|^r` with the convention `0^0 = 0`, so that `r = 0` counts nonzeros.
pub fn lr_term(x: f64, r: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub holds: bool,
    /// Rows (0-based) whose variance exceeds `M`.
    pub variance_violations: Vec<usize>,
    /// Rows (0-based) and their `l_r` row sums exceeding `s0`.
    pub sparsity_violations: Vec<(usize, f64)>,
    pub min_eigenvalue: Option<f64>,
    pub eigenvalue_violation: bool,
    pub diagnostics: Vec<String>,
}

pub fn membership_check(sigma: &DMatrix<f64>, params: &UniformityClassParams) -> Result<MembershipReport> {
    params.validate()?;
    let d = sigma.nrows();
    let variance_violations: Vec<usize> = (0..d).filter(|&i| sigma[(i, i)] > params.max_var).collect();
    let sparsity_violations: Vec<(usize, f64)> = (0..d)
        .map(|i| (i, (0..d).map(|j| lr_term(sigma[(i, j)], params.r)).sum::<f64>()))
        .filter(|&(_, s)| s > params.s0 * (1.0 + 1e-12))
        .collect();
    let (min_ev, eig_bad) = match params.eps0 {
        Some(eps0) => {
            let l = min_eigenvalue(sigma)?;
            (Some(l), l < eps0)
        }
        None => (None, false),
    };
    let mut diagnostics = Vec::new();
    for &i in &variance_violations {
        diagnostics.push(format!("row {i}: variance {} exceeds M = {}", sigma[(i, i)], params.max_var));
    }
    for &(i, s) in &sparsity_violations {
        diagnostics.push(format!("row {i}: l_r row sum {s} exceeds s0 = {}", params.s0));
    }
    if eig_bad {
        diagnostics.push(format!(
            "smallest eigenvalue {} below eps0 = {}",
            min_ev.unwrap_or(f64::NAN),
            params.eps0.unwrap_or(f64::NAN)
        ));
    }
    Ok(MembershipReport {
        holds: variance_violations.is_empty() && sparsity_violations.is_empty() && !eig_bad,
        variance_violations,
        sparsity_violations,
        min_eigenvalue: min_ev,
        eigenvalue_violation: eig_bad,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluate both sides of the operator-norm bound for thresholding a
/// perturbation `gamma` of an in-class `sigma`:
///
/// `|S_t G - S|_op <= 2 t^{1-r} s0 + |G - S|_inf (N + s0/(g t)^r + 2 s0/t^r)`
///
/// where `N` counts entries (over the whole matrix) with
/// `|G_ij - S_ij| > (1 - g) t` and `g = gamma_split`. The operator is
/// applied to every entry, diagonal included.
pub fn threshold_bound_check(
    gamma: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    params: &UniformityClassParams,
    kind: ThresholdKind,
    t: f64,
    gamma_split: f64,
) -> Result<BoundCheck> {
    if !(t > 0.0) {
        return Err(Error::param("t", "must be positive"));
    }
    if !(gamma_split > 0.0 && gamma_split < 1.0) {
        return Err(Error::param("gamma_split", "must lie in (0, 1)"));
    }
    if gamma.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            got: gamma.nrows(),
        });
    }
    let report = membership_check(sigma, params)?;
    if !report.holds {
        return Err(Error::Membership(report.diagnostics.join("; ")));
    }
    let lhs = spectral_norm(&(threshold_all(gamma, kind, t) - sigma))?;
    let diff = gamma - sigma;
    let dinf = sup_norm(&diff);
    let r = params.r;
    let s0 = params.s0;
    let count = diff.iter().filter(|x| x.abs() > (1.0 - gamma_split) * t).count() as f64;
    let rhs = 2.0 * t.powf(1.0 - r) * s0
        + dinf * (count + s0 / (gamma_split * t).powf(r) + 2.0 * s0 / t.powf(r));
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
    })
}
