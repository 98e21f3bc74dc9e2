use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdKind {
    /// `x 1{|x| >= t}`.
    Hard,
    /// `sign(x) (|x| - t)_+`.
    Lasso,
    /// SCAD thresholding with parameter `a > 2`.
    Scad { a: f64 },
}

impl ThresholdKind {
    pub const SCAD_DEFAULT_A: f64 = 3.7;

    pub fn scad() -> Self {
        ThresholdKind::Scad {
            a: Self::SCAD_DEFAULT_A,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ThresholdKind::Scad { a } if !(*a > 2.0) => {
                Err(Error::param("a", format!("SCAD requires a > 2, got {a}")))
            }
            _ => Ok(()),
        }
    }

    /// Scalar thresholding operator.
    pub fn apply(&self, x: f64, t: f64) -> f64 {
        let ax = x.abs();
        match *self {
            ThresholdKind::Hard => {
                if ax >= t {
                    x
                } else {
                    0.0
                }
            }
            ThresholdKind::Lasso => soft(x, t),
            ThresholdKind::Scad { a } => {
                if ax <= 2.0 * t {
                    soft(x, t)
                } else if ax <= a * t {
                    ((a - 1.0) * x - x.signum() * a * t) / (a - 2.0)
                } else {
                    x
                }
            }
        }
    }
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdValue {
    Fixed { t: f64 },
    /// `t = c_th d^{4/q} / sqrt(m)`.
    PaperRule { c_th: f64, q: f64 },
}

impl ThresholdValue {
    pub fn paper_default() -> Self {
        ThresholdValue::PaperRule { c_th: 1.0, q: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub kind: ThresholdKind,
    pub value: ThresholdValue,
}

impl ThresholdRule {
    pub fn new(kind: ThresholdKind, value: ThresholdValue) -> Self {
        Self { kind, value }
    }

    /// Threshold for dimension `d` and sample size `m`.
    pub fn resolve(&self, d: usize, m: usize) -> Result<f64> {
        self.kind.validate()?;
        let t = match self.value {
            ThresholdValue::Fixed { t } => t,
            ThresholdValue::PaperRule { c_th, q } => {
                if !(q > 4.0) {
                    return Err(Error::param("q", format!("must exceed 4, got {q}")));
                }
                if m == 0 {
                    return Err(Error::param("m", "must be positive"));
                }
                c_th * (d as f64).powf(4.0 / q) / (m as f64).sqrt()
            }
        };
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::param("t", format!("threshold {t} must be finite and >= 0")));
        }
        Ok(t)
    }
}

/// Apply the operator to every entry, including the diagonal.
pub fn threshold_all(gamma: &DMatrix<f64>, kind: ThresholdKind, t: f64) -> DMatrix<f64> {
    gamma.map(|x| kind.apply(x, t))
}

/// Threshold the off-diagonal entries of a symmetric matrix; the diagonal
/// is kept so that variances stay positive.
pub fn apply_threshold(sigma: &DMatrix<f64>, kind: ThresholdKind, t: f64) -> DMatrix<f64> {
    let d = sigma.nrows();
    let mut out = sigma.clone();
    for i in 0..d {
        for j in i + 1..d {
            let s = kind.apply(sigma[(i, j)], t);
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// [`apply_threshold`] with the threshold resolved from `rule` for a sample
/// of size `m`.
pub fn apply_threshold_rule(
    sigma: &DMatrix<f64>,
    rule: &ThresholdRule,
    m: usize,
) -> Result<DMatrix<f64>> {
    let t = rule.resolve(sigma.nrows(), m)?;
    Ok(apply_threshold(sigma, rule.kind, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(ThresholdKind::Hard.apply(0.5, 0.6), 0.0);
        assert_eq!(ThresholdKind::Hard.apply(0.7, 0.6), 0.7);
        assert!((ThresholdKind::Lasso.apply(-0.9, 0.6) + 0.3).abs() < 1e-15);
        // SCAD pieces: lasso, interpolation, identity.
        let scad = ThresholdKind::scad();
        assert!((scad.apply(1.5, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(scad.apply(5.0, 1.0), 5.0);
        let mid = scad.apply(3.0, 1.0);
        assert!(mid > 2.0 && mid < 3.0);
        // Continuity at the knots.
        assert!((scad.apply(2.0 + 1e-12, 1.0) - 1.0).abs() < 1e-9);
        assert!((scad.apply(3.7 - 1e-12, 1.0) - 3.7).abs() < 1e-9);
    }

    #[test]
    fn zero_threshold_is_identity() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -0.3, 0.0, -0.3, 1.0, 1e-9, 0.0, 1e-9, 4.0]);
        for kind in [ThresholdKind::Hard, ThresholdKind::Lasso, ThresholdKind::scad()] {
            assert_eq!(apply_threshold(&a, kind, 0.0), a);
            assert_eq!(threshold_all(&a, kind, 0.0), a);
        }
    }

    #[test]
    fn diagonal_is_exempt_and_symmetry_kept() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.2, 0.05]);
        let out = apply_threshold(&a, ThresholdKind::Lasso, 0.5);
        assert_eq!(out, DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.05]));
    }

    #[test]
    fn rate_rule_threshold() {
        let rule = ThresholdRule::new(ThresholdKind::Hard, ThresholdValue::paper_default());
        let t = rule.resolve(16, 400).unwrap();
        // 16^(4/8) / sqrt(400)
        assert!((t - 4.0 / 20.0).abs() < 1e-15);
        let bad = ThresholdRule::new(ThresholdKind::Hard, ThresholdValue::PaperRule { c_th: 1.0, q: 4.0 });
        assert!(bad.resolve(4, 100).is_err());
        let bad_scad = ThresholdRule::new(ThresholdKind::Scad { a: 2.0 }, ThresholdValue::Fixed { t: 0.1 });
        assert!(bad_scad.resolve(4, 100).is_err());
    }
}
