//! Long-run variance of the projected-squares series.
//!
//! The estimator is the empirical variance of the `m - b + 1` overlapping
//! scaled block sums `S_j(b) = b^{-1/2} (x_{j+1} + ... + x_{j+b})`,
//! `j = 0..=m-b`, centred at their mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrvConfig {
    /// Bandwidth exponent: `b = floor(m^rho)`.
    pub rho: f64,
    /// Fixed bandwidth, overriding `rho`.
    pub b_override: Option<usize>,
}

impl Default for LrvConfig {
    fn default() -> Self {
        Self {
            rho: 0.4,
            b_override: None,
        }
    }
}

impl LrvConfig {
    pub fn with_bandwidth(b: usize) -> Self {
        Self {
            b_override: Some(b),
            ..Self::default()
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 0.5) {
            return Err(Error::param("rho", format!("{} not in (0, 1/2)", self.rho)));
        }
        if let Some(b) = self.b_override {
            if b == 0 || b >= m {
                return Err(Error::param("b", format!("{b} not in [1, m) with m = {m}")));
            }
        }
        Ok(())
    }

    /// Bandwidth actually used for a training sample of length `m`, clamped
    /// to `[2, m/2]`.
    pub fn bandwidth(&self, m: usize) -> usize {
        let raw = self
            .b_override
            .unwrap_or_else(|| (m as f64).powf(self.rho).floor() as usize);
        raw.clamp(2, (m / 2).max(2))
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Scaled block sums computed with a sliding window.
pub fn block_sums(xs: &[f64], b: usize) -> Vec<f64> {
    let m = xs.len();
    if b == 0 || b > m {
        return Vec::new();
    }
    let scale = (b as f64).sqrt().recip();
    let mut acc = CompensatedSum::default();
    for &x in &xs[..b] {
        acc.add(x);
    }
    let mut out = Vec::with_capacity(m - b + 1);
    out.push(acc.value() * scale);
    for j in 1..=m - b {
        acc.add(xs[j + b - 1]);
        acc.add(-xs[j - 1]);
        out.push(acc.value() * scale);
    }
    out
}

/// Estimate `sigma^2_{0,infty}` from the training-sample projected squares.
pub fn lrv_estimate(projected_squares: &[f64], cfg: &LrvConfig) -> Result<f64> {
    let m = projected_squares.len();
    if m < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            available: m,
        });
    }
    cfg.validate(m)?;
    if let Some(i) = projected_squares.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { time: i + 1 });
    }
    let b = cfg.bandwidth(m);
    let sums = block_sums(projected_squares, b);
    let n = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / n;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let scale = sums.iter().fold(mean.abs(), |a, s| a.max(s.abs()));
    if !(var.sqrt() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateLongRunVariance);
    }
    Ok(var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_is_degenerate() {
        let xs = vec![1.7; 200];
        assert!(matches!(
            lrv_estimate(&xs, &LrvConfig::default()),
            Err(Error::DegenerateLongRunVariance)
        ));
    }

    #[test]
    fn alternating_input_with_even_bandwidth_is_degenerate() {
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let sums = block_sums(&xs, 2);
        assert!(sums.iter().all(|&s| s == 2.0 / 2f64.sqrt()));
        assert!(matches!(
            lrv_estimate(&xs, &LrvConfig::with_bandwidth(2)),
            Err(Error::DegenerateLongRunVariance)
        ));
    }

    #[test]
    fn bandwidth_is_clamped() {
        let cfg = LrvConfig::default();
        assert_eq!(cfg.bandwidth(2000), 20);
        assert_eq!(cfg.bandwidth(4), 2);
        assert_eq!(LrvConfig::with_bandwidth(90).bandwidth(100), 50);
    }

    #[test]
    fn too_short_or_bad_config_rejected() {
        assert!(lrv_estimate(&[1.0, 2.0, 3.0], &LrvConfig::default()).is_err());
        let bad = LrvConfig {
            rho: 0.5,
            b_override: None,
        };
        assert!(lrv_estimate(&[1.0, 2.0, 3.0, 5.0], &bad).is_err());
        assert!(lrv_estimate(&[1.0, 2.0, 3.0, 5.0], &LrvConfig::with_bandwidth(4)).is_err());
    }
}
