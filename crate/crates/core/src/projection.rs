//! Projection vectors and the portfolio constructions that produce them.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optional sparsity diagnostics of an external estimator (level `s` and
/// rate factor `r_d`). Carried along, never verified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityMeta {
    pub s: usize,
    pub r_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionVector {
    pub entries: Vec<f64>,
    /// 0-based active set; entries outside it are exactly zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<SparsityMeta>,
}

impl ProjectionVector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self {
            entries,
            support: None,
            meta: None,
        }
    }

    /// The `j`-th unit vector (0-based).
    pub fn unit(d: usize, j: usize) -> Self {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        Self::new(e)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, y: &[f64]) -> f64 {
        match &self.support {
            Some(a) => a.iter().map(|&j| self.entries[j] * y[j]).sum(),
            None => self.entries.iter().zip(y).map(|(v, y)| v * y).sum(),
        }
    }

    pub fn l1(&self) -> f64 {
        self.entries.iter().map(|x| x.abs()).sum()
    }

    pub fn l2(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Entries outside the declared support are exactly zero.
    pub fn support_consistent(&self) -> bool {
        match &self.support {
            None => true,
            Some(a) => self
                .entries
                .iter()
                .enumerate()
                .all(|(j, &x)| x == 0.0 || a.contains(&j)),
        }
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.entries)
    }
}

pub fn gross_exposure(v: &ProjectionVector) -> f64 {
    v.l1()
}

/// Zero every entry outside `support` (0-based indices).
pub fn restrict_support(v: &ProjectionVector, support: &[usize]) -> Result<ProjectionVector> {
    if support.is_empty() {
        return Err(Error::param("support", "must be nonempty"));
    }
    if let Some(&j) = support.iter().find(|&&j| j >= v.dim()) {
        return Err(Error::param("support", format!("index {j} out of range")));
    }
    let mut a = support.to_vec();
    a.sort_unstable();
    a.dedup();
    let entries = (0..v.dim())
        .map(|j| if a.binary_search(&j).is_ok() { v.entries[j] } else { 0.0 })
        .collect();
    Ok(ProjectionVector {
        entries,
        support: Some(a),
        meta: v.meta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PortfolioKind {
    MinVariance,
    TargetReturn { mu0: f64 },
    /// `w = P mu / (1' P mu)` with `P` the precision matrix.
    Tangency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    #[serde(flatten)]
    pub kind: PortfolioKind,
    /// Reported against, never enforced.
    pub exposure_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub weights: Vec<f64>,
    pub gross_exposure: f64,
    pub kind: PortfolioKind,
    /// `|w'1 - 1|`, plus `|w'mu - mu0|` for target-return portfolios.
    pub constraints_residuals: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exceeds_exposure_cap: Option<bool>,
}

impl Portfolio {
    pub fn projection(&self) -> ProjectionVector {
        ProjectionVector::new(self.weights.clone())
    }
}

fn check_square(p: &DMatrix<f64>) -> Result<usize> {
    if !p.is_square() || p.nrows() == 0 {
        return Err(Error::param("precision", "must be a nonempty square matrix"));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("precision", "non-finite entries"));
    }
    Ok(p.nrows())
}

/// `w = P 1 / (1' P 1)`, renormalised so that the weights sum to one.
pub fn min_variance_portfolio(precision: &DMatrix<f64>) -> Result<ProjectionVector> {
    let d = check_square(precision)?;
    let p1 = precision * DVector::from_element(d, 1.0);
    let a = p1.sum();
    if !(a > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut w = p1 / a;
    let s = w.sum();
    w /= s;
    Ok(ProjectionVector::new(w.as_slice().to_vec()))
}

/// The unique `w = a P 1 + b P mu` with `w'1 = 1` and `w'mu = mu0`.
pub fn target_return_portfolio(
    precision: &DMatrix<f64>,
    mu: &[f64],
    mu0: f64,
) -> Result<ProjectionVector> {
    let d = check_square(precision)?;
    if mu.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mu.len(),
        });
    }
    let ones = DVector::from_element(d, 1.0);
    let mu = DVector::from_column_slice(mu);
    let p1 = precision * &ones;
    let pmu = precision * &mu;
    let a = ones.dot(&p1);
    let b = ones.dot(&pmu);
    let c = mu.dot(&pmu);
    let det = a * c - b * b;
    if !(det > 1e-12 * (a * c).abs()) {
        return Err(Error::DegenerateConstraint);
    }
    let gram = Matrix2::new(a, b, b, c);
    let gram_inv = gram.try_inverse().ok_or(Error::DegenerateConstraint)?;
    let combine = |coef: Vector2<f64>| &p1 * coef[0] + &pmu * coef[1];
    let mut w = combine(gram_inv * Vector2::new(1.0, mu0));
    // One step of iterative refinement on the two linear constraints.
    let resid = Vector2::new(1.0 - w.sum(), mu0 - w.dot(&mu));
    w += combine(gram_inv * resid);
    Ok(ProjectionVector::new(w.as_slice().to_vec()))
}

pub fn tangency_portfolio(precision: &DMatrix<f64>, mu: &[f64]) -> Result<ProjectionVector> {
    let d = check_square(precision)?;
    if mu.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mu.len(),
        });
    }
    let pmu = precision * DVector::from_column_slice(mu);
    let s = pmu.sum();
    if s.abs() < 1e-300 {
        return Err(Error::DegenerateConstraint);
    }
    let mut w = pmu / s;
    let s = w.sum();
    w /= s;
    Ok(ProjectionVector::new(w.as_slice().to_vec()))
}

/// Evaluate a registered plug-in form `v = f(precision, mu)` and report
/// the result with its constraint residuals.
pub fn build_portfolio(
    spec: &PortfolioSpec,
    precision: &DMatrix<f64>,
    mu: &[f64],
) -> Result<Portfolio> {
    let w = match spec.kind {
        PortfolioKind::MinVariance => min_variance_portfolio(precision)?,
        PortfolioKind::TargetReturn { mu0 } => target_return_portfolio(precision, mu, mu0)?,
        PortfolioKind::Tangency => tangency_portfolio(precision, mu)?,
    };
    let mut residuals = vec![(w.entries.iter().sum::<f64>() - 1.0).abs()];
    if let PortfolioKind::TargetReturn { mu0 } = spec.kind {
        residuals.push((w.dot(mu) - mu0).abs());
    }
    let gross = gross_exposure(&w);
    Ok(Portfolio {
        gross_exposure: gross,
        weights: w.entries,
        kind: spec.kind,
        constraints_residuals: residuals,
        exceeds_exposure_cap: spec.exposure_cap.map(|cap| gross > cap),
    })
}
