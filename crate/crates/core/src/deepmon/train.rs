//! Mini-batch Adam on the mean squared error.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::MlpModel;
use crate::error::{Error, Result};
use crate::rng::{self, label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    /// Fraction of the window, taken from its end, held out for validation.
    pub val_split: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 32,
            val_split: 0.2,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.val_split) {
            return Err(Error::param("val_split", format!("{} not in [0, 1)", self.val_split)));
        }
        if self.batch == 0 {
            return Err(Error::param("batch", "must be at least 1"));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::param("adam", "need lr > 0, betas in [0, 1), eps > 0"));
        }
        Ok(())
    }

    /// Number of training rows out of `n` after the validation split.
    pub fn train_rows(&self, n: usize) -> usize {
        n - (self.val_split * n as f64).floor() as usize
    }
}

/// Losses after each epoch, on the full training and validation parts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub initial_train: f64,
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = self.cfg;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= c.lr * mh / (vh.sqrt() + c.eps);
        }
    }
}

/// Train on row-major inputs `xs` (`n x input_dim`) and responses `zs`.
pub fn train(model: &MlpModel, xs: &[f64], zs: &[f64], cfg: &TrainConfig) -> Result<(MlpModel, LossHistory)> {
    cfg.validate()?;
    let d = model.input_dim();
    let n = zs.len();
    if xs.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            got: xs.len(),
        });
    }
    let n_train = cfg.train_rows(n);
    if n_train < cfg.batch {
        return Err(Error::InsufficientData {
            needed: cfg.batch,
            available: n_train,
        });
    }
    let (xt, zt) = (&xs[..n_train * d], &zs[..n_train]);
    let (xv, zv) = (&xs[n_train * d..], &zs[n_train..]);
    let mut model = model.clone();
    let mut history = LossHistory {
        initial_train: model.mse(xt, zt)?,
        ..Default::default()
    };
    let mut params = model.params();
    let mut adam = Adam::new(cfg.adam, params.len());
    let mut rng = rng::derive(cfg.seed, &[label::TRAIN]);
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            let (_, grad) = model.mse_gradient(xs, zs, batch)?;
            adam.step(&mut params, &grad);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            model.set_params(&params)?;
        }
        let lt = model.mse(xt, zt).map_err(|_| Error::Divergence { epoch })?;
        if !lt.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.train.push(lt);
        if !zv.is_empty() {
            history.val.push(model.mse(xv, zv)?);
        }
    }
    Ok((model, history))
}
