//! Dense feed-forward network `f_j(x) = s_j(W_j f_{j-1}(x) + b_j)` with a
//! linear output `y = beta' f_H(x) + b_out`, and its reverse-mode gradient.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    /// `ln(1 + e^{k x}) / k`.
    Softplus { k: f64 },
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Softplus { k } => {
                let kx = k * x;
                // Stable log(1 + e^kx).
                (kx.max(0.0) + (-kx.abs()).exp().ln_1p()) / k
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Softplus { k } => sigmoid(k * x),
        }
    }

    /// Global Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    pub fn vanishes_at_zero(&self) -> bool {
        matches!(self, Activation::Relu | Activation::Tanh)
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, Activation::Relu)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Activation::Softplus { k } if !(k > 0.0 && k.is_finite()) => {
                Err(Error::Activation(format!("softplus k = {k} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelJson", try_from = "ModelJson")]
pub struct MlpModel {
    pub weights: Vec<DMatrix<f64>>,
    pub activations: Vec<Activation>,
    /// Hidden-layer biases; `None` for the bias-free form.
    pub biases: Option<Vec<DVector<f64>>>,
    pub beta: DVector<f64>,
    pub out_bias: f64,
}

/// Serialized form: shapes `(rows, cols)`, row-major weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelJson {
    shapes: Vec<(usize, usize)>,
    activations: Vec<Activation>,
    weights: Vec<Vec<f64>>,
    beta: Vec<f64>,
    biases: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    out_bias: f64,
}

impl From<MlpModel> for ModelJson {
    fn from(m: MlpModel) -> Self {
        Self {
            shapes: m.weights.iter().map(|w| w.shape()).collect(),
            activations: m.activations,
            weights: m
                .weights
                .iter()
                .map(|w| w.transpose().as_slice().to_vec())
                .collect(),
            beta: m.beta.as_slice().to_vec(),
            biases: m.biases.map(|bs| bs.iter().map(|b| b.as_slice().to_vec()).collect()),
            out_bias: m.out_bias,
        }
    }
}

impl TryFrom<ModelJson> for MlpModel {
    type Error = Error;

    fn try_from(j: ModelJson) -> Result<Self> {
        if j.shapes.len() != j.weights.len() {
            return Err(Error::param("weights", "one weight matrix per shape required"));
        }
        let weights = j
            .shapes
            .iter()
            .zip(&j.weights)
            .map(|(&(r, c), w)| {
                if w.len() != r * c {
                    return Err(Error::DimensionMismatch {
                        expected: r * c,
                        got: w.len(),
                    });
                }
                Ok(DMatrix::from_row_slice(r, c, w))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = MlpModel {
            weights,
            activations: j.activations,
            biases: j
                .biases
                .map(|bs| bs.into_iter().map(DVector::from_vec).collect()),
            beta: DVector::from_vec(j.beta),
            out_bias: j.out_bias,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `a[0] = x`, `a[j] = f_j(x)`.
    pub a: Vec<DVector<f64>>,
    /// Pre-activations of layers `1..=H`.
    pub pre: Vec<DVector<f64>>,
    pub y: f64,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden: &[usize], activation: Activation, biases: bool, rng: &mut Rng) -> Result<Self> {
        if input == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::param("hidden", "need input > 0 and nonempty positive widths"));
        }
        let mut glorot = |r: usize, c: usize| {
            let lim = (6.0 / (r + c) as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-lim..lim))
        };
        let mut weights = Vec::with_capacity(hidden.len());
        let mut prev = input;
        for &w in hidden {
            weights.push(glorot(w, prev));
            prev = w;
        }
        let beta = glorot(1, prev).row(0).transpose();
        let model = Self {
            biases: biases.then(|| hidden.iter().map(|&w| DVector::zeros(w)).collect()),
            weights,
            activations: vec![activation; hidden.len()],
            beta,
            out_bias: 0.0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.weights.len();
        if h == 0 || self.activations.len() != h {
            return Err(Error::param("activations", "one activation per hidden layer"));
        }
        for a in &self.activations {
            a.validate()?;
        }
        for j in 1..h {
            if self.weights[j].ncols() != self.weights[j - 1].nrows() {
                return Err(Error::DimensionMismatch {
                    expected: self.weights[j - 1].nrows(),
                    got: self.weights[j].ncols(),
                });
            }
        }
        if self.beta.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim(),
                got: self.beta.len(),
            });
        }
        if let Some(bs) = &self.biases {
            if bs.len() != h || bs.iter().zip(&self.weights).any(|(b, w)| b.len() != w.nrows()) {
                return Err(Error::param("biases", "shape does not match weights"));
            }
        }
        if !self.params().iter().all(|x| x.is_finite()) {
            return Err(Error::param("weights", "non-finite parameter"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.nrows())
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn has_biases(&self) -> bool {
        self.biases.is_some()
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut a = vec![DVector::from_column_slice(x)];
        let mut pre = Vec::with_capacity(self.depth());
        for (j, (w, act)) in self.weights.iter().zip(&self.activations).enumerate() {
            let mut z = w * &a[j];
            if let Some(bs) = &self.biases {
                z += &bs[j];
            }
            a.push(z.map(|v| act.apply(v)));
            pre.push(z);
        }
        let y = self.beta.dot(&a[self.depth()]) + self.out_bias;
        if !y.is_finite() || a.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::param("forward", "non-finite intermediate value"));
        }
        Ok(ForwardTrace { a, pre, y })
    }

    /// `(y, f_H(x))`.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut t = self.forward_trace(x)?;
        let f = t.a.pop().expect("at least one layer");
        Ok((t.y, f.as_slice().to_vec()))
    }

    /// Network output with hidden weights replaced by `hidden`.
    pub fn with_hidden_weights(&self, hidden: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = Self {
            weights: hidden,
            ..self.clone()
        };
        m.validate()?;
        Ok(m)
    }

    pub fn num_params(&self) -> usize {
        let w: usize = self.weights.iter().map(|w| w.len()).sum();
        let b: usize = self.biases.as_ref().map_or(0, |bs| bs.iter().map(|b| b.len()).sum::<usize>() + 1);
        w + b + self.beta.len()
    }

    /// Flat parameter vector: per layer `W_j` (column-major) then `b_j`,
    /// then `beta`, then the output bias when biases are present.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for (j, w) in self.weights.iter().enumerate() {
            p.extend_from_slice(w.as_slice());
            if let Some(bs) = &self.biases {
                p.extend_from_slice(bs[j].as_slice());
            }
        }
        p.extend_from_slice(self.beta.as_slice());
        if self.biases.is_some() {
            p.push(self.out_bias);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: p.len(),
            });
        }
        let mut i = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&p[i..i + dst.len()]);
            i += dst.len();
        };
        for j in 0..self.weights.len() {
            take(self.weights[j].as_mut_slice());
            if let Some(bs) = &mut self.biases {
                take(bs[j].as_mut_slice());
            }
        }
        take(self.beta.as_mut_slice());
        if self.biases.is_some() {
            let mut ob = [0.0];
            take(&mut ob);
            self.out_bias = ob[0];
        }
        Ok(())
    }

    /// Add `scale * d(y)/d(params)` at `x` into `grad` (flat layout of
    /// [`MlpModel::params`]). Returns `y`.
    pub fn accumulate_output_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> Result<f64> {
        let t = self.forward_trace(x)?;
        let h = self.depth();
        // Offsets of each layer's block in the flat vector.
        let mut offsets = Vec::with_capacity(h + 1);
        let mut off = 0;
        for (j, w) in self.weights.iter().enumerate() {
            offsets.push(off);
            off += w.len();
            if let Some(bs) = &self.biases {
                off += bs[j].len();
            }
        }
        let beta_off = off;
        for (g, a) in grad[beta_off..beta_off + self.beta.len()].iter_mut().zip(t.a[h].iter()) {
            *g += scale * a;
        }
        if self.biases.is_some() {
            grad[beta_off + self.beta.len()] += scale;
        }
        let mut delta: DVector<f64> = self.beta.scale(scale);
        for j in (0..h).rev() {
            let act = self.activations[j];
            delta.zip_apply(&t.pre[j], |d, z| *d *= act.derivative(z));
            let w = &self.weights[j];
            let (rows, cols) = w.shape();
            let block = &mut grad[offsets[j]..];
            // Column-major: entry (r, c) at c * rows + r.
            for c in 0..cols {
                let ac = t.a[j][c];
                for r in 0..rows {
                    block[c * rows + r] += delta[r] * ac;
                }
            }
            if self.biases.is_some() {
                for r in 0..rows {
                    block[rows * cols + r] += delta[r];
                }
            }
            if j > 0 {
                delta = w.tr_mul(&delta);
            }
        }
        Ok(t.y)
    }

    /// Mean squared error over `(x_i, z_i)`.
    pub fn mse(&self, xs: &[f64], zs: &[f64]) -> Result<f64> {
        let d = self.input_dim();
        let mut s = 0.0;
        for (x, z) in xs.chunks_exact(d).zip(zs) {
            let (y, _) = self.forward(x)?;
            s += (z - y).powi(2);
        }
        Ok(s / zs.len() as f64)
    }

    /// Gradient of the mean squared error over the given rows.
    pub fn mse_gradient(&self, xs: &[f64], zs: &[f64], rows: &[usize]) -> Result<(f64, Vec<f64>)> {
        let d = self.input_dim();
        let n = rows.len() as f64;
        let mut grad = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        for &i in rows {
            let x = &xs[i * d..(i + 1) * d];
            let (y, _) = self.forward(x)?;
            let r = zs[i] - y;
            loss += r * r / n;
            self.accumulate_output_gradient(x, -2.0 * r / n, &mut grad)?;
        }
        Ok((loss, grad))
    }
}
