//! Retraining protocol: train on `m` observations, monitor the output-layer
//! projection of the hidden features and the squared prediction errors, and
//! on the first signal discard everything before it and start over.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, MlpModel};
use super::train::{train, LossHistory, TrainConfig};
use crate::detector::{BoundaryConfig, DetectorKind, MonitorState, Step};
use crate::error::{Error, Result};
use crate::lrv::LrvConfig;
use crate::projection::ProjectionVector;
use crate::rng::{self, label};
use crate::stream::ObservationStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloverConfig {
    pub m: usize,
    pub boundary: BoundaryConfig,
    pub c: f64,
    pub lrv: LrvConfig,
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub biases: bool,
    /// `false`: a single episode, both detectors run to the end.
    pub retrain: bool,
    pub seed: u64,
}

impl RolloverConfig {
    /// The `(4, 2)` ReLU architecture with biases.
    pub fn new(m: usize, boundary: BoundaryConfig, c: f64, seed: u64) -> Self {
        Self {
            m,
            boundary,
            c,
            lrv: LrvConfig::default(),
            train: TrainConfig::default(),
            hidden: vec![4, 2],
            activation: Activation::Relu,
            biases: true,
            retrain: true,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSignal {
    /// 1-based stream time.
    pub time: usize,
    pub k: usize,
    pub detector: DetectorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub index: usize,
    /// 1-based inclusive training window.
    pub train_start: usize,
    pub train_end: usize,
    /// First signal of either detector; `None` when the stream ran out.
    pub signal: Option<EpisodeSignal>,
    pub projection_signal: Option<usize>,
    pub residual_signal: Option<usize>,
    pub sigma_projection: f64,
    pub sigma_residual: f64,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    /// Initialisations tried; a fresh one is drawn when the trained
    /// network's monitored series is constant (e.g. all units dead).
    pub init_attempts: usize,
}

/// Per-observation detector output, scaled by `1/sqrt(m)` for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub episode: usize,
    pub k: usize,
    /// `Q/sqrt(m)` of the projection and residual detectors.
    pub d_proj: f64,
    pub d_res: f64,
    /// `Q/(sigma sqrt(m))`, compared against `bound`.
    pub stat_proj: f64,
    pub stat_res: f64,
    /// `c g(m, k)/sqrt(m)`; `None` during warm-up.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episodes: Vec<Episode>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl EpisodeLog {
    pub fn signal_times(&self) -> Vec<usize> {
        self.episodes.iter().filter_map(|e| e.signal.map(|s| s.time)).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.episodes {
            serde_json::to_writer(&mut w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn window(stream: &ObservationStream, start: usize, len: usize) -> (Vec<f64>, &[f64]) {
    let d = stream.dim();
    let xs = stream.as_flat()[start * d..(start + len) * d].to_vec();
    let zs = &stream.response().expect("checked")[start..start + len];
    (xs, zs)
}

fn augmented(f: &[f64]) -> Vec<f64> {
    let mut a = f.to_vec();
    a.push(1.0);
    a
}

pub const MAX_INIT_ATTEMPTS: usize = 5;

type Fitted = (MlpModel, LossHistory, MonitorState, MonitorState);

/// Train one network and freeze both detectors on its training window.
fn fit_episode(dim: usize, xs: &[f64], zs: &[f64], cfg: &RolloverConfig, index: usize, attempt: usize) -> Result<Fitted> {
    let path = [index as u64, attempt as u64];
    let mut init_rng = rng::derive(cfg.seed, &[label::INIT, path[0], path[1]]);
    let model = MlpModel::init(dim, &cfg.hidden, cfg.activation, cfg.biases, &mut init_rng)?;
    let tcfg = TrainConfig {
        seed: rng::child_seed(cfg.seed, &[label::TRAIN, path[0], path[1]]),
        ..cfg.train
    };
    let (model, history) = train(&model, xs, zs, &tcfg)?;

    let beta = ProjectionVector::new(model.beta.as_slice().to_vec());
    let mut v_res = beta.entries.clone();
    v_res.push(model.out_bias);
    let v_res = ProjectionVector::new(v_res);
    let mut proj_vals = Vec::with_capacity(zs.len());
    let mut res_vals = Vec::with_capacity(zs.len());
    for (x, &zi) in xs.chunks_exact(dim).zip(zs) {
        let (y, f) = model.forward(x)?;
        proj_vals.push(beta.dot(&f).powi(2));
        res_vals.push((zi - y).powi(2));
    }
    let proj = MonitorState::from_monitored_values(&proj_vals, beta, &cfg.lrv, cfg.c, cfg.boundary, DetectorKind::Projection)?;
    let res = MonitorState::from_monitored_values(&res_vals, v_res, &cfg.lrv, cfg.c, cfg.boundary, DetectorKind::Residual)?;
    Ok((model, history, proj, res))
}

/// Run the protocol over the whole stream.
pub fn rollover_monitor(stream: &ObservationStream, cfg: &RolloverConfig) -> Result<EpisodeLog> {
    let z = stream.response().ok_or(Error::MissingResponse)?;
    let n = stream.len();
    let m = cfg.m;
    if m > n {
        return Err(Error::InsufficientData { needed: m, available: n });
    }
    cfg.boundary.validate()?;
    let sqrt_m = (m as f64).sqrt();
    let mut log = EpisodeLog::default();
    // 0-based start of the current training window.
    let mut start = 0usize;
    loop {
        let index = log.episodes.len();
        let (xs, zs) = window(stream, start, m);
        let mut attempt = 0;
        let (model, history, proj, res) = loop {
            match fit_episode(stream.dim(), &xs, zs, cfg, index, attempt) {
                Err(Error::DegenerateLongRunVariance) if attempt + 1 < MAX_INIT_ATTEMPTS => attempt += 1,
                other => break other.map_err(|e| e.at(start + 1))?,
            }
        };
        let (mut proj, mut res) = (proj, res);
        let mut episode = Episode {
            index,
            train_start: start + 1,
            train_end: start + m,
            signal: None,
            projection_signal: None,
            residual_signal: None,
            sigma_projection: proj.sigma0_hat,
            sigma_residual: res.sigma0_hat,
            final_train_loss: history.train.last().copied().unwrap_or(history.initial_train),
            final_val_loss: history.val.last().copied(),
            init_attempts: attempt + 1,
        };
        let mut t = start + m;
        while t < n {
            let (_, f) = model.forward(stream.row(t))?;
            let fa = augmented(&f);
            let sp = proj.step(&f, None).map_err(|e| e.at(t + 1))?;
            let sr = res.step(&fa, Some(z[t])).map_err(|e| e.at(t + 1))?;
            let k = t + 1 - start - m;
            let bound = match (&sp, &sr) {
                (Step::Checked { bound, .. }, _) | (_, Step::Checked { bound, .. }) => Some(*bound),
                (Step::Signal(e), _) | (_, Step::Signal(e)) => Some(e.bound),
                _ => None,
            };
            log.trace.push(TraceRow {
                t: t + 1,
                episode: index,
                k,
                d_proj: proj.q() / sqrt_m,
                d_res: res.q() / sqrt_m,
                stat_proj: proj.q() / (proj.sigma0_hat * sqrt_m),
                stat_res: res.q() / (res.sigma0_hat * sqrt_m),
                bound: bound.map(|b| b / sqrt_m),
            });
            for (step, slot, kind) in [
                (sp, &mut episode.projection_signal, DetectorKind::Projection),
                (sr, &mut episode.residual_signal, DetectorKind::Residual),
            ] {
                if let Step::Signal(e) = step {
                    *slot = Some(t + 1);
                    if episode.signal.is_none() {
                        episode.signal = Some(EpisodeSignal {
                            time: t + 1,
                            k: e.k,
                            detector: kind,
                        });
                    }
                }
            }
            t += 1;
            let both_done = proj.is_signaled() && res.is_signaled();
            let horizon_done = matches!(sp, Step::TerminalNoSignal) && matches!(sr, Step::TerminalNoSignal);
            if (cfg.retrain && episode.signal.is_some()) || both_done || horizon_done {
                break;
            }
        }
        let next = episode.signal.map(|s| s.time - 1);
        log.episodes.push(episode);
        match next {
            Some(s) if cfg.retrain && s + m <= n => start = s,
            _ => break,
        }
    }
    Ok(log)
}
