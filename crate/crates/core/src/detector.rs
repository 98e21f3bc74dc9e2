//! Weighted CUSUM detector for the projected second moment.
//!
//! At monitoring index `k` the detector compares the sum of the `k` newest
//! projected squares with `k/m` times the training sum,
//! `Q(m,k) = |sum_{m<i<=m+k} x_i - (k/m) sum_{j<=m} x_j|`, and signals the
//! first time `Q(m,k) / sigma0 > c * g(m,k)` for `k >= ceil(m * delta)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrv::{lrv_estimate, LrvConfig};
use crate::projection::ProjectionVector;
use crate::stream::ObservationStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    #[serde(with = "open_end_repr")]
    OpenEnd,
    ClosedEnd(f64),
}

mod open_end_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("open")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "open" {
            Ok(())
        } else {
            Err(de::Error::custom(format!("expected \"open\", got {s:?}")))
        }
    }
}

impl Horizon {
    pub fn is_open(&self) -> bool {
        matches!(self, Horizon::OpenEnd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `g(m,k) = m^{1/2} ((m+k)/m) (k/(m+k))^gamma`.
    #[default]
    Paper,
    /// Unweighted CUSUM, `g(m,k) = m^{1/2}`; closed-end only.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    pub gamma: f64,
    pub delta: f64,
    pub horizon: Horizon,
    #[serde(default)]
    pub weighting: Weighting,
}

impl BoundaryConfig {
    pub fn open_end(gamma: f64, delta: f64) -> Self {
        Self {
            gamma,
            delta,
            horizon: Horizon::OpenEnd,
            weighting: Weighting::Paper,
        }
    }

    pub fn closed_end(gamma: f64, delta: f64, t: f64) -> Self {
        Self {
            gamma,
            delta,
            horizon: Horizon::ClosedEnd(t),
            weighting: Weighting::Paper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.gamma) {
            return Err(Error::param("gamma", format!("{} not in [0, 1/2)", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::param("delta", format!("{} must be positive", self.delta)));
        }
        match self.horizon {
            Horizon::ClosedEnd(t) if !(t > self.delta && t.is_finite()) => {
                Err(Error::param("T", format!("{t} must exceed delta = {}", self.delta)))
            }
            Horizon::OpenEnd if self.weighting == Weighting::Flat => Err(Error::param(
                "weighting",
                "flat weighting requires a closed-end horizon",
            )),
            _ => Ok(()),
        }
    }

    /// First monitoring index at which the boundary is evaluated,
    /// `ceil(m * delta)`, at least 1.
    pub fn start_index(&self, m: usize) -> usize {
        ((m as f64 * self.delta - 1e-9).ceil() as usize).max(1)
    }

    /// Last monitoring index, `floor(m * T)`, for closed-end monitoring.
    pub fn end_index(&self, m: usize) -> Option<usize> {
        match self.horizon {
            Horizon::OpenEnd => None,
            Horizon::ClosedEnd(t) => Some((m as f64 * t + 1e-9).floor() as usize),
        }
    }

    pub fn weight(&self, m: usize, k: usize) -> f64 {
        match self.weighting {
            Weighting::Paper => boundary_value(m, k, self.gamma),
            Weighting::Flat => (m as f64).sqrt(),
        }
    }
}

fn boundary_value(m: usize, k: usize, gamma: f64) -> f64 {
    let (m, k) = (m as f64, k as f64);
    m.sqrt() * ((m + k) / m) * (k / (m + k)).powf(gamma)
}

/// The boundary function `g(m,k)`.
pub fn boundary_g(m: usize, k: usize, gamma: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::param("m", "must be positive"));
    }
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::param("gamma", format!("{gamma} not in [0, 1/2)")));
    }
    if k == 0 && gamma > 0.0 {
        return Err(Error::param("k", "boundary is zero at k = 0 for gamma > 0"));
    }
    Ok(boundary_value(m, k, gamma))
}

/// The detector `Q(m,k)`.
pub fn detector_q(train_sum: f64, mon_sum: f64, m: usize, k: usize) -> f64 {
    (mon_sum - (k as f64 / m as f64) * train_sum).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Monitors `(v' y)^2`.
    #[default]
    Projection,
    /// Monitors squared prediction residuals `(z - v' y)^2`.
    Residual,
}

impl DetectorKind {
    pub fn monitored_value(&self, v: &ProjectionVector, y: &[f64], z: Option<f64>) -> Result<f64> {
        if y.len() != v.dim() {
            return Err(Error::DimensionMismatch {
                expected: v.dim(),
                got: y.len(),
            });
        }
        let p = v.dot(y);
        let x = match self {
            DetectorKind::Projection => p * p,
            DetectorKind::Residual => {
                let z = z.ok_or(Error::MissingResponse)?;
                (z - p) * (z - p)
            }
        };
        Ok(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalEvent {
    pub k: usize,
    pub time: usize,
    pub stat: f64,
    pub bound: f64,
    pub kind: DetectorKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// `k < ceil(m delta)`: accumulated but not tested.
    Warmup { k: usize },
    Checked { k: usize, stat: f64, bound: f64 },
    Signal(SignalEvent),
    /// Closed-end horizon exhausted without a signal; nothing consumed.
    TerminalNoSignal,
    /// A signal was already given; nothing consumed.
    Frozen,
}

impl Step {
    pub fn signal(&self) -> Option<&SignalEvent> {
        match self {
            Step::Signal(e) => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    pub v_hat: ProjectionVector,
    pub sigma0_hat: f64,
    pub train_sum: f64,
    pub m: usize,
    pub k: usize,
    pub mon_sum: f64,
    #[serde(with = "crate::serde_ext")]
    pub c: f64,
    pub signaled_at: Option<usize>,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub kind: DetectorKind,
}

impl MonitorState {
    pub fn new(
        v_hat: ProjectionVector,
        sigma0_hat: f64,
        train_sum: f64,
        m: usize,
        c: f64,
        boundary: BoundaryConfig,
        kind: DetectorKind,
    ) -> Result<Self> {
        boundary.validate()?;
        if m < 2 {
            return Err(Error::param("m", "training length must be at least 2"));
        }
        if !(sigma0_hat > 0.0 && sigma0_hat.is_finite()) {
            return Err(Error::param("sigma0_hat", format!("{sigma0_hat} must be positive")));
        }
        if !(c > 0.0) {
            return Err(Error::param("c", format!("{c} must be positive")));
        }
        Ok(Self {
            v_hat,
            sigma0_hat,
            train_sum,
            m,
            k: 0,
            mon_sum: 0.0,
            c,
            signaled_at: None,
            boundary,
            kind,
        })
    }

    /// Freeze the training-phase quantities: the training sum of monitored
    /// values and the long-run standard deviation.
    pub fn from_training(
        train: &[&[f64]],
        responses: Option<&[f64]>,
        v_hat: ProjectionVector,
        lrv: &LrvConfig,
        c: f64,
        boundary: BoundaryConfig,
        kind: DetectorKind,
    ) -> Result<Self> {
        let values = train
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let z = responses.map(|z| z[i]);
                kind.monitored_value(&v_hat, y, z)
                    .and_then(|x| if x.is_finite() { Ok(x) } else { Err(Error::NonFinite { time: i + 1 }) })
                    .map_err(|e| e.at(i + 1))
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::from_monitored_values(&values, v_hat, lrv, c, boundary, kind)
    }

    /// As [`MonitorState::from_training`], from precomputed monitored values.
    pub fn from_monitored_values(
        values: &[f64],
        v_hat: ProjectionVector,
        lrv: &LrvConfig,
        c: f64,
        boundary: BoundaryConfig,
        kind: DetectorKind,
    ) -> Result<Self> {
        let sigma2 = lrv_estimate(values, lrv)?;
        let train_sum = values.iter().sum();
        Self::new(v_hat, sigma2.sqrt(), train_sum, values.len(), c, boundary, kind)
    }

    pub fn is_signaled(&self) -> bool {
        self.signaled_at.is_some()
    }

    pub fn q(&self) -> f64 {
        detector_q(self.train_sum, self.mon_sum, self.m, self.k)
    }

    /// Consume one observation.
    pub fn step(&mut self, y: &[f64], z: Option<f64>) -> Result<Step> {
        if self.signaled_at.is_some() {
            return Ok(Step::Frozen);
        }
        if let Some(end) = self.boundary.end_index(self.m) {
            if self.k >= end {
                return Ok(Step::TerminalNoSignal);
            }
        }
        let x = self.kind.monitored_value(&self.v_hat, y, z)?;
        if !x.is_finite() {
            return Err(Error::NonFinite { time: self.m + self.k + 1 });
        }
        self.k += 1;
        self.mon_sum += x;
        let k = self.k;
        if k < self.boundary.start_index(self.m) {
            return Ok(Step::Warmup { k });
        }
        let stat = self.q() / self.sigma0_hat;
        let bound = self.c * self.boundary.weight(self.m, k);
        if stat > bound {
            let event = SignalEvent {
                k,
                time: self.m + k,
                stat,
                bound,
                kind: self.kind,
            };
            self.signaled_at = Some(k);
            Ok(Step::Signal(event))
        } else {
            Ok(Step::Checked { k, stat, bound })
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Functional form of [`MonitorState::step`].
pub fn monitor_step(
    mut state: MonitorState,
    y: &[f64],
    z: Option<f64>,
) -> Result<(MonitorState, Step)> {
    let step = state.step(y, z)?;
    Ok((state, step))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub k: usize,
    pub stat: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trajectory: Vec<TrajectoryPoint>,
    pub signal: Option<SignalEvent>,
    /// The stream ended before the horizon (or, open-end, before any signal).
    pub truncated: bool,
    pub final_state: MonitorState,
}

impl RunReport {
    /// JSON-lines: one `{k, stat, bound}` record per tested index; the
    /// signalling record additionally carries `"signal": true`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.trajectory {
            let rec = if self.signal.is_some_and(|e| e.k == p.k) {
                let e = self.signal.as_ref().unwrap();
                serde_json::json!({
                    "k": p.k, "stat": p.stat, "bound": p.bound,
                    "signal": true, "time": e.time, "kind": e.kind,
                })
            } else {
                serde_json::json!({ "k": p.k, "stat": p.stat, "bound": p.bound })
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Replay monitoring observations through `state` until a signal, the
/// horizon, or the end of the input. `start_time` is the stream time of the
/// first observation, for error reporting.
pub fn replay<'a>(
    mut state: MonitorState,
    observations: impl IntoIterator<Item = (&'a [f64], Option<f64>)>,
) -> Result<RunReport> {
    let mut trajectory = Vec::new();
    let mut signal = None;
    let mut reached_end = false;
    for (y, z) in observations {
        let time = state.m + state.k + 1;
        match state.step(y, z).map_err(|e| e.at(time))? {
            Step::Warmup { .. } => {}
            Step::Checked { k, stat, bound } => trajectory.push(TrajectoryPoint { k, stat, bound }),
            Step::Signal(e) => {
                trajectory.push(TrajectoryPoint {
                    k: e.k,
                    stat: e.stat,
                    bound: e.bound,
                });
                signal = Some(e);
                break;
            }
            Step::TerminalNoSignal | Step::Frozen => {
                reached_end = true;
                break;
            }
        }
    }
    if !reached_end && signal.is_none() {
        if let Some(end) = state.boundary.end_index(state.m) {
            reached_end = state.k >= end;
        }
    }
    Ok(RunReport {
        trajectory,
        truncated: signal.is_none() && !reached_end,
        signal,
        final_state: state,
    })
}

/// Everything needed to turn a training block into a frozen monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    pub boundary: BoundaryConfig,
    pub c: f64,
    pub lrv: LrvConfig,
    pub kind: DetectorKind,
}

/// Train on the first `m` observations of `stream`, then monitor the rest up
/// to the horizon. A window with `T <= delta` has nothing to test and yields
/// an empty report.
pub fn run_closed_end(
    stream: &ObservationStream,
    v_hat: ProjectionVector,
    cfg: &MonitorConfig,
) -> Result<RunReport> {
    let m = stream.train_len();
    if stream.len() < m || m < 2 {
        return Err(Error::InsufficientData {
            needed: m.max(2),
            available: stream.len(),
        });
    }
    if cfg.kind == DetectorKind::Residual && stream.response().is_none() {
        return Err(Error::MissingResponse);
    }
    let train: Vec<&[f64]> = (0..m).map(|i| stream.row(i)).collect();
    let responses = stream.response().map(|z| &z[..m]);
    let degenerate_window = matches!(cfg.boundary.horizon,
        Horizon::ClosedEnd(t) if t <= cfg.boundary.delta);
    let boundary = if degenerate_window {
        BoundaryConfig::open_end(cfg.boundary.gamma, cfg.boundary.delta)
    } else {
        cfg.boundary
    };
    let mut state = MonitorState::from_training(
        &train, responses, v_hat, &cfg.lrv, cfg.c, boundary, cfg.kind,
    )?;
    if degenerate_window {
        state.boundary = cfg.boundary;
        return Ok(RunReport {
            trajectory: Vec::new(),
            signal: None,
            truncated: false,
            final_state: state,
        });
    }
    let obs = (m..stream.len()).map(|i| (stream.row(i), stream.response().map(|z| z[i])));
    replay(state, obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1(d: usize) -> ProjectionVector {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        ProjectionVector::new(v)
    }

    #[test]
    fn boundary_examples() {
        assert!((boundary_g(100, 100, 0.0).unwrap() - 20.0).abs() < 1e-12);
        let g = boundary_g(100, 100, 0.25).unwrap();
        assert!((g - 20.0 * 0.5f64.powf(0.25)).abs() < 1e-12);
        assert!((g - 16.8179).abs() < 1e-4);
        assert!((boundary_g(400, 40, 0.0).unwrap() - 22.0).abs() < 1e-12);
        assert!(boundary_g(100, 0, 0.25).is_err());
        assert!(boundary_g(100, 5, 0.5).is_err());
    }

    #[test]
    fn detector_examples() {
        assert_eq!(detector_q(100.0, 50.0, 100, 50), 0.0);
        assert_eq!(detector_q(100.0, 75.0, 100, 50), 25.0);
    }

    #[test]
    fn infinite_threshold_never_signals() {
        let cfg = BoundaryConfig::open_end(0.25, 0.1);
        let mut s = MonitorState::new(e1(2), 1.0, 100.0, 100, f64::INFINITY, cfg, DetectorKind::Projection)
            .unwrap();
        for i in 0..500 {
            let step = s.step(&[(i as f64).sin() * 10.0, 1.0], None).unwrap();
            assert!(step.signal().is_none());
        }
        assert_eq!(s.k, 500);
        assert_eq!(s.signaled_at, None);
    }

    #[test]
    fn signal_freezes_state() {
        let cfg = BoundaryConfig::open_end(0.0, 0.1);
        let mut s = MonitorState::new(e1(1), 1.0, 100.0, 100, 0.1, cfg, DetectorKind::Projection)
            .unwrap();
        let mut signal = None;
        for _ in 0..100 {
            if let Step::Signal(e) = s.step(&[3.0], None).unwrap() {
                signal = Some(e);
                break;
            }
        }
        let e = signal.expect("large jump must signal");
        assert_eq!(e.k, 10, "first testable index is ceil(m delta)");
        assert!(e.stat > e.bound);
        let frozen = s.clone();
        assert_eq!(s.step(&[100.0], None).unwrap(), Step::Frozen);
        assert_eq!(s, frozen);
    }

    #[test]
    fn closed_end_horizon_terminates() {
        let cfg = BoundaryConfig::closed_end(0.0, 0.1, 0.5);
        let mut s = MonitorState::new(e1(1), 1.0, 10.0, 10, 1e9, cfg, DetectorKind::Projection)
            .unwrap();
        for _ in 0..5 {
            assert!(!matches!(s.step(&[1.0], None).unwrap(), Step::TerminalNoSignal));
        }
        assert_eq!(s.step(&[1.0], None).unwrap(), Step::TerminalNoSignal);
        assert_eq!(s.k, 5);
    }

    #[test]
    fn residual_kind_requires_response_and_dimension() {
        let cfg = BoundaryConfig::open_end(0.0, 0.1);
        let mut s = MonitorState::new(e1(2), 1.0, 10.0, 10, 2.0, cfg, DetectorKind::Residual).unwrap();
        assert!(matches!(s.step(&[1.0, 0.0], None), Err(Error::MissingResponse)));
        assert!(matches!(s.step(&[1.0], Some(1.0)), Err(Error::DimensionMismatch { .. })));
        s.step(&[1.0, 5.0], Some(3.0)).unwrap();
        assert_eq!(s.mon_sum, 4.0);
    }

    #[test]
    fn config_validation() {
        assert!(BoundaryConfig::open_end(0.5, 0.1).validate().is_err());
        assert!(BoundaryConfig::open_end(0.2, 0.0).validate().is_err());
        assert!(BoundaryConfig::closed_end(0.2, 0.1, 0.1).validate().is_err());
        let flat_open = BoundaryConfig {
            weighting: Weighting::Flat,
            ..BoundaryConfig::open_end(0.0, 0.1)
        };
        assert!(flat_open.validate().is_err());
        assert_eq!(BoundaryConfig::open_end(0.0, 0.1).start_index(500), 50);
        assert_eq!(BoundaryConfig::open_end(0.0, 0.0105).start_index(100), 2);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = BoundaryConfig::closed_end(0.25, 0.1, 2.0);
        let mut s = MonitorState::new(
            ProjectionVector::new(vec![0.1, 1.0 / 3.0, -2e-17]),
            1.234_567_890_123_456_7,
            98.765_432_1,
            500,
            f64::INFINITY,
            cfg,
            DetectorKind::Projection,
        )
        .unwrap();
        s.step(&[0.3, 0.7, 1.1], None).unwrap();
        let back = MonitorState::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.mon_sum.to_bits(), s.mon_sum.to_bits());
    }
}
