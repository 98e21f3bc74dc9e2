//! Sequential monitoring of a projected second-moment functional of a
//! high-dimensional time series.
//!
//! A training block of `m` observations fixes a projection `v`, the mean of
//! the projected squares `(v'Y_t)^2` and their long-run variance; afterwards
//! a weighted CUSUM of the projected squares is compared against a boundary
//! `c g(m, k)` with `c` taken from a simulated limit law.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covest;
pub mod critval;
pub mod datagen;
pub mod deepmon;
pub mod detector;
pub mod error;
pub mod lrv;
pub mod projection;
pub mod rng;
mod serde_ext;
pub mod stream;

pub use detector::{
    boundary_g, detector_q, monitor_step, replay, run_closed_end, BoundaryConfig, DetectorKind, Horizon,
    MonitorConfig, MonitorState, RunReport, SignalEvent, Step, TrajectoryPoint, Weighting,
};
pub use error::{Error, Result};
pub use lrv::{lrv_estimate, LrvConfig};
pub use projection::ProjectionVector;
pub use stream::{validate_stream, ObservationStream, ValidationReport};
