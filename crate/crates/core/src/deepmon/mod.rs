//! Small feed-forward regressor, its training, a Lipschitz oracle for the
//! hidden-feature map, and drift monitoring with retraining.

mod lipschitz;
mod mlp;
mod rollover;
mod train;

pub use lipschitz::{lipschitz_bound_check, operator_norm, LipschitzCheck};
pub use mlp::{Activation, ForwardTrace, MlpModel};
pub use rollover::{rollover_monitor, Episode, EpisodeLog, EpisodeSignal, RolloverConfig, TraceRow};
pub use train::{train, AdamConfig, LossHistory, TrainConfig};
