//! Optimizers, clipping, learning-rate schedule, variational dropout and the
//! training loop.

mod adam;
mod clip;
mod dropout;
mod metrics;
mod schedule;
mod sgd;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use clip::{clip_global_norm, global_norm};
pub use dropout::{bernoulli_mask, sample_masks, DropoutRates, WindowMasks};
pub use metrics::{MetricsHistory, MetricsRow, Split, METRICS_HEADER};
pub use schedule::Schedule;
pub use sgd::sgd_step;
pub use trainer::{train, Divergence, DivergenceRule, Objective, OptimizerKind, StepLoss, TrainConfig, TrainOutcome};
