//! Score-distillation training of a Gaussian cloud.

mod adam;
mod config;
mod resample;
mod train;

pub use adam::{Adam, GroupState, ParamGroup};
pub use config::{AdamConfig, Background, CameraRanges, LearningRates, ScheduleConfig, TrainConfig};
pub use resample::{downscale, downscale_adjoint};
pub use train::{
    iteration_rng, render_for_guidance, sample_camera, train, BatchGradient, GroupNorms, IterationMetrics, Trainer,
};
