//! Noise schedules and the conditional samplers: ancestral DDPM, DDIM,
//! K-step refinement, autoregressive rollout and guided super-resolution.

pub mod ddpm;
pub mod oracle;
pub mod pidfs;
pub mod refiner;
pub mod rollout;
pub mod schedule;

pub use ddpm::{ddim_guided, ddim_sample, ddpm_from, ddpm_sample, ddpm_step, Guidance};
pub use oracle::GaussianOracle;
pub use pidfs::{pidfs_start, pidfs_superresolve, ResidualGuidance};
pub use refiner::{refiner_predict, RefinerConfig};
pub use rollout::{
    acdm_predict, rollout, rollout_training_set, rollout_with, Method, RolloutConfig, SamplerSpec,
};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleKind, ScheduleSpec};
