//! Monte-Carlo ensembles: sampling, mean and variance statistics, and the
//! ensemble-size sweep.

pub mod batch;
pub mod stats;
pub mod sweep;

pub use batch::{ensemble_seeds, sample_ensemble, EnsembleBatch, Manifest, MANIFEST};
pub use stats::{
    ensemble_mean, mean_variance, mean_variance_scalar, pointwise_variance, variance_series, Center,
    Divisor,
};
pub use sweep::{
    binomial, combinations, recommend_size, size_sweep, subset_mean_std, SizeSweepResult,
    SweepEntry, DEFAULT_MAX_COMBINATIONS,
};
