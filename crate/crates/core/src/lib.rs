//! Diffusion ensembles for regression.
//!
//! Toy-scale denoising diffusion samplers (ancestral DDPM, K-step refinement,
//! intermediate-state DDIM with residual guidance), PDE data generators, and
//! the ensemble statistics used for zero-shot uncertainty quantification:
//! Monte-Carlo ensemble means, point-wise variances, error/variance
//! correlation (Pearson and dynamic time warping) and ensemble-size sweeps.

pub mod analysis;
pub mod denoiser;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{Axis, Dim, Field};
pub use rng::{derive_seed, RngStream};
