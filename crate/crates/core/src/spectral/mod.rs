//! Pseudo-spectral PDE machinery: FFTs, Kuramoto-Sivashinsky trajectories,
//! Navier-Stokes vorticity residuals, and flow statistics.

pub mod fft;
pub mod ks;
pub mod ns;
pub mod spectrum;

pub use fft::{fft_1d, fft_2d, fft_field, ifft_1d, ifft_2d, Complex, Fft1d, Fft2d};
pub use ks::{ks_dataset_generate, ks_initial_condition, ks_simulate, KsConfig, KsSolver};
pub use ns::{
    degrade, ns_shell_dataset, ns_vorticity_residual, taylor_green, NsConfig, NsOperator,
};
pub use spectrum::{
    energy_spectrum, kinetic_energy_spectrum, vorticity_histogram, Histogram, Spectrum,
};
