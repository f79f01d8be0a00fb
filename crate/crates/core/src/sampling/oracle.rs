//! Exact noise predictor for a Gaussian data distribution.

use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};

use super::schedule::NoiseSchedule;

/// Optimal noise prediction when the clean state is `N(mu0, diag(sigma0^2))`:
/// `eps* = sqrt(1 - ab) (x - sqrt(ab) mu0) / (ab sigma0^2 + 1 - ab)`.
#[derive(Clone, Debug)]
pub struct GaussianOracle {
    mu0: Vec<f64>,
    sigma0: Vec<f64>,
    schedule: NoiseSchedule,
}

impl GaussianOracle {
    pub fn new(mu0: Vec<f64>, sigma0: Vec<f64>, schedule: NoiseSchedule) -> Result<Self> {
        if mu0.is_empty() || mu0.len() != sigma0.len() {
            return Err(Error::Shape("mu0 and sigma0 must be non-empty and of equal length".into()));
        }
        if sigma0.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("sigma0 must be finite and >= 0".into()));
        }
        Ok(GaussianOracle {
            mu0,
            sigma0,
            schedule,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu0
    }

    pub fn std(&self) -> &[f64] {
        &self.sigma0
    }
}

impl NoisePredictor for GaussianOracle {
    fn state_dim(&self) -> usize {
        self.mu0.len()
    }

    fn cond_dim(&self) -> usize {
        0
    }

    fn predict(&self, x: &[f64], step: usize, cond: &[f64]) -> Result<Vec<f64>> {
        self.rows_of(x, cond)?;
        self.schedule.check_step(step)?;
        let ab = self.schedule.alpha_bar(step);
        let d = self.mu0.len();
        Ok(x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (m, s) = (self.mu0[i % d], self.sigma0[i % d]);
                (1.0 - ab).sqrt() * (v - ab.sqrt() * m) / (ab * s * s + 1.0 - ab)
            })
            .collect())
    }
}
