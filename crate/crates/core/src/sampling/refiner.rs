//! K-step iterative refinement of a one-step prediction.

use serde::{Deserialize, Serialize};

use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Refinement noise scales `sigma_1 > ... > sigma_K > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinerConfig {
    pub sigmas: Vec<f64>,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig::geometric(0.5, 1e-3, 4).expect("valid defaults")
    }
}

impl RefinerConfig {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        let cfg = RefinerConfig { sigmas };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `k` scales decaying geometrically from `first` to `last`.
    pub fn geometric(first: f64, last: f64, k: usize) -> Result<Self> {
        let sigmas = match k {
            0 => vec![],
            1 => vec![first],
            _ => {
                let r = (last / first).powf(1.0 / (k - 1) as f64);
                (0..k).map(|i| first * r.powi(i as i32)).collect()
            }
        };
        RefinerConfig::new(sigmas)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("refiner noise scales must be positive".into()));
        }
        if self.sigmas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidArgument(
                "refiner noise scales must be strictly decreasing".into(),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.sigmas.len()
    }

    /// `sigma_k` for `k` in `1..=K`.
    pub fn sigma(&self, k: usize) -> f64 {
        self.sigmas[k - 1]
    }
}

/// Refined prediction for `rows` conditioning vectors.
///
/// Step 0 evaluates the model on a zero state; each step `k >= 1` then
/// perturbs the estimate with `sigma_k z`, predicts that noise and removes
/// the prediction: `u_k = u_{k-1} + sigma_k z - sigma_k f(u_{k-1} + sigma_k z, k)`.
pub fn refiner_predict<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &[f64],
    rows: usize,
    cfg: &RefinerConfig,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let width = rows * model.state_dim();
    let mut u = model.predict(&vec![0.0; width], 0, cond)?;
    let mut z = vec![0.0; width];
    let mut noisy = vec![0.0; width];
    for k in 1..=cfg.steps() {
        let sigma = cfg.sigma(k);
        rng.fill_normal(&mut z);
        for i in 0..width {
            noisy[i] = u[i] + sigma * z[i];
        }
        let z_hat = model.predict(&noisy, k, cond)?;
        for i in 0..width {
            u[i] = noisy[i] - sigma * z_hat[i];
        }
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("refiner prediction".into()));
    }
    Ok(u)
}
