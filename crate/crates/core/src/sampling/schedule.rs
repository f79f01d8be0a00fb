//! Discrete noise schedules and the per-step coefficients of the samplers.
//!
//! Steps are indexed `tau = 1..=N`; `alpha_bar(0)` is taken to be 1.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_csv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

/// Serializable schedule description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub kind: ScheduleKind,
    /// Linear: first beta. Cosine: unused.
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    /// Linear: last beta. Cosine: upper clip on beta.
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
}

fn default_beta_start() -> f64 {
    1e-4
}
fn default_beta_end() -> f64 {
    0.02
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, self.kind, (self.beta_start, self.beta_end))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    /// `alpha_bar[tau - 1]`.
    alpha_bar: Vec<f64>,
}

const COSINE_OFFSET: f64 = 0.008;

/// Builds a schedule of `n` steps.
///
/// `linear`: betas evenly spaced over `range`. `cosine`: the squared-cosine
/// alpha-bar curve with betas clipped at `range.1`.
pub fn make_schedule(n: usize, kind: ScheduleKind, range: (f64, f64)) -> Result<NoiseSchedule> {
    if n == 0 {
        return Err(Error::InvalidArgument("schedule needs at least one step".into()));
    }
    let (lo, hi) = range;
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear => {
            if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "invalid beta range [{lo}, {hi}]"
                )));
            }
            (0..n)
                .map(|i| {
                    if n == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (n - 1) as f64
                    }
                })
                .collect()
        }
        ScheduleKind::Cosine => {
            if !(hi > 0.0 && hi < 1.0) {
                return Err(Error::InvalidArgument(format!("invalid beta clip {hi}")));
            }
            let f = |t: f64| {
                ((t / n as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2)
                    .cos()
                    .powi(2)
            };
            (1..=n)
                .map(|t| (1.0 - f(t as f64) / f(t as f64 - 1.0)).min(hi))
                .collect()
        }
    };
    let mut alpha_bar = Vec::with_capacity(n);
    let mut acc = 1.0;
    for b in betas {
        acc *= 1.0 - b;
        alpha_bar.push(acc);
    }
    NoiseSchedule::from_alpha_bars(alpha_bar)
}

impl NoiseSchedule {
    /// Schedule from explicit `alpha_bar_1..N`; must satisfy
    /// `0 < alpha_bar_N < ... < alpha_bar_1 <= 1`.
    pub fn from_alpha_bars(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.is_empty() {
            return Err(Error::InvalidArgument("empty schedule".into()));
        }
        if !(alpha_bar[0] <= 1.0) || alpha_bar.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidArgument(
                "alpha_bar values must lie in (0, 1]".into(),
            ));
        }
        if alpha_bar.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidArgument(
                "alpha_bar must be strictly decreasing".into(),
            ));
        }
        Ok(NoiseSchedule { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self, tau: usize) -> f64 {
        if tau == 0 {
            1.0
        } else {
            self.alpha_bar[tau - 1]
        }
    }

    pub fn beta(&self, tau: usize) -> f64 {
        1.0 - self.alpha_bar(tau) / self.alpha_bar(tau - 1)
    }

    /// Variance of the forward-process posterior `q(x_{tau-1} | x_tau, x_0)`.
    pub fn posterior_variance(&self, tau: usize) -> f64 {
        (1.0 - self.alpha_bar(tau - 1)) / (1.0 - self.alpha_bar(tau)) * self.beta(tau)
    }

    /// Coefficient on `x_tau` in the ancestral update.
    pub fn signal_coef(&self, tau: usize) -> f64 {
        1.0 / (1.0 - self.beta(tau)).sqrt()
    }

    /// Coefficient on the predicted noise (`f1`).
    pub fn eps_coef(&self, tau: usize) -> f64 {
        -self.beta(tau) / ((1.0 - self.alpha_bar(tau)).sqrt() * (1.0 - self.beta(tau)).sqrt())
    }

    /// Coefficient on the injected noise (`f2`).
    pub fn noise_coef(&self, tau: usize) -> f64 {
        self.posterior_variance(tau).max(0.0).sqrt()
    }

    pub fn check_step(&self, tau: usize) -> Result<()> {
        if tau == 0 || tau > self.steps() {
            return Err(Error::InvalidArgument(format!(
                "step {tau} outside 1..={}",
                self.steps()
            )));
        }
        Ok(())
    }

    /// CSV with one row per step: `tau, alpha_bar, beta, f1, f2`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(
            path,
            &["tau", "alpha_bar", "beta", "f1", "f2"],
            (1..=self.steps()).map(|t| {
                [
                    t.to_string(),
                    self.alpha_bar(t).to_string(),
                    self.beta(t).to_string(),
                    self.eps_coef(t).to_string(),
                    self.noise_coef(t).to_string(),
                ]
            }),
        )
    }
}
