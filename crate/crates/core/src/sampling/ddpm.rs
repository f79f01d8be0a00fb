//! Ancestral DDPM and DDIM sampling on flat row-major batches.

use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::rng::RngStream;

use super::schedule::NoiseSchedule;

fn check_widths<M: NoisePredictor + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    rows: usize,
    cond: &[f64],
) -> Result<()> {
    if cond.len() != rows * model.cond_dim() {
        return Err(Error::Shape(format!(
            "{} conditioning values for {rows} rows of width {}",
            cond.len(),
            model.cond_dim()
        )));
    }
    if schedule.steps() == 0 {
        return Err(Error::InvalidArgument("empty schedule".into()));
    }
    Ok(())
}

fn finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// One ancestral update `x_tau -> x_{tau-1}` given the predicted noise.
/// `z` is ignored at `tau = 1`.
pub fn ddpm_step(schedule: &NoiseSchedule, tau: usize, x: &mut [f64], eps: &[f64], z: Option<&[f64]>) {
    let a = schedule.signal_coef(tau);
    let f1 = schedule.eps_coef(tau);
    let f2 = schedule.noise_coef(tau);
    for (i, v) in x.iter_mut().enumerate() {
        *v = a * *v + f1 * eps[i];
    }
    if tau > 1 {
        if let Some(z) = z {
            for (v, n) in x.iter_mut().zip(z) {
                *v += f2 * n;
            }
        }
    }
}

/// Draws `rows` samples: `x_N ~ N(0, I)` then the ancestral chain down to `x_0`.
/// `cond` holds `rows` conditioning vectors, used at every step.
pub fn ddpm_sample<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &[f64],
    rows: usize,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    check_widths(model, schedule, rows, cond)?;
    let x = rng.normal_vec(rows * model.state_dim());
    ddpm_from(model, cond, x, schedule.steps(), schedule, rng)
}

/// Ancestral chain from an explicit `x_tau`.
pub fn ddpm_from<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &[f64],
    mut x: Vec<f64>,
    tau: usize,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    schedule.check_step(tau)?;
    let mut z = vec![0.0; x.len()];
    for t in (1..=tau).rev() {
        let eps = model.predict(&x, t, cond)?;
        if t > 1 {
            rng.fill_normal(&mut z);
        }
        ddpm_step(schedule, t, &mut x, &eps, Some(&z));
    }
    finite(&x, "ddpm sample")?;
    Ok(x)
}

/// Correction applied to the clean-state estimate inside each DDIM step.
pub trait Guidance {
    /// Updates `x0_hat` in place at step `tau`.
    fn apply(&self, tau: usize, x0_hat: &mut [f64]) -> Result<()>;
}

/// DDIM sampling with stochasticity `eta`. Without `start` the chain begins at
/// `x_N ~ N(0, I)`; with `start = (x_tau, tau)` it begins there. With `eta = 0`
/// no random numbers are drawn after the start state.
pub fn ddim_sample<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &[f64],
    rows: usize,
    schedule: &NoiseSchedule,
    eta: f64,
    start: Option<(&[f64], usize)>,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    ddim_guided(model, cond, rows, schedule, eta, start, None, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn ddim_guided<M: NoisePredictor + ?Sized>(
    model: &M,
    cond: &[f64],
    rows: usize,
    schedule: &NoiseSchedule,
    eta: f64,
    start: Option<(&[f64], usize)>,
    guidance: Option<&dyn Guidance>,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    check_widths(model, schedule, rows, cond)?;
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    let width = rows * model.state_dim();
    let (mut x, tau) = match start {
        Some((x, tau)) => {
            schedule.check_step(tau)?;
            if x.len() != width {
                return Err(Error::Shape(format!(
                    "start state has {} values, expected {width}",
                    x.len()
                )));
            }
            (x.to_vec(), tau)
        }
        None => (rng.normal_vec(width), schedule.steps()),
    };
    let mut z = vec![0.0; width];
    for t in (1..=tau).rev() {
        let eps = model.predict(&x, t, cond)?;
        let (ab, ab_prev) = (schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
        let mut x0: Vec<f64> = x
            .iter()
            .zip(&eps)
            .map(|(xv, e)| (xv - (1.0 - ab).sqrt() * e) / ab.sqrt())
            .collect();
        if let Some(g) = guidance {
            g.apply(t, &mut x0)?;
        }
        let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev)).max(0.0).sqrt();
        let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
        let noisy = sigma > 0.0;
        if noisy {
            rng.fill_normal(&mut z);
        }
        for i in 0..width {
            x[i] = ab_prev.sqrt() * x0[i] + dir * eps[i];
            if noisy {
                x[i] += sigma * z[i];
            }
        }
    }
    finite(&x, "ddim sample")?;
    Ok(x)
}
