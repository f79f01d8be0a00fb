//! Super-resolution from an intermediate diffusion state with optional
//! residual-gradient guidance.

use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::rng::RngStream;
use crate::spectral::ns::{NsConfig, NsOperator};

use super::ddpm::{ddim_guided, Guidance};
use super::schedule::NoiseSchedule;

/// `x_tau = sqrt(ab_tau) u_l + sqrt(1 - ab_tau) eps` with `eps` drawn from `rng`.
pub fn pidfs_start(
    u_l: &[f64],
    tau: usize,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    schedule.check_step(tau)?;
    let ab = schedule.alpha_bar(tau);
    let eps = rng.normal_vec(u_l.len());
    Ok(u_l
        .iter()
        .zip(&eps)
        .map(|(u, e)| ab.sqrt() * u + (1.0 - ab).sqrt() * e)
        .collect())
}

/// Frame count and grid of a `[F, N, N]` stack.
fn stack_layout(f: &Field) -> Result<(usize, usize)> {
    match f.shape().as_slice() {
        [t, r, c] if r == c && *t >= 3 => Ok((*t, *r)),
        s => Err(Error::Shape(format!(
            "expected a [F >= 3, N, N] vorticity stack, got {s:?}"
        ))),
    }
}

/// `R(x) = sum_j ||G_j(x)||^2 / ||u_l||^2` over the interior frames of the
/// stack, together with its gradient.
pub struct ResidualGuidance {
    op: NsOperator,
    frames: usize,
    scale: f64,
    reference_sq: f64,
}

impl ResidualGuidance {
    pub fn new(cfg: &NsConfig, frames: usize, scale: f64, reference: &[f64]) -> Result<Self> {
        let reference_sq: f64 = reference.iter().map(|v| v * v).sum();
        if !(reference_sq > 0.0) {
            return Err(Error::InvalidArgument("guidance reference has zero norm".into()));
        }
        Ok(ResidualGuidance {
            op: NsOperator::new(cfg)?,
            frames,
            scale,
            reference_sq,
        })
    }

    /// Objective value and gradient at a stack `x` of `frames * N^2` values.
    pub fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n2 = self.op.grid() * self.op.grid();
        if x.len() != self.frames * n2 {
            return Err(Error::Shape("guidance stack size mismatch".into()));
        }
        let frame = |j: usize| &x[j * n2..(j + 1) * n2];
        let mut grad = vec![0.0; x.len()];
        let mut value = 0.0;
        let w = 2.0 / self.reference_sq;
        for j in 1..self.frames - 1 {
            let g = self.op.residual_frame(frame(j - 1), frame(j), frame(j + 1))?;
            value += g.iter().map(|v| v * v).sum::<f64>();
            let (dp, dc, dn) = self.op.residual_adjoint(frame(j), &g);
            for (slot, d) in [(j - 1, dp), (j, dc), (j + 1, dn)] {
                for (acc, v) in grad[slot * n2..(slot + 1) * n2].iter_mut().zip(d) {
                    *acc += w * v;
                }
            }
        }
        Ok((value / self.reference_sq, grad))
    }
}

impl Guidance for ResidualGuidance {
    fn apply(&self, _tau: usize, x0_hat: &mut [f64]) -> Result<()> {
        let (_, grad) = self.value_and_grad(x0_hat)?;
        for (x, g) in x0_hat.iter_mut().zip(grad) {
            *x -= self.scale * g;
        }
        Ok(())
    }
}

/// Reconstructs a high-fidelity `[F, N, N]` stack from `u_l` (already
/// upsampled to the target grid): noise `u_l` to step `tau`, then run
/// deterministic DDIM to step 0. With `guidance_scale > 0`, every clean-state
/// estimate is moved down the gradient of the relative residual.
#[allow(clippy::too_many_arguments)]
pub fn pidfs_superresolve<M: NoisePredictor + ?Sized>(
    model: &M,
    u_l: &Field,
    tau: usize,
    schedule: &NoiseSchedule,
    guidance_scale: f64,
    ns: &NsConfig,
    rng: &mut RngStream,
) -> Result<Field> {
    let (frames, n) = stack_layout(u_l)?;
    if n != ns.grid {
        return Err(Error::Shape(format!(
            "stack grid {n} does not match config grid {}",
            ns.grid
        )));
    }
    if model.state_dim() != u_l.len() || model.cond_dim() != 0 {
        return Err(Error::Shape(format!(
            "model widths ({}, {}) do not fit an unconditional stack of {}",
            model.state_dim(),
            model.cond_dim(),
            u_l.len()
        )));
    }
    if !(guidance_scale >= 0.0) {
        return Err(Error::InvalidArgument("guidance scale must be >= 0".into()));
    }
    let x_tau = pidfs_start(u_l.data(), tau, schedule, rng)?;
    let guide;
    let guidance: Option<&dyn Guidance> = if guidance_scale > 0.0 {
        guide = ResidualGuidance::new(ns, frames, guidance_scale, u_l.data())?;
        Some(&guide)
    } else {
        None
    };
    let out = ddim_guided(model, &[], 1, schedule, 0.0, Some((&x_tau, tau)), guidance, rng)?;
    Field::from_vec(u_l.dims(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Dim;
    use crate::sampling::ddpm::ddim_sample;
    use crate::sampling::schedule::{make_schedule, ScheduleKind};
    use crate::spectral::ns::taylor_green;

    struct Damp(usize);
    impl NoisePredictor for Damp {
        fn state_dim(&self) -> usize {
            self.0
        }
        fn cond_dim(&self) -> usize {
            0
        }
        fn predict(&self, x: &[f64], step: usize, _: &[f64]) -> Result<Vec<f64>> {
            Ok(x.iter().map(|v| 0.05 * step as f64 * v.tanh()).collect())
        }
    }

    fn stack(n: usize) -> (NsConfig, Field) {
        let cfg = NsConfig::new(n, 0.05, 0.1);
        let tg = taylor_green(&cfg, 1.0, &[0.0, 0.1, 0.2]).unwrap();
        (cfg, tg)
    }

    #[test]
    fn unit_alpha_bar_start_is_the_input() {
        let s = NoiseSchedule::from_alpha_bars(vec![1.0, 0.5, 0.1]).unwrap();
        let u = [0.3, -1.0, 2.0];
        let x = pidfs_start(&u, 1, &s, &mut RngStream::new(4)).unwrap();
        assert_eq!(x, u.to_vec());
    }

    #[test]
    fn zero_scale_matches_plain_ddim() {
        let (cfg, u_l) = stack(8);
        let s = make_schedule(20, ScheduleKind::Cosine, (0.0, 0.999)).unwrap();
        let m = Damp(u_l.len());
        let out = pidfs_superresolve(&m, &u_l, 8, &s, 0.0, &cfg, &mut RngStream::new(6)).unwrap();
        let mut rng = RngStream::new(6);
        let start = pidfs_start(u_l.data(), 8, &s, &mut rng).unwrap();
        let plain = ddim_sample(&m, &[], 1, &s, 0.0, Some((&start, 8)), &mut rng).unwrap();
        assert_eq!(out.data(), plain.as_slice());
    }

    #[test]
    fn guidance_gradient_matches_finite_differences() {
        let (cfg, u_l) = stack(8);
        let g = ResidualGuidance::new(&cfg, 3, 1.0, u_l.data()).unwrap();
        let x: Vec<f64> = u_l
            .data()
            .iter()
            .zip(RngStream::new(2).normal_vec(u_l.len()))
            .map(|(a, b)| a + 0.1 * b)
            .collect();
        let (_, grad) = g.value_and_grad(&x).unwrap();
        let h = 1e-6;
        for i in [0, 17, 70, 100, 191] {
            let mut p = x.clone();
            p[i] += h;
            let mut m = x.clone();
            m[i] -= h;
            let fd = (g.value_and_grad(&p).unwrap().0 - g.value_and_grad(&m).unwrap().0) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn small_guided_step_lowers_residual() {
        let (cfg, u_l) = stack(8);
        let g = ResidualGuidance::new(&cfg, 3, 1e-4, u_l.data()).unwrap();
        let mut x: Vec<f64> = u_l
            .data()
            .iter()
            .zip(RngStream::new(3).normal_vec(u_l.len()))
            .map(|(a, b)| a + 0.2 * b)
            .collect();
        let before = g.value_and_grad(&x).unwrap().0;
        g.apply(1, &mut x).unwrap();
        assert!(g.value_and_grad(&x).unwrap().0 < before);
    }

    #[test]
    fn grid_and_step_checks() {
        let (cfg, u_l) = stack(8);
        let s = make_schedule(20, ScheduleKind::Cosine, (0.0, 0.999)).unwrap();
        let m = Damp(u_l.len());
        assert!(pidfs_superresolve(&m, &u_l, 0, &s, 0.0, &cfg, &mut RngStream::new(1)).is_err());
        assert!(pidfs_superresolve(&m, &u_l, 21, &s, 0.0, &cfg, &mut RngStream::new(1)).is_err());
        let other = NsConfig::new(16, 0.05, 0.1);
        assert!(pidfs_superresolve(&m, &u_l, 5, &s, 0.0, &other, &mut RngStream::new(1)).is_err());
        let flat = Field::zeros(&[Dim::space(8), Dim::space(8)]).unwrap();
        assert!(pidfs_superresolve(&Damp(64), &flat, 5, &s, 0.0, &cfg, &mut RngStream::new(1)).is_err());
    }
}
