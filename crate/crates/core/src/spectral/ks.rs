//! Kuramoto-Sivashinsky trajectories, `u_t = -u u_x - u_xx - u_xxxx`, on a
//! periodic domain.
//!
//! Time stepping is fourth-order exponential time differencing (ETDRK4) on
//! the Fourier coefficients, with the phi-function coefficients evaluated by
//! contour integrals and the quadratic term dealiased by the 2/3 rule.
//!
//! Stability rule: the stiff linear part is integrated exactly, so only the
//! advective term limits the step. We require `dt * k_max <= 1`, where
//! `k_max = pi * D / L` is the largest resolved wavenumber.

use serde::{Deserialize, Serialize};

use super::fft::{signed_mode, Complex, Fft1d};
use crate::error::{Error, Result};
use crate::field::{Dim, Field};
use crate::rng::RngStream;

const BLOW_UP: f64 = 1e6;
const CONTOUR_POINTS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsConfig {
    pub domain_length: f64,
    pub resolution: usize,
    pub dt: f64,
    /// Number of recorded frames, the initial state included.
    pub horizon: usize,
    /// Solver steps between recorded frames.
    pub record_every: usize,
    /// Solver steps discarded before the first recorded frame.
    #[serde(default)]
    pub warmup_steps: usize,
}

impl Default for KsConfig {
    fn default() -> Self {
        KsConfig {
            domain_length: 32.0,
            resolution: 64,
            dt: 0.05,
            horizon: 140,
            record_every: 4,
            warmup_steps: 2000,
        }
    }
}

impl KsConfig {
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI * self.resolution as f64 / self.domain_length
    }

    /// Time between recorded frames.
    pub fn frame_dt(&self) -> f64 {
        self.dt * self.record_every as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.domain_length > 0.0) {
            return Err(Error::InvalidArgument("domain_length must be > 0".into()));
        }
        if self.resolution < 8 || !self.resolution.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "resolution {} must be a power of two >= 8",
                self.resolution
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be > 0".into()));
        }
        if self.dt * self.k_max() > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "dt * k_max = {:.3} exceeds 1",
                self.dt * self.k_max()
            )));
        }
        if self.horizon < 1 || self.record_every < 1 {
            return Err(Error::InvalidArgument(
                "horizon and record_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Precomputed ETDRK4 stepper for one configuration.
#[derive(Clone, Debug)]
pub struct KsSolver {
    cfg: KsConfig,
    fft: Fft1d,
    /// -i k / 2, with dealiased modes and the Nyquist mode zeroed.
    nl_factor: Vec<Complex>,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl KsSolver {
    pub fn new(cfg: &KsConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.resolution;
        let h = cfg.dt;
        let fft = Fft1d::new(n)?;
        let scale = std::f64::consts::TAU / cfg.domain_length;
        let cutoff = n as i64 / 3;

        let mut nl_factor = Vec::with_capacity(n);
        let (mut e, mut e2, mut q, mut f1, mut f2, mut f3) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let m = signed_mode(i, n);
            let k = scale * m as f64;
            let keep = m.abs() <= cutoff && i != n / 2;
            nl_factor.push(if keep {
                Complex::new(0.0, -0.5 * k)
            } else {
                Complex::new(0.0, 0.0)
            });

            let lin = k * k - k.powi(4);
            e[i] = (h * lin).exp();
            e2[i] = (h * lin / 2.0).exp();
            let (mut sq, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for j in 0..CONTOUR_POINTS {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64;
                let lr = Complex::new(h * lin, 0.0) + Complex::from_polar(1.0, theta);
                let ex = lr.exp();
                let lr3 = lr * lr * lr;
                sq += (((lr / 2.0).exp() - 1.0) / lr).re;
                s1 += ((-4.0 - lr + ex * (4.0 - 3.0 * lr + lr * lr)) / lr3).re;
                s2 += ((2.0 + lr + ex * (-2.0 + lr)) / lr3).re;
                s3 += ((-4.0 - 3.0 * lr - lr * lr + ex * (4.0 - lr)) / lr3).re;
            }
            let m_pts = CONTOUR_POINTS as f64;
            q[i] = h * sq / m_pts;
            f1[i] = h * s1 / m_pts;
            f2[i] = h * s2 / m_pts;
            f3[i] = h * s3 / m_pts;
        }
        Ok(KsSolver {
            cfg: cfg.clone(),
            fft,
            nl_factor,
            e,
            e2,
            q,
            f1,
            f2,
            f3,
        })
    }

    pub fn config(&self) -> &KsConfig {
        &self.cfg
    }

    /// Fourier coefficients of `-(u^2)_x / 2`.
    fn nonlinear(&self, v: &[Complex], out: &mut [Complex]) {
        out.copy_from_slice(v);
        self.fft.inverse_inplace(out);
        for c in out.iter_mut() {
            *c = Complex::new(c.re * c.re, 0.0);
        }
        self.fft.forward_inplace(out);
        for (c, f) in out.iter_mut().zip(&self.nl_factor) {
            *c *= f;
        }
    }

    /// Advances the coefficients by one step.
    pub fn step(&self, v: &mut [Complex]) {
        let n = v.len();
        let zero = Complex::new(0.0, 0.0);
        let (mut nv, mut na, mut nb, mut nc) =
            (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
        let (mut a, mut b, mut c) = (vec![zero; n], vec![zero; n], vec![zero; n]);
        self.nonlinear(v, &mut nv);
        for i in 0..n {
            a[i] = v[i] * self.e2[i] + nv[i] * self.q[i];
        }
        self.nonlinear(&a, &mut na);
        for i in 0..n {
            b[i] = v[i] * self.e2[i] + na[i] * self.q[i];
        }
        self.nonlinear(&b, &mut nb);
        for i in 0..n {
            c[i] = a[i] * self.e2[i] + (nb[i] * 2.0 - nv[i]) * self.q[i];
        }
        self.nonlinear(&c, &mut nc);
        for i in 0..n {
            v[i] = v[i] * self.e[i]
                + nv[i] * self.f1[i]
                + (na[i] + nb[i]) * (2.0 * self.f2[i])
                + nc[i] * self.f3[i];
        }
    }

    fn check(&self, u: &[f64], step: usize) -> Result<()> {
        let t = step as f64 * self.cfg.dt;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(format!("non-finite KS state at t = {t:.3}")));
        }
        let peak = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if peak > BLOW_UP {
            return Err(Error::BlowUp(format!(
                "KS state reached |u| = {peak:.3e} at t = {t:.3} (step {step})"
            )));
        }
        Ok(())
    }

    /// Runs the solver from `u0` and returns the `[T, D]` recorded frames.
    pub fn simulate(&self, u0: &[f64]) -> Result<Field> {
        let n = self.cfg.resolution;
        if u0.len() != n {
            return Err(Error::Shape(format!(
                "initial state has {} points, resolution is {n}",
                u0.len()
            )));
        }
        let mut v = self.fft.forward_real(u0);
        let mut step = 0;
        for _ in 0..self.cfg.warmup_steps {
            self.step(&mut v);
            step += 1;
        }
        let mut frames = Vec::with_capacity(self.cfg.horizon * n);
        for frame in 0..self.cfg.horizon {
            if frame > 0 {
                for _ in 0..self.cfg.record_every {
                    self.step(&mut v);
                    step += 1;
                }
            }
            let u = self.fft.inverse_real(&v);
            self.check(&u, step)?;
            frames.extend_from_slice(&u);
        }
        Field::from_vec(&[Dim::time(self.cfg.horizon), Dim::space(n)], frames)
    }
}

/// Trajectory of `cfg.horizon` frames from a single-frame initial state.
pub fn ks_simulate(cfg: &KsConfig, u0: &Field) -> Result<Field> {
    KsSolver::new(cfg)?.simulate(u0.data())
}

/// Band-limited random initial state: Fourier modes 1..=D/8 with Gaussian
/// coefficients, rescaled to unit RMS.
pub fn ks_initial_condition(cfg: &KsConfig, rng: &mut RngStream) -> Vec<f64> {
    let n = cfg.resolution;
    let modes = (n / 8).max(1);
    let coeffs: Vec<(f64, f64)> = (0..modes).map(|_| (rng.normal(), rng.normal())).collect();
    let mut u: Vec<f64> = (0..n)
        .map(|j| {
            let x = j as f64 / n as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(m, (a, b))| {
                    let ang = std::f64::consts::TAU * (m + 1) as f64 * x;
                    a * ang.cos() + b * ang.sin()
                })
                .sum()
        })
        .collect();
    let rms = (u.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        u.iter_mut().for_each(|v| *v /= rms);
    }
    u
}

/// `[B, T, D]` dataset of independent trajectories; trajectory `b` draws its
/// initial state from child stream `b` of `seed`.
pub fn ks_dataset_generate(cfg: &KsConfig, n_traj: usize, seed: u64) -> Result<Field> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be >= 1".into()));
    }
    let solver = KsSolver::new(cfg)?;
    let root = RngStream::new(seed);
    let run = |b: usize| -> Result<Field> {
        let mut rng = root.derive(b as u64);
        solver.simulate(&ks_initial_condition(cfg, &mut rng))
    };
    #[cfg(feature = "parallel")]
    let trajs: Vec<Field> = {
        use rayon::prelude::*;
        (0..n_traj).into_par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let trajs: Vec<Field> = (0..n_traj).map(run).collect::<Result<_>>()?;
    Field::stack(crate::field::Axis::Batch, &trajs)
}
