//! 2D incompressible Navier-Stokes in vorticity form on a periodic square,
//!
//! `G(w) = dw/dt + u . grad(w) - nu lap(w) - f`,
//!
//! with the velocity recovered spectrally from the streamfunction
//! (`lap(psi) = -w`, `u = psi_y`, `v = -psi_x`) and `dw/dt` taken as a central
//! difference across adjacent frames. Grids are row-major `[y][x]`.

use serde::{Deserialize, Serialize};

use super::fft::{signed_mode, Complex, Fft2d};
use crate::error::{Error, Result};
use crate::field::{Axis, Dim, Field};
use crate::rng::RngStream;

fn default_domain() -> f64 {
    std::f64::consts::TAU
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsConfig {
    /// Grid points per side (power of two).
    pub grid: usize,
    /// Kinematic viscosity, 1/Re.
    pub viscosity: f64,
    /// Optional forcing, `grid * grid` values row-major.
    #[serde(default)]
    pub forcing: Option<Vec<f64>>,
    /// Time between stored frames.
    pub dt_frames: f64,
    #[serde(default = "default_domain")]
    pub domain_length: f64,
}

impl NsConfig {
    pub fn new(grid: usize, viscosity: f64, dt_frames: f64) -> Self {
        NsConfig {
            grid,
            viscosity,
            forcing: None,
            dt_frames,
            domain_length: default_domain(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity > 0.0) {
            return Err(Error::InvalidArgument("viscosity must be > 0".into()));
        }
        if !(self.dt_frames > 0.0) {
            return Err(Error::InvalidArgument("dt_frames must be > 0".into()));
        }
        if let Some(f) = &self.forcing {
            if f.len() != self.grid * self.grid {
                return Err(Error::Shape(format!(
                    "forcing has {} values for a {0}x{0} grid",
                    self.grid
                )));
            }
        }
        Ok(())
    }
}

/// Spectral operators for one grid; reusable across frames.
#[derive(Clone, Debug)]
pub struct NsOperator {
    cfg: NsConfig,
    fft: Fft2d,
    /// Derivative wavenumbers (Nyquist zeroed), indexed by column / row.
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// |k|^2 per grid index, Nyquist included.
    k2: Vec<f64>,
}

impl NsOperator {
    pub fn new(cfg: &NsConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.grid;
        let fft = Fft2d::new(n, n)?;
        let scale = std::f64::consts::TAU / cfg.domain_length;
        let kd: Vec<f64> = (0..n)
            .map(|i| {
                if i == n / 2 {
                    0.0
                } else {
                    scale * signed_mode(i, n) as f64
                }
            })
            .collect();
        let kf: Vec<f64> = (0..n).map(|i| scale * signed_mode(i, n) as f64).collect();
        let mut k2 = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                k2[r * n + c] = kf[r] * kf[r] + kf[c] * kf[c];
            }
        }
        Ok(NsOperator {
            cfg: cfg.clone(),
            fft,
            kx: kd.clone(),
            ky: kd,
            k2,
        })
    }

    pub fn config(&self) -> &NsConfig {
        &self.cfg
    }

    pub fn grid(&self) -> usize {
        self.cfg.grid
    }

    fn hat(&self, w: &[f64]) -> Vec<Complex> {
        self.fft.forward_real(w)
    }

    fn multiply(&self, hat: &[Complex], m: impl Fn(usize, usize) -> Complex) -> Vec<f64> {
        let n = self.cfg.grid;
        let mut buf: Vec<Complex> = hat
            .iter()
            .enumerate()
            .map(|(i, &c)| c * m(i / n, i % n))
            .collect();
        self.fft.inverse_inplace(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    pub fn dx(&self, w: &[f64]) -> Vec<f64> {
        self.multiply(&self.hat(w), |_, c| Complex::new(0.0, self.kx[c]))
    }

    pub fn dy(&self, w: &[f64]) -> Vec<f64> {
        self.multiply(&self.hat(w), |r, _| Complex::new(0.0, self.ky[r]))
    }

    pub fn laplacian(&self, w: &[f64]) -> Vec<f64> {
        let n = self.cfg.grid;
        self.multiply(&self.hat(w), |r, c| Complex::new(-self.k2[r * n + c], 0.0))
    }

    /// Inverse of `-lap` on the zero-mean subspace.
    fn inv_neg_laplacian_factor(&self, r: usize, c: usize) -> f64 {
        let k2 = self.k2[r * self.cfg.grid + c];
        if k2 == 0.0 {
            0.0
        } else {
            1.0 / k2
        }
    }

    /// Velocity `(u, v)` from vorticity.
    pub fn velocity(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hat = self.hat(w);
        let u = self.multiply(&hat, |r, c| {
            Complex::new(0.0, self.ky[r] * self.inv_neg_laplacian_factor(r, c))
        });
        let v = self.multiply(&hat, |r, c| {
            Complex::new(0.0, -self.kx[c] * self.inv_neg_laplacian_factor(r, c))
        });
        (u, v)
    }

    /// Streamfunction: `lap(psi) = -w`.
    pub fn streamfunction(&self, w: &[f64]) -> Vec<f64> {
        self.multiply(&self.hat(w), |r, c| {
            Complex::new(self.inv_neg_laplacian_factor(r, c), 0.0)
        })
    }

    /// `u . grad(w)`.
    pub fn advection(&self, w: &[f64]) -> Vec<f64> {
        let (u, v) = self.velocity(w);
        let wx = self.dx(w);
        let wy = self.dy(w);
        (0..w.len()).map(|i| u[i] * wx[i] + v[i] * wy[i]).collect()
    }

    fn check_frame(&self, w: &[f64]) -> Result<()> {
        let n = self.cfg.grid;
        if w.len() != n * n {
            return Err(Error::Shape(format!(
                "frame has {} values for a {n}x{n} grid",
                w.len()
            )));
        }
        Ok(())
    }

    /// Residual of the middle frame of three consecutive frames.
    pub fn residual_frame(&self, prev: &[f64], cur: &[f64], next: &[f64]) -> Result<Vec<f64>> {
        self.check_frame(prev)?;
        self.check_frame(cur)?;
        self.check_frame(next)?;
        let adv = self.advection(cur);
        let lap = self.laplacian(cur);
        let inv2dt = 0.5 / self.cfg.dt_frames;
        let nu = self.cfg.viscosity;
        Ok((0..cur.len())
            .map(|i| {
                let f = self.cfg.forcing.as_ref().map_or(0.0, |f| f[i]);
                (next[i] - prev[i]) * inv2dt + adv[i] - nu * lap[i] - f
            })
            .collect())
    }

    /// Transposed Jacobian of [`residual_frame`](Self::residual_frame)
    /// applied to `g`: returns the gradients with respect to
    /// `(prev, cur, next)` of `sum(g * G)`.
    pub fn residual_adjoint(&self, cur: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let inv2dt = 0.5 / self.cfg.dt_frames;
        let nu = self.cfg.viscosity;
        let d_prev: Vec<f64> = g.iter().map(|v| -v * inv2dt).collect();
        let d_next: Vec<f64> = g.iter().map(|v| v * inv2dt).collect();

        let (u, v) = self.velocity(cur);
        let wx = self.dx(cur);
        let wy = self.dy(cur);
        let n2 = cur.len();
        let g_wx: Vec<f64> = (0..n2).map(|i| g[i] * wx[i]).collect();
        let g_wy: Vec<f64> = (0..n2).map(|i| g[i] * wy[i]).collect();
        let g_u: Vec<f64> = (0..n2).map(|i| g[i] * u[i]).collect();
        let g_v: Vec<f64> = (0..n2).map(|i| g[i] * v[i]).collect();
        // velocity perturbation terms: -P dy(g wx) + P dx(g wy)
        let a = self.multiply(&self.hat(&g_wx), |r, c| {
            Complex::new(0.0, -self.ky[r] * self.inv_neg_laplacian_factor(r, c))
        });
        let b = self.multiply(&self.hat(&g_wy), |r, c| {
            Complex::new(0.0, self.kx[c] * self.inv_neg_laplacian_factor(r, c))
        });
        let cx = self.dx(&g_u);
        let cy = self.dy(&g_v);
        let lap_g = self.laplacian(g);
        let d_cur = (0..n2)
            .map(|i| a[i] + b[i] - cx[i] - cy[i] - nu * lap_g[i])
            .collect();
        (d_prev, d_cur, d_next)
    }
}

fn frame_grid(traj: &Field) -> Result<(usize, usize)> {
    match traj.shape().as_slice() {
        [t, r, c] if r == c => Ok((*t, *r)),
        s => Err(Error::Shape(format!(
            "expected a [T, N, N] vorticity trajectory, got {s:?}"
        ))),
    }
}

/// Point-wise residual of every interior frame: `[T, N, N] -> [T-2, N, N]`.
pub fn ns_vorticity_residual(traj: &Field, cfg: &NsConfig) -> Result<Field> {
    let (t, n) = frame_grid(traj)?;
    if n != cfg.grid {
        return Err(Error::Shape(format!(
            "trajectory grid {n} does not match config grid {}",
            cfg.grid
        )));
    }
    if t < 3 {
        return Err(Error::Shape(format!(
            "residual needs at least 3 frames, got {t}"
        )));
    }
    let op = NsOperator::new(cfg)?;
    let n2 = n * n;
    let d = traj.data();
    let mut out = Vec::with_capacity((t - 2) * n2);
    for k in 1..t - 1 {
        out.extend(op.residual_frame(
            &d[(k - 1) * n2..k * n2],
            &d[k * n2..(k + 1) * n2],
            &d[(k + 1) * n2..(k + 2) * n2],
        )?);
    }
    Field::from_vec(&[Dim::time(t - 2), Dim::space(n), Dim::space(n)], out)
}

fn grid_coord(j: usize, n: usize, length: f64) -> f64 {
    length * j as f64 / n as f64
}

/// Taylor-Green vortex `w = 2 k^2 cos(k x) cos(k y) exp(-2 nu k^2 t)` sampled at `times`.
pub fn taylor_green(cfg: &NsConfig, kappa: f64, times: &[f64]) -> Result<Field> {
    let n = cfg.grid;
    let mut data = Vec::with_capacity(times.len() * n * n);
    for &t in times {
        let decay = (-2.0 * cfg.viscosity * kappa * kappa * t).exp();
        for r in 0..n {
            let y = grid_coord(r, n, cfg.domain_length);
            for c in 0..n {
                let x = grid_coord(c, n, cfg.domain_length);
                data.push(2.0 * kappa * kappa * (kappa * x).cos() * (kappa * y).cos() * decay);
            }
        }
    }
    Field::from_vec(&[Dim::time(times.len()), Dim::space(n), Dim::space(n)], data)
}

/// Integer wavevectors `(kx, ky)` with `kx^2 + ky^2 = shell`, one per `+-` pair.
fn shell_modes(shell: i64) -> Vec<(i64, i64)> {
    let r = (shell as f64).sqrt().ceil() as i64;
    let mut out = Vec::new();
    for ky in 0..=r {
        for kx in -r..=r {
            if kx * kx + ky * ky == shell && (ky > 0 || kx > 0) {
                out.push((kx, ky));
            }
        }
    }
    out
}

/// Shells of |k|^2 used by the toy dataset; each has at least two wavevectors.
pub const TOY_SHELLS: [i64; 4] = [1, 2, 4, 5];

/// `[B, T, N, N]` exact decaying solutions. Each trajectory is a random
/// combination of Fourier modes on a single shell `|k|^2 = K`, for which the
/// advection term vanishes and `w(t) = w(0) exp(-nu K t)`.
pub fn ns_shell_dataset(cfg: &NsConfig, n_traj: usize, frames: usize, seed: u64) -> Result<Field> {
    if n_traj == 0 || frames == 0 {
        return Err(Error::InvalidArgument("n_traj and frames must be >= 1".into()));
    }
    let n = cfg.grid;
    let scale = std::f64::consts::TAU / cfg.domain_length;
    let root = RngStream::new(seed);
    let mut trajs = Vec::with_capacity(n_traj);
    for b in 0..n_traj {
        let mut rng = root.derive(b as u64);
        let shell = TOY_SHELLS[rng.below(TOY_SHELLS.len() as u64) as usize];
        let modes: Vec<((i64, i64), f64, f64)> = shell_modes(shell)
            .into_iter()
            .map(|m| (m, rng.normal(), rng.normal()))
            .collect();
        let mut w0 = vec![0.0; n * n];
        for r in 0..n {
            let y = grid_coord(r, n, cfg.domain_length);
            for c in 0..n {
                let x = grid_coord(c, n, cfg.domain_length);
                w0[r * n + c] = modes
                    .iter()
                    .map(|((kx, ky), a, bb)| {
                        let ph = scale * (*kx as f64 * x + *ky as f64 * y);
                        a * ph.cos() + bb * ph.sin()
                    })
                    .sum();
            }
        }
        let rms = (w0.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64).sqrt();
        let k2 = scale * scale * shell as f64;
        let mut data = Vec::with_capacity(frames * n * n);
        for f in 0..frames {
            let decay = (-cfg.viscosity * k2 * f as f64 * cfg.dt_frames).exp();
            data.extend(w0.iter().map(|v| v / rms * decay));
        }
        trajs.push(Field::from_vec(
            &[Dim::time(frames), Dim::space(n), Dim::space(n)],
            data,
        )?);
    }
    Field::stack(Axis::Batch, &trajs)
}

/// Low-fidelity version of an `N x N` frame: block average by `factor`, then
/// nearest-neighbour upsampling back to `N x N`.
pub fn degrade(frame: &[f64], n: usize, factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || n % factor != 0 || frame.len() != n * n {
        return Err(Error::Shape(format!(
            "cannot degrade a {} value frame of side {n} by {factor}",
            frame.len()
        )));
    }
    let m = n / factor;
    let mut coarse = vec![0.0; m * m];
    for r in 0..n {
        for c in 0..n {
            coarse[(r / factor) * m + c / factor] += frame[r * n + c];
        }
    }
    let norm = 1.0 / (factor * factor) as f64;
    Ok((0..n * n)
        .map(|i| coarse[(i / n / factor) * m + (i % n) / factor] * norm)
        .collect())
}
