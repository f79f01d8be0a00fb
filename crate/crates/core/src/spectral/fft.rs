//! Power-of-two FFTs over real data, backed by `rustfft`.
//!
//! Forward transforms are unnormalized; inverses divide by the point count,
//! so Parseval reads `sum |x|^2 = sum |X|^2 / n`.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::Field;

pub use rustfft::num_complex::Complex64 as Complex;

pub fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Shape(format!("extent {n} is not a power of two")));
    }
    Ok(())
}

/// Signed integer mode of FFT index `i` for length `n` (Nyquist maps to -n/2).
pub fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Cached forward/inverse plans for one length.
#[derive(Clone)]
pub struct Fft1d {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft1d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft1d").field("n", &self.n).finish()
    }
}

impl Fft1d {
    pub fn new(n: usize) -> Result<Self> {
        check_pow2(n)?;
        let mut planner = FftPlanner::new();
        Ok(Fft1d {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward_inplace(&self, buf: &mut [Complex]) {
        self.fwd.process(buf);
    }

    pub fn inverse_inplace(&self, buf: &mut [Complex]) {
        self.inv.process(buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex> {
        let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward_inplace(&mut buf);
        buf
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, c: &[Complex]) -> Vec<f64> {
        let mut buf = c.to_vec();
        self.inverse_inplace(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

/// Cached plans for row-major `rows x cols` grids.
#[derive(Clone, Debug)]
pub struct Fft2d {
    rows: Fft1d,
    cols: Fft1d,
}

impl Fft2d {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        Ok(Fft2d {
            rows: Fft1d::new(rows)?,
            cols: Fft1d::new(cols)?,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.n, self.cols.n)
    }

    fn transform(&self, buf: &mut [Complex], inverse: bool) {
        let (nr, nc) = self.shape();
        for row in buf.chunks_exact_mut(nc) {
            if inverse {
                self.cols.inverse_inplace(row);
            } else {
                self.cols.forward_inplace(row);
            }
        }
        let mut column = vec![Complex::new(0.0, 0.0); nr];
        for c in 0..nc {
            for r in 0..nr {
                column[r] = buf[r * nc + c];
            }
            if inverse {
                self.rows.inverse_inplace(&mut column);
            } else {
                self.rows.forward_inplace(&mut column);
            }
            for r in 0..nr {
                buf[r * nc + c] = column[r];
            }
        }
    }

    pub fn forward_inplace(&self, buf: &mut [Complex]) {
        self.transform(buf, false);
    }

    pub fn inverse_inplace(&self, buf: &mut [Complex]) {
        self.transform(buf, true);
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex> {
        let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward_inplace(&mut buf);
        buf
    }

    pub fn inverse_real(&self, c: &[Complex]) -> Vec<f64> {
        let mut buf = c.to_vec();
        self.inverse_inplace(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

pub fn fft_1d(x: &[f64]) -> Result<Vec<Complex>> {
    Ok(Fft1d::new(x.len())?.forward_real(x))
}

pub fn ifft_1d(c: &[Complex]) -> Result<Vec<Complex>> {
    let plan = Fft1d::new(c.len())?;
    let mut buf = c.to_vec();
    plan.inverse_inplace(&mut buf);
    Ok(buf)
}

pub fn fft_2d(x: &[f64], rows: usize, cols: usize) -> Result<Vec<Complex>> {
    if x.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} values for a {rows}x{cols} grid",
            x.len()
        )));
    }
    Ok(Fft2d::new(rows, cols)?.forward_real(x))
}

pub fn ifft_2d(c: &[Complex], rows: usize, cols: usize) -> Result<Vec<Complex>> {
    if c.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} coefficients for a {rows}x{cols} grid",
            c.len()
        )));
    }
    let plan = Fft2d::new(rows, cols)?;
    let mut buf = c.to_vec();
    plan.inverse_inplace(&mut buf);
    Ok(buf)
}

/// Forward transform of a rank-1 or rank-2 field.
pub fn fft_field(f: &Field) -> Result<Vec<Complex>> {
    match f.shape().as_slice() {
        [n] => fft_1d(&f.data()[..*n]),
        [r, c] => fft_2d(f.data(), *r, *c),
        s => Err(Error::Shape(format!("fft expects rank 1 or 2, got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn naive_dft(x: &[f64]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let ang = -std::f64::consts::TAU * (j * k) as f64 / n as f64;
                        Complex::new(v * ang.cos(), v * ang.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn delta_has_flat_spectrum() {
        let mut x = vec![0.0; 16];
        x[0] = 1.0;
        for c in fft_1d(&x).unwrap() {
            assert!((c.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn cosine_mode_three() {
        let n = 32;
        let x: Vec<f64> = (0..n)
            .map(|j| (std::f64::consts::TAU * 3.0 * j as f64 / n as f64).cos())
            .collect();
        let c = fft_1d(&x).unwrap();
        for (k, v) in c.iter().enumerate() {
            if k == 3 || k == n - 3 {
                assert!((v.norm() - n as f64 / 2.0).abs() < 1e-10);
            } else {
                assert!(v.norm() < 1e-10, "leak at {k}");
            }
        }
    }

    #[test]
    fn matches_naive_dft() {
        let x = RngStream::new(64).normal_vec(64);
        let fast = fft_1d(&x).unwrap();
        let slow = naive_dft(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn roundtrip_and_parseval_2d() {
        let x = RngStream::new(3).normal_vec(16 * 32);
        let c = fft_2d(&x, 16, 32).unwrap();
        let back = ifft_2d(&c, 16, 32).unwrap();
        let norm: f64 = x.iter().map(|v| v * v).sum();
        let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b.re).powi(2)).sum();
        assert!(err.sqrt() / norm.sqrt() < 1e-12);
        let spec: f64 = c.iter().map(|v| v.norm_sqr()).sum::<f64>() / (16.0 * 32.0);
        assert!((spec - norm).abs() / norm < 1e-12);
    }

    #[test]
    fn rejects_non_pow2() {
        assert!(fft_1d(&[0.0; 12]).is_err());
        assert!(fft_2d(&[0.0; 24], 4, 6).is_err());
    }

    #[test]
    fn signed_modes() {
        assert_eq!(signed_mode(0, 8), 0);
        assert_eq!(signed_mode(3, 8), 3);
        assert_eq!(signed_mode(4, 8), -4);
        assert_eq!(signed_mode(7, 8), -1);
    }
}
