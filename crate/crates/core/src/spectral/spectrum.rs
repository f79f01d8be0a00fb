//! Radially binned energy spectra and normalized value histograms.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::fft::{signed_mode, Fft2d};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::io::write_csv;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub bins: Vec<usize>,
    pub energy: Vec<f64>,
}

impl Spectrum {
    pub fn total(&self) -> f64 {
        self.energy.iter().sum()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(
            path,
            &["bin", "value"],
            self.bins
                .iter()
                .zip(&self.energy)
                .map(|(b, e)| [b.to_string(), e.to_string()]),
        )
    }
}

fn square_grid(f: &Field) -> Result<usize> {
    let shape = f.shape();
    let (r, c) = match shape.as_slice() {
        [r, c] => (*r, *c),
        [1, r, c] => (*r, *c),
        s => return Err(Error::Shape(format!("expected an N x N field, got {s:?}"))),
    };
    if r != c {
        return Err(Error::Shape(format!("non-square grid {r} x {c}")));
    }
    Ok(r)
}

fn binned(f: &Field, weight: impl Fn(f64) -> f64) -> Result<Spectrum> {
    let n = square_grid(f)?;
    let hat = Fft2d::new(n, n)?.forward_real(f.data());
    let max_bin = ((2.0_f64).sqrt() * (n / 2) as f64 + 0.5).floor() as usize;
    let mut energy = vec![0.0; max_bin + 1];
    let norm = 1.0 / (n as f64).powi(4);
    for r in 0..n {
        let ky = signed_mode(r, n) as f64;
        for c in 0..n {
            let kx = signed_mode(c, n) as f64;
            let k2 = kx * kx + ky * ky;
            let bin = (k2.sqrt() + 0.5).floor() as usize;
            energy[bin] += 0.5 * hat[r * n + c].norm_sqr() * norm * weight(k2);
        }
    }
    Ok(Spectrum {
        bins: (0..=max_bin).collect(),
        energy,
    })
}

/// Spectrum of a scalar field: bin `k` collects `|q_hat|^2 / 2` (normalized)
/// of the modes with `|kappa|` in `[k - 1/2, k + 1/2)`. The bins sum to
/// `mean(q^2) / 2`.
pub fn energy_spectrum(f: &Field) -> Result<Spectrum> {
    binned(f, |_| 1.0)
}

/// Kinetic energy spectrum of the velocity induced by a vorticity field
/// (`|u_hat|^2 = |w_hat|^2 / |kappa|^2`, integer-mode wavenumbers).
pub fn kinetic_energy_spectrum(vorticity: &Field) -> Result<Spectrum> {
    binned(vorticity, |k2| if k2 == 0.0 { 0.0 } else { 1.0 / k2 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` edges.
    pub edges: Vec<f64>,
    /// Fraction of values per bin; sums to 1.
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(
            path,
            &["bin", "value"],
            self.centers()
                .iter()
                .zip(&self.mass)
                .map(|(c, m)| [c.to_string(), m.to_string()]),
        )
    }
}

/// Normalized histogram over `[lo, hi]`; values outside clamp to the end bins.
pub fn vorticity_histogram(f: &Field, n_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if n_bins < 2 {
        return Err(Error::InvalidArgument("n_bins must be >= 2".into()));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("degenerate range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in f.data() {
        let b = ((v - lo) / width).floor();
        let b = if b < 0.0 { 0 } else { (b as usize).min(n_bins - 1) };
        counts[b] += 1;
    }
    let total = f.len() as f64;
    Ok(Histogram {
        edges: (0..=n_bins).map(|i| lo + width * i as f64).collect(),
        mass: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Dim;
    use crate::rng::RngStream;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn grid(n: usize, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut d = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let tau = std::f64::consts::TAU;
                d.push(f(tau * c as f64 / n as f64, tau * r as f64 / n as f64));
            }
        }
        Field::from_vec(&[Dim::space(n), Dim::space(n)], d).unwrap()
    }

    #[test]
    fn zero_field_zero_spectrum() {
        let s = energy_spectrum(&Field::zeros(&[Dim::space(8), Dim::space(8)]).unwrap()).unwrap();
        assert!(s.energy.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn single_mode_lands_in_bin_five() {
        let f = grid(32, |x, y| (3.0 * x + 4.0 * y).cos());
        let s = energy_spectrum(&f).unwrap();
        let total = s.total();
        assert!((s.energy[5] - total).abs() < 1e-12 * total);
        assert!((total - 0.25).abs() < 1e-12);
    }

    #[test]
    fn white_noise_parseval() {
        let f = RngStream::new(1).standard_normal(&[Dim::space(32), Dim::space(32)]).unwrap();
        let s = energy_spectrum(&f).unwrap();
        let grid_energy = 0.5 * f.data().iter().map(|v| v * v).sum::<f64>() / f.len() as f64;
        assert!((s.total() - grid_energy).abs() < 1e-10 * grid_energy);
    }

    #[test]
    fn spectrum_scales_quadratically() {
        let f = RngStream::new(2).standard_normal(&[Dim::space(16), Dim::space(16)]).unwrap();
        let a = energy_spectrum(&f).unwrap();
        let b = energy_spectrum(&f.scale(-3.0).unwrap()).unwrap();
        for (x, y) in a.energy.iter().zip(&b.energy) {
            assert!((9.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn kinetic_spectrum_of_taylor_green() {
        // w = 2 cos x cos y gives u = -cos x sin y, v = sin x cos y, so mean(|u|^2)/2 = 1/4
        let f = grid(16, |x, y| 2.0 * x.cos() * y.cos());
        let s = kinetic_energy_spectrum(&f).unwrap();
        assert!((s.energy[1] - 0.25).abs() < 1e-12, "{:?}", s.energy);
    }

    #[test]
    fn non_square_rejected() {
        let f = Field::zeros(&[Dim::space(8), Dim::space(16)]).unwrap();
        assert!(energy_spectrum(&f).is_err());
    }

    #[test]
    fn histogram_edge_cases() {
        let c = Field::new(&[Dim::space(10)], 0.3).unwrap();
        let h = vorticity_histogram(&c, 4, (-1.0, 1.0)).unwrap();
        assert_eq!(h.mass.iter().filter(|&&m| m == 1.0).count(), 1);

        let pm = Field::vector(vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let h = vorticity_histogram(&pm, 2, (-2.0, 2.0)).unwrap();
        assert_eq!(h.mass, vec![0.5, 0.5]);

        let out = Field::vector(vec![-10.0, 10.0]).unwrap();
        let h = vorticity_histogram(&out, 3, (-1.0, 1.0)).unwrap();
        assert_eq!(h.mass, vec![0.5, 0.0, 0.5]);

        assert!(vorticity_histogram(&c, 1, (0.0, 1.0)).is_err());
        assert!(vorticity_histogram(&c, 4, (1.0, 1.0)).is_err());
    }

    #[test]
    fn gaussian_histogram_matches_cdf() {
        let f = RngStream::new(77).standard_normal(&[Dim::space(100_000)]).unwrap();
        let h = vorticity_histogram(&f, 50, (-4.0, 4.0)).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let sum: f64 = h.mass.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for (i, m) in h.mass.iter().enumerate() {
            let (a, b) = (h.edges[i], h.edges[i + 1]);
            let lo = if i == 0 { 0.0 } else { normal.cdf(a) };
            let hi = if i == 49 { 1.0 } else { normal.cdf(b) };
            assert!((m - (hi - lo)).abs() < 0.01);
        }
    }
}
