//! Relative error metrics and the vorticity residual loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Axis, Dim, Field};
use crate::spectral::ns::{NsConfig, NsOperator};

/// `(B, T, frame width)` of a `[B, T, ...]` or `[T, ...]` field.
pub(crate) fn bt_layout(f: &Field) -> Result<(usize, usize, usize)> {
    let dims = f.dims();
    let rest = if dims.first().map(|d| d.axis) == Some(Axis::Batch) {
        &dims[1..]
    } else {
        dims
    };
    let b = if rest.len() < dims.len() { dims[0].extent } else { 1 };
    match rest.split_first() {
        Some((t, tail)) if t.axis == Axis::Time && !tail.is_empty() => {
            Ok((b, t.extent, tail.iter().map(|d| d.extent).product()))
        }
        _ => Err(Error::Shape(format!(
            "expected [batch, time, ...] or [time, ...], got {:?}",
            f.shape()
        ))),
    }
}

fn same_dims(a: &Field, b: &Field) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "prediction dims {:?} differ from truth dims {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn norm(x: impl Iterator<Item = f64>) -> f64 {
    x.map(|v| v * v).sum::<f64>().sqrt()
}

/// `e(t) = (1/B) sum_b ||pred(b,t) - truth(b,t)|| / ||truth(b,t)||`, norms over
/// each whole frame.
pub fn relative_l2_error_refiner(pred: &Field, truth: &Field) -> Result<Vec<f64>> {
    same_dims(pred, truth)?;
    let (b, t, w) = bt_layout(truth)?;
    let (p, y) = (pred.data(), truth.data());
    let mut e = vec![0.0; t];
    for bi in 0..b {
        for (ti, et) in e.iter_mut().enumerate() {
            let r = (bi * t + ti) * w..(bi * t + ti + 1) * w;
            let den = norm(y[r.clone()].iter().copied());
            if den == 0.0 {
                return Err(Error::ZeroNormReference { batch: bi, time: ti });
            }
            let num = norm(p[r.clone()].iter().zip(&y[r]).map(|(a, c)| a - c));
            *et += num / den;
        }
    }
    Ok(e.into_iter().map(|v| v / b as f64).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    /// Norms over the spatial entries of each `(b, t, c)` slice.
    SpatialNorm,
    /// Per-entry `|pred - truth| / max(|truth|, floor)`.
    LiteralScalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcdmError {
    pub series: Vec<f64>,
    /// Denominators replaced by the floor.
    pub floored: usize,
}

/// Error averaged over batch, channel and (in literal mode) space for
/// `[B, T, D..., C]` fields; a trailing channel axis is optional.
pub fn relative_l2_error_acdm(
    pred: &Field,
    truth: &Field,
    mode: ErrorMode,
    eps_floor: f64,
) -> Result<AcdmError> {
    same_dims(pred, truth)?;
    if !(eps_floor > 0.0) {
        return Err(Error::InvalidArgument("error floor must be positive".into()));
    }
    let (b, t, w) = bt_layout(truth)?;
    let c = match truth.dims().last() {
        Some(Dim {
            axis: Axis::Channel,
            extent,
        }) => *extent,
        _ => 1,
    };
    let d = w / c;
    let (p, y) = (pred.data(), truth.data());
    let mut floored = 0;
    let mut e = vec![0.0; t];
    for bi in 0..b {
        for (ti, et) in e.iter_mut().enumerate() {
            let base = (bi * t + ti) * w;
            for ci in 0..c {
                let at = |di: usize| base + di * c + ci;
                match mode {
                    ErrorMode::SpatialNorm => {
                        let num = norm((0..d).map(|di| p[at(di)] - y[at(di)]));
                        let mut den = norm((0..d).map(|di| y[at(di)]));
                        if den < eps_floor {
                            den = eps_floor;
                            floored += 1;
                        }
                        *et += num / den;
                    }
                    ErrorMode::LiteralScalar => {
                        for di in 0..d {
                            let mut den = y[at(di)].abs();
                            if den < eps_floor {
                                den = eps_floor;
                                floored += 1;
                            }
                            *et += (p[at(di)] - y[at(di)]).abs() / den / d as f64;
                        }
                    }
                }
            }
        }
    }
    let series = e.into_iter().map(|v| v / (b * c) as f64).collect();
    Ok(AcdmError { series, floored })
}

/// `r(b, t) = mean_d |G(pred)_d|^2 / ||truth(b, t)||^2` for every interior
/// frame of `[B, T, N, N]` (or `[T, N, N]`) vorticity; returns `[B, T-2]`.
pub fn residual_loss(pred: &Field, truth: &Field, cfg: &NsConfig) -> Result<Field> {
    same_dims(pred, truth)?;
    let (b, t, w) = bt_layout(truth)?;
    let n = cfg.grid;
    if w != n * n {
        return Err(Error::Shape(format!(
            "frames of {w} values do not match an {n} x {n} grid"
        )));
    }
    if t < 3 {
        return Err(Error::InvalidArgument("residual needs at least three frames".into()));
    }
    let op = NsOperator::new(cfg)?;
    let (p, y) = (pred.data(), truth.data());
    let frame = |d: &'_ [f64], bi: usize, ti: usize| -> Vec<f64> {
        d[(bi * t + ti) * w..(bi * t + ti + 1) * w].to_vec()
    };
    let mut out = Vec::with_capacity(b * (t - 2));
    for bi in 0..b {
        for ti in 1..t - 1 {
            let g = op.residual_frame(&frame(p, bi, ti - 1), &frame(p, bi, ti), &frame(p, bi, ti + 1))?;
            let den: f64 = frame(y, bi, ti).iter().map(|v| v * v).sum();
            if den == 0.0 {
                return Err(Error::ZeroNormReference { batch: bi, time: ti });
            }
            out.push(g.iter().map(|v| v * v).sum::<f64>() / w as f64 / den);
        }
    }
    Field::from_vec(&[Dim::batch(b), Dim::time(t - 2)], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::spectral::ns::taylor_green;

    fn rand(dims: &[Dim], seed: u64) -> Field {
        RngStream::new(seed).standard_normal(dims).unwrap()
    }

    #[test]
    fn refiner_error_examples() {
        let dims = [Dim::batch(2), Dim::time(3), Dim::space(8)];
        let y = rand(&dims, 1);
        assert!(relative_l2_error_refiner(&y, &y).unwrap().iter().all(|&e| e == 0.0));
        let e = relative_l2_error_refiner(&y.scale(2.0).unwrap(), &y).unwrap();
        assert!(e.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn refiner_error_matches_loops() {
        let dims = [Dim::batch(2), Dim::time(3), Dim::space(8)];
        let (p, y) = (rand(&dims, 2), rand(&dims, 3));
        let e = relative_l2_error_refiner(&p, &y).unwrap();
        for t in 0..3 {
            let mut acc = 0.0;
            for b in 0..2 {
                let (mut num, mut den) = (0.0, 0.0);
                for d in 0..8 {
                    let i = b * 24 + t * 8 + d;
                    num += (p.data()[i] - y.data()[i]).powi(2);
                    den += y.data()[i].powi(2);
                }
                acc += num.sqrt() / den.sqrt();
            }
            assert!((e[t] - acc / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_truth_frame_is_an_error() {
        let y = Field::zeros(&[Dim::time(2), Dim::space(3)]).unwrap();
        assert!(matches!(
            relative_l2_error_refiner(&y, &y),
            Err(Error::ZeroNormReference { batch: 0, time: 0 })
        ));
    }

    #[test]
    fn acdm_modes() {
        let dims = [Dim::batch(2), Dim::time(4), Dim::space(6), Dim::channel(2)];
        let y = rand(&dims, 5).map(|v| v.signum() * (v.abs() + 0.1)).unwrap();
        for mode in [ErrorMode::SpatialNorm, ErrorMode::LiteralScalar] {
            let zero = relative_l2_error_acdm(&y, &y, mode, 1e-12).unwrap();
            assert!(zero.series.iter().all(|&e| e == 0.0));
            let half = relative_l2_error_acdm(&y.scale(1.5).unwrap(), &y, mode, 1e-12).unwrap();
            assert!(half.series.iter().all(|&e| (e - 0.5).abs() < 1e-12), "{mode:?}");
            assert_eq!(half.floored, 0);
        }
        let z = Field::zeros(&dims).unwrap();
        let r = relative_l2_error_acdm(&y, &z, ErrorMode::LiteralScalar, 1e-3).unwrap();
        assert_eq!(r.floored, z.len());
    }

    #[test]
    fn errors_are_scale_invariant() {
        let dims = [Dim::batch(2), Dim::time(3), Dim::space(5)];
        let (p, y) = (rand(&dims, 7), rand(&dims, 8));
        let a = relative_l2_error_refiner(&p, &y).unwrap();
        let b = relative_l2_error_refiner(&p.scale(-3.5).unwrap(), &y.scale(-3.5).unwrap()).unwrap();
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_loss_on_exact_and_noisy_flow() {
        let cfg = NsConfig::new(16, 0.05, 1e-3);
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 1e-3).collect();
        let w = taylor_green(&cfg, 1.0, &times).unwrap();
        let exact = residual_loss(&w, &w, &cfg).unwrap();
        assert_eq!(exact.shape(), vec![1, 3]);
        assert!(exact.data().iter().all(|&r| r < 1e-6), "{:?}", exact.data());
        let noisy = w
            .zip_with(&rand(w.dims(), 3), |a, n| a + 0.5 * n)
            .unwrap();
        let r = residual_loss(&noisy, &w, &cfg).unwrap();
        let base = exact.data().iter().cloned().fold(1e-30, f64::max);
        assert!(r.data().iter().all(|&v| v > 100.0 * base));
    }
}
