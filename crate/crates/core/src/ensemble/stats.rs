//! Ensemble mean and point-wise variance.

use crate::error::{Error, Result};
use crate::field::{Axis, Field};

use super::batch::EnsembleBatch;

/// What deviations are measured from.
#[derive(Clone, Copy, Debug)]
pub enum Center<'a> {
    SampleMean,
    Truth(&'a Field),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divisor {
    /// `J - 1`
    Bessel,
    /// `J`
    Population,
}

/// Element-wise mean across members, accumulated incrementally so that
/// agreeing members reproduce their common value exactly.
pub fn ensemble_mean(b: &EnsembleBatch) -> Field {
    let mut acc = b.samples()[0].data().to_vec();
    for (k, s) in b.samples().iter().enumerate().skip(1) {
        let w = 1.0 / (k + 1) as f64;
        for (a, v) in acc.iter_mut().zip(s.data()) {
            *a += (v - *a) * w;
        }
    }
    Field::from_vec(b.dims(), acc).expect("mean of finite samples")
}

/// Per-entry variance across members.
pub fn pointwise_variance(b: &EnsembleBatch, center: Center<'_>, divisor: Divisor) -> Result<Field> {
    let j = b.len();
    let denom = match divisor {
        Divisor::Bessel if j < 2 => {
            return Err(Error::InvalidArgument(
                "a J - 1 divisor needs at least two samples".into(),
            ))
        }
        Divisor::Bessel => (j - 1) as f64,
        Divisor::Population => j as f64,
    };
    let mean;
    let c = match center {
        Center::SampleMean => {
            mean = ensemble_mean(b);
            &mean
        }
        Center::Truth(y) => {
            if y.dims() != b.dims() {
                return Err(Error::Shape(format!(
                    "truth dims {:?} differ from sample dims {:?}",
                    y.shape(),
                    b.samples()[0].shape()
                )));
            }
            y
        }
    };
    let mut acc = vec![0.0; c.len()];
    for s in b.samples() {
        for ((a, v), m) in acc.iter_mut().zip(s.data()).zip(c.data()) {
            *a += (v - m) * (v - m);
        }
    }
    Field::from_vec(b.dims(), acc.into_iter().map(|v| v / denom).collect())
}

/// Average of a variance field over the given axes (e.g. everything but time
/// gives a per-step series).
pub fn mean_variance(v: &Field, axes: &[Axis]) -> Result<Field> {
    v.reduce_mean_over(axes)
}

/// Average over every entry.
pub fn mean_variance_scalar(v: &Field) -> f64 {
    v.mean()
}

/// Per-time series: averages every axis except the (single) time axis.
pub fn variance_series(v: &Field) -> Result<Vec<f64>> {
    let t = v.positions_of(Axis::Time);
    if t.len() != 1 {
        return Err(Error::UnknownAxis("expected exactly one time axis".into()));
    }
    let others: Vec<usize> = (0..v.rank()).filter(|&p| p != t[0]).collect();
    if others.is_empty() {
        return Ok(v.data().to_vec());
    }
    Ok(v.reduce_mean(&others)?.into_data())
}
