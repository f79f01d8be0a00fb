//! Shaped real-valued arrays with tagged axes.
//!
//! A [`Field`] is a flat row-major buffer of `f64` plus a list of [`Dim`]s.
//! Axis tags (batch, time, space, channel) carry the meaning of each
//! dimension so reductions such as "average over batch, space and channel
//! but keep time" can be written by name.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic tag of a field dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Batch,
    Time,
    Space,
    Channel,
}

impl Axis {
    /// Byte tag used by the FLD1 file format.
    pub fn tag(self) -> u8 {
        match self {
            Axis::Batch => 0,
            Axis::Time => 1,
            Axis::Space => 2,
            Axis::Channel => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Axis> {
        match tag {
            0 => Some(Axis::Batch),
            1 => Some(Axis::Time),
            2 => Some(Axis::Space),
            3 => Some(Axis::Channel),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Batch => "batch",
            Axis::Time => "time",
            Axis::Space => "space",
            Axis::Channel => "channel",
        }
    }
}

/// One dimension of a field: its tag and its extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dim {
    pub axis: Axis,
    pub extent: usize,
}

impl Dim {
    pub const fn new(axis: Axis, extent: usize) -> Self {
        Dim { axis, extent }
    }
    pub const fn batch(extent: usize) -> Self {
        Dim::new(Axis::Batch, extent)
    }
    pub const fn time(extent: usize) -> Self {
        Dim::new(Axis::Time, extent)
    }
    pub const fn space(extent: usize) -> Self {
        Dim::new(Axis::Space, extent)
    }
    pub const fn channel(extent: usize) -> Self {
        Dim::new(Axis::Channel, extent)
    }
}

/// Row-major array of finite `f64` values with tagged dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    dims: Vec<Dim>,
    data: Vec<f64>,
}

fn check_dims(dims: &[Dim]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::Shape("empty dims list".into()));
    }
    if let Some(d) = dims.iter().find(|d| d.extent == 0) {
        return Err(Error::Shape(format!("{} axis has extent 0", d.axis.name())));
    }
    Ok(dims.iter().map(|d| d.extent).product())
}

impl Field {
    /// A field with every element equal to `fill`.
    pub fn new(dims: &[Dim], fill: f64) -> Result<Field> {
        let len = check_dims(dims)?;
        if !fill.is_finite() {
            return Err(Error::NonFinite("Field::new fill value".into()));
        }
        Ok(Field {
            dims: dims.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(dims: &[Dim]) -> Result<Field> {
        Field::new(dims, 0.0)
    }

    /// Wraps an existing buffer. Fails on length mismatch or non-finite entries.
    pub fn from_vec(dims: &[Dim], data: Vec<f64>) -> Result<Field> {
        let len = check_dims(dims)?;
        if data.len() != len {
            return Err(Error::LengthMismatch {
                declared: len,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Field::from_vec".into()));
        }
        Ok(Field {
            dims: dims.to_vec(),
            data,
        })
    }

    /// One-dimensional space field; convenient for single states.
    pub fn vector(data: Vec<f64>) -> Result<Field> {
        let n = data.len();
        Field::from_vec(&[Dim::space(n)], data)
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.extent).collect()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mean over all elements.
    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Same data, new dims with the same element count.
    pub fn reshape(&self, dims: &[Dim]) -> Result<Field> {
        Field::from_vec(dims, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::from_vec(&self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, alpha: f64) -> Result<Field> {
        self.map(|v| alpha * v)
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "shape {:?} does not match {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field::from_vec(&self.dims, data)
    }

    /// Number of elements spanned by one step along axis `pos`.
    fn stride(&self, pos: usize) -> usize {
        self.dims[pos + 1..].iter().map(|d| d.extent).product()
    }

    /// Sub-field at index `i` of the leading axis.
    pub fn index_first(&self, i: usize) -> Result<Field> {
        if self.dims.len() < 2 {
            return Err(Error::Shape("cannot index a rank-1 field".into()));
        }
        if i >= self.dims[0].extent {
            return Err(Error::Shape(format!(
                "index {i} out of range for {} axis of extent {}",
                self.dims[0].axis.name(),
                self.dims[0].extent
            )));
        }
        let stride = self.stride(0);
        Field::from_vec(&self.dims[1..], self.data[i * stride..(i + 1) * stride].to_vec())
    }

    /// Stacks same-shape fields along a new leading axis.
    pub fn stack(axis: Axis, parts: &[Field]) -> Result<Field> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero fields".into()))?;
        let mut dims = vec![Dim::new(axis, parts.len())];
        dims.extend_from_slice(&first.dims);
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            if p.shape() != first.shape() {
                return Err(Error::Shape("stacked fields differ in shape".into()));
            }
            data.extend_from_slice(&p.data);
        }
        Field::from_vec(&dims, data)
    }

    /// Mean over the axes at the given positions; remaining dims keep their order.
    ///
    /// Reducing every axis yields a one-element field.
    pub fn reduce_mean(&self, axes: &[usize]) -> Result<Field> {
        let rank = self.dims.len();
        let mut reduce = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(Error::UnknownAxis(format!(
                    "position {a} in a rank-{rank} field"
                )));
            }
            reduce[a] = true;
        }
        let kept: Vec<Dim> = self
            .dims
            .iter()
            .zip(&reduce)
            .filter(|(_, &r)| !r)
            .map(|(d, _)| *d)
            .collect();
        let count: usize = self
            .dims
            .iter()
            .zip(&reduce)
            .filter(|(_, &r)| r)
            .map(|(d, _)| d.extent)
            .product();
        let out_dims = if kept.is_empty() {
            vec![Dim::new(self.dims[0].axis, 1)]
        } else {
            kept
        };
        let out_len: usize = out_dims.iter().map(|d| d.extent).product();
        let mut acc = vec![0.0; out_len];

        let shape = self.shape();
        let mut idx = vec![0usize; rank];
        for &v in &self.data {
            let mut o = 0;
            for (p, &i) in idx.iter().enumerate() {
                if !reduce[p] {
                    o = o * shape[p] + i;
                }
            }
            acc[o] += v;
            for p in (0..rank).rev() {
                idx[p] += 1;
                if idx[p] < shape[p] {
                    break;
                }
                idx[p] = 0;
            }
        }
        let inv = 1.0 / count as f64;
        acc.iter_mut().for_each(|v| *v *= inv);
        Field::from_vec(&out_dims, acc)
    }

    /// Mean over every axis carrying one of the given tags.
    pub fn reduce_mean_over(&self, tags: &[Axis]) -> Result<Field> {
        for t in tags {
            if !self.dims.iter().any(|d| d.axis == *t) {
                return Err(Error::UnknownAxis(format!(
                    "field has no {} axis",
                    t.name()
                )));
            }
        }
        let positions: Vec<usize> = self
            .dims
            .iter()
            .enumerate()
            .filter(|(_, d)| tags.contains(&d.axis))
            .map(|(i, _)| i)
            .collect();
        self.reduce_mean(&positions)
    }

    /// Positions of the dims tagged `axis`.
    pub fn positions_of(&self, axis: Axis) -> Vec<usize> {
        self.dims
            .iter()
            .enumerate()
            .filter(|(_, d)| d.axis == axis)
            .map(|(i, _)| i)
            .collect()
    }
}
