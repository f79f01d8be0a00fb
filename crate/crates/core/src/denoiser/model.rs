use ndarray::{Array1, Array2, Axis as NdAxis};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Dim, Field};
use crate::io::{read_archive, read_json, write_archive, write_json};
use crate::rng::RngStream;

/// Width of the sinusoidal step embedding.
pub const TIME_FEATURES: usize = 16;

/// Sinusoidal features of a denoising step index.
pub fn time_embedding(step: usize) -> [f64; TIME_FEATURES] {
    let half = TIME_FEATURES / 2;
    let mut out = [0.0; TIME_FEATURES];
    for i in 0..half {
        let freq = (-(1000.0_f64).ln() * i as f64 / half as f64).exp();
        let a = step as f64 * freq;
        out[i] = a.sin();
        out[half + i] = a.cos();
    }
    out
}

/// Anything that predicts the injected noise (or, at refinement step 0, the
/// state itself) from a noisy state, a step index and conditioning.
///
/// Batches are flat row-major buffers: `x` holds `rows * state_dim` values,
/// `cond` holds `rows * cond_dim`.
pub trait NoisePredictor: Sync {
    fn state_dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    fn predict(&self, x: &[f64], step: usize, cond: &[f64]) -> Result<Vec<f64>>;

    /// Rows in `x`, validating both buffers.
    fn rows_of(&self, x: &[f64], cond: &[f64]) -> Result<usize> {
        let s = self.state_dim();
        if s == 0 || x.len() % s != 0 {
            return Err(Error::Shape(format!(
                "state buffer of {} values is not a multiple of width {s}",
                x.len()
            )));
        }
        let rows = x.len() / s;
        if cond.len() != rows * self.cond_dim() {
            return Err(Error::Shape(format!(
                "conditioning has {} values, expected {} rows x {}",
                cond.len(),
                rows,
                self.cond_dim()
            )));
        }
        Ok(rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub state_dim: usize,
    pub cond_dim: usize,
    pub hidden: usize,
    /// Number of hidden (tanh) layers.
    pub depth: usize,
    /// Largest step index the model is trained on.
    pub max_step: usize,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        self.state_dim + self.cond_dim + TIME_FEATURES
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument(
                "state_dim and hidden must be positive".into(),
            ));
        }
        if !(1..=4).contains(&self.depth) {
            return Err(Error::InvalidArgument(format!(
                "depth {} outside 1..=4",
                self.depth
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each dense layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.input_dim(), self.hidden)];
        for _ in 1..self.depth {
            shapes.push((self.hidden, self.hidden));
        }
        shapes.push((self.hidden, self.state_dim));
        shapes
    }
}

/// One fully connected layer; `weight` is `fan_out x fan_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected noise-prediction network: input is
/// `[state, conditioning, step embedding]`, tanh between layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserModel {
    pub arch: Architecture,
    pub layers: Vec<Dense>,
}

/// Per-layer activations kept for the backward pass.
pub(crate) struct Trace {
    /// `acts[0]` is the input batch, `acts[l]` the output of layer `l - 1`.
    pub acts: Vec<Array2<f64>>,
}

impl DenoiserModel {
    /// Gaussian init with variance `1 / fan_in`, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = RngStream::new(seed);
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let scale = (1.0 / fan_in as f64).sqrt();
                let w = rng.normal_vec(fan_in * fan_out);
                Dense {
                    weight: Array2::from_shape_vec((fan_out, fan_in), w)
                        .expect("shape matches")
                        .mapv(|v| v * scale),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(DenoiserModel { arch, layers })
    }

    /// Model with every parameter zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| Dense {
                weight: Array2::zeros((fan_out, fan_in)),
                bias: Array1::zeros(fan_out),
            })
            .collect();
        Ok(DenoiserModel { arch, layers })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Assembles network inputs `[x, cond, emb(step)]` row by row.
    pub(crate) fn assemble(&self, x: &[f64], steps: &[usize], cond: &[f64]) -> Array2<f64> {
        let rows = steps.len();
        let (s, c) = (self.arch.state_dim, self.arch.cond_dim);
        let width = self.arch.input_dim();
        let mut input = Array2::zeros((rows, width));
        for (r, mut row) in input.axis_iter_mut(NdAxis(0)).enumerate() {
            let row = row.as_slice_mut().expect("standard layout");
            row[..s].copy_from_slice(&x[r * s..(r + 1) * s]);
            row[s..s + c].copy_from_slice(&cond[r * c..(r + 1) * c]);
            row[s + c..].copy_from_slice(&time_embedding(steps[r]));
        }
        input
    }

    pub(crate) fn forward_trace(&self, input: Array2<f64>) -> Trace {
        let last = self.layers.len() - 1;
        let mut acts = vec![input];
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.weight.t());
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        Trace { acts }
    }

    /// Batched forward pass with a per-row step index.
    pub fn predict_rows(&self, x: &[f64], steps: &[usize], cond: &[f64]) -> Result<Vec<f64>> {
        let rows = self.rows_of(x, cond)?;
        if steps.len() != rows {
            return Err(Error::Shape(format!(
                "{} step indices for {rows} rows",
                steps.len()
            )));
        }
        let trace = self.forward_trace(self.assemble(x, steps, cond));
        let out = trace.acts.into_iter().last().expect("at least one layer");
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// Forward pass on a field whose element count is a multiple of the
    /// state width; the output has the same dims as `x`.
    pub fn forward(&self, x: &Field, step: usize, cond: &Field) -> Result<Field> {
        if step > self.arch.max_step {
            return Err(Error::InvalidArgument(format!(
                "step {step} exceeds model max_step {}",
                self.arch.max_step
            )));
        }
        let out = self.predict(x.data(), step, cond.data())?;
        Field::from_vec(x.dims(), out)
    }

    pub fn save(&self, archive: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<()> {
        let mut records = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let (o, n) = l.weight.dim();
            records.push((
                format!("layer{i}.weight"),
                Field::from_vec(
                    &[Dim::channel(o), Dim::channel(n)],
                    l.weight.iter().copied().collect(),
                )?,
            ));
            records.push((
                format!("layer{i}.bias"),
                Field::from_vec(&[Dim::channel(o)], l.bias.to_vec())?,
            ));
        }
        write_archive(archive, &records)?;
        write_json(sidecar, &self.arch)
    }

    pub fn load(archive: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<Self> {
        let archive = archive.as_ref();
        let arch: Architecture = read_json(sidecar)?;
        arch.validate()?;
        let records = read_archive(archive)?;
        let shapes = arch.layer_shapes();
        if records.len() != 2 * shapes.len() {
            return Err(Error::Malformed {
                path: archive.to_path_buf(),
                reason: format!(
                    "{} records for {} layers",
                    records.len(),
                    shapes.len()
                ),
            });
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let (wn, w) = &records[2 * i];
            let (bn, b) = &records[2 * i + 1];
            let bad = |reason: String| Error::Malformed {
                path: archive.to_path_buf(),
                reason,
            };
            if *wn != format!("layer{i}.weight") || *bn != format!("layer{i}.bias") {
                return Err(bad(format!("unexpected record names {wn}, {bn}")));
            }
            if w.shape() != vec![fan_out, fan_in] || b.shape() != vec![fan_out] {
                return Err(bad(format!("layer {i} shape does not match architecture")));
            }
            layers.push(Dense {
                weight: Array2::from_shape_vec((fan_out, fan_in), w.data().to_vec())
                    .expect("checked shape"),
                bias: Array1::from(b.data().to_vec()),
            });
        }
        Ok(DenoiserModel { arch, layers })
    }
}

impl NoisePredictor for DenoiserModel {
    fn state_dim(&self) -> usize {
        self.arch.state_dim
    }

    fn cond_dim(&self) -> usize {
        self.arch.cond_dim
    }

    fn predict(&self, x: &[f64], step: usize, cond: &[f64]) -> Result<Vec<f64>> {
        let rows = self.rows_of(x, cond)?;
        self.predict_rows(x, &vec![step; rows], cond)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture {
            state_dim: 5,
            cond_dim: 3,
            hidden: 7,
            depth: 3,
            max_step: 10,
        }
    }

    /// Straight-line re-derivation of the forward arithmetic with plain loops.
    fn reference_forward(m: &DenoiserModel, x: &[f64], step: usize, c: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = x.iter().chain(c).copied().chain(time_embedding(step)).collect();
        let last = m.layers.len() - 1;
        for (l, layer) in m.layers.iter().enumerate() {
            let (o, n) = layer.weight.dim();
            let mut z = vec![0.0; o];
            for i in 0..o {
                let mut s = layer.bias[i];
                for j in 0..n {
                    s += layer.weight[[i, j]] * a[j];
                }
                z[i] = if l < last { s.tanh() } else { s };
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = DenoiserModel::zeros(arch()).unwrap();
        let out = m.predict(&[1.0, -2.0, 3.0, 0.5, 9.0], 4, &[1.0, 1.0, 1.0]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_pure_and_matches_reference() {
        let m = DenoiserModel::init(arch(), 3).unwrap();
        let mut rng = RngStream::new(4);
        let x = rng.normal_vec(5);
        let c = rng.normal_vec(3);
        let a = m.predict(&x, 7, &c).unwrap();
        let b = m.predict(&x, 7, &c).unwrap();
        assert_eq!(a, b);
        let r = reference_forward(&m, &x, 7, &c);
        for (u, v) in a.iter().zip(&r) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_rows_match_single_rows() {
        let m = DenoiserModel::init(arch(), 8).unwrap();
        let mut rng = RngStream::new(9);
        let x = rng.normal_vec(15);
        let c = rng.normal_vec(9);
        let all = m.predict(&x, 2, &c).unwrap();
        for r in 0..3 {
            let one = m.predict(&x[r * 5..r * 5 + 5], 2, &c[r * 3..r * 3 + 3]).unwrap();
            for k in 0..5 {
                assert!((all[r * 5 + k] - one[k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let m = DenoiserModel::init(arch(), 1).unwrap();
        assert!(m.predict(&[0.0; 4], 1, &[0.0; 3]).is_err());
        assert!(m.predict(&[0.0; 5], 1, &[0.0; 2]).is_err());
        let x = Field::zeros(&[Dim::space(5)]).unwrap();
        let c = Field::zeros(&[Dim::channel(3)]).unwrap();
        assert!(m.forward(&x, 11, &c).is_err());
        assert_eq!(m.forward(&x, 10, &c).unwrap().dims(), x.dims());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DenoiserModel::init(arch(), 5).unwrap();
        let (a, s) = (dir.path().join("m.fla"), dir.path().join("m.json"));
        m.save(&a, &s).unwrap();
        assert_eq!(DenoiserModel::load(&a, &s).unwrap(), m);
    }
}
