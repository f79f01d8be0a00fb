//! Conditional one-step prediction and autoregressive rollout.

use serde::{Deserialize, Serialize};

use crate::denoiser::{NoisePredictor, TrainingSet};
use crate::error::{Error, Result};
use crate::field::{Axis, Dim, Field};
use crate::rng::RngStream;

use super::ddpm::ddpm_sample;
use super::refiner::{refiner_predict, RefinerConfig};
use super::schedule::{NoiseSchedule, ScheduleSpec};

/// A built sampling procedure.
#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Ddpm(NoiseSchedule),
    Refiner(RefinerConfig),
}

impl Method {
    /// Largest step index the model will be queried at.
    pub fn max_step(&self) -> usize {
        match self {
            Method::Ddpm(s) => s.steps(),
            Method::Refiner(r) => r.steps(),
        }
    }

    /// One prediction per conditioning row.
    pub fn sample<M: NoisePredictor + ?Sized>(
        &self,
        model: &M,
        cond: &[f64],
        rows: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        match self {
            Method::Ddpm(s) => ddpm_sample(model, cond, rows, s, rng),
            Method::Refiner(r) => refiner_predict(model, cond, rows, r, rng),
        }
    }
}

/// Serializable sampler choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SamplerSpec {
    Ddpm(ScheduleSpec),
    Refiner(RefinerConfig),
}

impl SamplerSpec {
    pub fn build(&self) -> Result<Method> {
        Ok(match self {
            SamplerSpec::Ddpm(s) => Method::Ddpm(s.build()?),
            SamplerSpec::Refiner(r) => {
                r.validate()?;
                Method::Refiner(r.clone())
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    pub horizon: usize,
    /// Number of past frames fed as conditioning.
    pub history: usize,
    /// PDE coefficients appended to the conditioning.
    #[serde(default)]
    pub coefficients: Vec<f64>,
    pub sampler: SamplerSpec,
    /// When set, the model produces `(u(t) - u(t-1)) / scale` instead of `u(t)`.
    #[serde(default)]
    pub increment_scale: Option<f64>,
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if self.history == 0 {
            return Err(Error::InvalidArgument("history length must be >= 1".into()));
        }
        if let Some(s) = self.increment_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument("increment_scale must be positive".into()));
            }
        }
        Ok(())
    }

    /// Conditioning width for states of `width` values.
    pub fn cond_dim(&self, width: usize) -> usize {
        self.history * width + self.coefficients.len()
    }
}

/// Conditioning row `[u(t-1), ..., u(t-k), c_f]` from chronological frames.
fn cond_row(frames: &[&[f64]], coefficients: &[f64], out: &mut Vec<f64>) {
    for f in frames.iter().rev() {
        out.extend_from_slice(f);
    }
    out.extend_from_slice(coefficients);
}

/// Ancestral DDPM prediction conditioned on `concat(history, coefficients)`.
///
/// `history` holds, per row, the `k` most recent states ordered
/// `u(t-1), ..., u(t-k)`.
pub fn acdm_predict<M: NoisePredictor + ?Sized>(
    model: &M,
    history: &[f64],
    rows: usize,
    k: usize,
    coefficients: &[f64],
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let width = model.state_dim();
    if history.len() != rows * k * width {
        return Err(Error::Shape(format!(
            "history has {} values, expected {rows} rows x {k} frames x {width}",
            history.len()
        )));
    }
    let mut cond = Vec::with_capacity(rows * (k * width + coefficients.len()));
    for r in 0..rows {
        cond.extend_from_slice(&history[r * k * width..(r + 1) * k * width]);
        cond.extend_from_slice(coefficients);
    }
    ddpm_sample(model, &cond, rows, schedule, rng)
}

/// Splits `[B, k, ...]` (or `[k, ...]`) into batch size, frame count, frame width
/// and the trailing dims.
fn history_layout(f: &Field) -> Result<(bool, usize, usize, usize, Vec<Dim>)> {
    let dims = f.dims();
    let batched = dims.first().map(|d| d.axis) == Some(Axis::Batch);
    let (b, rest) = if batched { (dims[0].extent, &dims[1..]) } else { (1, dims) };
    match rest.split_first() {
        Some((t, tail)) if t.axis == Axis::Time && !tail.is_empty() => {
            let width = tail.iter().map(|d| d.extent).product();
            Ok((batched, b, t.extent, width, tail.to_vec()))
        }
        _ => Err(Error::Shape(
            "rollout history must be [batch, time, ...] or [time, ...]".into(),
        )),
    }
}

/// Autoregressive rollout of `cfg.horizon` frames from `initial` history
/// (`[B, k, ...]` or `[k, ...]`, oldest frame first). Returns `[B, T, ...]`
/// (or `[T, ...]`).
pub fn rollout<M: NoisePredictor + ?Sized>(
    model: &M,
    cfg: &RolloutConfig,
    initial: &Field,
    rng: &mut RngStream,
) -> Result<Field> {
    cfg.validate()?;
    let method = cfg.sampler.build()?;
    rollout_with(model, cfg, &method, initial, rng)
}

/// [`rollout`] with an already built sampler.
pub fn rollout_with<M: NoisePredictor + ?Sized>(
    model: &M,
    cfg: &RolloutConfig,
    method: &Method,
    initial: &Field,
    rng: &mut RngStream,
) -> Result<Field> {
    let (batched, b, k, width, tail) = history_layout(initial)?;
    if k != cfg.history {
        return Err(Error::Shape(format!(
            "initial history has {k} frames, configured {}",
            cfg.history
        )));
    }
    if width != model.state_dim() || cfg.cond_dim(width) != model.cond_dim() {
        return Err(Error::Shape(format!(
            "model widths ({}, {}) do not fit frames of {width} with history {k}",
            model.state_dim(),
            model.cond_dim()
        )));
    }
    let data = initial.data();
    let mut hist: Vec<Vec<Vec<f64>>> = (0..b)
        .map(|bi| {
            (0..k)
                .map(|t| data[(bi * k + t) * width..(bi * k + t + 1) * width].to_vec())
                .collect()
        })
        .collect();
    let mut out = vec![0.0; b * cfg.horizon * width];
    for t in 0..cfg.horizon {
        let mut cond = Vec::with_capacity(b * model.cond_dim());
        for h in &hist {
            let frames: Vec<&[f64]> = h.iter().map(Vec::as_slice).collect();
            cond_row(&frames, &cfg.coefficients, &mut cond);
        }
        let pred = method.sample(model, &cond, b, rng)?;
        for (bi, h) in hist.iter_mut().enumerate() {
            let d0 = &pred[bi * width..(bi + 1) * width];
            let next: Vec<f64> = match cfg.increment_scale {
                Some(s) => h[k - 1].iter().zip(d0).map(|(u, d)| u + s * d).collect(),
                None => d0.to_vec(),
            };
            if next.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
                return Err(Error::BlowUp(format!("rollout diverged at frame {t}")));
            }
            out[(bi * cfg.horizon + t) * width..(bi * cfg.horizon + t + 1) * width]
                .copy_from_slice(&next);
            h.remove(0);
            h.push(next);
        }
    }
    let mut dims = Vec::with_capacity(tail.len() + 2);
    if batched {
        dims.push(Dim::batch(b));
    }
    dims.push(Dim::time(cfg.horizon));
    dims.extend(tail);
    Field::from_vec(&dims, out)
}

/// Supervised pairs from trajectories `[B, T, ...]`: for each `t >= k` the
/// target is `u(t)` (or its scaled increment) and the conditioning is
/// `[u(t-1), ..., u(t-k), c_f]`.
pub fn rollout_training_set(trajectories: &Field, cfg: &RolloutConfig) -> Result<TrainingSet> {
    cfg.validate()?;
    let (_, b, t_len, width, _) = history_layout(trajectories)?;
    let k = cfg.history;
    if t_len <= k {
        return Err(Error::InvalidArgument(format!(
            "trajectories of {t_len} frames are too short for history {k}"
        )));
    }
    let data = trajectories.data();
    let frame = |bi: usize, t: usize| &data[(bi * t_len + t) * width..(bi * t_len + t + 1) * width];
    let mut targets = Vec::new();
    let mut conds = Vec::new();
    for bi in 0..b {
        for t in k..t_len {
            match cfg.increment_scale {
                Some(s) => targets.extend(
                    frame(bi, t).iter().zip(frame(bi, t - 1)).map(|(a, p)| (a - p) / s),
                ),
                None => targets.extend_from_slice(frame(bi, t)),
            }
            let frames: Vec<&[f64]> = (t - k..t).map(|s| frame(bi, s)).collect();
            cond_row(&frames, &cfg.coefficients, &mut conds);
        }
    }
    TrainingSet::new(width, cfg.cond_dim(width), targets, conds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::schedule::{make_schedule, ScheduleKind};

    /// Predicts zero noise and ignores conditioning.
    struct Blind {
        width: usize,
        cond: usize,
    }
    impl NoisePredictor for Blind {
        fn state_dim(&self) -> usize {
            self.width
        }
        fn cond_dim(&self) -> usize {
            self.cond
        }
        fn predict(&self, x: &[f64], _: usize, cond: &[f64]) -> Result<Vec<f64>> {
            self.rows_of(x, cond)?;
            Ok(x.iter().map(|v| 0.1 * v).collect())
        }
    }

    /// Step 0 returns the most recent conditioning frame plus one.
    struct Shift;
    impl NoisePredictor for Shift {
        fn state_dim(&self) -> usize {
            2
        }
        fn cond_dim(&self) -> usize {
            4
        }
        fn predict(&self, x: &[f64], step: usize, cond: &[f64]) -> Result<Vec<f64>> {
            let rows = self.rows_of(x, cond)?;
            if step > 0 {
                return Ok(vec![0.0; x.len()]);
            }
            Ok((0..rows)
                .flat_map(|r| [cond[4 * r] + 1.0, cond[4 * r + 1] + 1.0])
                .collect())
        }
    }

    fn cfg(sampler: SamplerSpec, horizon: usize, history: usize) -> RolloutConfig {
        RolloutConfig {
            horizon,
            history,
            coefficients: vec![],
            sampler,
            increment_scale: None,
        }
    }

    #[test]
    fn acdm_ignoring_condition_equals_ddpm() {
        let s = make_schedule(10, ScheduleKind::Linear, (1e-3, 0.1)).unwrap();
        let m = Blind { width: 3, cond: 7 };
        let hist = vec![0.5; 6];
        let a = acdm_predict(&m, &hist, 1, 2, &[0.01], &s, &mut RngStream::new(3)).unwrap();
        let b = ddpm_sample(&m, &[0.0; 7], 1, &s, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(acdm_predict(&m, &hist[..3], 1, 2, &[0.01], &s, &mut RngStream::new(3)).is_err());
    }

    #[test]
    fn horizon_one_is_a_single_prediction() {
        let sched = crate::sampling::schedule::ScheduleSpec {
            steps: 5,
            kind: ScheduleKind::Linear,
            beta_start: 1e-3,
            beta_end: 0.1,
        };
        let m = Blind { width: 2, cond: 2 };
        let init = Field::from_vec(&[Dim::time(1), Dim::space(2)], vec![1.0, 2.0]).unwrap();
        let c = cfg(SamplerSpec::Ddpm(sched.clone()), 1, 1);
        let r = rollout(&m, &c, &init, &mut RngStream::new(2)).unwrap();
        let direct =
            acdm_predict(&m, &[1.0, 2.0], 1, 1, &[], &sched.build().unwrap(), &mut RngStream::new(2))
                .unwrap();
        assert_eq!(r.shape(), vec![1, 2]);
        assert_eq!(r.data(), direct.as_slice());
    }

    #[test]
    fn rollout_feeds_predictions_back() {
        let init = Field::from_vec(
            &[Dim::batch(2), Dim::time(2), Dim::space(2)],
            vec![0.0, 0.0, 1.0, 1.0, 5.0, 5.0, 6.0, 6.0],
        )
        .unwrap();
        let c = cfg(SamplerSpec::Refiner(RefinerConfig::new(vec![]).unwrap()), 3, 2);
        let r = rollout(&Shift, &c, &init, &mut RngStream::new(0)).unwrap();
        assert_eq!(r.shape(), vec![2, 3, 2]);
        // Shift reads the first conditioning frame, which is u(t-1)
        assert_eq!(&r.data()[..6], &[2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        assert_eq!(&r.data()[6..], &[7.0, 7.0, 8.0, 8.0, 9.0, 9.0]);
    }

    #[test]
    fn increment_decoding() {
        let init = Field::from_vec(&[Dim::time(2), Dim::space(2)], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let mut c = cfg(SamplerSpec::Refiner(RefinerConfig::new(vec![]).unwrap()), 2, 2);
        c.increment_scale = Some(0.5);
        let r = rollout(&Shift, &c, &init, &mut RngStream::new(0)).unwrap();
        // increment = 0.5 * (u(t-1) + 1)
        assert_eq!(r.data(), &[2.0, 2.0, 3.5, 3.5]);
    }

    #[test]
    fn rollout_is_deterministic_and_checks_history() {
        let sched = crate::sampling::schedule::ScheduleSpec {
            steps: 5,
            kind: ScheduleKind::Cosine,
            beta_start: 1e-4,
            beta_end: 0.999,
        };
        let m = Blind { width: 2, cond: 4 };
        let init = Field::from_vec(&[Dim::time(2), Dim::space(2)], vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        let c = cfg(SamplerSpec::Ddpm(sched), 4, 2);
        let a = rollout(&m, &c, &init, &mut RngStream::new(8)).unwrap();
        let b = rollout(&m, &c, &init, &mut RngStream::new(8)).unwrap();
        assert_eq!(a, b);
        let short = Field::from_vec(&[Dim::time(1), Dim::space(2)], vec![0.0, 0.1]).unwrap();
        assert!(rollout(&m, &c, &short, &mut RngStream::new(8)).is_err());
    }

    #[test]
    fn training_pairs_layout() {
        let traj = Field::from_vec(
            &[Dim::batch(1), Dim::time(3), Dim::space(1)],
            vec![1.0, 2.0, 4.0],
        )
        .unwrap();
        let mut c = cfg(SamplerSpec::Refiner(RefinerConfig::default()), 1, 2);
        c.coefficients = vec![9.0];
        let set = rollout_training_set(&traj, &c).unwrap();
        assert_eq!(set.targets, vec![4.0]);
        assert_eq!(set.conds, vec![2.0, 1.0, 9.0]);
        c.history = 1;
        c.increment_scale = Some(2.0);
        let set = rollout_training_set(&traj, &c).unwrap();
        assert_eq!(set.targets, vec![0.5, 1.0]);
    }
}
