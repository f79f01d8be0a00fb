//! Denoising objectives, hand-written backpropagation, and Adam.

use ndarray::{Array1, Array2, Axis as NdAxis};
use serde::{Deserialize, Serialize};

use super::model::{DenoiserModel, NoisePredictor};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sampling::rollout::Method;

/// Parameter-shaped gradient (or optimizer moment) buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(m: &DenoiserModel) -> Self {
        Gradients {
            layers: m
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|(w, b)| w.iter().chain(b.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.mapv_inplace(|v| v * s);
            b.mapv_inplace(|v| v * s);
        }
    }

    fn matches(&self, m: &DenoiserModel) -> bool {
        self.layers.len() == m.layers.len()
            && self
                .layers
                .iter()
                .zip(&m.layers)
                .all(|((w, b), l)| w.dim() == l.weight.dim() && b.len() == l.bias.len())
    }
}

/// Fully specified regression batch: network input state, step, conditioning, target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    pub x: Vec<f64>,
    pub steps: Vec<usize>,
    pub cond: Vec<f64>,
    pub target: Vec<f64>,
}

/// Mean-squared error of the network output against `batch.target` and its
/// gradient with respect to every parameter.
pub fn loss_and_grad_prepared(m: &DenoiserModel, batch: &TrainBatch) -> Result<(f64, Gradients)> {
    let rows = m.rows_of(&batch.x, &batch.cond)?;
    if rows == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if batch.steps.len() != rows || batch.target.len() != batch.x.len() {
        return Err(Error::Shape("batch buffers disagree in length".into()));
    }
    let trace = m.forward_trace(m.assemble(&batch.x, &batch.steps, &batch.cond));
    let out = trace.acts.last().expect("output layer");
    let target = Array2::from_shape_vec(out.raw_dim(), batch.target.clone())
        .expect("checked length");
    let resid = out - &target;
    let n = resid.len() as f64;
    let loss = resid.iter().map(|v| v * v).sum::<f64>() / n;

    let mut grads = Gradients::zeros_like(m);
    let mut delta = resid * (2.0 / n);
    for l in (0..m.layers.len()).rev() {
        let input = &trace.acts[l];
        grads.layers[l].0 = delta.t().dot(input);
        grads.layers[l].1 = delta.sum_axis(NdAxis(0));
        if l > 0 {
            let mut back = delta.dot(&m.layers[l].weight);
            back.zip_mut_with(input, |d, &a| *d *= 1.0 - a * a);
            delta = back;
        }
    }
    Ok((loss, grads))
}

/// What the network is trained to predict, matching the sampler that will use it.
///
/// `Ddpm`: the noise at a uniformly drawn step of the forward diffusion.
/// `Refiner`: at step 0 the state from a zero input; at step `k >= 1` the
/// unit noise added at scale `sigma_k`.
pub type Objective = Method;

impl Method {
    /// Draws steps and noise for clean states `x0` (flat rows of width `state_dim`).
    pub fn make_batch(
        &self,
        x0: &[f64],
        cond: &[f64],
        state_dim: usize,
        rng: &mut RngStream,
    ) -> TrainBatch {
        let rows = x0.len() / state_dim;
        let mut x = vec![0.0; x0.len()];
        let mut target = vec![0.0; x0.len()];
        let mut steps = Vec::with_capacity(rows);
        for r in 0..rows {
            let range = r * state_dim..(r + 1) * state_dim;
            let eps = rng.normal_vec(state_dim);
            match self {
                Method::Ddpm(s) => {
                    let tau = 1 + rng.below(s.steps() as u64) as usize;
                    let (a, b) = (s.alpha_bar(tau).sqrt(), (1.0 - s.alpha_bar(tau)).sqrt());
                    for (i, k) in range.enumerate() {
                        x[k] = a * x0[k] + b * eps[i];
                        target[k] = eps[i];
                    }
                    steps.push(tau);
                }
                Method::Refiner(cfg) => {
                    let k_step = rng.below(cfg.steps() as u64 + 1) as usize;
                    if k_step == 0 {
                        target[range.clone()].copy_from_slice(&x0[range]);
                    } else {
                        let sigma = cfg.sigma(k_step);
                        for (i, k) in range.enumerate() {
                            x[k] = x0[k] + sigma * eps[i];
                            target[k] = eps[i];
                        }
                    }
                    steps.push(k_step);
                }
            }
        }
        TrainBatch {
            x,
            steps,
            cond: cond.to_vec(),
            target,
        }
    }
}

/// Loss and gradients on a batch of clean `(x0, cond)` rows with freshly drawn noise.
pub fn loss_and_grad(
    m: &DenoiserModel,
    x0: &[f64],
    cond: &[f64],
    objective: &Objective,
    rng: &mut RngStream,
) -> Result<(f64, Gradients)> {
    if x0.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    m.rows_of(x0, cond)?;
    let batch = objective.make_batch(x0, cond, m.arch.state_dim, rng);
    loss_and_grad_prepared(m, &batch)
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Global gradient-norm clip.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Learning rate at the last step relative to the first (cosine decay); 1 keeps it constant.
    #[serde(default = "one")]
    pub final_lr_ratio: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
            batch_size: 64,
            steps: 2000,
            seed: 0,
            grad_clip: Some(1.0),
            final_lr_ratio: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::InvalidArgument("Adam betas must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        if self.steps <= 1 || self.final_lr_ratio == 1.0 {
            return self.learning_rate;
        }
        let p = step as f64 / (self.steps - 1) as f64;
        let w = 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
        self.learning_rate * (self.final_lr_ratio + (1.0 - self.final_lr_ratio) * w)
    }
}

/// Adam moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl Adam {
    pub fn new(model: &DenoiserModel) -> Self {
        Adam {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update with learning rate `lr`.
    pub fn step(
        &mut self,
        model: &mut DenoiserModel,
        grads: &Gradients,
        cfg: &TrainConfig,
        lr: f64,
    ) -> Result<()> {
        if !grads.matches(model) || !self.m.matches(model) {
            return Err(Error::Shape("gradient shapes do not match the model".into()));
        }
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[l];
            let (mw, mb) = &mut self.m.layers[l];
            let (vw, vb) = &mut self.v.layers[l];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
            };
            ndarray::Zip::from(&mut layer.weight)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("Adam update".into()));
        }
        Ok(())
    }
}

/// Pure form of one Adam update: returns the updated model.
pub fn adam_step(
    model: &DenoiserModel,
    grads: &Gradients,
    cfg: &TrainConfig,
    state: &mut Adam,
) -> Result<DenoiserModel> {
    let mut next = model.clone();
    state.step(&mut next, grads, cfg, cfg.learning_rate)?;
    Ok(next)
}

/// Clean `(x0, cond)` training pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub state_dim: usize,
    pub cond_dim: usize,
    pub targets: Vec<f64>,
    pub conds: Vec<f64>,
}

impl TrainingSet {
    pub fn new(state_dim: usize, cond_dim: usize, targets: Vec<f64>, conds: Vec<f64>) -> Result<Self> {
        if state_dim == 0 || targets.is_empty() || targets.len() % state_dim != 0 {
            return Err(Error::InvalidArgument("empty or ragged training set".into()));
        }
        let rows = targets.len() / state_dim;
        if conds.len() != rows * cond_dim {
            return Err(Error::Shape(format!(
                "{} conditioning values for {rows} rows of width {cond_dim}",
                conds.len()
            )));
        }
        Ok(TrainingSet {
            state_dim,
            cond_dim,
            targets,
            conds,
        })
    }

    pub fn rows(&self) -> usize {
        self.targets.len() / self.state_dim
    }

    fn gather(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let (s, c) = (self.state_dim, self.cond_dim);
        let mut x = Vec::with_capacity(idx.len() * s);
        let mut cond = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            x.extend_from_slice(&self.targets[i * s..(i + 1) * s]);
            cond.extend_from_slice(&self.conds[i * c..(i + 1) * c]);
        }
        (x, cond)
    }
}

/// Minibatch Adam training; returns the trained model and the loss of every step.
pub fn train(
    model: &DenoiserModel,
    data: &TrainingSet,
    objective: &Objective,
    cfg: &TrainConfig,
) -> Result<(DenoiserModel, Vec<f64>)> {
    cfg.validate()?;
    if data.state_dim != model.arch.state_dim || data.cond_dim != model.arch.cond_dim {
        return Err(Error::Shape("training set widths do not match the model".into()));
    }
    if objective.max_step() > model.arch.max_step {
        return Err(Error::InvalidArgument(format!(
            "objective uses step {} beyond model max_step {}",
            objective.max_step(),
            model.arch.max_step
        )));
    }
    let mut model = model.clone();
    let mut adam = Adam::new(&model);
    let mut rng = RngStream::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.steps);
    let rows = data.rows() as u64;
    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.below(rows) as usize).collect();
        let (x0, cond) = data.gather(&idx);
        let batch = objective.make_batch(&x0, &cond, data.state_dim, &mut rng);
        let (loss, mut grads) = loss_and_grad_prepared(&model, &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step}")));
        }
        if let Some(clip) = cfg.grad_clip {
            let norm = grads.global_norm();
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        adam.step(&mut model, &grads, cfg, cfg.lr_at(step))?;
        history.push(loss);
        if step % 500 == 0 {
            log::debug!("train step {step}: loss {loss:.5}");
        }
    }
    Ok((model, history))
}

/// Mean of the first and last `window` entries of a loss history.
pub fn smoothed_ends(history: &[f64], window: usize) -> Option<(f64, f64)> {
    if history.is_empty() {
        return None;
    }
    let w = window.min(history.len()).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&history[..w]), mean(&history[history.len() - w..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::model::Architecture;
    use crate::sampling::refiner::RefinerConfig;
    use crate::sampling::schedule::{make_schedule, ScheduleKind};

    fn arch() -> Architecture {
        Architecture {
            state_dim: 4,
            cond_dim: 2,
            hidden: 6,
            depth: 3,
            max_step: 10,
        }
    }

    fn batch(m: &DenoiserModel, seed: u64) -> TrainBatch {
        let mut rng = RngStream::new(seed);
        let rows = 3;
        TrainBatch {
            x: rng.normal_vec(rows * m.arch.state_dim),
            steps: vec![1, 5, 9],
            cond: rng.normal_vec(rows * m.arch.cond_dim),
            target: rng.normal_vec(rows * m.arch.state_dim),
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let m = DenoiserModel::init(arch(), 1).unwrap();
        let mut b = batch(&m, 2);
        b.target = m.predict_rows(&b.x, &b.steps, &b.cond).unwrap();
        let (loss, g) = loss_and_grad_prepared(&m, &b).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let m = DenoiserModel::init(arch(), 3).unwrap();
        let b = batch(&m, 4);
        let (_, g) = loss_and_grad_prepared(&m, &b).unwrap();
        let h = 1e-5;
        let mut pick = RngStream::new(5);
        for _ in 0..20 {
            let l = pick.below(m.layers.len() as u64) as usize;
            let (rows, cols) = m.layers[l].weight.dim();
            let use_bias = pick.below(4) == 0;
            let (i, j) = (pick.below(rows as u64) as usize, pick.below(cols as u64) as usize);
            let eval = |delta: f64| {
                let mut p = m.clone();
                if use_bias {
                    p.layers[l].bias[i] += delta;
                } else {
                    p.layers[l].weight[[i, j]] += delta;
                }
                loss_and_grad_prepared(&p, &b).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = if use_bias { g.layers[l].1[i] } else { g.layers[l].0[[i, j]] };
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(rel < 1e-4, "layer {l} ({i},{j}) bias={use_bias}: {fd} vs {an}");
        }
    }

    #[test]
    fn output_layer_gradient_is_linear_in_residual() {
        let m = DenoiserModel::init(arch(), 6).unwrap();
        let b = batch(&m, 7);
        let pred = m.predict_rows(&b.x, &b.steps, &b.cond).unwrap();
        let mut doubled = b.clone();
        doubled.target = pred
            .iter()
            .zip(&b.target)
            .map(|(p, t)| p - 2.0 * (p - t))
            .collect();
        let (_, g1) = loss_and_grad_prepared(&m, &b).unwrap();
        let (_, g2) = loss_and_grad_prepared(&m, &doubled).unwrap();
        let last = m.layers.len() - 1;
        for (a, c) in g1.layers[last].0.iter().zip(g2.layers[last].0.iter()) {
            assert!((2.0 * a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let m = DenoiserModel::init(arch(), 1).unwrap();
        let s = make_schedule(10, ScheduleKind::Cosine, (0.0, 0.999)).unwrap();
        let err = loss_and_grad(&m, &[], &[], &Objective::Ddpm(s), &mut RngStream::new(1));
        assert!(err.is_err());
    }

    #[test]
    fn adam_degenerate_updates_leave_parameters() {
        let m = DenoiserModel::init(arch(), 2).unwrap();
        let b = batch(&m, 3);
        let (_, g) = loss_and_grad_prepared(&m, &b).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let same = adam_step(&m, &g, &cfg, &mut Adam::new(&m)).unwrap();
        assert_eq!(same, m);
        let cfg = TrainConfig::default();
        let zero = Gradients::zeros_like(&m);
        let same = adam_step(&m, &zero, &cfg, &mut Adam::new(&m)).unwrap();
        assert_eq!(same, m);
    }

    #[test]
    fn adam_constant_gradient_moves_by_learning_rate() {
        let mut m = DenoiserModel::zeros(arch()).unwrap();
        let mut g = Gradients::zeros_like(&m);
        g.layers.iter_mut().for_each(|(w, b)| {
            w.fill(0.3);
            b.fill(-2.0);
        });
        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let mut adam = Adam::new(&m);
        let mut before = m.clone();
        for _ in 0..200 {
            before = m.clone();
            adam.step(&mut m, &g, &cfg, cfg.learning_rate).unwrap();
        }
        let dw = before.layers[0].weight[[0, 0]] - m.layers[0].weight[[0, 0]];
        let db = before.layers[0].bias[0] - m.layers[0].bias[0];
        assert!((dw - 0.01).abs() < 1e-6, "{dw}");
        assert!((db + 0.01).abs() < 1e-6, "{db}");
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let m = DenoiserModel::init(arch(), 2).unwrap();
        let other = DenoiserModel::init(Architecture { hidden: 5, ..arch() }, 2).unwrap();
        let g = Gradients::zeros_like(&other);
        assert!(adam_step(&m, &g, &TrainConfig::default(), &mut Adam::new(&m)).is_err());
    }

    fn toy_set() -> TrainingSet {
        let mut rng = RngStream::new(10);
        let rows = 64;
        let conds = rng.normal_vec(rows * 2);
        let targets = (0..rows)
            .flat_map(|r| {
                let (a, b) = (conds[2 * r], conds[2 * r + 1]);
                [a, b, a + b, a - b]
            })
            .collect();
        TrainingSet::new(4, 2, targets, conds).unwrap()
    }

    #[test]
    fn zero_steps_leave_model_unchanged() {
        let m = DenoiserModel::init(arch(), 1).unwrap();
        let s = make_schedule(10, ScheduleKind::Cosine, (0.0, 0.999)).unwrap();
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let (out, hist) = train(&m, &toy_set(), &Objective::Ddpm(s), &cfg).unwrap();
        assert_eq!(out, m);
        assert!(hist.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let m = DenoiserModel::init(arch(), 1).unwrap();
        let s = make_schedule(10, ScheduleKind::Cosine, (0.0, 0.999)).unwrap();
        let cfg = TrainConfig {
            steps: 50,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let a = train(&m, &toy_set(), &Objective::Ddpm(s.clone()), &cfg).unwrap();
        let b = train(&m, &toy_set(), &Objective::Ddpm(s), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refiner_objective_draws_step_zero_targets() {
        let cfg = RefinerConfig::default();
        let obj = Objective::Refiner(cfg);
        let x0: Vec<f64> = (0..40).map(|v| v as f64).collect();
        let b = obj.make_batch(&x0, &[], 4, &mut RngStream::new(3));
        for (r, &k) in b.steps.iter().enumerate() {
            if k == 0 {
                assert_eq!(&b.target[r * 4..r * 4 + 4], &x0[r * 4..r * 4 + 4]);
                assert!(b.x[r * 4..r * 4 + 4].iter().all(|&v| v == 0.0));
            }
        }
        assert!(b.steps.iter().all(|&k| k <= 4));
    }

    #[test]
    fn smoothed_ends_of_short_histories() {
        assert_eq!(smoothed_ends(&[], 10), None);
        assert_eq!(smoothed_ends(&[4.0, 2.0], 10), Some((3.0, 3.0)));
        assert_eq!(smoothed_ends(&[4.0, 2.0, 1.0, 3.0], 2), Some((3.0, 2.0)));
    }
}
