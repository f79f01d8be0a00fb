//! Toy experiment presets shared by the command-line tool and the demos:
//! a chaotic KS rollout task, an NS super-resolution task, and a Gaussian
//! target with an exact noise predictor.

use serde::{Deserialize, Serialize};

use crate::denoiser::{train, Architecture, DenoiserModel, TrainConfig};
use crate::ensemble::{sample_ensemble, EnsembleBatch};
use crate::error::{Error, Result};
use crate::field::{Axis, Dim, Field};
use crate::rng::{derive_seed, RngStream};
use crate::sampling::{
    ddpm_sample, pidfs_superresolve, rollout_training_set, rollout_with, GaussianOracle, Method,
    RefinerConfig, RolloutConfig, SamplerSpec, ScheduleKind, ScheduleSpec,
};
use crate::spectral::ks::{ks_dataset_generate, KsConfig};
use crate::spectral::ns::{degrade, ns_shell_dataset, NsConfig};

// child-seed slots of a run seed
const SLOT_TRAIN_DATA: u64 = 0;
const SLOT_TEST_DATA: u64 = 1;
const SLOT_INIT: u64 = 2;
const SLOT_OPTIMIZER: u64 = 3;

fn model_and_training(
    arch: Architecture,
    train_cfg: &TrainConfig,
    data: &crate::denoiser::TrainingSet,
    method: &Method,
    seed: u64,
) -> Result<(DenoiserModel, Vec<f64>)> {
    let init = DenoiserModel::init(arch, derive_seed(seed, SLOT_INIT))?;
    let cfg = TrainConfig {
        seed: derive_seed(seed, SLOT_OPTIMIZER),
        ..train_cfg.clone()
    };
    train(&init, data, method, &cfg)
}

/// Autoregressive prediction of Kuramoto-Sivashinsky trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsTask {
    pub ks: KsConfig,
    pub train_trajectories: usize,
    pub test_trajectories: usize,
    pub rollout: RolloutConfig,
    pub hidden: usize,
    pub depth: usize,
    pub train: TrainConfig,
    pub members: usize,
}

impl Default for KsTask {
    fn default() -> Self {
        KsTask {
            ks: KsConfig {
                domain_length: 22.0,
                resolution: 32,
                dt: 0.05,
                horizon: 100,
                record_every: 4,
                warmup_steps: 2000,
            },
            train_trajectories: 32,
            test_trajectories: 8,
            rollout: RolloutConfig {
                horizon: 40,
                history: 1,
                coefficients: vec![],
                sampler: SamplerSpec::Refiner(RefinerConfig::default()),
                increment_scale: Some(0.25),
            },
            hidden: 128,
            depth: 3,
            train: TrainConfig {
                learning_rate: 2e-3,
                batch_size: 64,
                steps: 3000,
                grad_clip: Some(1.0),
                final_lr_ratio: 0.05,
                ..TrainConfig::default()
            },
            members: 16,
        }
    }
}

impl KsTask {
    pub fn validate(&self) -> Result<()> {
        self.ks.validate()?;
        self.rollout.validate()?;
        self.train.validate()?;
        if self.train_trajectories == 0 || self.test_trajectories == 0 || self.members == 0 {
            return Err(Error::InvalidArgument(
                "trajectory and member counts must be >= 1".into(),
            ));
        }
        if self.ks.horizon < self.rollout.history + self.rollout.horizon {
            return Err(Error::InvalidArgument(format!(
                "test trajectories of {} frames cannot cover history {} + horizon {}",
                self.ks.horizon, self.rollout.history, self.rollout.horizon
            )));
        }
        Ok(())
    }

    pub fn method(&self) -> Result<Method> {
        self.rollout.sampler.build()
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let d = self.ks.resolution;
        let arch = Architecture {
            state_dim: d,
            cond_dim: self.rollout.cond_dim(d),
            hidden: self.hidden,
            depth: self.depth,
            max_step: self.method()?.max_step(),
        };
        arch.validate()?;
        Ok(arch)
    }

    /// `(train, test)` trajectory sets `[B, T, D]`.
    pub fn generate(&self, seed: u64) -> Result<(Field, Field)> {
        self.validate()?;
        Ok((
            ks_dataset_generate(&self.ks, self.train_trajectories, derive_seed(seed, SLOT_TRAIN_DATA))?,
            ks_dataset_generate(&self.ks, self.test_trajectories, derive_seed(seed, SLOT_TEST_DATA))?,
        ))
    }

    pub fn fit(&self, train_set: &Field, seed: u64) -> Result<(DenoiserModel, Vec<f64>)> {
        self.validate()?;
        let data = rollout_training_set(train_set, &self.rollout)?;
        model_and_training(self.architecture()?, &self.train, &data, &self.method()?, seed)
    }

    /// Initial history `[B, k, D]` and the ground truth `[B, T, D]` that follows it.
    pub fn split(&self, test: &Field) -> Result<(Field, Field)> {
        let (k, t) = (self.rollout.history, self.rollout.horizon);
        let shape = test.shape();
        let [b, len, d] = shape[..] else {
            return Err(Error::Shape(format!("expected [B, T, D] test set, got {shape:?}")));
        };
        if len < k + t {
            return Err(Error::Shape(format!("{len} frames cannot cover {k} + {t}")));
        }
        let data = test.data();
        let take = |from: usize, n: usize| -> Vec<f64> {
            (0..b)
                .flat_map(|bi| data[(bi * len + from) * d..(bi * len + from + n) * d].iter().copied())
                .collect()
        };
        Ok((
            Field::from_vec(&[Dim::batch(b), Dim::time(k), Dim::space(d)], take(0, k))?,
            Field::from_vec(&[Dim::batch(b), Dim::time(t), Dim::space(d)], take(k, t))?,
        ))
    }

    /// One rollout per derived member seed.
    pub fn ensemble(&self, model: &DenoiserModel, history: &Field, base_seed: u64) -> Result<EnsembleBatch> {
        let method = self.method()?;
        sample_ensemble(
            |s| rollout_with(model, &self.rollout, &method, history, &mut RngStream::new(s)),
            self.members,
            base_seed,
        )
    }
}

/// Super-resolution of decaying 2-D vorticity stacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsTask {
    pub ns: NsConfig,
    /// Frames per stack (>= 3).
    pub frames: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Block-averaging factor of the low-fidelity input.
    pub degrade_factor: usize,
    pub schedule: ScheduleSpec,
    /// Diffusion step the low-fidelity input is noised to.
    pub start_step: usize,
    pub guidance_scale: f64,
    pub hidden: usize,
    pub depth: usize,
    pub train: TrainConfig,
    pub members: usize,
}

impl Default for NsTask {
    fn default() -> Self {
        NsTask {
            ns: NsConfig::new(8, 0.05, 0.2),
            frames: 3,
            train_samples: 512,
            test_samples: 4,
            degrade_factor: 2,
            schedule: ScheduleSpec {
                steps: 40,
                kind: ScheduleKind::Cosine,
                beta_start: 1e-4,
                beta_end: 0.999,
            },
            start_step: 10,
            guidance_scale: 1.0,
            hidden: 256,
            depth: 3,
            train: TrainConfig {
                learning_rate: 2e-3,
                batch_size: 64,
                steps: 3000,
                grad_clip: Some(1.0),
                final_lr_ratio: 0.05,
                ..TrainConfig::default()
            },
            members: 8,
        }
    }
}

impl NsTask {
    pub fn validate(&self) -> Result<()> {
        self.ns.validate()?;
        self.train.validate()?;
        if self.frames < 3 {
            return Err(Error::InvalidArgument("stacks need at least three frames".into()));
        }
        if self.train_samples == 0 || self.test_samples == 0 || self.members == 0 {
            return Err(Error::InvalidArgument("sample and member counts must be >= 1".into()));
        }
        if self.degrade_factor == 0 || self.ns.grid % self.degrade_factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "degrade factor {} must divide grid {}",
                self.degrade_factor, self.ns.grid
            )));
        }
        if !(self.guidance_scale >= 0.0) {
            return Err(Error::InvalidArgument("guidance_scale must be >= 0".into()));
        }
        self.schedule.build()?.check_step(self.start_step)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let arch = Architecture {
            state_dim: self.frames * self.ns.grid * self.ns.grid,
            cond_dim: 0,
            hidden: self.hidden,
            depth: self.depth,
            max_step: self.schedule.steps,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// `(train, test)` stacks `[B, F, N, N]`.
    pub fn generate(&self, seed: u64) -> Result<(Field, Field)> {
        self.validate()?;
        Ok((
            ns_shell_dataset(&self.ns, self.train_samples, self.frames, derive_seed(seed, SLOT_TRAIN_DATA))?,
            ns_shell_dataset(&self.ns, self.test_samples, self.frames, derive_seed(seed, SLOT_TEST_DATA))?,
        ))
    }

    pub fn fit(&self, train_set: &Field, seed: u64) -> Result<(DenoiserModel, Vec<f64>)> {
        self.validate()?;
        let width = self.frames * self.ns.grid * self.ns.grid;
        if train_set.len() % width != 0 {
            return Err(Error::Shape("training stacks do not match the task grid".into()));
        }
        let data = crate::denoiser::TrainingSet::new(width, 0, train_set.data().to_vec(), vec![])?;
        let method = Method::Ddpm(self.schedule.build()?);
        model_and_training(self.architecture()?, &self.train, &data, &method, seed)
    }

    /// Degrades every frame of `[B, F, N, N]` stacks.
    pub fn low_fidelity(&self, stacks: &Field) -> Result<Field> {
        let n = self.ns.grid;
        let out = stacks
            .data()
            .chunks(n * n)
            .map(|f| degrade(f, n, self.degrade_factor))
            .collect::<Result<Vec<_>>>()?;
        Field::from_vec(stacks.dims(), out.concat())
    }

    /// Super-resolves every low-fidelity stack of `[B, F, N, N]` with one seed.
    pub fn superresolve(
        &self,
        model: &DenoiserModel,
        low: &Field,
        guidance_scale: f64,
        seed: u64,
    ) -> Result<Field> {
        let schedule = self.schedule.build()?;
        let n = self.ns.grid;
        let width = self.frames * n * n;
        let root = RngStream::new(seed);
        let dims = [Dim::time(self.frames), Dim::space(n), Dim::space(n)];
        let mut parts = Vec::new();
        for (b, stack) in low.data().chunks(width).enumerate() {
            let u_l = Field::from_vec(&dims, stack.to_vec())?;
            parts.push(pidfs_superresolve(
                model,
                &u_l,
                self.start_step,
                &schedule,
                guidance_scale,
                &self.ns,
                &mut root.derive(b as u64),
            )?);
        }
        Field::stack(Axis::Batch, &parts)
    }

    pub fn ensemble(&self, model: &DenoiserModel, low: &Field, base_seed: u64) -> Result<EnsembleBatch> {
        sample_ensemble(
            |s| self.superresolve(model, low, self.guidance_scale, s),
            self.members,
            base_seed,
        )
    }
}

/// Gaussian target `N(mu0, sigma0^2)` on a `[T, D]` grid whose spread grows
/// with `t`, sampled with the exact noise predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianTask {
    pub steps: usize,
    pub width: usize,
    pub mean: f64,
    pub sigma: f64,
    /// Relative growth of the standard deviation per step.
    pub growth: f64,
    pub schedule: ScheduleSpec,
    pub members: usize,
}

impl Default for GaussianTask {
    fn default() -> Self {
        GaussianTask {
            steps: 16,
            width: 32,
            mean: 1.0,
            sigma: 0.05,
            growth: 0.25,
            schedule: ScheduleSpec {
                steps: 100,
                kind: ScheduleKind::Cosine,
                beta_start: 1e-4,
                beta_end: 0.999,
            },
            members: 16,
        }
    }
}

impl GaussianTask {
    pub fn dims(&self) -> [Dim; 2] {
        [Dim::time(self.steps), Dim::space(self.width)]
    }

    /// Mean pattern `mean * (1 + 0.5 sin(2 pi d / D))` on every step.
    pub fn truth(&self) -> Result<Field> {
        let row: Vec<f64> = (0..self.width)
            .map(|d| self.mean * (1.0 + 0.5 * (std::f64::consts::TAU * d as f64 / self.width as f64).sin()))
            .collect();
        Field::from_vec(&self.dims(), row.repeat(self.steps))
    }

    pub fn oracle(&self) -> Result<GaussianOracle> {
        if self.steps == 0 || self.width == 0 || self.members == 0 {
            return Err(Error::InvalidArgument("steps, width and members must be >= 1".into()));
        }
        let sd: Vec<f64> = (0..self.steps)
            .flat_map(|t| std::iter::repeat(self.sigma * (1.0 + self.growth * t as f64)).take(self.width))
            .collect();
        GaussianOracle::new(self.truth()?.into_data(), sd, self.schedule.build()?)
    }

    pub fn ensemble(&self, base_seed: u64) -> Result<EnsembleBatch> {
        let oracle = self.oracle()?;
        let schedule = self.schedule.build()?;
        sample_ensemble(
            |s| {
                let x = ddpm_sample(&oracle, &[], 1, &schedule, &mut RngStream::new(s))?;
                Field::from_vec(&self.dims(), x)
            },
            self.members,
            base_seed,
        )
    }
}
