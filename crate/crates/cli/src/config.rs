//! Run configuration: a JSON document, a named preset, and flag overrides.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use deu_core::analysis::TaskKind;
use deu_core::ensemble::DEFAULT_MAX_COMBINATIONS;
use deu_core::pipeline::{GaussianTask, KsTask, NsTask};
use deu_core::sampling::SamplerSpec;

/// Invalid or unreadable configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    KsToy,
    NsToy,
    GaussianOracle,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Preset, ConfigError> {
        serde_json::from_value(serde_json::Value::String(name.into()))
            .map_err(|_| ConfigError(format!("unknown preset {name:?} (ks-toy, ns-toy, gaussian-oracle)")))
    }

    pub fn task(self) -> Task {
        match self {
            Preset::KsToy => Task::Ks(KsTask::default()),
            Preset::NsToy => Task::Ns(NsTask::default()),
            Preset::GaussianOracle => Task::Gaussian(GaussianTask::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ks(KsTask),
    Ns(NsTask),
    Gaussian(GaussianTask),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Ks(_) => "ks",
            Task::Ns(_) => "ns",
            Task::Gaussian(_) => "gaussian",
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Ks(t) => match t.rollout.sampler {
                SamplerSpec::Refiner(_) => TaskKind::Refiner,
                SamplerSpec::Ddpm(_) => TaskKind::Acdm,
            },
            Task::Ns(t) => TaskKind::Pidfs(t.ns.clone()),
            Task::Gaussian(_) => TaskKind::Refiner,
        }
    }

    pub fn validate(&self) -> deu_core::Result<()> {
        match self {
            Task::Ks(t) => t.validate(),
            Task::Ns(t) => t.validate(),
            Task::Gaussian(t) => t.oracle().map(|_| ()),
        }
    }
}

fn default_k_min() -> usize {
    2
}
fn default_cap() -> usize {
    DEFAULT_MAX_COMBINATIONS
}
fn default_tolerance() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    /// Defaults to the ensemble size.
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default = "default_cap")]
    pub max_combinations: usize,
    /// Relative tolerance of the recommended size.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k_min: default_k_min(),
            k_max: None,
            max_combinations: default_cap(),
            tolerance: default_tolerance(),
        }
    }
}

/// The document accepted by `--config`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Starting point for `task`; `ks-toy` when neither is given.
    #[serde(default)]
    pub preset: Option<Preset>,
    /// Full task description; replaces the preset's.
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

/// Flags that override the document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub task: Task,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub jobs: Option<usize>,
    pub sweep: SweepConfig,
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
}

pub fn resolve(cfg: RunConfig, flags: Overrides) -> Result<Resolved, ConfigError> {
    let preset = match flags.preset.as_deref() {
        Some(name) => Some(Preset::parse(name)?),
        None => cfg.preset,
    };
    let task = match (preset, cfg.task) {
        // an explicit preset flag wins over the document's task
        (Some(p), _) if flags.preset.is_some() => p.task(),
        (_, Some(t)) => t,
        (Some(p), None) => p.task(),
        (None, None) => Preset::KsToy.task(),
    };
    task.validate().map_err(|e| ConfigError(e.to_string()))?;
    let jobs = flags.jobs.or(cfg.jobs);
    if jobs == Some(0) {
        return Err(ConfigError("jobs must be >= 1".into()));
    }
    let sweep = cfg.sweep.unwrap_or_default();
    if sweep.k_min < 2 || sweep.max_combinations == 0 || !(sweep.tolerance >= 0.0) {
        return Err(ConfigError(
            "sweep needs k_min >= 2, max_combinations >= 1 and tolerance >= 0".into(),
        ));
    }
    Ok(Resolved {
        task,
        seed: flags.seed.or(cfg.seed).unwrap_or(0),
        out: flags.out.or(cfg.out).unwrap_or_else(|| PathBuf::from("deu-run")),
        jobs,
        sweep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#"{"seed": 1, "colour": "red"}"#).is_err());
        assert!(parse(r#"{"sweep": {"k_min": 2, "kmax": 4}}"#).is_err());
    }

    #[test]
    fn flags_win() {
        let cfg = parse(r#"{"preset": "gaussian-oracle", "seed": 4, "out": "a"}"#).unwrap();
        let r = resolve(
            cfg.clone(),
            Overrides {
                seed: Some(9),
                out: Some("b".into()),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.out, PathBuf::from("b"));
        assert_eq!(r.task.name(), "gaussian");
        let r = resolve(cfg, Overrides::default()).unwrap();
        assert_eq!(r.seed, 4);
    }

    #[test]
    fn presets_resolve() {
        for p in ["ks-toy", "ns-toy", "gaussian-oracle"] {
            let r = resolve(
                RunConfig::default(),
                Overrides {
                    preset: Some(p.into()),
                    ..Overrides::default()
                },
            )
            .unwrap();
            r.task.validate().unwrap();
        }
        assert!(Preset::parse("ks").is_err());
    }

    #[test]
    fn task_documents_roundtrip() {
        let doc = serde_json::to_string(&Preset::NsToy.task()).unwrap();
        let back: Task = serde_json::from_str(&doc).unwrap();
        assert_eq!(back, Preset::NsToy.task());
    }

    #[test]
    fn invalid_task_is_a_config_error() {
        let mut t = KsTask::default();
        t.ks.resolution = 30;
        let cfg = RunConfig {
            task: Some(Task::Ks(t)),
            ..RunConfig::default()
        };
        assert!(resolve(cfg, Overrides::default()).is_err());
    }
}
