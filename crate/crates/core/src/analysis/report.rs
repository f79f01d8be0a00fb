//! Error/variance correlation report for an ensemble against ground truth.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::ensemble::{ensemble_mean, pointwise_variance, variance_series, Center, Divisor, EnsembleBatch};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::io::{create_dir, write_csv, write_json};
use crate::spectral::ns::NsConfig;

use super::correlation::{dtw, pearson, DtwResult};
use super::metrics::{relative_l2_error_acdm, relative_l2_error_refiner, residual_loss, ErrorMode};

/// Which error metric the report uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Frame-norm relative error.
    Refiner,
    /// Spatial-norm relative error averaged over channels.
    Acdm,
    /// Frame-norm relative error plus the vorticity residual loss.
    Pidfs(NsConfig),
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Refiner => "refiner",
            TaskKind::Acdm => "acdm",
            TaskKind::Pidfs(_) => "pidfs",
        }
    }
}

const ACDM_FLOOR: f64 = 1e-12;

fn error_series(task: &TaskKind, pred: &Field, truth: &Field) -> Result<Vec<f64>> {
    match task {
        TaskKind::Acdm => Ok(relative_l2_error_acdm(pred, truth, ErrorMode::SpatialNorm, ACDM_FLOOR)?.series),
        TaskKind::Refiner | TaskKind::Pidfs(_) => relative_l2_error_refiner(pred, truth),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    /// Mean residual loss of the ensemble mean.
    pub ensemble: f64,
    /// Mean over members of each member's mean residual loss.
    pub mean_of_samples: f64,
    pub denominator: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub task: String,
    pub samples: usize,
    pub steps: usize,
    /// Error of the ensemble mean per step.
    pub error: Vec<f64>,
    /// Batch/space-averaged ensemble variance per step (sample-mean centre, divisor J).
    pub variance: Vec<f64>,
    pub pearson: Option<f64>,
    pub dtw_distance: f64,
    pub dtw_path: Vec<(usize, usize)>,
    pub sample_final_errors: Vec<f64>,
    pub mean_sample_final_error: f64,
    pub ensemble_final_error: f64,
    pub residual: Option<ResidualSummary>,
    /// Reasons the correlation could not be formed.
    pub degenerate: Vec<String>,
    #[serde(skip)]
    pub dtw: Option<DtwResult>,
}

/// Builds the report for `batch` (members shaped like `truth`).
pub fn correlation_report(b: &EnsembleBatch, truth: &Field, task: &TaskKind) -> Result<CorrelationReport> {
    if b.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "ensemble dims {:?} differ from truth {:?}",
            b.samples()[0].shape(),
            truth.shape()
        )));
    }
    let mean = ensemble_mean(b);
    let error = error_series(task, &mean, truth)?;
    let var = pointwise_variance(b, Center::SampleMean, Divisor::Population)?;
    let variance = variance_series(&var)?;
    let mut degenerate = Vec::new();
    let pearson = match pearson(&error, &variance) {
        Ok(r) => Some(r),
        Err(Error::UndefinedCorrelation(why)) => {
            degenerate.push(format!("undefined correlation: {why}"));
            None
        }
        Err(Error::InvalidArgument(why)) => {
            degenerate.push(why);
            None
        }
        Err(e) => return Err(e),
    };
    if variance.iter().all(|&v| v == 0.0) {
        degenerate.push("all ensemble members agree".into());
    }
    let path = dtw(&error, &variance)?;
    let sample_final_errors = b
        .samples()
        .iter()
        .map(|s| error_series(task, s, truth).map(|e| *e.last().expect("non-empty series")))
        .collect::<Result<Vec<_>>>()?;
    let residual = match task {
        TaskKind::Pidfs(cfg) => {
            let ens = residual_loss(&mean, truth, cfg)?.mean();
            let per = b
                .samples()
                .iter()
                .map(|s| residual_loss(s, truth, cfg).map(|r| r.mean()))
                .collect::<Result<Vec<_>>>()?;
            Some(ResidualSummary {
                ensemble: ens,
                mean_of_samples: per.iter().sum::<f64>() / per.len() as f64,
                denominator: "squared L2 norm of the ground-truth frame".into(),
            })
        }
        _ => None,
    };
    Ok(CorrelationReport {
        task: task.name().into(),
        samples: b.len(),
        steps: error.len(),
        ensemble_final_error: *error.last().expect("non-empty series"),
        mean_sample_final_error: sample_final_errors.iter().sum::<f64>() / b.len() as f64,
        sample_final_errors,
        error,
        variance,
        pearson,
        dtw_distance: path.distance,
        dtw_path: path.path.clone(),
        residual,
        degenerate,
        dtw: Some(path),
    })
}

fn matrix_csv(path: &Path, m: &[Vec<f64>]) -> Result<()> {
    let cols = m.first().map_or(0, Vec::len);
    let header: Vec<String> = (0..cols).map(|j| format!("j{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, m.iter().map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>()))
}

impl CorrelationReport {
    /// Writes `report.json`, `series.csv` (t, e, sigma), `dtw_path.csv` and the
    /// pairwise / accumulated DTW cost matrices into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        create_dir(dir)?;
        write_json(dir.join("report.json"), self)?;
        write_csv(
            dir.join("series.csv"),
            &["t", "e", "sigma"],
            self.error
                .iter()
                .zip(&self.variance)
                .enumerate()
                .map(|(t, (e, s))| [t.to_string(), e.to_string(), s.to_string()]),
        )?;
        write_csv(
            dir.join("dtw_path.csv"),
            &["i", "j"],
            self.dtw_path.iter().map(|(i, j)| [i.to_string(), j.to_string()]),
        )?;
        if let Some(d) = &self.dtw {
            matrix_csv(&dir.join("dtw_pairwise.csv"), &d.pairwise)?;
            matrix_csv(&dir.join("dtw_accumulated.csv"), &d.accumulated)?;
        }
        Ok(())
    }
}
