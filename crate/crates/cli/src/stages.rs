//! The pipeline stages. Each reads the outputs of earlier stages from the run
//! directory and writes its own sub-directory.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use deu_core::analysis::{correlation_report, CorrelationReport};
use deu_core::denoiser::{smoothed_ends, DenoiserModel};
use deu_core::ensemble::{recommend_size, size_sweep, EnsembleBatch, MANIFEST};
use deu_core::io::{create_dir, read_field, read_json, write_csv, write_field, write_json};
use deu_core::rng::derive_seed;
use deu_core::spectral::ns::{ns_vorticity_residual, taylor_green, NsConfig};
use deu_core::spectral::spectrum::{energy_spectrum, vorticity_histogram};
use deu_core::{Dim, Field};

use crate::config::{Resolved, Task};

const DATA: &str = "data";
const MODEL: &str = "model";
const ENSEMBLE: &str = "ensemble";
const ANALYSIS: &str = "analysis";
const SWEEP: &str = "sweep";
const REPORT: &str = "report";

const SLOT_ENSEMBLE: u64 = 10;
const SLOT_SWEEP: u64 = 11;

/// A stage's output already exists and `--force` was not given (exit code 4).
#[derive(Debug)]
pub struct OutputExists(pub PathBuf);

impl std::fmt::Display for OutputExists {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} already exists (pass --force to overwrite)", self.0.display())
    }
}

impl std::error::Error for OutputExists {}

fn prepare(run: &Resolved, name: &str, force: bool) -> Result<PathBuf> {
    let dir = run.out.join(name);
    if dir.exists() {
        if !force {
            return Err(OutputExists(dir).into());
        }
        std::fs::remove_dir_all(&dir).with_context(|| format!("removing {}", dir.display()))?;
    }
    create_dir(&dir)?;
    Ok(dir)
}

fn stage_done(run: &Resolved, name: &str) -> bool {
    run.out.join(name).join(MANIFEST).exists()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[derive(Serialize)]
struct FileEntry {
    file: String,
    dims: Vec<usize>,
    sha256: String,
}

fn write_entry(dir: &Path, name: &str, f: &Field) -> Result<FileEntry> {
    let path = dir.join(name);
    write_field(&path, f)?;
    Ok(FileEntry {
        file: name.into(),
        dims: f.shape(),
        sha256: sha256_file(&path)?,
    })
}

/// Relative residual of an analytic Taylor-Green trajectory on the task grid.
fn taylor_green_check(ns: &NsConfig) -> Result<f64> {
    let cfg = NsConfig {
        dt_frames: 1e-3,
        forcing: None,
        ..ns.clone()
    };
    let traj = taylor_green(&cfg, 1.0, &[0.0, 1e-3, 2e-3])?;
    let r = ns_vorticity_residual(&traj, &cfg)?;
    Ok(r.max_abs() / traj.max_abs())
}

pub fn gen_data(run: &Resolved, force: bool) -> Result<()> {
    let mut checks = serde_json::Map::new();
    let outputs = match &run.task {
        Task::Ks(t) => {
            let (train, test) = t.generate(run.seed)?;
            vec![("train.fld", train), ("test.fld", test)]
        }
        Task::Ns(t) => {
            let rel = taylor_green_check(&t.ns)?;
            if !(rel < 1e-4) {
                return Err(deu_core::Error::NonFinite(format!(
                    "Taylor-Green self-check: relative residual {rel:e} exceeds 1e-4"
                ))
                .into());
            }
            checks.insert("taylor_green_relative_residual".into(), json!(rel));
            let (train, test) = t.generate(run.seed)?;
            vec![("train.fld", train), ("test.fld", test)]
        }
        Task::Gaussian(t) => vec![("truth.fld", t.truth()?)],
    };
    let dir = prepare(run, DATA, force)?;
    let files = outputs
        .iter()
        .map(|(name, f)| write_entry(&dir, name, f))
        .collect::<Result<Vec<_>>>()?;
    log::info!("wrote {} dataset file(s) to {}", files.len(), dir.display());
    write_json(
        dir.join(MANIFEST),
        &json!({ "task": run.task.name(), "seed": run.seed, "files": files,
                 "self_check": checks, "config": run }),
    )?;
    Ok(())
}

fn load_model(run: &Resolved) -> Result<DenoiserModel> {
    let dir = run.out.join(MODEL);
    Ok(DenoiserModel::load(dir.join("checkpoint.flda"), dir.join("architecture.json"))?)
}

pub fn train(run: &Resolved, force: bool) -> Result<()> {
    if let Task::Gaussian(t) = &run.task {
        // the exact predictor needs no training
        let oracle = t.oracle()?;
        let dir = prepare(run, MODEL, force)?;
        write_json(
            dir.join(MANIFEST),
            &json!({ "task": "gaussian", "predictor": "exact",
                     "mean": oracle.mean(), "std": oracle.std(), "config": run }),
        )?;
        return Ok(());
    }
    let set = read_field(run.out.join(DATA).join("train.fld"))?;
    let dir = prepare(run, MODEL, force)?;
    let (model, loss) = match &run.task {
        Task::Ks(t) => t.fit(&set, run.seed)?,
        Task::Ns(t) => t.fit(&set, run.seed)?,
        Task::Gaussian(_) => unreachable!("handled above"),
    };
    let ckpt = dir.join("checkpoint.flda");
    model.save(&ckpt, dir.join("architecture.json"))?;
    write_csv(
        dir.join("loss.csv"),
        &["step", "loss"],
        loss.iter().enumerate().map(|(i, l)| [i.to_string(), l.to_string()]),
    )?;
    let ends = smoothed_ends(&loss, 100);
    if let Some((first, last)) = ends {
        log::info!("trained {} steps: smoothed loss {first:.4} -> {last:.4}", loss.len());
    }
    let (first, last) = ends.unzip();
    write_json(
        dir.join(MANIFEST),
        &json!({ "task": run.task.name(), "steps": loss.len(), "parameters": model.parameter_count(),
                 "loss_first": first, "loss_last": last, "sha256": sha256_file(&ckpt)?,
                 "config": run }),
    )?;
    Ok(())
}

pub fn ensemble(run: &Resolved, force: bool) -> Result<()> {
    let data = run.out.join(DATA);
    let base = derive_seed(run.seed, SLOT_ENSEMBLE);
    let (batch, truth, input) = match &run.task {
        Task::Ks(t) => {
            let model = load_model(run)?;
            let (history, truth) = t.split(&read_field(data.join("test.fld"))?)?;
            (t.ensemble(&model, &history, base)?, truth, history)
        }
        Task::Ns(t) => {
            let model = load_model(run)?;
            let truth = read_field(data.join("test.fld"))?;
            let low = t.low_fidelity(&truth)?;
            (t.ensemble(&model, &low, base)?, truth, low)
        }
        Task::Gaussian(t) => {
            let truth = read_field(data.join("truth.fld"))?;
            (t.ensemble(base)?, truth.clone(), truth)
        }
    };
    let dir = prepare(run, ENSEMBLE, force)?;
    write_field(dir.join("truth.fld"), &truth)?;
    write_field(dir.join("input.fld"), &input)?;
    batch.save(&dir, json!({ "task": run.task.name(), "base_seed": base, "run": run }))?;
    log::info!("sampled {} members into {}", batch.len(), dir.display());
    Ok(())
}

fn load_ensemble(run: &Resolved) -> Result<(EnsembleBatch, Field)> {
    let dir = run.out.join(ENSEMBLE);
    let (batch, _) = EnsembleBatch::load(&dir)?;
    Ok((batch, read_field(dir.join("truth.fld"))?))
}

pub fn analyze(run: &Resolved, force: bool) -> Result<CorrelationReport> {
    let (batch, truth) = load_ensemble(run)?;
    let report = correlation_report(&batch, &truth, &run.task.kind())?;
    let dir = prepare(run, ANALYSIS, force)?;
    report.write(&dir)?;
    write_json(
        dir.join(MANIFEST),
        &json!({ "task": run.task.name(), "files": ["report.json", "series.csv", "dtw_path.csv",
                 "dtw_pairwise.csv", "dtw_accumulated.csv"] }),
    )?;
    match report.pearson {
        Some(r) => log::info!("error/variance correlation {r:.4}"),
        None => log::warn!("correlation undefined: {}", report.degenerate.join("; ")),
    }
    Ok(report)
}

pub fn sweep(run: &Resolved, force: bool) -> Result<()> {
    let (batch, _) = load_ensemble(run)?;
    let hi = run.sweep.k_max.unwrap_or(batch.len());
    let result = size_sweep(
        &batch,
        run.sweep.k_min..=hi,
        run.sweep.max_combinations,
        derive_seed(run.seed, SLOT_SWEEP),
    )?;
    let dir = prepare(run, SWEEP, force)?;
    result.write_csv(dir.join("sweep.csv"))?;
    result.write_summary(dir.join("summary.json"), run.sweep.tolerance)?;
    write_json(dir.join(MANIFEST), &json!({ "files": ["sweep.csv", "summary.json"] }))?;
    if let Ok(k) = recommend_size(&result, run.sweep.tolerance) {
        log::info!("recommended ensemble size {k}");
    }
    Ok(())
}

/// Runs every stage whose output is missing, then writes `report/`.
pub fn report(run: &Resolved, force: bool) -> Result<()> {
    if !stage_done(run, DATA) {
        gen_data(run, false)?;
    }
    if !stage_done(run, MODEL) {
        train(run, false)?;
    }
    if !stage_done(run, ENSEMBLE) {
        ensemble(run, false)?;
    }
    if !stage_done(run, ANALYSIS) {
        analyze(run, false)?;
    }
    if !stage_done(run, SWEEP) {
        if load_ensemble(run)?.0.len() >= 2 {
            sweep(run, false)?;
        } else {
            log::warn!("single-member ensemble: size sweep skipped");
        }
    }
    let dir = prepare(run, REPORT, force)?;
    let analysis: serde_json::Value = read_json(run.out.join(ANALYSIS).join("report.json"))?;
    let model: serde_json::Value = read_json(run.out.join(MODEL).join(MANIFEST))?;
    let sweep_path = run.out.join(SWEEP).join("summary.json");
    let sweep: serde_json::Value = if sweep_path.exists() {
        read_json(&sweep_path)?
    } else {
        serde_json::Value::Null
    };
    let mut files = vec!["summary.json".to_string()];
    if let Task::Ns(t) = &run.task {
        files.extend(ns_spectra(run, t, &dir)?);
    }
    write_json(
        dir.join("summary.json"),
        &json!({
            "task": run.task.name(),
            "seed": run.seed,
            "training": {
                "steps": model.get("steps"),
                "loss_first": model.get("loss_first"),
                "loss_last": model.get("loss_last"),
                "sha256": model.get("sha256"),
            },
            "pearson": analysis["pearson"],
            "dtw_distance": analysis["dtw_distance"],
            "ensemble_final_error": analysis["ensemble_final_error"],
            "mean_sample_final_error": analysis["mean_sample_final_error"],
            "residual": analysis["residual"],
            "degenerate": analysis["degenerate"],
            "recommended_k": sweep.get("recommended_k"),
            "sweep_tolerance": sweep.get("tolerance"),
        }),
    )?;
    write_json(dir.join(MANIFEST), &json!({ "files": files }))?;
    Ok(())
}

/// Energy spectra and vorticity histograms of the middle frame of the first
/// test stack: ground truth, ensemble mean and low-fidelity input.
fn ns_spectra(run: &Resolved, t: &deu_core::pipeline::NsTask, dir: &Path) -> Result<Vec<String>> {
    let (batch, truth) = load_ensemble(run)?;
    let input = read_field(run.out.join(ENSEMBLE).join("input.fld"))?;
    let mean = deu_core::ensemble::ensemble_mean(&batch);
    let n = t.ns.grid;
    let frame = |f: &Field| -> Result<Field> {
        let start = n * n; // stack 0, frame 1
        if f.len() < 2 * n * n {
            bail!("stack too small for a spectrum");
        }
        Ok(Field::from_vec(&[Dim::space(n), Dim::space(n)], f.data()[start..start + n * n].to_vec())?)
    };
    let truth_f = frame(&truth)?;
    let range = {
        let m = truth_f.max_abs() * 1.5;
        (-m, m)
    };
    let mut files = Vec::new();
    for (name, f) in [("truth", &truth), ("mean", &mean), ("input", &input)] {
        let fr = frame(f)?;
        let spec = format!("spectrum_{name}.csv");
        energy_spectrum(&fr)?.write_csv(dir.join(&spec))?;
        let hist = format!("histogram_{name}.csv");
        vorticity_histogram(&fr, 24, range)?.write_csv(dir.join(&hist))?;
        files.push(spec);
        files.push(hist);
    }
    Ok(files)
}
