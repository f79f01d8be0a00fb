use deu_core::analysis::dtw;
use deu_core::sampling::{ddpm_sample, make_schedule, GaussianOracle, ScheduleKind};
use deu_core::spectral::{ks_initial_condition, KsConfig, KsSolver};
use deu_core::RngStream;

const MAX_FRAMES: usize = 2000;
const MAX_MEMBERS: usize = 1024;

pub fn ks_trajectory(domain_length: f64, resolution: usize, frames: usize, seed: u64) -> Result<Vec<f64>, String> {
    if frames == 0 || frames > MAX_FRAMES {
        return Err(format!("frames must be in 1..={MAX_FRAMES}"));
    }
    let cfg = KsConfig {
        domain_length,
        resolution,
        dt: 0.05,
        horizon: frames,
        record_every: 4,
        warmup_steps: 1000,
    };
    let solver = KsSolver::new(&cfg).map_err(|e| e.to_string())?;
    let u0 = ks_initial_condition(&cfg, &mut RngStream::new(seed));
    Ok(solver.simulate(&u0).map_err(|e| e.to_string())?.into_data())
}

/// Target N(1, 0.25^2) in four coordinates, exact noise predictor, 100-step
/// cosine schedule. Entry `J - 1` is the RMS over `reps` repetitions of the
/// error of the mean of the first `J` samples.
pub fn ensemble_convergence(j_max: usize, reps: usize, seed: u64) -> Result<Vec<f64>, String> {
    if j_max == 0 || j_max > MAX_MEMBERS || reps == 0 {
        return Err(format!("need 1 <= j_max <= {MAX_MEMBERS} and reps >= 1"));
    }
    let dim = 4;
    let mu = vec![1.0; dim];
    let schedule = make_schedule(100, ScheduleKind::Cosine, (1e-4, 0.999)).map_err(|e| e.to_string())?;
    let oracle = GaussianOracle::new(mu.clone(), vec![0.25; dim], schedule.clone()).map_err(|e| e.to_string())?;
    let root = RngStream::new(seed);
    let mut sq = vec![0.0; j_max];
    for r in 0..reps {
        let x = ddpm_sample(&oracle, &[], j_max, &schedule, &mut root.derive(r as u64)).map_err(|e| e.to_string())?;
        let mut sum = vec![0.0; dim];
        for (j, row) in x.chunks(dim).enumerate() {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            sq[j] += sum
                .iter()
                .zip(&mu)
                .map(|(s, m)| (s / (j + 1) as f64 - m).powi(2))
                .sum::<f64>();
        }
    }
    Ok(sq.iter().map(|s| (s / (reps * dim) as f64).sqrt()).collect())
}

pub fn loglog_slope(errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0.0)
        .map(|(j, e)| (((j + 1) as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn dtw_align(x: &[f64], y: &[f64]) -> Result<String, String> {
    let r = dtw(x, y).map_err(|e| e.to_string())?;
    Ok(serde_json::json!({ "distance": r.distance, "path": r.path }).to_string())
}
