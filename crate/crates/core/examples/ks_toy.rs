//! Trains the KS toy model, samples rollout ensembles for several seeds and
//! prints the error/variance statistics of each.

use std::time::Instant;

use deu_core::analysis::{correlation_report, TaskKind};
use deu_core::denoiser::smoothed_ends;
use deu_core::pipeline::KsTask;

fn main() -> deu_core::Result<()> {
    let mut task = KsTask::default();
    if let Some(steps) = std::env::args().nth(1) {
        task.train.steps = steps.parse().expect("training steps");
    }
    let clock = Instant::now();
    let (train, test) = task.generate(1)?;
    println!("data {:.1}s", clock.elapsed().as_secs_f64());
    let (model, loss) = task.fit(&train, 1)?;
    let (first, last) = smoothed_ends(&loss, 100).expect("non-empty loss history");
    println!("train {:.1}s loss {first:.4} -> {last:.4}", clock.elapsed().as_secs_f64());
    let (history, truth) = task.split(&test)?;
    for run in 0..8 {
        let batch = task.ensemble(&model, &history, 100 + run)?;
        let r = correlation_report(&batch, &truth, &TaskKind::Refiner)?;
        println!(
            "run {run}: rho {:?} ens {:.4} mean-sample {:.4} e0 {:.4} var_end {:.4} ({:.1}s)",
            r.pearson,
            r.ensemble_final_error,
            r.mean_sample_final_error,
            r.error[0],
            r.variance.last().unwrap(),
            clock.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
