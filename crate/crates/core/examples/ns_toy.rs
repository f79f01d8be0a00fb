//! Trains the NS super-resolution toy model and compares the residual loss of
//! unguided and residual-guided reconstructions over several seeds.

use std::time::Instant;

use deu_core::analysis::{relative_l2_error_refiner, residual_loss};
use deu_core::denoiser::smoothed_ends;
use deu_core::pipeline::NsTask;

fn main() -> deu_core::Result<()> {
    let task = NsTask::default();
    let scales: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("guidance scale"))
        .collect();
    let clock = Instant::now();
    let (train, test) = task.generate(1)?;
    let (model, loss) = task.fit(&train, 1)?;
    let (first, last) = smoothed_ends(&loss, 100).expect("non-empty loss history");
    println!("train {:.1}s loss {first:.4} -> {last:.4}", clock.elapsed().as_secs_f64());
    let low = task.low_fidelity(&test)?;
    let r_low = residual_loss(&low, &test, &task.ns)?.mean();
    let e_low = relative_l2_error_refiner(&low, &test)?;
    println!("low fidelity: r {r_low:.4e} e {:.4}", e_low.iter().sum::<f64>() / 3.0);
    for s in std::iter::once(0.0).chain(scales) {
        let mut r = 0.0;
        let mut e = 0.0;
        for seed in 0..8 {
            let out = task.superresolve(&model, &low, s, seed)?;
            r += residual_loss(&out, &test, &task.ns)?.mean() / 8.0;
            e += relative_l2_error_refiner(&out, &test)?.iter().sum::<f64>() / 24.0;
        }
        println!("s {s:e}: r {r:.4e} e {e:.4} ({:.1}s)", clock.elapsed().as_secs_f64());
    }
    Ok(())
}
