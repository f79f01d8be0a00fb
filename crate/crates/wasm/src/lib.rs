//! Browser bindings for three small demos built on `deu-core`: a
//! Kuramoto-Sivashinsky space-time plot, the convergence of an ensemble mean
//! on the Gaussian oracle, and DTW alignment of two series.
//!
//! The computations live in [`demo`] as plain Rust so they can be tested
//! natively; the exported functions only convert errors.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js_err(e: String) -> JsError {
    JsError::new(&e)
}

/// Row-major `[frames, resolution]` KS trajectory.
#[wasm_bindgen]
pub fn ks_trajectory(
    domain_length: f64,
    resolution: usize,
    frames: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    demo::ks_trajectory(domain_length, resolution, frames, seed).map_err(js_err)
}

/// RMS error of the J-member ensemble mean for `J = 1..=j_max`.
#[wasm_bindgen]
pub fn ensemble_convergence(j_max: usize, reps: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    demo::ensemble_convergence(j_max, reps, seed).map_err(js_err)
}

/// Least-squares slope of `ln error` against `ln J`.
#[wasm_bindgen]
pub fn loglog_slope(errors: &[f64]) -> f64 {
    demo::loglog_slope(errors)
}

/// JSON `{"distance": d, "path": [[i, j], ...]}`.
#[wasm_bindgen]
pub fn dtw_align(x: &[f64], y: &[f64]) -> Result<String, JsError> {
    demo::dtw_align(x, y).map_err(js_err)
}
