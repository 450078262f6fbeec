//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The computations live in [`demo`] as plain Rust so they can be tested
//! natively; the exported functions only translate errors.

pub mod demo;

use wasm_bindgen::prelude::*;

pub use demo::{PatchGrid, ToySpaces};

fn js(e: safe_core::SafeError) -> JsError {
    JsError::new(&e.to_string())
}

/// Renders one synthetic fundus image and tiles it.
#[wasm_bindgen]
pub fn patch_grid(seed: u64, index: usize, dr: bool, spill: f64, missed_fraction: f64) -> Result<PatchGrid, JsError> {
    demo::patch_grid(seed, index, dr, spill, missed_fraction).map_err(js)
}

/// Builds labeled toy embedding spaces, one per model.
#[wasm_bindgen]
pub fn toy_spaces(seed: u64, models: usize, per_class: usize, noise: f64) -> Result<ToySpaces, JsError> {
    demo::toy_spaces(seed, models, per_class, noise).map_err(js)
}

/// Annotation codes over a `resolution × resolution` grid of the plane.
#[wasm_bindgen]
pub fn annotation_map(spaces: &ToySpaces, k: usize, tau: f64, resolution: usize) -> Result<Vec<u8>, JsError> {
    spaces.annotation_map(k, tau, resolution).map_err(js)
}

/// Decided rate and accuracy of held-out toy queries for each τ in `taus`,
/// interleaved as `[d_rate, acc, d_rate, acc, ...]`.
#[wasm_bindgen]
pub fn tau_sweep(spaces: &ToySpaces, k: usize, taus: Vec<f64>, queries: usize) -> Result<Vec<f64>, JsError> {
    spaces.tau_sweep(k, &taus, queries).map_err(js)
}
