//! wasm-bindgen entry points for the static demo page in `www/`.

pub mod api;

use wasm_bindgen::prelude::*;

fn js(result: Result<String, String>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn quadrature(kind: &str, k: usize, sigma: f64, k_max: usize) -> Result<String, JsError> {
    js(api::quadrature(kind, k, sigma, k_max))
}

#[wasm_bindgen]
pub fn surrogate_fit(seed: u32, noise_sd: f64, omega: f64, sigma: f64) -> Result<String, JsError> {
    js(api::surrogate_fit(seed.into(), noise_sd, omega, sigma))
}

#[wasm_bindgen]
pub fn sweep(parameter: &str, seed: u32, noise_sd: f64, omega_ref: f64) -> Result<String, JsError> {
    js(api::sweep(parameter, seed.into(), noise_sd, omega_ref))
}
