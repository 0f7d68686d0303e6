//! Browser bindings for the pruning toolkit. Every export takes plain
//! numbers and returns a JSON string; `www/index.html` draws the results.

use wasm_bindgen::prelude::*;

pub mod demo;

fn to_js<T: serde::Serialize>(r: sscprune::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Clusters points drawn from a union of random subspaces and returns
/// labels, accuracy and the affinity matrix.
#[wasm_bindgen(js_name = clusterSubspaces)]
pub fn cluster_subspaces(
    subspaces: usize,
    dim: usize,
    ambient: usize,
    points_per_subspace: usize,
    noise: f64,
    alpha: f64,
    seed: u32,
) -> Result<String, JsError> {
    to_js(demo::cluster_demo(&demo::SubspaceParams {
        subspaces,
        dim,
        ambient,
        points_per_subspace,
        noise,
        alpha,
        seed: seed.into(),
    }))
}

/// Compares channel selectors on the planted-redundancy net at each ratio.
#[wasm_bindgen(js_name = selectorSweep)]
pub fn selector_sweep(seed: u32, perturbation: f32, ratios: Vec<f64>) -> Result<String, JsError> {
    to_js(demo::selector_sweep(seed.into(), perturbation, &ratios))
}
