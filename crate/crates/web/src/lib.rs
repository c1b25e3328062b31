//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The `*_values` functions are plain Rust and carry the logic; the exported
//! wrappers only convert errors for JavaScript.

use std::sync::Arc;

use longmem::innovations::InnovationSpec;
use longmem::limits::{z_closed_form_cf, z_levy_cf};
use longmem::linproc::{coefficients, CoefficientSpec, Simulator};
use longmem::regvar::SlowlyVarying;
use longmem::stable::{StableCdf, StableLaw};
use wasm_bindgen::prelude::*;

pub const MAX_POINTS: usize = 2001;
pub const MAX_PATH: usize = 1 << 16;

fn check_points(points: usize) -> Result<(), String> {
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must lie in 2..={MAX_POINTS}"));
    }
    Ok(())
}

fn grid(from: f64, to: f64, points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |k| from + (to - from) * k as f64 / (points - 1) as f64)
}

/// `[x, F(x), f(x)]` triples of the standard-scale stable law.
pub fn stable_values(alpha: f64, skew: f64, from: f64, to: f64, points: usize) -> Result<Vec<f64>, String> {
    check_points(points)?;
    if !(to > from) {
        return Err("the range must be increasing".into());
    }
    let law = StableLaw::new(alpha, 1.0, skew, 0.0).map_err(|e| e.to_string())?;
    let cdf = StableCdf::new(law).map_err(|e| e.to_string())?;
    Ok(grid(from, to, points).flat_map(|x| [x, cdf.cdf(x), cdf.pdf(x)]).collect())
}

/// One path `X_1..X_n` of the linear process with `a_j = j^{−β}`, `j ≤ J`,
/// and symmetric innovations of tail index `α`.
pub fn path_values(alpha: f64, beta: f64, n: usize, j: usize, seed: u64) -> Result<Vec<f64>, String> {
    if n == 0 || n > MAX_PATH || j == 0 || j > MAX_PATH {
        return Err(format!("n and J must lie in 1..={MAX_PATH}"));
    }
    let spec = CoefficientSpec { beta, ell: SlowlyVarying::one(), j };
    spec.validate().map_err(|e| e.to_string())?;
    spec.check_pair(alpha).map_err(|e| e.to_string())?;
    let inn = InnovationSpec::symmetric(alpha, 0.5).build().map_err(|e| e.to_string())?;
    let sim = Simulator::new(Arc::new(coefficients(&spec)), inn, n).map_err(|e| e.to_string())?;
    Ok(sim.replicate(seed, 1, 1, |r| r.x.clone()).remove(0))
}

/// `[u, Re, Im]` of the Lévy form and of the closed form of the `𝐙^{p}` characteristic function.
pub fn z_cf_values(p: f64, gamma1: f64, gamma2: f64, u_max: f64, points: usize) -> Result<Vec<f64>, String> {
    check_points(points)?;
    if !(u_max > 0.0) {
        return Err("u_max must be positive".into());
    }
    let mut out = Vec::with_capacity(5 * points);
    for u in grid(-u_max, u_max, points) {
        let a = z_levy_cf(p, gamma1, gamma2, u).map_err(|e| e.to_string())?;
        let b = z_closed_form_cf(p, gamma1, gamma2, u).map_err(|e| e.to_string())?;
        out.extend([u, a.re, a.im, b.re, b.im]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn stable_table(alpha: f64, skew: f64, from: f64, to: f64, points: usize) -> Result<Vec<f64>, JsError> {
    stable_values(alpha, skew, from, to, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_path(alpha: f64, beta: f64, n: usize, j: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    path_values(alpha, beta, n, j, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn z_cf(p: f64, gamma1: f64, gamma2: f64, u_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    z_cf_values(p, gamma1, gamma2, u_max, points).map_err(|e| JsError::new(&e))
}
