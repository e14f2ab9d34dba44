//! WebAssembly bindings for the browser demo. Every export returns a flat
//! `Float64Array`; the row layout is documented on each function.

use hierpoly::hermite::h_all;
use hierpoly::network::BiasDistribution;
use hierpoly::rf1d::{uniform_grid, verify_representation, RF1DWeights};
use hierpoly::stein::{stein_scaling_sweep, SweepFamily};
use hierpoly::target::LinkSpec;
use wasm_bindgen::prelude::*;

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("bad {what} entry `{t}`")))
        .collect()
}

/// `n` rows of `[z, h_0(z), ..., h_kmax(z)]` for `z` evenly spaced on `[lo, hi]`.
pub fn hermite_rows(kmax: usize, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, String> {
    if n < 2 || !(hi > lo) || kmax > 30 {
        return Err("need n >= 2, hi > lo and kmax <= 30".into());
    }
    let mut out = Vec::with_capacity(n * (kmax + 2));
    for i in 0..n {
        let z = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        out.push(z);
        out.extend(h_all(kmax, z));
    }
    Ok(out)
}

/// Rows `[d, residual_k, residual_lt_k]` for the orthogonal-decomposition
/// family, followed by the two log-log slopes (NaN when undefined).
pub fn stein_rows(k: usize, link: &str, dims: &str) -> Result<Vec<f64>, String> {
    let link = LinkSpec::new(&parse_list::<f64>(link, "link")?).map_err(|e| e.to_string())?;
    let dims: Vec<usize> = parse_list(dims, "dimension")?;
    let sweep = stein_scaling_sweep(SweepFamily::Ortho { k, seed: None }, &link, &dims).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * dims.len() + 2);
    for r in &sweep.reports {
        out.extend([r.d as f64, r.residual_k, r.residual_lt_k]);
    }
    out.push(sweep.slope_k.unwrap_or(f64::NAN));
    out.push(sweep.slope_lt_k.unwrap_or(f64::NAN));
    Ok(out)
}

/// Rows `[x, estimate, se, target]` of the Monte Carlo check of the
/// univariate ReLU representation of `f`, followed by `sup |v|`.
pub fn rf1d_rows(f: &str, radius: f64, nu: f64, n_mc: usize, grid: usize, seed: u64) -> Result<Vec<f64>, String> {
    let coeffs = parse_list::<f64>(f, "coefficient")?;
    let bias = BiasDistribution::student_t(nu).map_err(|e| e.to_string())?;
    let w = RF1DWeights::c2(&coeffs, radius, bias).map_err(|e| e.to_string())?;
    let v = verify_representation(&w, &uniform_grid(radius, grid.max(1)), n_mc, seed).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(4 * v.points.len() + 1);
    for p in &v.points {
        out.extend([p.x, p.estimate, p.se, p.target]);
    }
    out.push(w.sup_v);
    Ok(out)
}

#[wasm_bindgen]
pub fn hermite_curves(kmax: usize, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    hermite_rows(kmax, lo, hi, n).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn stein_sweep(k: usize, link: &str, dims: &str) -> Result<Vec<f64>, JsValue> {
    stein_rows(k, link, dims).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rf1d_curve(f: &str, radius: f64, nu: f64, n_mc: usize, grid: usize, seed: u32) -> Result<Vec<f64>, JsValue> {
    rf1d_rows(f, radius, nu, n_mc, grid, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}
