//! WebAssembly bindings for a small interactive page: objective curves,
//! point estimates and a Monte-Carlo MSE-versus-penalty sweep.
//!
//! Each exported function takes plain numbers and strings and returns JSON.
//! The `*_json` functions hold the logic and are usable (and tested) natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sdiv::divergence::objective;
use sdiv::simulation::{optimal_h, sweep_h, ExperimentGrid};
use sdiv::{fit, io, DivergenceParams, FitOptions, FrequencyTable, Mode, PoissonModel};

const MAX_CURVE_POINTS: usize = 2000;
const MAX_REPLICATES: usize = 2000;

fn parse_mode(mode: &str) -> Result<Mode, String> {
    mode.parse().map_err(|e: sdiv::Error| e.to_string())
}

fn params(alpha: f64, lambda: f64, h: f64) -> Result<DivergenceParams, String> {
    DivergenceParams::new(alpha, lambda).and_then(|p| p.with_h(h)).map_err(|e| e.to_string())
}

/// Parses `x,count` lines (header optional); an empty string selects the
/// Drosophila fixture.
pub fn parse_data(text: &str) -> Result<FrequencyTable, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(io::fixture("drosophila").expect("embedded fixture"));
    }
    let body = if text.starts_with(|c: char| c.is_ascii_digit()) { format!("x,count\n{text}") } else { text.to_string() };
    io::parse_csv(&body).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CurvePoint {
    theta: f64,
    /// `None` where the ordinary divergence is undefined.
    value: Option<f64>,
}

/// Objective values on a log-spaced grid of Poisson means.
#[allow(clippy::too_many_arguments)]
pub fn objective_curve_json(
    data: &str,
    alpha: f64,
    lambda: f64,
    h: f64,
    mode: &str,
    theta_lo: f64,
    theta_hi: f64,
    points: usize,
) -> Result<String, String> {
    let data = parse_data(data)?;
    let p = params(alpha, lambda, h)?;
    let mode = parse_mode(mode)?;
    if !(theta_lo > 0.0 && theta_hi > theta_lo && theta_hi.is_finite()) {
        return Err("need 0 < theta_lo < theta_hi".into());
    }
    let points = points.clamp(2, MAX_CURVE_POINTS);
    let (a, b) = (theta_lo.ln(), theta_hi.ln());
    let curve: Vec<CurvePoint> = (0..points)
        .map(|i| {
            let theta = (a + (b - a) * i as f64 / (points - 1) as f64).exp();
            CurvePoint { theta, value: objective(&data, &PoissonModel, &[theta], &p, mode).ok() }
        })
        .collect();
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

/// Fitted Poisson mean with the solver diagnostics.
pub fn estimate_json(data: &str, alpha: f64, lambda: f64, h: f64, mode: &str) -> Result<String, String> {
    let data = parse_data(data)?;
    let p = params(alpha, lambda, h)?;
    let r = fit(&data, &PoissonModel, &p, parse_mode(mode)?, &FitOptions::default()).map_err(|e| e.to_string())?;
    serde_json::to_string(&r).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SweepPoint {
    h: f64,
    mse: f64,
    fail_count: usize,
}

#[derive(Serialize)]
struct Sweep {
    points: Vec<SweepPoint>,
    h_opt: f64,
    natural_h: Option<f64>,
}

/// Penalized-estimator MSE over `h = 0, 0.1, ..., 1.5` for simulated
/// Poisson samples.
pub fn mse_sweep_json(n: u32, theta: f64, alpha: f64, lambda: f64, replicates: u32, seed: u32) -> Result<String, String> {
    let grid = ExperimentGrid {
        n_values: vec![u64::from(n)],
        theta_values: vec![theta],
        alpha_values: vec![alpha],
        lambda_values: vec![lambda],
        h_values: sdiv::simulation::default_h_grid(),
        beta_values: None,
        mode: Mode::Mpsde,
        replicates: (replicates as usize).min(MAX_REPLICATES),
        base_seed: u64::from(seed),
    };
    let surface = sweep_h(&grid).map_err(|e| e.to_string())?;
    let (h_opt, _) = optimal_h(&surface, u64::from(n), theta, alpha, lambda).map_err(|e| e.to_string())?;
    let points = surface
        .cells
        .iter()
        .map(|c| SweepPoint { h: c.key.h.unwrap_or_default(), mse: c.result.mse, fail_count: c.result.fail_count })
        .collect();
    let natural_h = DivergenceParams::new(alpha, lambda).ok().and_then(|p| p.natural_h());
    serde_json::to_string(&Sweep { points, h_opt, natural_h }).map_err(|e| e.to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn objective_curve(
    data: &str,
    alpha: f64,
    lambda: f64,
    h: f64,
    mode: &str,
    theta_lo: f64,
    theta_hi: f64,
    points: usize,
) -> Result<String, JsError> {
    objective_curve_json(data, alpha, lambda, h, mode, theta_lo, theta_hi, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn estimate(data: &str, alpha: f64, lambda: f64, h: f64, mode: &str) -> Result<String, JsError> {
    estimate_json(data, alpha, lambda, h, mode).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mse_sweep(n: u32, theta: f64, alpha: f64, lambda: f64, replicates: u32, seed: u32) -> Result<String, JsError> {
    mse_sweep_json(n, theta, alpha, lambda, replicates, seed).map_err(|e| JsError::new(&e))
}
