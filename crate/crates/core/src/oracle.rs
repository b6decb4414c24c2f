//! Brute-force reference computations.
//!
//! Nothing here touches the snapshot sums, the log-space cell kernels or the
//! root finder: objectives are accumulated point by point from `model.pmf`
//! in linear space, and minimization is exhaustive over a fixed grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions};
use crate::models::{DiscreteModel, PoissonModel};
use crate::params::{DivergenceParams, Mode};
use crate::table::FrequencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub step: f64,
    pub long_sum_cutoff: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { theta_lo: 0.05, theta_hi: 10.0, step: 5e-4, long_sum_cutoff: 500 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta_lo.partial_cmp(&self.theta_hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidParameter("oracle grid needs theta_lo < theta_hi".into()));
        }
        if !(self.step > 0.0 && self.step <= (self.theta_hi - self.theta_lo) / 10.0) {
            return Err(Error::InvalidParameter("oracle step must be in (0, (hi - lo) / 10]".into()));
        }
        Ok(())
    }
}

/// Direct per-point objective. Terms past the largest observation stop once
/// the pmf is decreasing and negligible.
pub fn naive_objective(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    theta: f64,
    params: &DivergenceParams,
    mode: Mode,
    cutoff: u64,
) -> Result<f64> {
    let (alpha, a, b) = (params.alpha, params.a, params.b);
    let c = 1.0 + alpha;
    let beta_c = 1.0 + params.beta();
    let a_limit = a.abs() < crate::params::LIMIT_THRESHOLD;
    let b_limit = b.abs() < crate::params::LIMIT_THRESHOLD;
    let max_obs = data.max_support();
    let th = [theta];
    let mut total = 0.0;
    let mut prev_f = f64::INFINITY;
    for x in 0..=cutoff.max(max_obs) {
        let f = model.pmf(&th, x);
        let r = data.relative(x);
        if r > 0.0 {
            let f = f.max(1e-320);
            let term = if a_limit {
                f.powf(c) * (f / r).ln() - (f.powf(c) - r.powf(c)) / c
            } else if b_limit {
                r.powf(c) * (r / f).ln() - (r.powf(c) - f.powf(c)) / c
            } else {
                // Guard against overflow of f^B for tiny f and negative B.
                let cross = if f < 1e-250 { (b * f.ln() + a * r.ln()).exp() } else { f.powf(b) * r.powf(a) };
                f.powf(c) / a - c / (a * b) * cross + r.powf(c) / b
            };
            total += term;
        } else if f > 0.0 {
            total += match mode {
                Mode::Msde => {
                    if a <= 0.0 || a_limit {
                        return Err(Error::EmptyCellUndefined { alpha, lambda: params.lambda, a });
                    }
                    f.powf(c) / a
                }
                Mode::Mpsde => params.h * f.powf(beta_c),
            };
        }
        if x > max_obs && f < prev_f && f < 1e-17 {
            break;
        }
        prev_f = f;
    }
    Ok(total)
}

/// Exhaustive grid argmin of the (penalized) divergence.
pub fn grid_minimize(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    params: &DivergenceParams,
    mode: Mode,
    config: &OracleConfig,
) -> Result<f64> {
    grid_minimize_tilted(data, model, params, mode, config, 0.0)
}

fn grid_minimize_tilted(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    params: &DivergenceParams,
    mode: Mode,
    config: &OracleConfig,
    tilt: f64,
) -> Result<f64> {
    config.validate()?;
    let steps = ((config.theta_hi - config.theta_lo) / config.step).floor() as usize;
    let mut best = (f64::INFINITY, config.theta_lo);
    for i in 0..=steps {
        let t = config.theta_lo + i as f64 * config.step;
        let v = naive_objective(data, model, t, params, mode, config.long_sum_cutoff)? + tilt * t;
        if v < best.0 {
            best = (v, t);
        }
    }
    Ok(best.1)
}

/// `sum_{x=0}^{cutoff} f^c` by direct accumulation.
pub fn long_sum_check(model: &dyn DiscreteModel, theta: f64, c: f64, config: &OracleConfig) -> f64 {
    (0..=config.long_sum_cutoff).map(|x| model.pmf(&[theta], x).powf(c)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub cases: usize,
    pub seed: u64,
    /// Linear tilt added to the oracle objective; non-zero values are a
    /// negative control that must make verification fail.
    pub perturb: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { cases: 100, seed: 7, perturb: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCase {
    pub index: usize,
    pub true_theta: f64,
    pub n: u64,
    pub alpha: f64,
    pub lambda: f64,
    pub h: f64,
    pub mode: Mode,
    pub fit_theta: Option<f64>,
    pub grid_theta: Option<f64>,
    pub abs_diff: Option<f64>,
    /// Both sides reported the ordinary divergence as undefined.
    pub undefined: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSumCase {
    pub theta: f64,
    pub c: f64,
    pub power_sum: f64,
    pub long_sum: f64,
    pub abs_diff: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub options: VerifyOptions,
    pub fit_tolerance: f64,
    pub power_sum_tolerance: f64,
    pub grid_step: f64,
    pub fit_cases: Vec<FitCase>,
    pub power_sum_cases: Vec<PowerSumCase>,
    pub pass: bool,
}

pub const FIT_TOLERANCE: f64 = 5e-4;
pub const POWER_SUM_TOLERANCE: f64 = 1e-10;

const ALPHAS: [f64; 4] = [0.0, 0.1, 0.25, 0.5];
const LAMBDAS: [f64; 5] = [0.0, -0.5, -1.0, -1.5, -2.0];
const NS: [u64; 3] = [10, 20, 50];

/// Cross-checks `fit` against [`grid_minimize`] on randomized Poisson data and
/// `power_sum` against [`long_sum_check`].
pub fn run_verification(opts: &VerifyOptions) -> VerifyReport {
    let model = PoissonModel;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut fit_cases = Vec::with_capacity(opts.cases);
    for index in 0..opts.cases {
        let true_theta = rng.random_range(1.0..9.0);
        let n = NS[rng.random_range(0..NS.len())];
        let alpha = ALPHAS[rng.random_range(0..ALPHAS.len())];
        let lambda = LAMBDAS[rng.random_range(0..LAMBDAS.len())];
        let h = f64::from(rng.random_range(0..=15u8)) / 10.0;
        let mode = if rng.random_bool(0.5) { Mode::Msde } else { Mode::Mpsde };
        let obs: Vec<u64> = (0..n).map(|_| model.sample(&[true_theta], &mut rng)).collect();
        let data = FrequencyTable::from_observations(&obs).expect("n >= 1");
        let params = DivergenceParams::new(alpha, lambda).and_then(|p| p.with_h(h)).expect("valid grid");

        let (lo, _) = model.scan_bounds(&data);
        let config = OracleConfig {
            theta_lo: lo,
            theta_hi: data.max_support() as f64 + 1.0,
            ..OracleConfig::default()
        };
        let fitted = fit(&data, &model, &params, mode, &FitOptions::default());
        let grid = grid_minimize_tilted(&data, &model, &params, mode, &config, opts.perturb);
        let mut case = FitCase {
            index,
            true_theta,
            n,
            alpha,
            lambda,
            h,
            mode,
            fit_theta: None,
            grid_theta: None,
            abs_diff: None,
            undefined: false,
            pass: false,
        };
        match (fitted, grid) {
            (Ok(r), Ok(g)) => {
                let d = (r.theta_hat[0] - g).abs();
                case.fit_theta = Some(r.theta_hat[0]);
                case.grid_theta = Some(g);
                case.abs_diff = Some(d);
                case.pass = r.converged && d <= FIT_TOLERANCE;
            }
            (Err(Error::EmptyCellUndefined { .. }), Err(Error::EmptyCellUndefined { .. })) => {
                case.undefined = true;
                case.pass = true;
            }
            (Ok(r), Err(_)) => case.fit_theta = Some(r.theta_hat[0]),
            (Err(_), Ok(g)) => case.grid_theta = Some(g),
            (Err(_), Err(_)) => {}
        }
        fit_cases.push(case);
    }

    let config = OracleConfig::default();
    let mut power_sum_cases = Vec::new();
    for theta in [0.3, 1.0, 3.0, 5.0, 9.0, 20.0] {
        for c in [1.0, 1.1, 1.25, 1.5, 2.0] {
            let ps = model.power_sum(&[theta], c, crate::DEFAULT_TAIL_EPS);
            let ls = long_sum_check(&model, theta, c, &config);
            let abs_diff = (ps - ls).abs();
            power_sum_cases.push(PowerSumCase {
                theta,
                c,
                power_sum: ps,
                long_sum: ls,
                abs_diff,
                pass: abs_diff <= POWER_SUM_TOLERANCE,
            });
        }
    }
    let pass = fit_cases.iter().all(|c| c.pass) && power_sum_cases.iter().all(|c| c.pass);
    VerifyReport {
        options: *opts,
        fit_tolerance: FIT_TOLERANCE,
        power_sum_tolerance: POWER_SUM_TOLERANCE,
        grid_step: config.step,
        fit_cases,
        power_sum_cases,
        pass,
    }
}
