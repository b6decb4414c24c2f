//! Monte-Carlo MSE experiments for the penalty factor `h` (and `beta`).
//!
//! Datasets depend only on `(base_seed, n, theta, replicate)`, so every
//! `(alpha, lambda, h, beta)` cell sharing `(n, theta)` sees exactly the same
//! samples (common random numbers).

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions};
use crate::models::{DiscreteModel, PoissonModel};
use crate::params::{DivergenceParams, Mode};
use crate::table::FrequencyTable;

pub const DEFAULT_REPLICATES: usize = 1000;
pub const FAST_REPLICATES: usize = 200;

/// `0.0, 0.1, ..., 1.5`
pub fn default_h_grid() -> Vec<f64> {
    (0..=15).map(|i| f64::from(i) / 10.0).collect()
}

pub fn default_beta_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.25, 0.5, 0.7, 1.0]
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG streams for simulated datasets.
///
/// Replicate `r` of data cell `(n, theta)` draws from a ChaCha8 generator
/// keyed by `base_seed` (bytes 0..8) and `cell_index(n, theta)` (bytes
/// 8..16), on stream `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSchedule {
    pub base_seed: u64,
}

impl SeedSchedule {
    pub fn new(base_seed: u64) -> Self {
        Self { base_seed }
    }

    pub fn cell_index(n: u64, theta: f64) -> u64 {
        splitmix64(splitmix64(n) ^ theta.to_bits())
    }

    pub fn rng(&self, cell_index: u64, replicate: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.base_seed.to_le_bytes());
        key[8..16].copy_from_slice(&cell_index.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replicate);
        rng
    }

    /// `n` iid draws from `model` at `theta` for the given replicate.
    pub fn dataset(&self, model: &dyn DiscreteModel, n: u64, theta: f64, replicate: u64) -> FrequencyTable {
        let mut rng = self.rng(Self::cell_index(n, theta), replicate);
        let obs: Vec<u64> = (0..n).map(|_| model.sample(&[theta], &mut rng)).collect();
        FrequencyTable::from_observations(&obs).expect("n >= 1")
    }
}

/// Draws `n` Poisson(theta) observations with a seed-derived stream.
pub fn sample(theta: f64, n: u64, seed: u64) -> FrequencyTable {
    SeedSchedule::new(seed).dataset(&PoissonModel, n, theta, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub n_values: Vec<u64>,
    pub theta_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    #[serde(default = "default_h_grid")]
    pub h_values: Vec<f64>,
    #[serde(default)]
    pub beta_values: Option<Vec<f64>>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_mode() -> Mode {
    Mode::Mpsde
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_values.is_empty()
            || self.theta_values.is_empty()
            || self.alpha_values.is_empty()
            || self.lambda_values.is_empty()
            || self.h_values.is_empty()
        {
            return bad("grid lists must be non-empty");
        }
        if self.beta_values.as_ref().is_some_and(|b| b.is_empty()) {
            return bad("beta list must be non-empty when given");
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1");
        }
        if self.n_values.contains(&0) {
            return bad("sample sizes must be >= 1");
        }
        if self.theta_values.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("theta values must be positive");
        }
        if self.alpha_values.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("alpha values must be >= 0");
        }
        if self.lambda_values.iter().any(|l| !l.is_finite()) {
            return bad("lambda values must be finite");
        }
        if self.h_values.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return bad("h values must be >= 0");
        }
        if let Some(b) = &self.beta_values {
            if b.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("beta values must be >= 0");
            }
            if self.mode != Mode::Mpsde {
                return bad("beta sweeps need the penalized mode");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub n: u64,
    pub theta: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// `None` for ordinary-divergence cells, which have no penalty.
    pub h: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mse: f64,
    pub n_times_mse: f64,
    pub fail_count: usize,
    pub r_effective: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub cell_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub key: CellKey,
    pub result: CellResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSurface {
    pub mode: Mode,
    pub cells: Vec<SurfaceCell>,
}

fn aggregate(
    estimates: &[Option<f64>],
    n: u64,
    theta: f64,
    schedule: &SeedSchedule,
) -> Result<CellResult> {
    let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::AllReplicatesFailed { replicates: estimates.len() });
    }
    let mse = ok.iter().map(|t| (t - theta).powi(2)).sum::<f64>() / ok.len() as f64;
    Ok(CellResult {
        mse,
        n_times_mse: n as f64 * mse,
        fail_count: estimates.len() - ok.len(),
        r_effective: ok.len(),
        replicates: estimates.len(),
        base_seed: schedule.base_seed,
        cell_index: SeedSchedule::cell_index(n, theta),
    })
}

fn estimate(data: &FrequencyTable, params: &DivergenceParams, mode: Mode) -> Option<f64> {
    match fit(data, &PoissonModel, params, mode, &FitOptions::default()) {
        Ok(r) if r.converged => Some(r.theta_hat[0]),
        _ => None,
    }
}

/// MSE cell with an arbitrary estimator; failed replicates return `None`.
pub fn run_cell_with<F>(n: u64, theta: f64, replicates: usize, schedule: &SeedSchedule, estimator: F) -> Result<CellResult>
where
    F: Fn(&FrequencyTable) -> Option<f64> + Sync,
{
    let estimates: Vec<Option<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| estimator(&schedule.dataset(&PoissonModel, n, theta, r)))
        .collect();
    aggregate(&estimates, n, theta, schedule)
}

/// Empirical MSE of the Poisson-mean estimator over `replicates` datasets.
pub fn run_mse_cell(
    n: u64,
    theta: f64,
    params: &DivergenceParams,
    mode: Mode,
    replicates: usize,
    schedule: &SeedSchedule,
) -> Result<CellResult> {
    run_cell_with(n, theta, replicates, schedule, |d| estimate(d, params, mode))
}

fn datasets(n: u64, theta: f64, replicates: usize, schedule: &SeedSchedule) -> Vec<FrequencyTable> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| schedule.dataset(&PoissonModel, n, theta, r))
        .collect()
}

fn cell_on(
    data: &[FrequencyTable],
    n: u64,
    theta: f64,
    params: &DivergenceParams,
    mode: Mode,
    schedule: &SeedSchedule,
) -> CellResult {
    let estimates: Vec<Option<f64>> = data.par_iter().map(|d| estimate(d, params, mode)).collect();
    aggregate(&estimates, n, theta, schedule).unwrap_or(CellResult {
        mse: f64::NAN,
        n_times_mse: f64::NAN,
        fail_count: data.len(),
        r_effective: 0,
        replicates: data.len(),
        base_seed: schedule.base_seed,
        cell_index: SeedSchedule::cell_index(n, theta),
    })
}

fn sweep(grid: &ExperimentGrid, betas: &[Option<f64>]) -> Result<MseSurface> {
    grid.validate()?;
    let schedule = SeedSchedule::new(grid.base_seed);
    let mut cells = Vec::new();
    for &n in &grid.n_values {
        for &theta in &grid.theta_values {
            let data = datasets(n, theta, grid.replicates, &schedule);
            for &alpha in &grid.alpha_values {
                for &lambda in &grid.lambda_values {
                    let base = DivergenceParams::new(alpha, lambda)?;
                    if grid.mode == Mode::Msde {
                        let result = cell_on(&data, n, theta, &base, Mode::Msde, &schedule);
                        let key = CellKey { n, theta, alpha, lambda, h: None, beta: None };
                        cells.push(SurfaceCell { key, result });
                        continue;
                    }
                    for &beta in betas {
                        for &h in &grid.h_values {
                            let mut params = base.with_h(h)?;
                            if let Some(b) = beta {
                                params = params.with_beta(b)?;
                            }
                            let result = cell_on(&data, n, theta, &params, Mode::Mpsde, &schedule);
                            let key = CellKey { n, theta, alpha, lambda, h: Some(h), beta };
                            cells.push(SurfaceCell { key, result });
                        }
                    }
                }
            }
        }
    }
    Ok(MseSurface { mode: grid.mode, cells })
}

/// MSE surface over every `(n, theta, alpha, lambda, h)` in the grid.
pub fn sweep_h(grid: &ExperimentGrid) -> Result<MseSurface> {
    sweep(grid, &[None])
}

/// As [`sweep_h`], additionally indexed by the empty-cell exponent `beta`.
pub fn sweep_beta(grid: &ExperimentGrid) -> Result<MseSurface> {
    let betas: Vec<Option<f64>> = grid
        .beta_values
        .clone()
        .unwrap_or_else(default_beta_grid)
        .into_iter()
        .map(Some)
        .collect();
    if grid.mode != Mode::Mpsde {
        return Err(Error::InvalidParameter("beta sweeps need the penalized mode".into()));
    }
    sweep(grid, &betas)
}

/// Dispatches to [`sweep_beta`] when the grid lists `beta` values.
pub fn run_grid(grid: &ExperimentGrid) -> Result<MseSurface> {
    if grid.beta_values.is_some() {
        sweep_beta(grid)
    } else {
        sweep_h(grid)
    }
}

impl MseSurface {
    /// Cells of the `(n, theta, alpha, lambda)` family on the `beta = alpha`
    /// slice, ordered by `h`.
    fn h_family(&self, n: u64, theta: f64, alpha: f64, lambda: f64) -> Vec<&SurfaceCell> {
        let mut v: Vec<&SurfaceCell> = self
            .cells
            .iter()
            .filter(|c| {
                let k = &c.key;
                k.n == n
                    && k.theta == theta
                    && k.alpha == alpha
                    && k.lambda == lambda
                    && k.h.is_some()
                    && k.beta.is_none_or(|b| b == alpha)
                    && c.result.r_effective > 0
            })
            .collect();
        v.sort_by(|a, b| a.key.h.unwrap().total_cmp(&b.key.h.unwrap()));
        v
    }

    pub fn get(&self, key: &CellKey) -> Option<&CellResult> {
        self.cells.iter().find(|c| &c.key == key).map(|c| &c.result)
    }
}

fn family_label(n: u64, theta: f64, alpha: f64, lambda: f64) -> String {
    format!("n={n}, theta={theta}, alpha={alpha}, lambda={lambda}")
}

/// Grid argmin of the MSE over `h`; ties go to the smaller `h`.
pub fn optimal_h(surface: &MseSurface, n: u64, theta: f64, alpha: f64, lambda: f64) -> Result<(f64, f64)> {
    let fam = surface.h_family(n, theta, alpha, lambda);
    let mut best: Option<(f64, f64)> = None;
    for c in fam {
        let (h, mse) = (c.key.h.unwrap(), c.result.mse);
        if best.is_none_or(|(_, m)| mse < m) {
            best = Some((h, mse));
        }
    }
    best.ok_or_else(|| Error::MissingCells(family_label(n, theta, alpha, lambda)))
}

/// Joint grid argmin over `(h, beta)`: returns `(h, beta, mse)`.
pub fn optimal_h_beta(surface: &MseSurface, n: u64, theta: f64, alpha: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for c in &surface.cells {
        let k = &c.key;
        if k.n != n || k.theta != theta || k.alpha != alpha || k.lambda != lambda || c.result.r_effective == 0 {
            continue;
        }
        let Some(h) = k.h else { continue };
        let beta = k.beta.unwrap_or(alpha);
        if best.is_none_or(|(_, _, m)| c.result.mse < m) {
            best = Some((h, beta, c.result.mse));
        }
    }
    best.ok_or_else(|| Error::MissingCells(family_label(n, theta, alpha, lambda)))
}

/// `RI = (MSE(h*) - MSE(h_opt)) / MSE(h_opt)`.
pub fn relative_increase(
    surface: &MseSurface,
    h_star: f64,
    n: u64,
    theta: f64,
    alpha: f64,
    lambda: f64,
) -> Result<f64> {
    let (_, mse_opt) = optimal_h(surface, n, theta, alpha, lambda)?;
    let at_star = surface
        .h_family(n, theta, alpha, lambda)
        .into_iter()
        .find(|c| (c.key.h.unwrap() - h_star).abs() < 1e-12)
        .ok_or_else(|| Error::MissingCells(format!("{} at h={h_star}", family_label(n, theta, alpha, lambda))))?;
    let mse_star = at_star.result.mse;
    if mse_opt == 0.0 {
        return Ok(if mse_star == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((mse_star - mse_opt) / mse_opt)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per cell:
/// `n,theta,alpha,lambda,h,beta,mse,n_mse,fail_count,R_eff,base_seed`.
pub fn surface_csv(surface: &MseSurface) -> String {
    let mut out = String::from("n,theta,alpha,lambda,h,beta,mse,n_mse,fail_count,R_eff,base_seed\n");
    for c in &surface.cells {
        let (k, r) = (&c.key, &c.result);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            k.n,
            k.theta,
            k.alpha,
            k.lambda,
            fmt_opt(k.h),
            fmt_opt(k.beta),
            r.mse,
            r.n_times_mse,
            r.fail_count,
            r.r_effective,
            r.base_seed
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub grid: ExperimentGrid,
    pub model: String,
    pub tail_eps: f64,
    pub residual_tol: f64,
    pub seed_schedule: String,
    pub cells: usize,
    pub failed_replicates: usize,
}

impl Manifest {
    pub fn new(grid: &ExperimentGrid, surface: &MseSurface) -> Self {
        let opts = FitOptions::default();
        Self {
            grid: grid.clone(),
            model: PoissonModel.name().to_string(),
            tail_eps: opts.tail_eps,
            residual_tol: opts.residual_tol,
            seed_schedule: "ChaCha8 key = base_seed (LE u64) || splitmix64(splitmix64(n) ^ bits(theta)) (LE u64) \
                            || zeros; stream = replicate index"
                .to_string(),
            cells: surface.cells.len(),
            failed_replicates: surface.cells.iter().map(|c| c.result.fail_count).sum(),
        }
    }
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
