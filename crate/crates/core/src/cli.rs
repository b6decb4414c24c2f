//! Command-line surface: `estimate`, `simulate`, `table5`, `verify`.
//!
//! Exit codes: 0 ok, 1 usage or input error, 2 undefined divergence,
//! 3 non-convergence, 4 verification failure.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::estimation::{asymptotic_variance, fit, EstimationResult, FitOptions};
use crate::io::{resolve_dataset, DatasetFormat};
use crate::models::PoissonModel;
use crate::oracle::{run_verification, VerifyOptions};
use crate::params::{DivergenceParams, Mode, Regime};
use crate::simulation::{
    self, optimal_h, optimal_h_beta, surface_csv, write_atomic, ExperimentGrid, Manifest, FAST_REPLICATES,
};
use crate::table::FrequencyTable;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNDEFINED: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;

const DEFAULT_SEED: u64 = 20_130_101;

#[derive(Debug, Parser)]
#[command(name = "sdiv", version, about = "Minimum (penalized) S-divergence estimation for discrete models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a dataset.
    Estimate(EstimateArgs),
    /// Monte-Carlo MSE surface over a parameter grid.
    Simulate(SimulateArgs),
    /// Estimates for the Drosophila fixture over the standard (lambda, alpha) grid.
    Table5(Table5Args),
    /// Cross-check the solver against brute-force oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Msde,
    Mpsde,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Msde => Mode::Msde,
            ModeArg::Mpsde => Mode::Mpsde,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Poisson,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Fixture name (`drosophila`) or path to a CSV/JSON dataset.
    #[arg(long)]
    pub data: String,
    /// Dataset format; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, value_enum, default_value = "poisson")]
    pub model: ModelArg,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value = "mpsde")]
    pub mode: ModeArg,
    /// Penalty on empty cells (penalized mode).
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    /// Empty-cell exponent parameter; defaults to alpha.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub init: Option<f64>,
    /// Median-based initializer.
    #[arg(long)]
    pub robust_init: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub out: OutFormat,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON grid file; inline flags override its fields.
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    #[arg(long = "n", value_delimiter = ',')]
    pub n_values: Option<Vec<u64>>,
    #[arg(long = "theta", value_delimiter = ',')]
    pub theta_values: Option<Vec<f64>>,
    #[arg(long = "alpha", value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha_values: Option<Vec<f64>>,
    #[arg(long = "lambda", value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda_values: Option<Vec<f64>>,
    #[arg(long = "h", value_delimiter = ',')]
    pub h_values: Option<Vec<f64>>,
    #[arg(long = "beta", value_delimiter = ',')]
    pub beta_values: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, env = "SDIV_SEED")]
    pub seed: Option<u64>,
    /// Use 200 replicates unless --replicates is given.
    #[arg(long)]
    pub fast: bool,
    #[arg(long, default_value = "sdiv-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct Table5Args {
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0])]
    pub h_list: Vec<f64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tilt added to the oracle objective (negative control).
    #[arg(long, hide = true, default_value_t = 0.0, allow_hyphen_values = true)]
    pub perturb: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, out, err),
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let sink: &mut dyn Write = if code == EXIT_OK { out } else { err };
            let _ = write!(sink, "{}", e.render());
            code
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Table5(a) => cmd_table5(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Process exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EmptyCellUndefined { .. } => EXIT_UNDEFINED,
        Error::NoConvergence(_) => EXIT_NO_CONVERGENCE,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Serialize)]
struct EstimateReport<'a> {
    dataset_n: u64,
    model: &'static str,
    mode: Mode,
    alpha: f64,
    lambda: f64,
    a: f64,
    b: f64,
    h: f64,
    beta: f64,
    #[serde(flatten)]
    result: &'a EstimationResult,
    /// `sqrt(sandwich / n)` at the estimate.
    std_error: Option<f64>,
    tail_eps: f64,
    residual_tol: f64,
}

fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write) -> crate::Result<i32> {
    let format = a.format.as_deref().map(str::parse::<DatasetFormat>).transpose()?;
    let data = resolve_dataset(&a.data, format)?;
    let mut params = DivergenceParams::new(a.alpha, a.lambda)?.with_h(a.h)?;
    if let Some(b) = a.beta {
        params = params.with_beta(b)?;
    }
    let opts = FitOptions { init: a.init.map(|t| vec![t]), robust_init: a.robust_init, ..FitOptions::default() };
    let mode = Mode::from(a.mode);
    let (result, code) = match fit(&data, &PoissonModel, &params, mode, &opts) {
        Ok(r) => {
            let code = if r.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE };
            (r, code)
        }
        Err(Error::NoConvergence(best)) => (*best, EXIT_NO_CONVERGENCE),
        Err(e) => return Err(e),
    };
    let std_error = asymptotic_variance(&PoissonModel, &result.theta_hat, params.alpha)
        .ok()
        .map(|v| (v.sandwich[(0, 0)] / data.n() as f64).sqrt());
    let report = EstimateReport {
        dataset_n: data.n(),
        model: "poisson",
        mode,
        alpha: params.alpha,
        lambda: params.lambda,
        a: params.a,
        b: params.b,
        h: params.h,
        beta: params.beta(),
        result: &result,
        std_error,
        tail_eps: opts.tail_eps,
        residual_tol: opts.residual_tol,
    };
    match a.out {
        OutFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        OutFormat::Csv => {
            writeln!(
                out,
                "mode,alpha,lambda,h,beta,theta_hat,objective,residual_norm,iterations,converged,method,std_error"
            )?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                mode,
                params.alpha,
                params.lambda,
                params.h,
                params.beta(),
                result.theta_hat[0],
                result.objective,
                result.residual_norm,
                result.iterations,
                result.converged,
                serde_json::to_value(result.method_trace)?.as_str().unwrap_or_default(),
                std_error.map(|s| s.to_string()).unwrap_or_default()
            )?;
        }
    }
    Ok(code)
}

fn build_grid(a: &SimulateArgs) -> crate::Result<ExperimentGrid> {
    let mut grid = match &a.grid_file {
        Some(p) => serde_json::from_str::<ExperimentGrid>(&std::fs::read_to_string(p)?)?,
        None => ExperimentGrid {
            n_values: vec![10],
            theta_values: vec![5.0],
            alpha_values: vec![0.0],
            lambda_values: vec![-1.0],
            h_values: simulation::default_h_grid(),
            beta_values: None,
            mode: Mode::Mpsde,
            replicates: simulation::DEFAULT_REPLICATES,
            base_seed: DEFAULT_SEED,
        },
    };
    if let Some(v) = &a.n_values {
        grid.n_values = v.clone();
    }
    if let Some(v) = &a.theta_values {
        grid.theta_values = v.clone();
    }
    if let Some(v) = &a.alpha_values {
        grid.alpha_values = v.clone();
    }
    if let Some(v) = &a.lambda_values {
        grid.lambda_values = v.clone();
    }
    if let Some(v) = &a.h_values {
        grid.h_values = v.clone();
    }
    if let Some(v) = &a.beta_values {
        grid.beta_values = Some(v.clone());
    }
    if let Some(m) = a.mode {
        grid.mode = m.into();
    }
    if a.fast {
        grid.replicates = FAST_REPLICATES;
    }
    if let Some(r) = a.replicates {
        grid.replicates = r;
    }
    if let Some(s) = a.seed {
        grid.base_seed = s;
    }
    grid.validate()?;
    Ok(grid)
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> crate::Result<i32> {
    let grid = build_grid(a)?;
    let surface = simulation::run_grid(&grid)?;
    let csv_path = a.out_dir.join("surface.csv");
    let manifest_path = a.out_dir.join("manifest.json");
    write_atomic(&csv_path, surface_csv(&surface).as_bytes())?;
    let manifest = Manifest::new(&grid, &surface);
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    writeln!(out, "wrote {} cells to {}", surface.cells.len(), csv_path.display())?;
    if grid.mode == Mode::Mpsde {
        for &n in &grid.n_values {
            for &theta in &grid.theta_values {
                for &alpha in &grid.alpha_values {
                    for &lambda in &grid.lambda_values {
                        if grid.beta_values.is_some() {
                            if let Ok((h, beta, mse)) = optimal_h_beta(&surface, n, theta, alpha, lambda) {
                                writeln!(
                                    out,
                                    "n={n} theta={theta} alpha={alpha} lambda={lambda}: h_opt={h} beta_opt={beta} mse={mse}"
                                )?;
                            }
                        } else if let Ok((h, mse)) = optimal_h(&surface, n, theta, alpha, lambda) {
                            writeln!(out, "n={n} theta={theta} alpha={alpha} lambda={lambda}: h_opt={h} mse={mse}")?;
                        }
                    }
                }
            }
        }
    }
    Ok(EXIT_OK)
}

pub const TABLE5_LAMBDAS: [f64; 5] = [0.0, -0.5, -1.0, -1.5, -2.0];
pub const TABLE5_ALPHAS: [f64; 4] = [0.0, 0.1, 0.25, 0.5];

/// One estimate cell of the Drosophila table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Table5Cell {
    Estimate(f64),
    Undefined,
    NotConverged(f64),
}

impl Table5Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Table5Cell::Estimate(v) => Some(*v),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Table5Cell::Estimate(v) => format!("{v:.4}"),
            Table5Cell::Undefined => "--".into(),
            Table5Cell::NotConverged(_) => "NC".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table5Row {
    pub lambda: f64,
    pub alpha: f64,
    pub params: DivergenceParams,
    pub msde: Table5Cell,
    pub mpsde: Vec<(f64, Table5Cell)>,
}

fn table_cell(data: &FrequencyTable, params: &DivergenceParams, mode: Mode) -> Table5Cell {
    match fit(data, &PoissonModel, params, mode, &FitOptions::default()) {
        Ok(r) if r.converged => Table5Cell::Estimate(r.theta_hat[0]),
        Ok(r) => Table5Cell::NotConverged(r.theta_hat[0]),
        Err(Error::EmptyCellUndefined { .. }) => Table5Cell::Undefined,
        Err(Error::NoConvergence(r)) => Table5Cell::NotConverged(r.theta_hat[0]),
        Err(e) => panic!("unexpected estimation failure: {e}"),
    }
}

/// Ordinary and penalized estimates on the Drosophila fixture for every
/// `(lambda, alpha)` pair of the standard grid.
pub fn table5(h_list: &[f64]) -> crate::Result<Vec<Table5Row>> {
    let data = crate::io::fixture("drosophila-day177").expect("embedded fixture");
    let mut rows = Vec::new();
    for lambda in TABLE5_LAMBDAS {
        for alpha in TABLE5_ALPHAS {
            let base = DivergenceParams::new(alpha, lambda)?;
            let msde = table_cell(&data, &base, Mode::Msde);
            let mut mpsde = Vec::with_capacity(h_list.len());
            for &h in h_list {
                mpsde.push((h, table_cell(&data, &base.with_h(h)?, Mode::Mpsde)));
            }
            rows.push(Table5Row { lambda, alpha, params: base, msde, mpsde });
        }
    }
    Ok(rows)
}

fn inverse_a_label(p: &DivergenceParams) -> String {
    if p.regime == Regime::ALimitZero {
        "Inf".into()
    } else {
        format!("{:.2}", 1.0 / p.a)
    }
}

pub fn table5_csv(rows: &[Table5Row]) -> String {
    let mut s = String::from("lambda,alpha,inv_a,msde");
    if let Some(r) = rows.first() {
        for (h, _) in &r.mpsde {
            s.push_str(&format!(",mpsde_h{h}"));
        }
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{}", r.lambda, r.alpha, inverse_a_label(&r.params), r.msde.render()));
        for (_, c) in &r.mpsde {
            s.push(',');
            s.push_str(&c.render());
        }
        s.push('\n');
    }
    s
}

fn cmd_table5(a: &Table5Args, out: &mut dyn Write) -> crate::Result<i32> {
    if a.h_list.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(Error::InvalidParameter("h values must be >= 0".into()));
    }
    let csv = table5_csv(&table5(&a.h_list)?);
    match &a.out {
        Some(p) => write_atomic(p, csv.as_bytes())?,
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> crate::Result<i32> {
    let report = run_verification(&VerifyOptions { cases: a.cases, seed: a.seed, perturb: a.perturb });
    let json = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(p) => {
            write_atomic(p, json.as_bytes())?;
            let failed = report.fit_cases.iter().filter(|c| !c.pass).count()
                + report.power_sum_cases.iter().filter(|c| !c.pass).count();
            writeln!(out, "verify: {} ({failed} failing checks)", if report.pass { "pass" } else { "FAIL" })?;
        }
        None => writeln!(out, "{json}")?,
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
}
