//! Robust parameter estimation for discrete models by minimum S-divergence
//! and minimum penalized S-divergence.
//!
//! The S-divergence family is indexed by `(alpha, lambda)` and contains the
//! Cressie–Read power divergences (`alpha = 0`), the density power
//! divergences (`lambda = 0`) and the squared L2 distance (`alpha = 1`).
//! Members with `A = 1 + lambda (1 - alpha) <= 0` are undefined as soon as the
//! sample has an empty cell; the penalized version replaces the empty-cell
//! weight `1/A` by a user-chosen penalty `h >= 0` and is finite everywhere.
//!
//! Layout:
//!
//! - [`params`] and [`table`]: tuning parameters and observed frequency tables.
//! - [`divergence`]: kernels `K`, `K_h` and the (penalized) divergence values.
//! - [`models`]: the discrete model contract and the Poisson family.
//! - [`estimation`]: estimating equation, root finding, asymptotic variance.
//! - [`oracle`]: brute-force grid minimization and long sums for cross-checks.
//! - [`simulation`]: Monte-Carlo MSE surfaces, optimal `h`, relative increase.
//! - [`io`] and [`cli`]: dataset files, fixtures and the command-line surface.

pub mod cli;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod io;
pub mod models;
pub mod oracle;
pub mod params;
pub mod simulation;
pub mod table;

pub use divergence::{k_fn, k_h_fn, penalized_s_divergence, s_divergence, DeltaResidual};
pub use error::{Error, Result};
pub use estimation::{
    asymptotic_variance, estimating_function, fit, AsymptoticVariance, EstimationResult,
    FitOptions, MethodTrace, Mode,
};
pub use models::{DiscreteModel, PoissonModel};
pub use params::{derive_exponents, DivergenceParams, Regime};
pub use table::FrequencyTable;

/// Default upper-tail mass ignored when truncating an infinite support.
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;
