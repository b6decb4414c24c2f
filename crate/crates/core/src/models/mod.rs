//! Discrete parametric model families.
//!
//! Every family lives on `{0, 1, 2, ...}`. Divergences and estimating
//! equations never enumerate the infinite support directly: they work on a
//! [`ModelSnapshot`] truncated at [`DiscreteModel::support_cutoff`], which
//! always covers the largest observed point.

mod poisson;

pub use poisson::PoissonModel;

use rand::RngCore;

use crate::table::FrequencyTable;

pub trait DiscreteModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Dimension `p` of the parameter vector.
    fn param_dim(&self) -> usize;

    fn in_domain(&self, theta: &[f64]) -> bool;

    fn log_pmf(&self, theta: &[f64], x: u64) -> f64;

    fn pmf(&self, theta: &[f64], x: u64) -> f64 {
        self.log_pmf(theta, x).exp()
    }

    /// Likelihood score `u_theta(x) = grad log f_theta(x)`, written into `out`
    /// (length `p`).
    fn score(&self, theta: &[f64], x: u64, out: &mut [f64]);

    /// Smallest `x_max >= min_cover` whose upper-tail mass `P(X > x_max)` is
    /// below `tail_eps`.
    fn support_cutoff(&self, theta: &[f64], tail_eps: f64, min_cover: u64) -> u64;

    /// One draw from `f_theta`.
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> u64;

    /// Starting point for root finding. `robust` selects a median-based value.
    fn initial_estimate(&self, data: &FrequencyTable, robust: bool) -> Vec<f64>;

    /// Bracket scanned for roots of one-parameter estimating equations.
    fn scan_bounds(&self, data: &FrequencyTable) -> (f64, f64);

    /// Log-pmf and scores on `0..=x_max`, where `x_max` is the support cutoff.
    fn snapshot(&self, theta: &[f64], tail_eps: f64, min_cover: u64) -> ModelSnapshot {
        let x_max = self.support_cutoff(theta, tail_eps, min_cover);
        let p = self.param_dim();
        let len = x_max as usize + 1;
        let mut ln_f = Vec::with_capacity(len);
        let mut scores = vec![0.0; len * p];
        for x in 0..=x_max {
            ln_f.push(self.log_pmf(theta, x));
            let i = x as usize * p;
            self.score(theta, x, &mut scores[i..i + p]);
        }
        ModelSnapshot { p, x_max, ln_f, scores }
    }

    /// `sum_x f_theta(x)^c` over the truncated support.
    fn power_sum(&self, theta: &[f64], c: f64, tail_eps: f64) -> f64 {
        self.snapshot(theta, tail_eps, 0).power_sum(c)
    }
}

/// Model evaluated on a truncated support `0..=x_max`.
#[derive(Debug, Clone)]
pub struct ModelSnapshot {
    p: usize,
    x_max: u64,
    ln_f: Vec<f64>,
    scores: Vec<f64>,
}

impl ModelSnapshot {
    pub fn x_max(&self) -> u64 {
        self.x_max
    }

    pub fn param_dim(&self) -> usize {
        self.p
    }

    pub fn ln_f(&self, x: u64) -> f64 {
        self.ln_f[x as usize]
    }

    pub fn score(&self, x: u64) -> &[f64] {
        let i = x as usize * self.p;
        &self.scores[i..i + self.p]
    }

    /// `sum_x f^c`.
    pub fn power_sum(&self, c: f64) -> f64 {
        self.ln_f.iter().map(|&l| (c * l).exp()).sum()
    }

    /// `sum_x f^c u(x)`.
    pub fn weighted_power_sum(&self, c: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for (l, u) in self.ln_f.iter().zip(self.scores.chunks_exact(self.p)) {
            let w = (c * l).exp();
            for (o, ui) in out.iter_mut().zip(u) {
                *o += w * ui;
            }
        }
        out
    }

    /// `sum_x f^c u u^T`, row-major `p x p`.
    pub fn weighted_outer_sum(&self, c: f64) -> Vec<f64> {
        let p = self.p;
        let mut out = vec![0.0; p * p];
        for (l, u) in self.ln_f.iter().zip(self.scores.chunks_exact(p)) {
            let w = (c * l).exp();
            for i in 0..p {
                for j in 0..p {
                    out[i * p + j] += w * u[i] * u[j];
                }
            }
        }
        out
    }
}
