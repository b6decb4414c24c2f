#![allow(dead_code)]

use rand::{Rng, RngCore};
use sdiv::{DiscreteModel, FrequencyTable};

/// Binomial(`trials`, p) with `theta = [p]`: a finite-support family, so
/// data can cover the whole truncated support without empty cells.
#[derive(Debug, Clone, Copy)]
pub struct Binomial {
    pub trials: u64,
}

impl Binomial {
    fn ln_choose(&self, x: u64) -> f64 {
        (1..=x).map(|k| ((self.trials - x + k) as f64 / k as f64).ln()).sum()
    }
}

impl DiscreteModel for Binomial {
    fn name(&self) -> &'static str {
        "binomial"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn in_domain(&self, theta: &[f64]) -> bool {
        theta.len() == 1 && theta[0] > 0.0 && theta[0] < 1.0
    }

    fn log_pmf(&self, theta: &[f64], x: u64) -> f64 {
        if x > self.trials {
            return f64::NEG_INFINITY;
        }
        let p = theta[0];
        self.ln_choose(x) + x as f64 * p.ln() + (self.trials - x) as f64 * (-p).ln_1p()
    }

    fn score(&self, theta: &[f64], x: u64, out: &mut [f64]) {
        let p = theta[0];
        out[0] = x as f64 / p - (self.trials - x) as f64 / (1.0 - p);
    }

    fn support_cutoff(&self, _theta: &[f64], _tail_eps: f64, min_cover: u64) -> u64 {
        self.trials.max(min_cover)
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> u64 {
        (0..self.trials).filter(|_| rng.random::<f64>() < theta[0]).count() as u64
    }

    fn initial_estimate(&self, data: &FrequencyTable, _robust: bool) -> Vec<f64> {
        vec![(data.mean() / self.trials as f64).clamp(0.01, 0.99)]
    }

    fn scan_bounds(&self, _data: &FrequencyTable) -> (f64, f64) {
        (1e-3, 1.0 - 1e-3)
    }
}

/// Tables whose counts are all positive on `0..=max`.
pub fn full_table(counts: &[u64]) -> FrequencyTable {
    FrequencyTable::from_counts(counts.iter().enumerate().map(|(x, &c)| (x as u64, c))).unwrap()
}
