use std::sync::OnceLock;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::ln_gamma;

use super::DiscreteModel;
use crate::table::FrequencyTable;

const LN_FACT_TABLE: usize = 4096;

/// Above this mean the sampler switches from sequential inverse-CDF search to
/// `rand_distr`'s rejection sampler.
pub const INVERSE_CDF_MAX_MEAN: f64 = 30.0;

fn ln_factorial(x: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..LN_FACT_TABLE).map(|k| ln_gamma(k as f64 + 1.0)).collect());
    match table.get(x as usize) {
        Some(&v) => v,
        None => ln_gamma(x as f64 + 1.0),
    }
}

/// Poisson family with mean `theta > 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoissonModel;

impl PoissonModel {
    #[inline]
    fn ln_pmf_with(ln_theta: f64, theta: f64, x: u64) -> f64 {
        x as f64 * ln_theta - theta - ln_factorial(x)
    }
}

impl DiscreteModel for PoissonModel {
    fn name(&self) -> &'static str {
        "poisson"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn in_domain(&self, theta: &[f64]) -> bool {
        theta.len() == 1 && theta[0].is_finite() && theta[0] > 0.0
    }

    fn log_pmf(&self, theta: &[f64], x: u64) -> f64 {
        let t = theta[0];
        Self::ln_pmf_with(t.ln(), t, x)
    }

    fn score(&self, theta: &[f64], x: u64, out: &mut [f64]) {
        out[0] = x as f64 / theta[0] - 1.0;
    }

    fn support_cutoff(&self, theta: &[f64], tail_eps: f64, min_cover: u64) -> u64 {
        let t = theta[0];
        let ln_t = t.ln();
        let ln_f = |x: u64| Self::ln_pmf_with(ln_t, t, x);
        // Walk past the mode until the geometric tail bound
        // f(m+1) / (1 - t/(m+2)) is negligible next to tail_eps.
        let mut m = t.floor() as u64 + 1;
        loop {
            let ratio = t / (m as f64 + 2.0);
            if ratio < 1.0 {
                let bound = ln_f(m + 1).exp() / (1.0 - ratio);
                if bound < tail_eps * 1e-4 {
                    break;
                }
            }
            m += 1;
        }
        // Accumulate the tail from the far end back towards the mode; stop at
        // the smallest m with P(X > m) < tail_eps.
        let mut tail = ln_f(m + 1).exp() / (1.0 - t / (m as f64 + 2.0));
        while m > 0 {
            let next = tail + ln_f(m).exp();
            if next >= tail_eps {
                break;
            }
            tail = next;
            m -= 1;
        }
        m.max(min_cover)
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> u64 {
        let t = theta[0];
        if t > INVERSE_CDF_MAX_MEAN {
            let d = Poisson::new(t).expect("positive mean");
            return d.sample(rng) as u64;
        }
        let u: f64 = rng.random();
        let mut x = 0u64;
        let mut p = (-t).exp();
        let mut cdf = p;
        while u > cdf {
            x += 1;
            p *= t / x as f64;
            let next = cdf + p;
            if next == cdf {
                break;
            }
            cdf = next;
        }
        x
    }

    fn initial_estimate(&self, data: &FrequencyTable, robust: bool) -> Vec<f64> {
        let (lo, _) = self.scan_bounds(data);
        let v = if robust { data.median() } else { data.mean() };
        vec![v.max(lo)]
    }

    fn scan_bounds(&self, data: &FrequencyTable) -> (f64, f64) {
        let mean = data.mean();
        if mean <= 0.0 {
            return (1e-3, 1.0);
        }
        ((0.05 * mean).max(1e-3), 20.0 * mean)
    }
}
