//! S-divergence and penalized S-divergence between a frequency table and a
//! model pmf.
//!
//! All cell terms are formed in log space: `f^B r^A = exp(B ln f + A ln r)`.
//! Empty cells are never enumerated one by one; their total model mass is the
//! full power sum over the truncated support minus the non-empty cells.

use crate::error::{Error, Result};
use crate::models::{DiscreteModel, ModelSnapshot};
use crate::params::{DivergenceParams, Mode, Regime};
use crate::table::FrequencyTable;
use crate::DEFAULT_TAIL_EPS;

/// Model log-probabilities on observed cells are floored here.
pub const LN_PMF_FLOOR: f64 = -736.8272149474;

/// Pearson-type residual `delta(x) = r_n(x) / f_theta(x) - 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DeltaResidual(f64);

impl DeltaResidual {
    pub fn new(r: f64, f: f64) -> Self {
        if r == 0.0 {
            Self(-1.0)
        } else {
            Self(r / f - 1.0)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_empty_cell(self) -> bool {
        self.0 == -1.0
    }
}

/// `K(delta) = ((delta + 1)^A - 1) / A`, with the `A -> 0` limit `ln(1 + delta)`.
pub fn k_fn(delta: f64, params: &DivergenceParams) -> Result<f64> {
    if params.regime == Regime::ALimitZero {
        if delta <= -1.0 {
            return Err(Error::KernelDomain { a: params.a });
        }
        return Ok(delta.ln_1p());
    }
    if delta <= -1.0 && params.a <= 0.0 {
        return Err(Error::KernelDomain { a: params.a });
    }
    Ok((params.a * delta.ln_1p()).exp_m1() / params.a)
}

/// `K_h`: equal to `K` off the empty-cell point, `-h` at `delta = -1`.
pub fn k_h_fn(delta: f64, params: &DivergenceParams) -> f64 {
    if delta == -1.0 {
        return -params.h;
    }
    k_fn(delta, params).expect("K is finite for delta > -1")
}

/// One non-empty cell's contribution to the divergence.
#[inline]
pub(crate) fn cell_divergence(ln_f: f64, ln_r: f64, params: &DivergenceParams) -> f64 {
    let ln_f = ln_f.max(LN_PMF_FLOOR);
    let c = 1.0 + params.alpha;
    let f_c = (c * ln_f).exp();
    let r_c = (c * ln_r).exp();
    match params.regime {
        Regime::General => {
            let (a, b) = (params.a, params.b);
            let cross = (b * ln_f + a * ln_r).exp();
            f_c / a - c / (a * b) * cross + r_c / b
        }
        Regime::ALimitZero => f_c * (ln_f - ln_r) - (f_c - r_c) / c,
        Regime::BLimitZero => r_c * (ln_r - ln_f) - (r_c - f_c) / c,
    }
}

/// One non-empty cell's `K(delta) f^{1+alpha}`, without the score factor.
#[inline]
pub(crate) fn cell_kernel_weight(ln_f: f64, ln_r: f64, params: &DivergenceParams) -> f64 {
    let ln_f = ln_f.max(LN_PMF_FLOOR);
    let c = 1.0 + params.alpha;
    let f_c = (c * ln_f).exp();
    match params.regime {
        Regime::ALimitZero => (ln_r - ln_f) * f_c,
        _ => ((params.b * ln_f + params.a * ln_r).exp() - f_c) / params.a,
    }
}

/// Weight and exponent applied to the model mass on empty cells.
///
/// Returns `None` when the ordinary divergence is undefined with empty cells.
pub(crate) fn empty_cell_term(params: &DivergenceParams, mode: Mode) -> Option<(f64, f64)> {
    match mode {
        Mode::Msde => params.natural_h().map(|w| (w, 1.0 + params.alpha)),
        Mode::Mpsde => Some((params.h, 1.0 + params.beta())),
    }
}

/// `sum_{x : r(x) = 0} f^c` over the snapshot's support, by complement.
pub(crate) fn empty_power_sum(data: &FrequencyTable, snap: &ModelSnapshot, c: f64) -> f64 {
    let observed: f64 = data
        .iter()
        .filter(|&(x, _)| x <= snap.x_max())
        .map(|(x, _)| (c * snap.ln_f(x)).exp())
        .sum();
    (snap.power_sum(c) - observed).max(0.0)
}

/// Divergence between `data` and a model snapshot under the given objective.
pub fn divergence_on(
    data: &FrequencyTable,
    snap: &ModelSnapshot,
    params: &DivergenceParams,
    mode: Mode,
) -> Result<f64> {
    let has_empty = data.has_empty_cell_up_to(snap.x_max());
    let empty = empty_cell_term(params, mode);
    if has_empty && empty.is_none() {
        return Err(Error::EmptyCellUndefined { alpha: params.alpha, lambda: params.lambda, a: params.a });
    }
    let ln_n = (data.n() as f64).ln();
    let observed: f64 = data
        .iter()
        .map(|(x, count)| cell_divergence(snap.ln_f(x), (count as f64).ln() - ln_n, params))
        .sum();
    let penalty = match (has_empty, empty) {
        (true, Some((w, c))) => w * empty_power_sum(data, snap, c),
        _ => 0.0,
    };
    Ok(observed + penalty)
}

fn snapshot(model: &dyn DiscreteModel, data: &FrequencyTable, theta: &[f64]) -> ModelSnapshot {
    model.snapshot(theta, DEFAULT_TAIL_EPS, data.max_support())
}

/// Ordinary S-divergence `S_(alpha, lambda)(r_n, f_theta)`.
///
/// Fails with [`Error::EmptyCellUndefined`] when `A <= 0` and the truncated
/// support contains an empty cell.
pub fn s_divergence(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    theta: &[f64],
    params: &DivergenceParams,
) -> Result<f64> {
    divergence_on(data, &snapshot(model, data, theta), params, Mode::Msde)
}

/// Penalized S-divergence: non-empty cells as in the ordinary divergence,
/// empty cells contribute `h * sum f^{1+beta}`.
pub fn penalized_s_divergence(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    theta: &[f64],
    params: &DivergenceParams,
) -> f64 {
    divergence_on(data, &snapshot(model, data, theta), params, Mode::Mpsde)
        .expect("penalized divergence is defined for every h >= 0")
}

/// Objective minimized by the estimator in `mode`.
pub fn objective(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    theta: &[f64],
    params: &DivergenceParams,
    mode: Mode,
) -> Result<f64> {
    divergence_on(data, &snapshot(model, data, theta), params, mode)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::models::PoissonModel;
    use rand::RngCore;

    /// Two-point model on {0, 1} with `P(X = 1) = theta`.
    pub(crate) struct TwoPoint;

    impl DiscreteModel for TwoPoint {
        fn name(&self) -> &'static str {
            "two-point"
        }
        fn param_dim(&self) -> usize {
            1
        }
        fn in_domain(&self, t: &[f64]) -> bool {
            t[0] > 0.0 && t[0] < 1.0
        }
        fn log_pmf(&self, t: &[f64], x: u64) -> f64 {
            match x {
                0 => (1.0 - t[0]).ln(),
                1 => t[0].ln(),
                _ => f64::NEG_INFINITY,
            }
        }
        fn score(&self, t: &[f64], x: u64, out: &mut [f64]) {
            out[0] = if x == 1 { 1.0 / t[0] } else { -1.0 / (1.0 - t[0]) };
        }
        fn support_cutoff(&self, _: &[f64], _: f64, _: u64) -> u64 {
            1
        }
        fn sample(&self, t: &[f64], rng: &mut dyn RngCore) -> u64 {
            use rand::Rng;
            u64::from(rng.random::<f64>() < t[0])
        }
        fn initial_estimate(&self, d: &FrequencyTable, _: bool) -> Vec<f64> {
            vec![d.relative(1).clamp(0.01, 0.99)]
        }
        fn scan_bounds(&self, _: &FrequencyTable) -> (f64, f64) {
            (1e-3, 1.0 - 1e-3)
        }
    }

    fn params(alpha: f64, lambda: f64) -> DivergenceParams {
        DivergenceParams::new(alpha, lambda).unwrap()
    }

    #[test]
    fn kernel_values() {
        for lambda in [-2.0, -0.5, 0.0, 1.0] {
            assert_eq!(k_fn(0.0, &params(0.0, lambda)).unwrap(), 0.0);
        }
        assert!((k_fn(1.0, &params(0.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((k_fn(1.0, &params(0.5, -2.0)).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        // (2^A - 1)/A near A = 0 from both sides.
        for a in [1e-8, -1e-8] {
            let lambda = (a - 1.0) / 1.0;
            let v = k_fn(1.0, &params(0.0, lambda)).unwrap();
            assert!((v - std::f64::consts::LN_2).abs() < 1e-6, "A={a} v={v}");
        }
        assert!(matches!(k_fn(-1.0, &params(0.0, -2.0)), Err(Error::KernelDomain { .. })));
        assert!((k_fn(-1.0, &params(0.0, 0.0)).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn penalized_kernel() {
        let p = params(0.0, -1.0).with_h(0.5).unwrap();
        assert_eq!(k_h_fn(-1.0, &p), -0.5);
        assert_eq!(k_h_fn(0.0, &p), 0.0);
        // A = 0.5 at alpha = 0, lambda = -0.5.
        let q = params(0.0, -0.5).with_h(0.3).unwrap();
        assert!((k_h_fn(3.0, &q) - 2.0).abs() < 1e-14);
        assert_eq!(k_h_fn(3.0, &q), k_fn(3.0, &q).unwrap());
    }

    #[test]
    fn delta_residual() {
        assert!(DeltaResidual::new(0.0, 0.3).is_empty_cell());
        assert!(!DeltaResidual::new(1e-9, 0.3).is_empty_cell());
        assert!((DeltaResidual::new(0.6, 0.3).value() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_and_l2_reductions() {
        let data = FrequencyTable::from_counts([(0, 1), (1, 1)]).unwrap();
        // f = (0.25, 0.75), so theta = 0.75.
        let v = s_divergence(&data, &TwoPoint, &[0.75], &params(0.0, 1.0)).unwrap();
        let direct = 0.5 * ((0.5f64 - 0.25).powi(2) / 0.25 + (0.5f64 - 0.75).powi(2) / 0.75);
        assert!((v - direct).abs() < 1e-14);
        assert!((v - 0.166667).abs() < 1e-6);

        let data = FrequencyTable::from_counts([(0, 4)]).unwrap();
        let v = s_divergence(&data, &TwoPoint, &[0.5], &params(1.0, -0.7)).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_at_exact_fit() {
        let data = FrequencyTable::from_counts([(0, 1), (1, 3)]).unwrap();
        for (alpha, lambda) in [(0.0, 0.0), (0.0, -0.5), (0.5, -2.0), (0.25, -1.5), (0.7, 1.0)] {
            let v = s_divergence(&data, &TwoPoint, &[0.75], &params(alpha, lambda)).unwrap();
            assert!(v.abs() < 1e-14, "({alpha},{lambda}) -> {v}");
        }
    }

    #[test]
    fn undefined_with_empty_cells_when_a_nonpositive() {
        let data = FrequencyTable::from_counts([(0, 23), (1, 7), (2, 3), (91, 1)]).unwrap();
        let p = params(0.0, -2.0).with_h(0.5).unwrap();
        assert!(matches!(
            s_divergence(&data, &PoissonModel, &[0.36], &p),
            Err(Error::EmptyCellUndefined { .. })
        ));
        let v = penalized_s_divergence(&data, &PoissonModel, &[0.36], &p);
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn penalized_matches_ordinary_at_natural_weight() {
        let data = FrequencyTable::from_counts([(0, 23), (1, 7), (2, 3), (91, 1)]).unwrap();
        for (alpha, lambda) in [(0.0, 0.0), (0.1, -1.0), (0.25, -0.5), (0.5, 0.5)] {
            let base = params(alpha, lambda);
            let p = base.with_h(1.0 / base.a).unwrap();
            for theta in [0.3, 1.0, 3.0] {
                let sd = s_divergence(&data, &PoissonModel, &[theta], &p).unwrap();
                let psd = penalized_s_divergence(&data, &PoissonModel, &[theta], &p);
                assert!((sd - psd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finite_for_tiny_model_mass() {
        // f(91) at theta = 0.36 is about 1e-180; push theta lower to go below 1e-300.
        let data = FrequencyTable::from_counts([(0, 23), (1, 7), (2, 3), (91, 1)]).unwrap();
        for lambda in [-1.5, -1.0, 0.0, 0.5] {
            let p = params(0.0, lambda).with_h(0.5).unwrap();
            for theta in [0.36, 0.01, 1e-3] {
                let snap = PoissonModel.snapshot(&[theta], DEFAULT_TAIL_EPS, 91);
                assert!(snap.ln_f(91) < -690.0 || theta == 0.36);
                let v = penalized_s_divergence(&data, &PoissonModel, &[theta], &p);
                assert!(v.is_finite(), "lambda={lambda} theta={theta}");
            }
        }
    }
}
