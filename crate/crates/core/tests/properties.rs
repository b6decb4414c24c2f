mod common;

use approx::assert_relative_eq;
use common::{full_table, Binomial};
use proptest::prelude::*;
use sdiv::divergence::objective;
use sdiv::{
    derive_exponents, k_fn, k_h_fn, penalized_s_divergence, s_divergence, DivergenceParams, FrequencyTable, Mode,
    PoissonModel, Regime,
};

fn poisson_table() -> impl Strategy<Value = FrequencyTable> {
    prop::collection::vec((0u64..25, 1u64..6), 1..8)
        .prop_map(|cells| FrequencyTable::from_counts(cells.into_iter().collect::<std::collections::BTreeMap<_, _>>()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn exponents_sum_to_one_plus_alpha(alpha in 0.0f64..3.0, lambda in -10.0f64..10.0) {
        let (a, b, _) = derive_exponents(alpha, lambda);
        prop_assert!((a + b - (1.0 + alpha)).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn penalized_divergence_is_nonnegative(
        data in poisson_table(),
        theta in 0.2f64..15.0,
        alpha in 0.0f64..1.0,
        lambda in -2.5f64..1.0,
        h in 0.0f64..3.0,
    ) {
        let p = DivergenceParams::new(alpha, lambda).unwrap().with_h(h).unwrap();
        let d = penalized_s_divergence(&data, &PoissonModel, &[theta], &p);
        prop_assert!(d.is_finite() && d >= -1e-12, "{d}");
        if let Ok(sd) = s_divergence(&data, &PoissonModel, &[theta], &p) {
            prop_assert!(sd >= -1e-12);
        }
    }

    #[test]
    fn penalized_equals_ordinary_without_empty_cells(
        counts in prop::collection::vec(1u64..20, 5),
        prob in 0.05f64..0.95,
        alpha in 0.0f64..1.0,
        lambda in -2.5f64..1.0,
        h in 0.0f64..3.0,
    ) {
        let model = Binomial { trials: 4 };
        let data = full_table(&counts);
        let p = DivergenceParams::new(alpha, lambda).unwrap().with_h(h).unwrap();
        let sd = s_divergence(&data, &model, &[prob], &p).unwrap();
        let psd = penalized_s_divergence(&data, &model, &[prob], &p);
        prop_assert!((sd - psd).abs() <= 1e-12, "{sd} vs {psd}");
    }

    #[test]
    fn natural_weight_matches_ordinary_with_empty_cells(
        data in poisson_table(),
        theta in 0.2f64..15.0,
        alpha in 0.0f64..1.0,
        lambda in -0.9f64..1.0,
    ) {
        let base = DivergenceParams::new(alpha, lambda).unwrap();
        let Some(h) = base.natural_h() else { return Ok(()) };
        let p = base.with_h(h).unwrap();
        let sd = s_divergence(&data, &PoissonModel, &[theta], &p).unwrap();
        let psd = penalized_s_divergence(&data, &PoissonModel, &[theta], &p);
        prop_assert!((sd - psd).abs() <= 1e-12 * sd.abs().max(1.0), "{sd} vs {psd}");
    }

    #[test]
    fn penalized_kernel_matches_ordinary_off_the_empty_point(
        delta in -0.999f64..20.0,
        alpha in 0.0f64..1.0,
        lambda in -2.5f64..1.0,
        h in 0.0f64..3.0,
    ) {
        let p = DivergenceParams::new(alpha, lambda).unwrap().with_h(h).unwrap();
        prop_assert_eq!(k_h_fn(delta, &p), k_fn(delta, &p).unwrap());
        prop_assert_eq!(k_h_fn(-1.0, &p), -h);
    }
}

/// `lambda` giving `A = target` at the given `alpha`.
fn lambda_for_a(alpha: f64, target: f64) -> f64 {
    (target - 1.0) / (1.0 - alpha)
}

/// `lambda` giving `B = target` at the given `alpha`.
fn lambda_for_b(alpha: f64, target: f64) -> f64 {
    (alpha - target) / (1.0 - alpha)
}

#[test]
fn limit_regimes_are_continuous() {
    let model = Binomial { trials: 4 };
    let data = full_table(&[3, 7, 9, 5, 2]);
    for alpha in [0.0, 0.1, 0.25, 0.5] {
        for (to_lambda, regime) in
            [(lambda_for_a as fn(f64, f64) -> f64, Regime::ALimitZero), (lambda_for_b, Regime::BLimitZero)]
        {
            let at_limit = DivergenceParams::new(alpha, to_lambda(alpha, 0.0)).unwrap();
            assert_eq!(at_limit.regime, regime);
            for prob in [0.2, 0.45, 0.7] {
                let limit = s_divergence(&data, &model, &[prob], &at_limit).unwrap();
                for eps in [1e-6, -1e-6] {
                    let near = DivergenceParams::new(alpha, to_lambda(alpha, eps)).unwrap();
                    assert_eq!(near.regime, Regime::General);
                    let v = s_divergence(&data, &model, &[prob], &near).unwrap();
                    assert_relative_eq!(v, limit, max_relative = 1e-6);
                    for mode in [Mode::Msde, Mode::Mpsde] {
                        let a = objective(&data, &model, &[prob], &near.with_h(0.7).unwrap(), mode).unwrap();
                        let b = objective(&data, &model, &[prob], &at_limit.with_h(0.7).unwrap(), mode).unwrap();
                        assert_relative_eq!(a, b, max_relative = 1e-6);
                    }
                }
            }
        }
    }
}

#[test]
fn limit_kernel_is_continuous() {
    for alpha in [0.0, 0.25, 0.5] {
        let limit = DivergenceParams::new(alpha, lambda_for_a(alpha, 0.0)).unwrap();
        for eps in [1e-6, -1e-6] {
            let near = DivergenceParams::new(alpha, lambda_for_a(alpha, eps)).unwrap();
            for delta in [-0.9, -0.3, 0.0, 0.5, 4.0] {
                let (a, b) = (k_fn(delta, &near).unwrap(), k_fn(delta, &limit).unwrap());
                // First-order gap is A * ln(1 + delta)^2 / 2.
                let bound = 1e-6 * (1e-3 + delta.ln_1p().powi(2));
                assert!((a - b).abs() <= bound, "{a} vs {b}");
            }
        }
    }
}
