use sdiv::simulation::{run_mse_cell, sample, SeedSchedule};
use sdiv::{DiscreteModel, Error, DivergenceParams, Mode, PoissonModel, DEFAULT_TAIL_EPS};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn poisson_sampler_passes_chi_square() {
    let (theta, n) = (4.0, 100_000u64);
    let data = sample(theta, n, 2024);
    assert_eq!(data.n(), n);
    // Cells 0..=11 plus a pooled upper tail; every expected count exceeds 30.
    let last = 12u64;
    let mut stat = 0.0;
    let mut head_prob = 0.0;
    for x in 0..last {
        let p = PoissonModel.pmf(&[theta], x);
        head_prob += p;
        let expected = n as f64 * p;
        stat += (data.count(x) as f64 - expected).powi(2) / expected;
    }
    let tail_obs: u64 = data.iter().filter(|&(x, _)| x >= last).map(|(_, c)| c).sum();
    let tail_exp = n as f64 * (1.0 - head_prob);
    stat += (tail_obs as f64 - tail_exp).powi(2) / tail_exp;
    let p_value = 1.0 - ChiSquared::new(last as f64).unwrap().cdf(stat);
    assert!(p_value > 1e-3, "chi-square {stat}, p = {p_value}");
    assert!((data.mean() - theta).abs() < 4.0 * (theta / n as f64).sqrt());
}

#[test]
fn large_mean_sampler_has_right_moments() {
    let theta = 55.0;
    let data = sample(theta, 50_000, 9);
    let mean = data.mean();
    let var = data.iter().map(|(x, c)| c as f64 * (x as f64 - mean).powi(2)).sum::<f64>() / data.n() as f64;
    assert!((mean - theta).abs() < 0.25, "{mean}");
    assert!((var / theta - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn ordinary_failures_match_independent_empty_cell_count() {
    let schedule = SeedSchedule::new(31);
    let (n, theta, replicates) = (10u64, 3.0, 300usize);
    for (alpha, lambda) in [(0.0, -1.5), (0.1, -1.5), (0.5, -2.0), (0.0, -1.0)] {
        let p = DivergenceParams::new(alpha, lambda).unwrap();
        // Every replicate failing surfaces as an error rather than a cell.
        let failed = match run_mse_cell(n, theta, &p, Mode::Msde, replicates, &schedule) {
            Ok(cell) => {
                assert_eq!(cell.fail_count + cell.r_effective, replicates);
                cell.fail_count
            }
            Err(Error::AllReplicatesFailed { replicates: r }) => r,
            Err(e) => panic!("{e}"),
        };
        let with_empty = (0..replicates as u64)
            .filter(|&r| {
                let d = schedule.dataset(&PoissonModel, n, theta, r);
                let cutoff = PoissonModel.support_cutoff(&[d.mean()], DEFAULT_TAIL_EPS, d.max_support());
                d.has_empty_cell_up_to(cutoff)
            })
            .count();
        assert_eq!(failed, with_empty, "alpha={alpha} lambda={lambda}");
    }
}
