use nalgebra::{DMatrix, DVector};

use super::{estimating_function_on, scaled_residual, EstimationResult, FitOptions, MethodTrace};
use crate::divergence::divergence_on;
use crate::error::{Error, Result};
use crate::models::DiscreteModel;
use crate::params::{DivergenceParams, Mode};
use crate::table::FrequencyTable;

struct Problem<'a> {
    data: &'a FrequencyTable,
    model: &'a dyn DiscreteModel,
    params: &'a DivergenceParams,
    mode: Mode,
    tail_eps: f64,
}

impl Problem<'_> {
    fn psi(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let snap = self.model.snapshot(theta, self.tail_eps, self.data.max_support());
        estimating_function_on(self.data, &snap, self.params, self.mode)
    }

    fn objective(&self, theta: &[f64]) -> Result<f64> {
        let snap = self.model.snapshot(theta, self.tail_eps, self.data.max_support());
        divergence_on(self.data, &snap, self.params, self.mode)
    }

    fn psi1(&self, t: f64) -> Result<f64> {
        Ok(self.psi(&[t])?[0])
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    theta: Vec<f64>,
    residual: f64,
    iterations: usize,
    method: MethodTrace,
}

/// Minimum (penalized) S-divergence estimate of the model parameter.
///
/// Returns [`Error::EmptyCellUndefined`] when the ordinary objective is
/// undefined for these data, and [`Error::NoConvergence`] (carrying the best
/// grid point) when no root of the estimating equation could be located.
pub fn fit(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    params: &DivergenceParams,
    mode: Mode,
    opts: &FitOptions,
) -> Result<EstimationResult> {
    let prob = Problem { data, model, params, mode, tail_eps: opts.tail_eps };
    let init = match &opts.init {
        Some(t) => t.clone(),
        None => model.initial_estimate(data, opts.robust_init),
    };
    if init.len() != model.param_dim() || !model.in_domain(&init) {
        return Err(Error::InvalidParameter(format!("initial value {init:?} outside the model domain")));
    }
    // Surfaces the undefined-objective case before any solver work.
    prob.psi(&init)?;

    let mut candidates = Vec::new();
    if let Some(c) = newton(&prob, &init, opts)? {
        candidates.push(c);
    }
    if model.param_dim() == 1 {
        candidates.extend(scan_roots(&prob, opts)?);
    }
    let candidates = dedupe(candidates);
    let roots_found = candidates.len();

    let mut best: Option<(Candidate, f64)> = None;
    for c in candidates {
        let obj = prob.objective(&c.theta)?;
        let replace = match &best {
            None => true,
            Some((b, b_obj)) => {
                let tie = (obj - b_obj).abs() <= 1e-12 * (1.0 + b_obj.abs());
                if tie {
                    distance(&c.theta, &init) < distance(&b.theta, &init)
                } else {
                    obj < *b_obj
                }
            }
        };
        if replace {
            best = Some((c, obj));
        }
    }

    match best {
        Some((c, objective)) => Ok(EstimationResult {
            converged: c.residual < opts.residual_tol,
            theta_hat: c.theta,
            objective,
            residual_norm: c.residual,
            iterations: c.iterations,
            method_trace: c.method,
            roots_found,
        }),
        None if model.param_dim() == 1 => grid_refine(&prob, opts, roots_found),
        None => {
            let psi = prob.psi(&init)?;
            Err(Error::NoConvergence(Box::new(EstimationResult {
                objective: prob.objective(&init)?,
                residual_norm: scaled_residual(&psi, &init),
                theta_hat: init,
                iterations: opts.max_newton,
                converged: false,
                method_trace: MethodTrace::Newton,
                roots_found: 0,
            })))
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn dedupe(mut cands: Vec<Candidate>) -> Vec<Candidate> {
    cands.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    let mut out: Vec<Candidate> = Vec::new();
    for c in cands {
        let scale = c.theta.iter().map(|v| v.abs()).fold(1e-12, f64::max);
        if out.iter().all(|o| distance(&o.theta, &c.theta) > 1e-7 * scale) {
            out.push(c);
        }
    }
    out
}

/// Damped Newton with a central-difference Jacobian.
fn newton(prob: &Problem<'_>, init: &[f64], opts: &FitOptions) -> Result<Option<Candidate>> {
    let model = prob.model;
    let p = init.len();
    // The estimating function decays to zero far out in the tail, so scalar
    // iterates are kept inside the scan window to avoid spurious convergence.
    let window = (p == 1).then(|| model.scan_bounds(prob.data));
    let admissible = |t: &[f64]| {
        model.in_domain(t) && window.is_none_or(|(lo, hi)| t[0] >= 0.5 * lo && t[0] <= 2.0 * hi)
    };
    let mut theta = init.to_vec();
    let mut psi = prob.psi(&theta)?;
    let mut res = scaled_residual(&psi, &theta);
    for iter in 0..opts.max_newton {
        if res < opts.residual_tol * 1e-3 {
            return Ok(Some(Candidate { theta, residual: res, iterations: iter, method: MethodTrace::Newton }));
        }
        let mut jac = DMatrix::zeros(p, p);
        for j in 0..p {
            let step = 1e-5 * theta[j].abs().max(1.0);
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += step;
            dn[j] -= step;
            if !model.in_domain(&dn) {
                dn[j] = theta[j];
            }
            let width = up[j] - dn[j];
            let (fu, fd) = (prob.psi(&up)?, prob.psi(&dn)?);
            for i in 0..p {
                jac[(i, j)] = (fu[i] - fd[i]) / width;
            }
        }
        let Some(delta) = jac.lu().solve(&DVector::from_column_slice(&psi)) else {
            return Ok(None);
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t - scale * d).collect();
            if admissible(&trial) {
                let trial_psi = prob.psi(&trial)?;
                let trial_res = scaled_residual(&trial_psi, &trial);
                if trial_res < res {
                    accepted = Some((trial, trial_psi, trial_res));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((t, ps, r)) = accepted else {
            // Stalled: accept only if already within tolerance.
            return Ok((res < opts.residual_tol).then_some(Candidate {
                theta,
                residual: res,
                iterations: iter,
                method: MethodTrace::Newton,
            }));
        };
        let step_size = distance(&t, &theta);
        let theta_scale = t.iter().map(|v| v.abs()).fold(1.0, f64::max);
        theta = t;
        psi = ps;
        res = r;
        if step_size < 1e-13 * theta_scale {
            break;
        }
    }
    Ok((res < opts.residual_tol).then_some(Candidate {
        theta,
        residual: res,
        iterations: opts.max_newton,
        method: MethodTrace::Newton,
    }))
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

/// Locates every sign change of a scalar estimating function on a log-spaced
/// grid and polishes each bracket.
fn scan_roots(prob: &Problem<'_>, opts: &FitOptions) -> Result<Vec<Candidate>> {
    let (lo, hi) = prob.model.scan_bounds(prob.data);
    let grid = log_grid(lo, hi, opts.scan_points);
    let values = grid.iter().map(|&t| prob.psi1(t)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let (fa, fb) = (values[i], values[i + 1]);
        if fa == 0.0 {
            out.push(Candidate { theta: vec![a], residual: 0.0, iterations: 0, method: MethodTrace::BisectionFallback });
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            out.push(bracket_root(prob, a, b, fa, fb, opts)?);
        }
    }
    if let Some(&last) = values.last() {
        if last == 0.0 {
            out.push(Candidate { theta: vec![hi], residual: 0.0, iterations: 0, method: MethodTrace::BisectionFallback });
        }
    }
    Ok(out)
}

/// Bracketed root polish: Illinois false position with a bisection step
/// whenever the bracket fails to shrink by half.
fn bracket_root(
    prob: &Problem<'_>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    opts: &FitOptions,
) -> Result<Candidate> {
    let mut side = 0i8;
    let mut iterations = 0;
    let (mut best_t, mut best_f) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for it in 0..opts.max_bisection {
        iterations = it + 1;
        let width = b - a;
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = prob.psi1(c)?;
        if fc.abs() < best_f.abs() {
            best_t = c;
            best_f = fc;
        }
        if fc == 0.0 {
            break;
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if b - a > 0.5 * width {
            // Forced bisection keeps the worst case logarithmic.
            let m = 0.5 * (a + b);
            let fm = prob.psi1(m)?;
            if fm.abs() < best_f.abs() {
                best_t = m;
                best_f = fm;
            }
            if fm == 0.0 {
                break;
            }
            if fm.signum() == fb.signum() {
                b = m;
                fb = fm;
            } else {
                a = m;
                fa = fm;
            }
            side = 0;
        }
        if b - a <= 4.0 * f64::EPSILON * b {
            break;
        }
    }
    Ok(Candidate {
        theta: vec![best_t],
        residual: scaled_residual(&[best_f], &[best_t]),
        iterations,
        method: MethodTrace::BisectionFallback,
    })
}

/// Last resort: minimize the objective over the scan grid and refine with a
/// golden-section search in the neighbouring cells.
fn grid_refine(prob: &Problem<'_>, opts: &FitOptions, roots_found: usize) -> Result<EstimationResult> {
    let (lo, hi) = prob.model.scan_bounds(prob.data);
    let grid = log_grid(lo, hi, opts.scan_points);
    let values = grid.iter().map(|&t| prob.objective(&[t])).collect::<Result<Vec<_>>>()?;
    let (imin, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    let mut a = grid[imin.saturating_sub(1)];
    let mut b = grid[(imin + 1).min(grid.len() - 1)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut iterations = 0;
    while b - a > 1e-12 * b && iterations < opts.max_bisection {
        iterations += 1;
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if prob.objective(&[c])? <= prob.objective(&[d])? {
            b = d;
        } else {
            a = c;
        }
    }
    let t = 0.5 * (a + b);
    let psi = prob.psi(&[t])?;
    let residual = scaled_residual(&psi, &[t]);
    let result = EstimationResult {
        theta_hat: vec![t],
        objective: prob.objective(&[t])?,
        residual_norm: residual,
        iterations,
        converged: residual < opts.residual_tol,
        method_trace: MethodTrace::GridRefine,
        roots_found,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NoConvergence(Box::new(result)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PoissonModel;

    fn drosophila() -> FrequencyTable {
        FrequencyTable::from_counts([(0, 23), (1, 7), (2, 3), (91, 1)]).unwrap()
    }

    fn run(alpha: f64, lambda: f64, h: f64, mode: Mode) -> Result<EstimationResult> {
        let p = DivergenceParams::new(alpha, lambda).unwrap().with_h(h).unwrap();
        fit(&drosophila(), &PoissonModel, &p, mode, &FitOptions::default())
    }

    #[test]
    fn mle_on_drosophila() {
        let r = run(0.0, 0.0, 1.0, Mode::Msde).unwrap();
        assert!(r.converged);
        assert!((r.theta_hat[0] - 104.0 / 34.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn reported_estimates() {
        let cases = [
            (0.0, -1.0, 0.5, Mode::Mpsde, 0.3831),
            (0.0, -2.0, 1.0, Mode::Mpsde, 0.3498),
            (0.1, -1.0, 1.0, Mode::Msde, 0.2955),
            (0.0, -0.5, 1.0, Mode::Msde, 0.3637),
        ];
        for (alpha, lambda, h, mode, expect) in cases {
            let r = run(alpha, lambda, h, mode).unwrap();
            assert!(r.converged && r.residual_norm < 1e-8, "{r:?}");
            assert!((r.theta_hat[0] - expect).abs() < 1e-3, "({alpha},{lambda},{h},{mode}) {r:?}");
        }
    }

    #[test]
    fn undefined_cases_error() {
        assert!(matches!(run(0.0, -2.0, 1.0, Mode::Msde), Err(Error::EmptyCellUndefined { .. })));
        assert!(matches!(run(0.0, -1.0, 1.0, Mode::Msde), Err(Error::EmptyCellUndefined { .. })));
    }

    #[test]
    fn explicit_initializer_outside_domain() {
        let p = DivergenceParams::new(0.0, 0.0).unwrap();
        let opts = FitOptions { init: Some(vec![-1.0]), ..FitOptions::default() };
        assert!(matches!(fit(&drosophila(), &PoissonModel, &p, Mode::Msde, &opts), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn robust_initializer_reaches_same_answer() {
        let p = DivergenceParams::new(0.0, -1.0).unwrap().with_h(0.5).unwrap();
        let opts = FitOptions { robust_init: true, ..FitOptions::default() };
        let r = fit(&drosophila(), &PoissonModel, &p, Mode::Mpsde, &opts).unwrap();
        assert!((r.theta_hat[0] - 0.3831).abs() < 1e-3);
    }

    #[test]
    fn newton_stays_out_of_the_vanishing_tail() {
        // The estimating function tends to zero as theta grows; an unbounded
        // Newton iteration used to drift off towards infinity on this sample.
        let data = FrequencyTable::from_counts([(2, 5), (4, 1), (6, 1), (7, 1), (9, 1), (10, 1)]).unwrap();
        let p = DivergenceParams::new(0.25, -1.0).unwrap().with_h(0.5).unwrap();
        let r = fit(&data, &PoissonModel, &p, Mode::Mpsde, &FitOptions::default()).unwrap();
        let (lo, hi) = PoissonModel.scan_bounds(&data);
        assert!(r.converged && r.theta_hat[0] > lo && r.theta_hat[0] < hi, "{r:?}");
    }
}
