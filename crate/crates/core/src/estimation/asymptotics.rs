use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::DiscreteModel;
use crate::DEFAULT_TAIL_EPS;

/// At-the-model asymptotic covariance of the minimum (penalized) S-divergence
/// estimator: `sqrt(n) (theta_hat - theta) -> N(0, J^-1 V J^-1)`.
///
/// Depends on `alpha` only; `lambda` and `h` never enter.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticVariance {
    /// `sum u u^T f^{1+alpha}`
    pub m_alpha: DMatrix<f64>,
    /// `sum u u^T f^{1+2 alpha}`
    pub m_2alpha: DMatrix<f64>,
    /// `sum u f^{1+alpha}`
    pub n_alpha: DVector<f64>,
    pub j: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub sandwich: DMatrix<f64>,
}

pub fn asymptotic_variance(model: &dyn DiscreteModel, theta: &[f64], alpha: f64) -> Result<AsymptoticVariance> {
    asymptotic_variance_with_tail(model, theta, alpha, DEFAULT_TAIL_EPS)
}

pub fn asymptotic_variance_with_tail(
    model: &dyn DiscreteModel,
    theta: &[f64],
    alpha: f64,
    tail_eps: f64,
) -> Result<AsymptoticVariance> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    if !model.in_domain(theta) {
        return Err(Error::InvalidParameter(format!("theta {theta:?} outside the model domain")));
    }
    let snap = model.snapshot(theta, tail_eps, 0);
    let p = snap.param_dim();
    let m_alpha = DMatrix::from_row_slice(p, p, &snap.weighted_outer_sum(1.0 + alpha));
    let m_2alpha = DMatrix::from_row_slice(p, p, &snap.weighted_outer_sum(1.0 + 2.0 * alpha));
    let n_alpha = DVector::from_vec(snap.weighted_power_sum(1.0 + alpha));
    let j = m_alpha.clone();
    let v = &m_2alpha - &n_alpha * n_alpha.transpose();
    let scale = j.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let j_inv = j.clone().try_inverse().ok_or(Error::SingularInformation)?;
    if scale == 0.0 || j.determinant().abs() <= 1e-14 * scale.powi(p as i32) {
        return Err(Error::SingularInformation);
    }
    let sandwich = &j_inv * &v * &j_inv;
    Ok(AsymptoticVariance { m_alpha, m_2alpha, n_alpha, j, v, sandwich })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PoissonModel;

    #[test]
    fn poisson_fisher_information() {
        for theta in [0.5, 3.0, 5.0, 12.0] {
            let av = asymptotic_variance(&PoissonModel, &[theta], 0.0).unwrap();
            // Truncation leaves tail_eps * u(x_max)^2 of mass out of M.
            assert!((av.m_alpha[(0, 0)] * theta - 1.0).abs() < 1e-8);
            assert!(av.n_alpha[0].abs() < 1e-10);
            assert!((av.sandwich[(0, 0)] / theta - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn efficiency_loss_grows_with_alpha() {
        let mut prev = 5.0 - 1e-9;
        for alpha in [0.1, 0.25, 0.5, 1.0] {
            let s = asymptotic_variance(&PoissonModel, &[5.0], alpha).unwrap().sandwich[(0, 0)];
            assert!(s > prev, "alpha={alpha} sandwich={s}");
            prev = s;
        }
    }

    #[test]
    fn regression_anchor_theta5_alpha_half() {
        // 200-term sum at 30 significant digits.
        let s = asymptotic_variance(&PoissonModel, &[5.0], 0.5).unwrap().sandwich[(0, 0)];
        assert!((s - 5.932_980_352_553_344).abs() < 1e-9, "{s}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(asymptotic_variance(&PoissonModel, &[-1.0], 0.0).is_err());
        assert!(asymptotic_variance(&PoissonModel, &[1.0], -0.1).is_err());
    }
}
