//! Tuning parameters of the S-divergence family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|A|` or `|B|` below this routes evaluation to the continuous limit form.
pub const LIMIT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    General,
    ALimitZero,
    BLimitZero,
}

/// Returns `(A, B, regime)` with `A = 1 + lambda (1 - alpha)` and
/// `B = alpha - lambda (1 - alpha)`.
pub fn derive_exponents(alpha: f64, lambda: f64) -> (f64, f64, Regime) {
    let t = lambda * (1.0 - alpha);
    let a = 1.0 + t;
    let b = alpha - t;
    let regime = if a.abs() < LIMIT_THRESHOLD {
        Regime::ALimitZero
    } else if b.abs() < LIMIT_THRESHOLD {
        Regime::BLimitZero
    } else {
        Regime::General
    };
    (a, b, regime)
}

/// Which objective an estimator minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Ordinary S-divergence; empty cells carry weight `1/A`.
    Msde,
    /// Penalized S-divergence; empty cells carry weight `h`.
    Mpsde,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Msde => "msde",
            Mode::Mpsde => "mpsde",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msde" => Ok(Mode::Msde),
            "mpsde" => Ok(Mode::Mpsde),
            other => Err(Error::InvalidParameter(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceParams {
    pub alpha: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub regime: Regime,
    /// Penalty applied to the model mass on empty cells.
    pub h: f64,
    /// Exponent `1 + beta` on the empty-cell term; `None` means `beta = alpha`.
    pub beta: Option<f64>,
}

impl DivergenceParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be finite, got {lambda}")));
        }
        let (a, b, regime) = derive_exponents(alpha, lambda);
        Ok(Self { alpha, lambda, a, b, regime, h: 1.0, beta: None })
    }

    pub fn with_h(mut self, h: f64) -> Result<Self> {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::InvalidParameter(format!("h must be >= 0, got {h}")));
        }
        self.h = h;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        self.beta = Some(beta);
        Ok(self)
    }

    /// Effective empty-cell exponent parameter.
    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.alpha)
    }

    /// Empty-cell weight under which the penalized and ordinary divergences agree.
    /// Only meaningful for `A > 0`.
    pub fn natural_h(&self) -> Option<f64> {
        (self.a > 0.0 && self.regime != Regime::ALimitZero).then(|| 1.0 / self.a)
    }

    /// The ordinary divergence is defined with empty cells only when `A > 0`.
    pub fn defined_with_empty_cells(&self) -> bool {
        self.a > 0.0 && self.regime != Regime::ALimitZero
    }
}
