use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// Per-observation loss `ρ(y, a)` of a linear predictor `a = xβ`, with
/// its first two derivatives in `a`.
pub trait LossFamily: Sync + Send {
    fn name(&self) -> &'static str;
    fn rho(&self, y: f64, a: f64) -> f64;
    fn rho_dot(&self, y: f64, a: f64) -> f64;
    fn rho_ddot(&self, y: f64, a: f64) -> f64;
    fn check_response(&self, y: ArrayView1<f64>) -> Result<()>;
    /// Minimizer of `Σ ρ(y_i, c)` over constants `c`.
    fn null_intercept(&self, y: ArrayView1<f64>) -> f64;
}

/// `ρ(y, a) = −ya + log(1 + eᵃ)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Logistic;

/// `ρ(y, a) = (y − a)²/2`, so `ρ̈ ≡ 1` and `Σ̂ = XᵀX/n`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredError;

pub fn logistic_family() -> Logistic {
    Logistic
}

pub fn squared_error_family() -> SquaredError {
    SquaredError
}

fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl LossFamily for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn rho(&self, y: f64, a: f64) -> f64 {
        softplus(a) - y * a
    }

    fn rho_dot(&self, y: f64, a: f64) -> f64 {
        sigmoid(a) - y
    }

    fn rho_ddot(&self, _y: f64, a: f64) -> f64 {
        let s = sigmoid(a);
        s * (1.0 - s)
    }

    fn check_response(&self, y: ArrayView1<f64>) -> Result<()> {
        match y.iter().position(|v| *v != 0.0 && *v != 1.0) {
            Some(i) => Err(Error::Domain(format!("logistic response must be 0 or 1, row {i} is {}", y[i]))),
            None => Ok(()),
        }
    }

    fn null_intercept(&self, y: ArrayView1<f64>) -> f64 {
        let m = y.mean().unwrap_or(0.5).clamp(1e-8, 1.0 - 1e-8);
        (m / (1.0 - m)).ln()
    }
}

impl LossFamily for SquaredError {
    fn name(&self) -> &'static str {
        "squared_error"
    }

    fn rho(&self, y: f64, a: f64) -> f64 {
        0.5 * (y - a) * (y - a)
    }

    fn rho_dot(&self, y: f64, a: f64) -> f64 {
        a - y
    }

    fn rho_ddot(&self, _y: f64, _a: f64) -> f64 {
        1.0
    }

    fn check_response(&self, y: ArrayView1<f64>) -> Result<()> {
        crate::numerics::check_finite(y.iter(), "response")
    }

    fn null_intercept(&self, y: ArrayView1<f64>) -> f64 {
        y.mean().unwrap_or(0.0)
    }
}
