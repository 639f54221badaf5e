use ndarray::{Array1, ArrayView1, ArrayView2};

use super::{LassoFit, LassoOptions, LassoSolver};
use crate::error::{Error, Result};

const MAX_OUTER: usize = 1000;
const SIGMA_TOL: f64 = 1e-7;
const SIGMA_FLOOR: f64 = 1e-8;

/// Joint estimate of coefficients and noise level.
#[derive(Clone, Debug)]
pub struct ScaledLassoFit {
    /// Lasso fit at the final penalty `lambda0 · σ`.
    pub fit: LassoFit,
    /// `‖Y − Xβ̂‖₂/√n` of the returned coefficients.
    pub sigma_hat: f64,
    pub lambda0: f64,
    pub n_outer: usize,
}

impl ScaledLassoFit {
    pub fn beta(&self) -> &Array1<f64> {
        &self.fit.beta
    }
}

/// `√(2 log p / n)`.
pub fn universal_lambda0(n: usize, p: usize) -> f64 {
    (2.0 * (p.max(2) as f64).ln() / n as f64).sqrt()
}

impl LassoSolver<'_> {
    /// Alternate a Lasso fit at `λ = lambda0 · σ` with `σ ← ‖Y − Xβ̂‖₂/√n`
    /// until σ settles.
    pub fn fit_scaled(&self, y: ArrayView1<f64>, lambda0: Option<f64>) -> Result<ScaledLassoFit> {
        let (n, p) = self.design().dim();
        let lambda0 = lambda0.unwrap_or_else(|| universal_lambda0(n, p));
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::Domain(format!("lambda0 must be positive, got {lambda0}")));
        }
        let centre = if self.options().intercept { y.mean().unwrap_or(0.0) } else { 0.0 };
        let mut sigma = (y.iter().map(|v| (v - centre).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sigma < SIGMA_FLOOR {
            return Err(Error::DegenerateNoise { sigma });
        }
        let mut warm: Option<LassoFit> = None;
        for outer in 1..=MAX_OUTER {
            let fit = self.fit(y, lambda0 * sigma, warm.as_ref())?;
            let r = fit.residual(self.design(), y);
            let next = (r.dot(&r) / n as f64).sqrt();
            if next < SIGMA_FLOOR {
                return Err(Error::DegenerateNoise { sigma: next });
            }
            if (next - sigma).abs() <= SIGMA_TOL * sigma {
                return Ok(ScaledLassoFit { fit, sigma_hat: next, lambda0, n_outer: outer });
            }
            sigma = next;
            warm = Some(fit);
        }
        Err(Error::NotConverged {
            sweeps: MAX_OUTER,
            kkt_gap: warm.map_or(f64::NAN, |f| f.kkt_gap),
        })
    }
}

/// Scaled Lasso with default `lambda0 = √(2 log p / n)` when `None`.
pub fn fit_scaled_lasso(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda0: Option<f64>,
    opts: &LassoOptions,
) -> Result<ScaledLassoFit> {
    LassoSolver::new(x, opts.clone())?.fit_scaled(y, lambda0)
}
