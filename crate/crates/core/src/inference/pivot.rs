use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::lasso::LassoFit;
use crate::nodewise::NodewisePrecision;

/// Split of `√n(b̂ − β⁰)` into a Gaussian part and a bias remainder.
///
/// ```text
/// W = Θ̂Xᵀε/√n
/// Δ = √n(I − Θ̂Σ̂)(β̂ − β⁰)
/// √n(b̂ − β⁰) = W + Δ
/// ```
#[derive(Clone, Debug)]
pub struct PivotDecomposition {
    pub w: Array1<f64>,
    pub delta: Array1<f64>,
    /// `max_j |√n(b̂_j − β⁰_j) − W_j − Δ_j|`.
    pub identity_gap: f64,
}

impl PivotDecomposition {
    pub fn delta_sup(&self) -> f64 {
        self.delta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn w_sup(&self) -> f64 {
        self.w.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Requires the true coefficients and errors, so simulation only.
pub fn pivot_decomposition(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    fit: &LassoFit,
    theta: &NodewisePrecision,
    beta0: ArrayView1<f64>,
    eps: ArrayView1<f64>,
) -> Result<PivotDecomposition> {
    let (n, p) = x.dim();
    if y.len() != n || eps.len() != n || beta0.len() != p || fit.beta.len() != p || theta.p() != p {
        return Err(Error::DimensionMismatch("pivot decomposition inputs disagree in size".into()));
    }
    if fit.intercept.is_some() {
        return Err(Error::Config("pivot decomposition assumes a model without intercept".into()));
    }
    let signal = x.dot(&beta0);
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let gap = y
        .iter()
        .zip(signal.iter().zip(eps))
        .map(|(y, (s, e))| (y - s - e).abs())
        .fold(0.0, f64::max);
    if gap > 1e-10 * scale {
        return Err(Error::InconsistentModel { gap });
    }

    let nf = n as f64;
    let rn = nf.sqrt();
    let w = theta.theta.dot(&x.t().dot(&eps)) / rn;
    let d = &fit.beta - &beta0;
    let sigma_d = x.t().dot(&x.dot(&d)) / nf;
    let delta = (&d - &theta.theta.dot(&sigma_d)) * rn;

    let r = &y - &x.dot(&fit.beta);
    let b = &fit.beta + &(theta.theta.dot(&x.t().dot(&r)) / nf);
    let lhs = (&b - &beta0) * rn;
    let identity_gap = lhs
        .iter()
        .zip(w.iter().zip(&delta))
        .map(|(l, (w, d))| (l - w - d).abs())
        .fold(0.0, f64::max);
    Ok(PivotDecomposition { w, delta, identity_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::{fit_lasso, LassoOptions};
    use crate::nodewise::{nodewise_from_design, NodewiseLambdas, NodewiseOptions};
    use crate::numerics::RngStream;
    use ndarray::Array2;

    #[test]
    fn oracle_fit_has_no_remainder() {
        let mut rng = RngStream::new(3);
        let x = Array2::from_shape_simple_fn((40, 8), || rng.standard_normal());
        let beta0 = Array1::from(vec![1.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let eps = rng.normals(40);
        let y = x.dot(&beta0) + &eps;
        let nw = nodewise_from_design(x.view(), &NodewiseLambdas::Shared(0.2), &NodewiseOptions::default()).unwrap();
        let mut fit = fit_lasso(x.view(), y.view(), 0.1, &LassoOptions::default()).unwrap();
        fit.beta = beta0.clone();
        let pd = pivot_decomposition(x.view(), y.view(), &fit, &nw, beta0.view(), eps.view()).unwrap();
        assert_eq!(pd.delta_sup(), 0.0);
        assert!(pd.identity_gap < 1e-12);
    }

    #[test]
    fn rejects_inconsistent_triple() {
        let mut rng = RngStream::new(4);
        let x = Array2::from_shape_simple_fn((20, 3), || rng.standard_normal());
        let beta0 = Array1::zeros(3);
        let eps = rng.normals(20);
        let y = &eps + 0.1;
        let nw = nodewise_from_design(x.view(), &NodewiseLambdas::Shared(0.2), &NodewiseOptions::default()).unwrap();
        let fit = fit_lasso(x.view(), y.view(), 0.1, &LassoOptions::default()).unwrap();
        let r = pivot_decomposition(x.view(), y.view(), &fit, &nw, beta0.view(), eps.view());
        assert!(matches!(r, Err(Error::InconsistentModel { .. })));
    }
}
