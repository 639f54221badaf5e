//! ℓ1-penalized generalized linear models and their de-sparsified inference.
//!
//! ```text
//! β̂ = argmin P_n ρ_β + λ‖β‖₁
//! Σ̂ = P_n ρ̈_β̂ = X_β̂ᵀX_β̂/n,   X_β̂ = diag(√ρ̈) X
//! b̂ = β̂ − Θ̂ P_n ρ̇_β̂
//! σ̂_j² = (Θ̂ P_n ρ̇ρ̇ᵀ Θ̂ᵀ)_jj
//! ```
//!
//! With an intercept, every matrix above is built on `[1 | X]` and the
//! intercept column enters every nodewise regression unpenalized; only the
//! slopes are reported.

mod family;
mod fit;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::inference::CoordinateInference;
use crate::nodewise::{nodewise_from_design, nodewise_shared_lambda_cv, NodewiseCv, NodewiseLambdas, NodewiseOptions, NodewisePrecision};
use crate::numerics::{check_finite, gram, two_sided_pvalue, RngStream};

pub use family::{logistic_family, sigmoid, squared_error_family, Logistic, LossFamily, SquaredError};
pub use fit::{fit_glm_lasso, fit_glm_lasso_cv, GlmCv, GlmFit, GlmOptions, GlmSolver};

/// `[1 | X]` when the fit has an intercept, `X` otherwise.
fn augmented(x: ArrayView2<f64>, fit: &GlmFit) -> Array2<f64> {
    match fit.intercept {
        Some(_) => {
            let (n, p) = x.dim();
            let mut a = Array2::<f64>::ones((n, p + 1));
            a.slice_mut(s![.., 1..]).assign(&x);
            a
        }
        None => x.to_owned(),
    }
}

fn check_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, fit: &GlmFit) -> Result<()> {
    if y.len() != x.nrows() || fit.beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "design {}x{}, response {}, coefficients {}",
            x.nrows(),
            x.ncols(),
            y.len(),
            fit.beta.len()
        )));
    }
    Ok(())
}

/// `diag(√ρ̈(y_i, x̃_iβ̂)) X̃`.
pub fn weighted_design(x: ArrayView2<f64>, y: ArrayView1<f64>, fit: &GlmFit, family: &dyn LossFamily) -> Result<Array2<f64>> {
    check_fit(x, y, fit)?;
    let eta = fit.linear_predictor(x);
    let mut xw = augmented(x, fit);
    for (i, mut row) in xw.axis_iter_mut(Axis(0)).enumerate() {
        let w = family.rho_ddot(y[i], eta[i]).sqrt();
        row *= w;
    }
    check_finite(xw.iter(), "weighted design")?;
    Ok(xw)
}

/// `Σ̂ = P_n ρ̈_β̂` on the (augmented) design.
pub fn glm_sigma_hat_matrix(x: ArrayView2<f64>, y: ArrayView1<f64>, fit: &GlmFit, family: &dyn LossFamily) -> Result<Array2<f64>> {
    Ok(gram(weighted_design(x, y, fit, family)?.view()))
}

fn intercept_options(fit: &GlmFit, base: &NodewiseOptions) -> NodewiseOptions {
    let mut opts = base.clone();
    if fit.intercept.is_some() && !opts.unpenalized.contains(&0) {
        opts.unpenalized.push(0);
    }
    opts
}

/// Nodewise regression on the weighted design.
pub fn glm_nodewise(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    fit: &GlmFit,
    family: &dyn LossFamily,
    lambdas: &NodewiseLambdas,
    opts: &NodewiseOptions,
) -> Result<NodewisePrecision> {
    let xw = weighted_design(x, y, fit, family)?;
    nodewise_from_design(xw.view(), lambdas, &intercept_options(fit, opts))
}

/// As [`glm_nodewise`] with one penalty chosen by cross-validation.
pub fn glm_nodewise_cv(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    fit: &GlmFit,
    family: &dyn LossFamily,
    folds: usize,
    rng: &mut RngStream,
    opts: &NodewiseOptions,
) -> Result<(NodewisePrecision, NodewiseCv)> {
    let xw = weighted_design(x, y, fit, family)?;
    nodewise_shared_lambda_cv(xw.view(), folds, None, rng, &intercept_options(fit, opts))
}

/// De-sparsified GLM estimate of the slopes.
#[derive(Clone, Debug)]
pub struct GlmDesparsifiedFit {
    pub b: Array1<f64>,
    /// `σ̂_j`.
    pub sigma_hat: Array1<f64>,
    /// `σ̂_j/√n`.
    pub se: Array1<f64>,
    pub zscores: Array1<f64>,
    pub pvalues: Array1<f64>,
    pub n: usize,
    pub family: &'static str,
}

impl CoordinateInference for GlmDesparsifiedFit {
    fn estimates(&self) -> &Array1<f64> {
        &self.b
    }

    fn standard_errors(&self) -> &Array1<f64> {
        &self.se
    }
}

/// `b̂ = β̂ − Θ̂ P_n ρ̇_β̂` with the sandwich variance
/// `σ̂_j² = P_n ρ̇² (x̃Θ̂_j)²`, or, when `sigma_eps` is given, the
/// model-based `σ_ε²(Θ̂Σ̂Θ̂ᵀ)_jj` (which is the linear-model formula under
/// squared-error loss).
pub fn desparsify_glm(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    fit: &GlmFit,
    family: &dyn LossFamily,
    theta: &NodewisePrecision,
    sigma_eps: Option<f64>,
) -> Result<GlmDesparsifiedFit> {
    check_fit(x, y, fit)?;
    let offset = usize::from(fit.intercept.is_some());
    let q = x.ncols() + offset;
    if theta.p() != q {
        return Err(Error::DimensionMismatch(format!("precision matrix is {}x{0}, expected {q}x{q}", theta.p())));
    }
    if let Some(s) = sigma_eps {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!("noise level must be positive, got {s}")));
        }
    }
    let n = x.nrows();
    let nf = n as f64;
    let xa = augmented(x, fit);
    let eta = fit.linear_predictor(x);
    let rdot: Array1<f64> = y.iter().zip(&eta).map(|(y, a)| family.rho_dot(*y, *a)).collect();
    let score = xa.t().dot(&rdot) / nf;
    let coef = fit.coefficients();
    let b_all = &coef - &theta.theta.dot(&score);

    let var = match sigma_eps {
        None => {
            // Column j of XΘ̂ᵀ scaled row-wise by ρ̇.
            let mut m = xa.dot(&theta.theta.t());
            for (i, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
                row *= rdot[i];
            }
            m.map_axis(Axis(0), |c| c.dot(&c) / nf)
        }
        Some(s) => {
            let xw = weighted_design(x, y, fit, family)?;
            let m = xw.dot(&theta.theta.t());
            m.map_axis(Axis(0), |c| s * s * c.dot(&c) / nf)
        }
    };
    let b = b_all.slice(s![offset..]).to_owned();
    let sigma_hat = var.slice(s![offset..]).mapv(f64::sqrt);
    if let Some(j) = sigma_hat.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("variance estimate of coordinate {j} is not positive")));
    }
    let se = sigma_hat.mapv(|v| v / nf.sqrt());
    let zscores = &b / &se;
    check_finite(zscores.iter(), "z-scores")?;
    let pvalues = zscores.mapv(two_sided_pvalue);
    Ok(GlmDesparsifiedFit { b, sigma_hat, se, zscores, pvalues, n, family: family.name() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::desparsify;
    use crate::lasso::{fit_lasso, LassoOptions};

    #[test]
    fn null_logistic_hessian_is_quarter_gram() {
        let mut rng = RngStream::new(12);
        let x = Array2::from_shape_simple_fn((30, 4), || rng.standard_normal());
        let y = Array1::from_shape_fn(30, |i| (i % 2) as f64);
        let fit = GlmFit {
            beta: Array1::zeros(4),
            intercept: None,
            lambda: 1.0,
            converged: true,
            objective: 0.0,
            kkt_gap: 0.0,
            n_outer: 0,
            active_set: vec![],
            floored_weights: 0,
        };
        let s = glm_sigma_hat_matrix(x.view(), y.view(), &fit, &logistic_family()).unwrap();
        let g = gram(x.view()) * 0.25;
        for (a, b) in s.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn squared_error_pipeline_reduces_to_linear() {
        let mut rng = RngStream::new(21);
        let x = Array2::from_shape_simple_fn((40, 10), || rng.standard_normal());
        let y = x.column(2).to_owned() * 1.5 + rng.normals(40);
        let lin = LassoOptions { tol_change: 1e-12, tol_kkt: 1e-12, ..Default::default() };
        let lf = fit_lasso(x.view(), y.view(), 0.2, &lin).unwrap();
        let nw_opts = NodewiseOptions::default();
        let nw = nodewise_from_design(x.view(), &NodewiseLambdas::Shared(0.25), &nw_opts).unwrap();
        let d = desparsify(x.view(), y.view(), &lf, &nw, 0.9).unwrap();

        let fam = squared_error_family();
        let gopts = GlmOptions { intercept: false, inner_tol_change: 1e-12, inner_tol_kkt: 1e-12, tol_kkt: 1e-11, ..Default::default() };
        let gf = fit_glm_lasso(x.view(), y.view(), &fam, 0.2, &gopts).unwrap();
        let gnw = glm_nodewise(x.view(), y.view(), &gf, &fam, &NodewiseLambdas::Shared(0.25), &nw_opts).unwrap();
        let g = desparsify_glm(x.view(), y.view(), &gf, &fam, &gnw, Some(0.9)).unwrap();
        for j in 0..10 {
            assert!((d.b[j] - g.b[j]).abs() < 1e-8);
            assert!((d.se[j] - g.se[j]).abs() < 1e-8);
        }
    }
}
