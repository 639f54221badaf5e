//! ℓ1-penalized least squares: `‖Y − Xβ‖₂²/n + 2λ‖β‖₁`.
//!
//! The penalty carries the factor 2 throughout, so the coordinate update
//! thresholds `X_jᵀr/n` at `λ` and the KKT conditions read
//! `|X_jᵀ(Y − Xβ̂)/n| ≤ λ`.

pub(crate) mod cd;
mod cv;
mod scaled;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::check_finite;
use cd::{coordinate_descent, CdControl, DesignOracle, GramOracle};

pub use cd::soft_threshold;
pub use cv::{default_lambda_grid, fit_lasso_cv, fold_assignment, lambda_max, LassoCv, PATH_DEVIANCE_STOP};
pub use scaled::{fit_scaled_lasso, universal_lambda0, ScaledLassoFit};
pub(crate) use cv::{argmin_first as cv_argmin, split_rows as cv_split_rows, validate_grid as cv_validate_grid};

/// Solver tolerances.
#[derive(Clone, Debug)]
pub struct LassoOptions {
    /// Largest coordinate move allowed in the final full sweep.
    pub tol_change: f64,
    /// Largest stationarity violation allowed at return.
    pub tol_kkt: f64,
    pub max_sweeps: usize,
    /// Fit an unpenalized intercept.
    pub intercept: bool,
    /// Record the penalized objective after every sweep.
    pub trace: bool,
    /// Use covariance updates from a precomputed `XᵀX/n` when `p` is at most this.
    pub gram_max_p: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol_change: 1e-7,
            tol_kkt: 1e-6,
            max_sweeps: 100_000,
            intercept: false,
            trace: false,
            gram_max_p: 0,
        }
    }
}

impl LassoOptions {
    pub(crate) fn control(&self) -> CdControl {
        CdControl {
            tol_change: self.tol_change,
            tol_kkt: self.tol_kkt,
            max_sweeps: self.max_sweeps,
            trace: self.trace,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoFit {
    pub beta: Array1<f64>,
    pub intercept: Option<f64>,
    pub lambda: f64,
    pub n_iter: usize,
    /// `‖Y − Xβ̂‖²/n + 2λ‖β̂‖₁`, recomputed from a fresh residual.
    pub objective: f64,
    /// Largest stationarity violation, recomputed from a fresh residual.
    pub kkt_gap: f64,
    pub active_set: Vec<usize>,
    /// Per-sweep objective (halved, up to a constant) when tracing is on.
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn residual(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
        let mut r = &y - &x.dot(&self.beta);
        if let Some(b0) = self.intercept {
            r -= b0;
        }
        r
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.beta) + self.intercept.unwrap_or(0.0)
    }
}

/// `κ̂` with `λκ̂ = Xᵀ(Y − Xβ̂)/n`.
#[derive(Clone, Debug)]
pub struct SubgradientCertificate {
    pub kappa: Array1<f64>,
}

/// Reusable solver for one design matrix.
///
/// Holds the transposed design (contiguous columns) and, for moderate `p`,
/// the Gram matrix, so repeated fits on the same `X` (paths, scaled-Lasso
/// iterations, simulation replications) do not redo that work.
pub struct LassoSolver<'a> {
    x: ArrayView2<'a, f64>,
    cols: Array2<f64>,
    gram: Option<Array2<f64>>,
    opts: LassoOptions,
}

impl<'a> LassoSolver<'a> {
    pub fn new(x: ArrayView2<'a, f64>, opts: LassoOptions) -> Result<Self> {
        let (n, p) = x.dim();
        if n < 2 || p < 1 {
            return Err(Error::DimensionMismatch(format!("design must have n >= 2 and p >= 1, got {n}x{p}")));
        }
        check_finite(x.iter(), "design matrix")?;
        let offset = usize::from(opts.intercept);
        let mut cols = Array2::<f64>::zeros((p + offset, n));
        if opts.intercept {
            cols.row_mut(0).fill(1.0);
        }
        cols.slice_mut(ndarray::s![offset.., ..]).assign(&x.t());
        let gram = (p <= opts.gram_max_p).then(|| cols.dot(&cols.t()) / n as f64);
        Ok(Self { x, cols, gram, opts })
    }

    /// Forces the covariance-update path regardless of `gram_max_p`.
    pub fn with_gram(mut self) -> Self {
        if self.gram.is_none() {
            let n = self.x.nrows() as f64;
            self.gram = Some(self.cols.dot(&self.cols.t()) / n);
        }
        self
    }

    pub fn design(&self) -> ArrayView2<'a, f64> {
        self.x
    }

    pub fn options(&self) -> &LassoOptions {
        &self.opts
    }

    fn penalties(&self, lambda: f64) -> Vec<f64> {
        let mut pen = vec![lambda; self.cols.nrows()];
        if self.opts.intercept {
            pen[0] = 0.0;
        }
        pen
    }

    /// Coefficients (with the intercept in front when enabled) to a fit.
    fn finish(&self, y: ArrayView1<f64>, lambda: f64, coef: Vec<f64>, n_iter: usize, trace: Vec<f64>) -> LassoFit {
        let offset = usize::from(self.opts.intercept);
        let intercept = self.opts.intercept.then(|| coef[0]);
        let beta = Array1::from(coef[offset..].to_vec());
        let mut r = &y - &self.x.dot(&beta);
        if let Some(b0) = intercept {
            r -= b0;
        }
        let n = y.len() as f64;
        let grad = self.cols.dot(&r) / -n;
        let pen = self.penalties(lambda);
        let coef_all: Vec<f64> = intercept.into_iter().chain(beta.iter().copied()).collect();
        let kkt_gap = (0..pen.len())
            .map(|k| cd::kkt_violation(grad[k], coef_all[k], pen[k]))
            .fold(0.0, f64::max);
        let objective = r.dot(&r) / n + 2.0 * lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
        let active_set = beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect();
        LassoFit {
            beta,
            intercept,
            lambda,
            n_iter,
            objective,
            kkt_gap,
            active_set,
            objective_trace: trace,
        }
    }

    /// Solve at `lambda`, optionally warm-started from a previous fit.
    pub fn fit(&self, y: ArrayView1<f64>, lambda: f64, warm: Option<&LassoFit>) -> Result<LassoFit> {
        let n = self.x.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!("response has length {}, design has {n} rows", y.len())));
        }
        check_finite(y.iter(), "response")?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        let mut coef = vec![0.0; self.cols.nrows()];
        if let Some(w) = warm {
            let offset = usize::from(self.opts.intercept);
            if w.beta.len() + offset != coef.len() {
                return Err(Error::DimensionMismatch("warm start has the wrong length".into()));
            }
            if let (true, Some(b0)) = (self.opts.intercept, w.intercept) {
                coef[0] = b0;
            }
            for (c, b) in coef[offset..].iter_mut().zip(w.beta.iter()) {
                *c = *b;
            }
        }
        let pen = self.penalties(lambda);
        let ctrl = self.opts.control();
        let outcome = match &self.gram {
            Some(q) => {
                let c = (self.cols.dot(&y) / n as f64).to_vec();
                let mut oracle = GramOracle::new(q.view(), c, &coef);
                coordinate_descent(&mut oracle, &mut coef, &pen, &ctrl)?
            }
            None => {
                let mut resid = y.to_vec();
                for (k, &c) in coef.iter().enumerate() {
                    if c != 0.0 {
                        for (r, x) in resid.iter_mut().zip(self.cols.row(k)) {
                            *r -= c * x;
                        }
                    }
                }
                let mut oracle = DesignOracle::new(self.cols.view(), None, resid);
                coordinate_descent(&mut oracle, &mut coef, &pen, &ctrl)?
            }
        };
        Ok(self.finish(y, lambda, coef, outcome.sweeps, outcome.trace))
    }

    /// Smallest `λ` at which all penalized coefficients vanish.
    pub fn lambda_max(&self, y: ArrayView1<f64>) -> f64 {
        lambda_max(self.x, y, self.opts.intercept)
    }
}

/// Solve `argmin ‖Y − Xβ‖²/n + 2λ‖β‖₁` by coordinate descent.
pub fn fit_lasso(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
    LassoSolver::new(x, opts.clone())?.fit(y, lambda, None)
}

pub fn extract_subgradient(fit: &LassoFit, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<SubgradientCertificate> {
    if fit.lambda == 0.0 {
        return Err(Error::ZeroLambda);
    }
    if x.ncols() != fit.beta.len() || x.nrows() != y.len() {
        return Err(Error::DimensionMismatch("fit, design and response disagree".into()));
    }
    let r = fit.residual(x, y);
    let kappa = x.t().dot(&r) / (x.nrows() as f64 * fit.lambda);
    Ok(SubgradientCertificate { kappa })
}

/// Column rescaling to `‖X_j‖²/n = 1`, kept so coefficients can be mapped back.
#[derive(Clone, Debug)]
pub struct ColumnScaling {
    pub scales: Array1<f64>,
}

impl ColumnScaling {
    pub fn standardize(x: ArrayView2<f64>) -> Result<(Array2<f64>, Self)> {
        let n = x.nrows() as f64;
        let scales = x.map_axis(Axis(0), |c| (c.dot(&c) / n).sqrt());
        if let Some(j) = scales.iter().position(|s| *s == 0.0) {
            return Err(Error::Domain(format!("column {j} is identically zero")));
        }
        let xs = &x / &scales.view().insert_axis(Axis(0));
        Ok((xs, Self { scales }))
    }

    /// Coefficients on the standardized scale back to the original columns.
    pub fn unscale(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        &beta / &self.scales
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn orthonormal_design(n: usize, p: usize) -> Array2<f64> {
        // Scaled Hadamard-like columns: ±1 patterns with XᵀX/n = I.
        Array2::from_shape_fn((n, p), |(i, j)| if (i >> j) & 1 == 0 { 1.0 } else { -1.0 })
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        let x = orthonormal_design(16, 4);
        let g = x.t().dot(&x) / 16.0;
        assert_eq!(g, Array2::<f64>::eye(4));
        let y = RngStream::new(3).normals(16);
        let lambda = 0.2;
        let fit = fit_lasso(x.view(), y.view(), lambda, &LassoOptions::default()).unwrap();
        let z = x.t().dot(&y) / 16.0;
        for j in 0..4 {
            assert!((fit.beta[j] - soft_threshold(z[j], lambda)).abs() < 1e-9);
        }
    }

    #[test]
    fn large_lambda_gives_null_fit() {
        let mut rng = RngStream::new(11);
        let x = Array2::from_shape_simple_fn((30, 8), || rng.standard_normal());
        let y = rng.normals(30);
        let lmax = lambda_max(x.view(), y.view(), false);
        let fit = fit_lasso(x.view(), y.view(), lmax, &LassoOptions::default()).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        assert!(fit.active_set.is_empty());
        let cert = extract_subgradient(&fit, x.view(), y.view()).unwrap();
        assert!(cert.kappa.iter().all(|k| k.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn zero_lambda_has_no_certificate() {
        let x = orthonormal_design(8, 2);
        let y = Array1::linspace(-1.0, 1.0, 8);
        let fit = fit_lasso(x.view(), y.view(), 0.0, &LassoOptions::default()).unwrap();
        assert!(matches!(extract_subgradient(&fit, x.view(), y.view()), Err(Error::ZeroLambda)));
    }

    #[test]
    fn rejects_nan_input() {
        let mut x = orthonormal_design(8, 2);
        x[[0, 0]] = f64::NAN;
        let y = Array1::zeros(8);
        assert!(matches!(
            fit_lasso(x.view(), y.view(), 0.1, &LassoOptions::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn reports_non_convergence() {
        let mut rng = RngStream::new(2);
        let x = Array2::from_shape_simple_fn((20, 10), || rng.standard_normal());
        let y = rng.normals(20);
        let opts = LassoOptions { max_sweeps: 1, ..Default::default() };
        match fit_lasso(x.view(), y.view(), 0.01, &opts) {
            Err(Error::NotConverged { kkt_gap, .. }) => assert!(kkt_gap > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn intercept_is_unpenalized() {
        let x = orthonormal_design(16, 3);
        let y = Array1::from_elem(16, 5.0);
        let opts = LassoOptions { intercept: true, ..Default::default() };
        let fit = fit_lasso(x.view(), y.view(), 0.1, &opts).unwrap();
        assert!((fit.intercept.unwrap() - 5.0).abs() < 1e-9);
        assert!(fit.beta.iter().all(|b| b.abs() < 1e-9));
    }

    #[test]
    fn gram_and_design_paths_agree() {
        let mut rng = RngStream::new(5);
        let x = Array2::from_shape_simple_fn((40, 60), || rng.standard_normal());
        let y = rng.normals(40);
        let tight = LassoOptions { tol_change: 1e-12, tol_kkt: 1e-12, ..Default::default() };
        let a = LassoSolver::new(x.view(), tight.clone()).unwrap().fit(y.view(), 0.1, None).unwrap();
        let b = LassoSolver::new(x.view(), tight).unwrap().with_gram().fit(y.view(), 0.1, None).unwrap();
        for (u, v) in a.beta.iter().zip(b.beta.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_round_trip() {
        let mut rng = RngStream::new(8);
        let x = Array2::from_shape_simple_fn((25, 4), || 3.0 * rng.standard_normal());
        let y = rng.normals(25);
        let (xs, scaling) = ColumnScaling::standardize(x.view()).unwrap();
        for c in xs.columns() {
            assert!((c.dot(&c) / 25.0 - 1.0).abs() < 1e-12);
        }
        let fit = fit_lasso(xs.view(), y.view(), 0.05, &LassoOptions::default()).unwrap();
        let beta = scaling.unscale(fit.beta.view());
        let pred_a = xs.dot(&fit.beta);
        let pred_b = x.dot(&beta);
        for (a, b) in pred_a.iter().zip(pred_b.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
