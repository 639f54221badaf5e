use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::LossFamily;
use crate::error::{Error, Result};
use crate::lasso::cd::{coordinate_descent, kkt_violation, CdControl, DesignOracle};
use crate::lasso::{cv_argmin, cv_split_rows, cv_validate_grid, default_lambda_grid, fold_assignment, PATH_DEVIANCE_STOP};
use crate::numerics::{check_finite, RngStream};

#[derive(Clone, Debug)]
pub struct GlmOptions {
    /// Unpenalized intercept.
    pub intercept: bool,
    /// Largest violation of the exact stationarity conditions at return.
    pub tol_kkt: f64,
    pub max_outer: usize,
    pub inner_tol_change: f64,
    pub inner_tol_kkt: f64,
    pub max_sweeps: usize,
    /// Lower bound on IRLS weights `ρ̈`.
    pub weight_floor: f64,
    /// A linear predictor beyond this magnitude is reported as separation.
    pub max_eta: f64,
    /// Cross-validation stops walking down the grid once the best value so
    /// far lies this many grid points behind; `None` walks the whole grid.
    pub cv_patience: Option<usize>,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            tol_kkt: 1e-6,
            max_outer: 100,
            inner_tol_change: 1e-9,
            inner_tol_kkt: 1e-8,
            max_sweeps: 100_000,
            weight_floor: 1e-5,
            max_eta: 50.0,
            cv_patience: Some(10),
        }
    }
}

/// Solution of `argmin_β P_n ρ_β + λ‖β‖₁`.
#[derive(Clone, Debug)]
pub struct GlmFit {
    pub beta: Array1<f64>,
    pub intercept: Option<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub objective: f64,
    /// Computed from the exact gradient `P_n ρ̇_β̂`.
    pub kkt_gap: f64,
    pub n_outer: usize,
    pub active_set: Vec<usize>,
    /// Observations whose weight hit the floor in the last IRLS step.
    pub floored_weights: usize,
}

impl GlmFit {
    pub fn linear_predictor(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.beta) + self.intercept.unwrap_or(0.0)
    }

    /// Coefficients with the intercept (if any) in front.
    pub fn coefficients(&self) -> Array1<f64> {
        self.intercept.into_iter().chain(self.beta.iter().copied()).collect()
    }
}

/// Reusable IRLS solver for one design matrix and loss.
pub struct GlmSolver<'a> {
    x: ArrayView2<'a, f64>,
    /// Transposed design, with a row of ones first when an intercept is fitted.
    cols: Array2<f64>,
    family: &'a dyn LossFamily,
    opts: GlmOptions,
}

impl<'a> GlmSolver<'a> {
    pub fn new(x: ArrayView2<'a, f64>, family: &'a dyn LossFamily, opts: GlmOptions) -> Result<Self> {
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
        Ok(Self { x, cols, family, opts })
    }

    fn offset(&self) -> usize {
        usize::from(self.opts.intercept)
    }

    fn penalties(&self, lambda: f64) -> Vec<f64> {
        let mut pen = vec![lambda; self.cols.nrows()];
        if self.opts.intercept {
            pen[0] = 0.0;
        }
        pen
    }

    fn eta(&self, coef: &[f64]) -> Array1<f64> {
        let c = ArrayView1::from(coef);
        self.cols.t().dot(&c)
    }

    fn objective(&self, y: ArrayView1<f64>, eta: &Array1<f64>, coef: &[f64], lambda: f64) -> f64 {
        let n = y.len() as f64;
        let loss: f64 = y.iter().zip(eta).map(|(y, a)| self.family.rho(*y, *a)).sum::<f64>() / n;
        loss + lambda * coef[self.offset()..].iter().map(|b| b.abs()).sum::<f64>()
    }

    /// `P_n ρ̇` in every coordinate (intercept first).
    fn gradient(&self, y: ArrayView1<f64>, eta: &Array1<f64>) -> Array1<f64> {
        let n = y.len() as f64;
        let d: Array1<f64> = y.iter().zip(eta).map(|(y, a)| self.family.rho_dot(*y, *a)).collect();
        self.cols.dot(&d) / n
    }

    /// `λ` above which every slope is zero.
    pub fn lambda_max(&self, y: ArrayView1<f64>) -> f64 {
        let c = if self.opts.intercept { self.family.null_intercept(y) } else { 0.0 };
        let eta = Array1::from_elem(y.len(), c);
        let g = self.gradient(y, &eta);
        g.iter().skip(self.offset()).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Penalized loss of the intercept-only (or all-zero) model.
    fn null_loss(&self, y: ArrayView1<f64>) -> f64 {
        let c = if self.opts.intercept { self.family.null_intercept(y) } else { 0.0 };
        y.iter().map(|v| self.family.rho(*v, c)).sum::<f64>()
    }

    pub fn fit(&self, y: ArrayView1<f64>, lambda: f64, warm: Option<&GlmFit>) -> Result<GlmFit> {
        let n = self.x.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!("response has length {}, design has {n} rows", y.len())));
        }
        self.family.check_response(y)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        let offset = self.offset();
        let mut coef = match warm {
            Some(w) => {
                if w.beta.len() + offset != self.cols.nrows() || w.intercept.is_some() != self.opts.intercept {
                    return Err(Error::DimensionMismatch("warm start does not match the solver".into()));
                }
                w.coefficients().to_vec()
            }
            None => {
                let mut c = vec![0.0; self.cols.nrows()];
                if self.opts.intercept {
                    c[0] = self.family.null_intercept(y);
                }
                c
            }
        };
        let pen = self.penalties(lambda);
        let ctrl = CdControl {
            tol_change: self.opts.inner_tol_change,
            tol_kkt: self.opts.inner_tol_kkt,
            max_sweeps: self.opts.max_sweeps,
            trace: false,
        };
        let mut eta = self.eta(&coef);
        let mut obj = self.objective(y, &eta, &coef, lambda);
        let mut floored = 0usize;
        let mut gap = f64::INFINITY;
        for outer in 0..=self.opts.max_outer {
            let grad = self.gradient(y, &eta);
            gap = (0..coef.len()).map(|k| kkt_violation(grad[k], coef[k], pen[k])).fold(0.0, f64::max);
            if gap <= self.opts.tol_kkt {
                return Ok(self.finish(coef, lambda, obj, gap, outer, floored));
            }
            if outer == self.opts.max_outer {
                break;
            }

            // Quadratic model: ½ P_n w (z − x̃c)² with z = η − ρ̇/w.
            let mut w = Vec::with_capacity(n);
            let mut resid = Vec::with_capacity(n);
            floored = 0;
            for i in 0..n {
                let dd = self.family.rho_ddot(y[i], eta[i]);
                let wi = if dd < self.opts.weight_floor {
                    floored += 1;
                    self.opts.weight_floor
                } else {
                    dd
                };
                w.push(wi);
                resid.push(-self.family.rho_dot(y[i], eta[i]) / wi);
            }
            let mut cand = coef.clone();
            let mut oracle = DesignOracle::new(self.cols.view(), Some(&w), resid);
            coordinate_descent(&mut oracle, &mut cand, &pen, &ctrl)?;

            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = coef.iter().zip(&cand).map(|(c, d)| c + t * (d - c)).collect();
                let eta_t = self.eta(&trial);
                let obj_t = self.objective(y, &eta_t, &trial, lambda);
                if obj_t <= obj + 1e-10 {
                    let max_eta = eta_t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if max_eta > self.opts.max_eta {
                        return Err(Error::Separation { max_eta });
                    }
                    coef = trial;
                    eta = eta_t;
                    obj = obj_t;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Err(Error::NotConverged { sweeps: self.opts.max_outer, kkt_gap: gap })
    }

    fn finish(&self, coef: Vec<f64>, lambda: f64, objective: f64, kkt_gap: f64, n_outer: usize, floored: usize) -> GlmFit {
        let offset = self.offset();
        let beta = Array1::from(coef[offset..].to_vec());
        let active_set = beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect();
        GlmFit {
            beta,
            intercept: self.opts.intercept.then(|| coef[0]),
            lambda,
            converged: true,
            objective,
            kkt_gap,
            n_outer,
            active_set,
            floored_weights: floored,
        }
    }
}

/// `argmin_β P_n ρ_β + λ‖β‖₁` by IRLS with a coordinate-descent inner solver.
pub fn fit_glm_lasso(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: &dyn LossFamily,
    lambda: f64,
    opts: &GlmOptions,
) -> Result<GlmFit> {
    GlmSolver::new(x.view(), family, opts.clone())?.fit(y, lambda, None)
}

/// Cross-validation curve of a GLM Lasso.
#[derive(Clone, Debug)]
pub struct GlmCv {
    pub fit: GlmFit,
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Mean out-of-fold deviance `2ρ` per observation; `∞` where a fold's
    /// path stopped before that grid value.
    pub cv_error: Vec<f64>,
}

/// Warm-started path of one training fold.
struct FoldPath {
    xt: Array2<f64>,
    yt: Array1<f64>,
    xv: Array2<f64>,
    yv: Array1<f64>,
    null: f64,
    warm: Option<GlmFit>,
    done: bool,
    errors: Vec<f64>,
}

impl FoldPath {
    fn new(x: ArrayView2<f64>, y: ArrayView1<f64>, family: &dyn LossFamily, train: &[usize], test: &[usize], len: usize, opts: &GlmOptions) -> Result<Self> {
        let xt = x.select(Axis(0), train);
        let yt = y.select(Axis(0), train);
        let null = GlmSolver::new(xt.view(), family, opts.clone())?.null_loss(yt.view());
        Ok(Self {
            xt,
            yt,
            xv: x.select(Axis(0), test),
            yv: y.select(Axis(0), test),
            null,
            warm: None,
            done: false,
            errors: vec![f64::INFINITY; len],
        })
    }

    fn advance(&mut self, family: &dyn LossFamily, grid: &[f64], range: std::ops::Range<usize>, opts: &GlmOptions) -> Result<()> {
        let solver = GlmSolver::new(self.xt.view(), family, opts.clone())?;
        for g in range {
            if self.done {
                return Ok(());
            }
            let fit = match solver.fit(self.yt.view(), grid[g], self.warm.as_ref()) {
                Ok(f) => f,
                // Near-separated training folds end the path like the deviance stop.
                Err(Error::Separation { .. } | Error::NotConverged { .. }) if g > 0 => {
                    self.done = true;
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            let eta_v = fit.linear_predictor(self.xv.view());
            self.errors[g] = 2.0 * self.yv.iter().zip(&eta_v).map(|(y, a)| family.rho(*y, *a)).sum::<f64>();
            let eta_t = fit.linear_predictor(self.xt.view());
            let dev: f64 = self.yt.iter().zip(&eta_t).map(|(y, a)| family.rho(*y, *a)).sum();
            self.warm = Some(fit);
            if self.null > 0.0 && dev <= (1.0 - PATH_DEVIANCE_STOP) * self.null {
                self.done = true;
            }
        }
        Ok(())
    }
}

const CHUNK: usize = 5;

/// K-fold cross-validation of `λ` on out-of-fold deviance, then a refit on
/// all observations.
pub fn fit_glm_lasso_cv(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: &dyn LossFamily,
    folds: usize,
    grid: Option<&[f64]>,
    rng: &mut RngStream,
    opts: &GlmOptions,
) -> Result<GlmCv> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("response has length {}, design has {n} rows", y.len())));
    }
    family.check_response(y)?;
    let labels = fold_assignment(n, folds, rng)?;
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let lmax = GlmSolver::new(x.view(), family, opts.clone())?.lambda_max(y);
            if !(lmax > 0.0) {
                return Err(Error::Config("response carries no signal for any slope".into()));
            }
            default_lambda_grid(lmax, 100, 0.01)
        }
    };
    cv_validate_grid(&grid)?;
    let mut paths: Vec<FoldPath> = (0..folds)
        .map(|f| {
            let (train, test) = cv_split_rows(x, &labels, f);
            FoldPath::new(x, y, family, &train, &test, grid.len(), opts)
        })
        .collect::<Result<_>>()?;
    // All folds advance a few grid values at a time so the walk can stop
    // early per `opts.cv_patience`.
    let mut cv_error = vec![f64::INFINITY; grid.len()];
    let mut start = 0;
    while start < grid.len() {
        let end = (start + CHUNK).min(grid.len());
        paths.par_iter_mut().try_for_each(|path| path.advance(family, &grid, start..end, opts))?;
        for g in start..end {
            cv_error[g] = paths.iter().map(|path| path.errors[g]).sum::<f64>() / n as f64;
        }
        let best = cv_argmin(&cv_error[..end]);
        let patient = matches!((opts.cv_patience, best), (Some(k), Some(b)) if end > b + k);
        if paths.iter().all(|path| path.done) || patient {
            break;
        }
        start = end;
    }
    let best = cv_argmin(&cv_error).ok_or_else(|| Error::Config("no grid value was evaluated in every fold".into()))?;
    let lambda = grid[best];
    let fit = fit_glm_lasso(x, y, family, lambda, opts)?;
    Ok(GlmCv { fit, lambda, grid, cv_error })
}
