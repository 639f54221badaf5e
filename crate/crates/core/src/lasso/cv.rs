use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::{LassoFit, LassoOptions, LassoSolver};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// A path stops once the training fit explains this fraction of the null
/// deviance; the remaining (smaller) grid values are not evaluated in that
/// fold and cannot be selected.
pub const PATH_DEVIANCE_STOP: f64 = 0.999;

// Paths over many λ values amortize the Gram matrix up to this width.
const GRAM_PATH_MAX_P: usize = 2000;

/// `‖XᵀY/n‖_∞`, on centered data when an intercept is fitted.
pub fn lambda_max(x: ArrayView2<f64>, y: ArrayView1<f64>, intercept: bool) -> f64 {
    let n = x.nrows() as f64;
    let grad = if intercept {
        let yc = &y - y.mean().unwrap_or(0.0);
        let means = x.mean_axis(Axis(0)).expect("non-empty design");
        let xc = &x - &means.insert_axis(Axis(0));
        xc.t().dot(&yc) / n
    } else {
        x.t().dot(&y) / n
    };
    grad.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `len` log-spaced values from `lambda_max` down to `ratio · lambda_max`.
pub fn default_lambda_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..len)
        .map(|i| (hi + (lo - hi) * i as f64 / (len - 1) as f64).exp())
        .collect()
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::Config("lambda grid values must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("lambda grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// Fold label of every observation: a random permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::Config(format!("{n} observations cannot fill {folds} folds")));
    }
    let perm = rng.permutation(n);
    let mut labels = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        labels[i] = pos % folds;
    }
    Ok(labels)
}

pub(crate) fn split_rows(x: ArrayView2<f64>, labels: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..x.nrows() {
        if labels[i] == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Selected fit together with the cross-validation curve.
#[derive(Clone, Debug)]
pub struct LassoCv {
    pub fit: LassoFit,
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Mean out-of-fold squared error per grid value (`+∞` where a fold's
    /// path was stopped early).
    pub cv_error: Vec<f64>,
}

/// Index of the smallest finite error; ties go to the earlier (larger) λ.
pub(crate) fn argmin_first(errors: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in errors.iter().enumerate() {
        if e.is_finite() && best.map_or(true, |b| *e < errors[b]) {
            best = Some(i);
        }
    }
    best
}

fn fold_errors(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    train: &[usize],
    test: &[usize],
    grid: &[f64],
    opts: &LassoOptions,
) -> Result<Vec<f64>> {
    let xt = x.select(Axis(0), train);
    let yt = y.select(Axis(0), train);
    let xv = x.select(Axis(0), test);
    let yv = y.select(Axis(0), test);
    let mut solver = LassoSolver::new(xt.view(), opts.clone())?;
    if x.ncols() <= GRAM_PATH_MAX_P {
        solver = solver.with_gram();
    }
    let null_dev = if opts.intercept {
        let m = yt.mean().unwrap_or(0.0);
        yt.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    } else {
        yt.dot(&yt)
    };
    let mut errors = vec![f64::INFINITY; grid.len()];
    let mut warm: Option<LassoFit> = None;
    for (g, &lambda) in grid.iter().enumerate() {
        let fit = solver.fit(yt.view(), lambda, warm.as_ref())?;
        let pred = fit.predict(xv.view());
        errors[g] = yv.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let r = fit.residual(xt.view(), yt.view());
        let dev = r.dot(&r);
        warm = Some(fit);
        if null_dev > 0.0 && dev <= (1.0 - PATH_DEVIANCE_STOP) * null_dev {
            break;
        }
    }
    Ok(errors)
}

/// K-fold cross-validated Lasso over a decreasing grid (warm-started within
/// each fold), refitted on all data at the selected λ.
pub fn fit_lasso_cv(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    folds: usize,
    grid: Option<&[f64]>,
    rng: &mut RngStream,
    opts: &LassoOptions,
) -> Result<LassoCv> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("response has length {}, design has {n} rows", y.len())));
    }
    let labels = fold_assignment(n, folds, rng)?;
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => default_lambda_grid(lambda_max(x, y, opts.intercept), 100, 0.01),
    };
    validate_grid(&grid)?;

    let per_fold: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, test) = split_rows(x, &labels, f);
            fold_errors(x, y, &train, &test, &grid, opts)
        })
        .collect::<Result<_>>()?;
    let mut total = Array1::<f64>::zeros(grid.len());
    for errs in &per_fold {
        total += &ArrayView1::from(errs.as_slice());
    }
    let cv_error: Vec<f64> = total.iter().map(|e| e / n as f64).collect();
    let best = argmin_first(&cv_error).ok_or_else(|| Error::Config("no grid value was evaluated in every fold".into()))?;
    let lambda = grid[best];
    let fit = LassoSolver::new(x, opts.clone())?.fit(y, lambda, None)?;
    Ok(LassoCv { fit, lambda, grid, cv_error })
}
