use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::{nodewise_from_design, NodewiseLambdas, NodewiseOptions, NodewisePrecision};
use crate::error::{Error, Result};
use crate::lasso::cd::{coordinate_descent, CdControl, GramOracle, QuadraticOracle};
use crate::lasso::{default_lambda_grid, fold_assignment, PATH_DEVIANCE_STOP};
use crate::numerics::{gram, RngStream};

/// Cross-validation curve of the shared nodewise penalty.
#[derive(Clone, Debug)]
pub struct NodewiseCv {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Out-of-fold squared error summed over all nodewise regressions,
    /// divided by `n·p`; `∞` where not evaluated.
    pub cv_error: Vec<f64>,
}

// Prediction errors only; the final fit at the chosen penalty is tight.
const PATH_CONTROL: CdControl = CdControl {
    tol_change: 1e-4,
    tol_kkt: 1e-4,
    max_sweeps: 100_000,
    trace: false,
};

const CHUNK: usize = 5;

/// `max_{j≠k} |Σ̂_jk|`: above this every nodewise regression is empty.
pub fn nodewise_lambda_max(x: ArrayView2<f64>, unpenalized: &[usize]) -> f64 {
    let s = gram(x);
    let p = s.nrows();
    let mut m = 0.0f64;
    for j in 0..p {
        for k in (0..p).filter(|&k| k != j && !unpenalized.contains(&k)) {
            m = m.max(s[[j, k]].abs());
        }
    }
    m
}

/// Exactly uncorrelated columns: every regression is empty at any penalty,
/// so there is nothing to validate.
fn uncorrelated(x: ArrayView2<f64>, opts: &NodewiseOptions) -> Result<(NodewisePrecision, NodewiseCv)> {
    let scale = gram(x).diag().fold(0.0f64, |m, v| m.max(*v));
    let lambda = 1e-8 * scale.max(f64::MIN_POSITIVE);
    let theta = nodewise_from_design(x, &NodewiseLambdas::Shared(lambda), opts)?;
    Ok((theta, NodewiseCv { lambda, grid: vec![lambda], cv_error: vec![f64::NAN] }))
}

/// Warm-started path of regression `j` in one fold.
struct NodePath<'a> {
    j: usize,
    oracle: GramOracle<'a>,
    gamma: Vec<f64>,
    xv: ArrayView2<'a, f64>,
    null_rss: f64,
    done: bool,
    errors: Vec<f64>,
}

impl<'a> NodePath<'a> {
    /// `q` is the training Gram matrix.
    fn new(q: ArrayView2<'a, f64>, xv: ArrayView2<'a, f64>, j: usize, len: usize) -> Self {
        let gamma = vec![0.0; q.nrows()];
        let oracle = GramOracle::new(q, q.row(j).to_vec(), &gamma);
        Self { j, oracle, gamma, xv, null_rss: q[[j, j]], done: false, errors: vec![f64::INFINITY; len] }
    }

    fn advance(&mut self, grid: &[f64], range: std::ops::Range<usize>, opts: &NodewiseOptions) -> Result<()> {
        let p = self.gamma.len();
        let j = self.j;
        for g in range {
            if self.done {
                return Ok(());
            }
            let pen = opts.penalties(p, j, grid[g]);
            coordinate_descent(&mut self.oracle, &mut self.gamma, &pen, &PATH_CONTROL)?;
            let active: Vec<usize> = (0..p).filter(|&k| self.gamma[k] != 0.0).collect();
            let gamma = &self.gamma;
            self.errors[g] = self
                .xv
                .rows()
                .into_iter()
                .map(|row| {
                    let fit: f64 = active.iter().map(|&k| row[k] * gamma[k]).sum();
                    (row[j] - fit).powi(2)
                })
                .sum();
            // Training RSS/n = Q_jj + 2f(γ), f the smooth part.
            let rss = self.null_rss + 2.0 * self.oracle.smooth_value(gamma);
            if rss <= (1.0 - PATH_DEVIANCE_STOP) * self.null_rss {
                self.done = true;
            }
        }
        Ok(())
    }
}

/// Chooses one penalty `λ_X` shared by all nodewise regressions by K-fold
/// cross-validation of their summed prediction error, then fits every row
/// at `λ_X` on the full design.
///
/// All `folds × p` paths advance down the grid together, a few values at a
/// time, so the walk can stop early per `opts.cv_patience`.
pub fn nodewise_shared_lambda_cv(
    x: ArrayView2<f64>,
    folds: usize,
    grid: Option<&[f64]>,
    rng: &mut RngStream,
    opts: &NodewiseOptions,
) -> Result<(NodewisePrecision, NodewiseCv)> {
    let (n, p) = x.dim();
    if p < 2 {
        return Err(Error::DimensionMismatch("nodewise regression needs p >= 2".into()));
    }
    let labels = fold_assignment(n, folds, rng)?;
    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let lmax = nodewise_lambda_max(x, &opts.unpenalized);
            if !(lmax > 0.0) {
                return uncorrelated(x, opts);
            }
            default_lambda_grid(lmax, 100, 0.01)
        }
    };
    crate::lasso::cv_validate_grid(&grid)?;

    let fold_data: Vec<(Array2<f64>, Array2<f64>)> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| labels[i] != f);
            (gram(x.select(Axis(0), &train).view()), x.select(Axis(0), &test))
        })
        .collect();

    let len = grid.len();
    let mut paths: Vec<NodePath> = fold_data
        .iter()
        .flat_map(|(q, xv)| (0..p).map(move |j| NodePath::new(q.view(), xv.view(), j, len)))
        .collect();

    let scale = (n * p) as f64;
    let mut cv_error = vec![f64::INFINITY; grid.len()];
    let mut best: Option<usize> = None;
    let mut start = 0;
    while start < grid.len() {
        let end = (start + CHUNK).min(grid.len());
        paths.par_iter_mut().try_for_each(|path| {
            let j = path.j;
            path.advance(&grid, start..end, opts)
                .map_err(|e| Error::Nodewise { node: j, source: Box::new(e) })
        })?;
        for g in start..end {
            // Fixed summation order: fold-major, then row.
            let e = paths.iter().map(|path| path.errors[g]).sum::<f64>() / scale;
            cv_error[g] = e;
            if e.is_finite() && best.map_or(true, |b| e < cv_error[b]) {
                best = Some(g);
            }
        }
        let exhausted = paths.iter().all(|path| path.done);
        let patient = matches!((opts.cv_patience, best), (Some(k), Some(b)) if end > b + k);
        if exhausted || patient {
            break;
        }
        start = end;
    }
    let best = best.ok_or_else(|| Error::Config("no nodewise penalty was evaluated in every fold".into()))?;
    let lambda = grid[best];
    let precision = nodewise_from_design(x, &NodewiseLambdas::Shared(lambda), opts)?;
    Ok((precision, NodewiseCv { lambda, grid, cv_error }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_does_not_change_the_choice_here() {
        let mut rng = RngStream::new(17);
        let x = Array2::from_shape_simple_fn((60, 15), || rng.standard_normal());
        let full = NodewiseOptions { cv_patience: None, ..Default::default() };
        let (_, a) = nodewise_shared_lambda_cv(x.view(), 5, None, &mut RngStream::new(4), &full).unwrap();
        let (_, b) = nodewise_shared_lambda_cv(x.view(), 5, None, &mut RngStream::new(4), &NodewiseOptions::default()).unwrap();
        assert_eq!(a.lambda, b.lambda);
        let best = a.grid.iter().position(|g| *g == a.lambda).unwrap();
        for g in 0..=best {
            assert_eq!(a.cv_error[g], b.cv_error[g]);
        }
    }
}
