//! Relaxed inverse `Θ̂` of a Gram-type matrix by nodewise Lasso regression.
//!
//! Row `j` regresses column `j` on the remaining columns,
//!
//! ```text
//! γ̂_j = argmin ‖X_j − X_{−j}γ‖²/n + 2λ_j‖γ‖₁
//! τ̂_j² = ‖X_j − X_{−j}γ̂_j‖²/n + λ_j‖γ̂_j‖₁
//! Θ̂_j = (−γ̂_{j,1}, …, 1, …, −γ̂_{j,p}) / τ̂_j²
//! ```
//!
//! and the stationarity conditions of each regression give the certificate
//! `‖Σ̂Θ̂_j − e_j‖_∞ ≤ λ_j/τ̂_j²` with `(Σ̂Θ̂_j)_j = 1`, which is checked by
//! direct recomputation before a [`NodewisePrecision`] is returned.

mod cv;
mod io;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::cd::{coordinate_descent, CdControl, DesignOracle, GramOracle};
use crate::numerics::{check_finite, check_symmetric};

pub use cv::{nodewise_lambda_max, nodewise_shared_lambda_cv, NodewiseCv};

/// Smallest admissible `τ̂_j²`.
pub const TAU_SQ_FLOOR: f64 = 1e-10;

// Design-mode regressions use covariance updates up to this width.
const GRAM_MAX_P: usize = 2000;

/// Penalty level for each nodewise regression.
#[derive(Clone, Debug)]
pub enum NodewiseLambdas {
    Shared(f64),
    PerRow(Vec<f64>),
}

impl NodewiseLambdas {
    fn resolve(&self, p: usize) -> Result<Vec<f64>> {
        let v = match self {
            NodewiseLambdas::Shared(l) => vec![*l; p],
            NodewiseLambdas::PerRow(v) => {
                if v.len() != p {
                    return Err(Error::DimensionMismatch(format!("{} nodewise penalties for {p} columns", v.len())));
                }
                v.clone()
            }
        };
        if let Some(l) = v.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Domain(format!("nodewise penalties must be positive, got {l}")));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug)]
pub struct NodewiseOptions {
    pub tol_change: f64,
    pub tol_kkt: f64,
    pub max_sweeps: usize,
    /// Columns that enter every regression unpenalized (e.g. an intercept).
    pub unpenalized: Vec<usize>,
    /// Slack allowed in the recomputed certificate.
    pub certificate_tol: f64,
    /// Shared-penalty cross-validation stops walking down the grid once the
    /// best value so far lies this many grid points behind; `None` walks the
    /// whole grid.
    pub cv_patience: Option<usize>,
}

impl Default for NodewiseOptions {
    fn default() -> Self {
        Self {
            tol_change: 1e-10,
            tol_kkt: 1e-10,
            max_sweeps: 100_000,
            unpenalized: Vec::new(),
            certificate_tol: 1e-8,
            cv_patience: Some(10),
        }
    }
}

impl NodewiseOptions {
    pub(crate) fn control(&self) -> CdControl {
        CdControl {
            tol_change: self.tol_change,
            tol_kkt: self.tol_kkt,
            max_sweeps: self.max_sweeps,
            trace: false,
        }
    }

    pub(crate) fn penalties(&self, p: usize, node: usize, lambda: f64) -> Vec<f64> {
        let mut pen = vec![lambda; p];
        for &u in &self.unpenalized {
            if u < p {
                pen[u] = 0.0;
            }
        }
        pen[node] = f64::INFINITY;
        pen
    }
}

/// The relaxed inverse with its per-row diagnostics.
#[derive(Clone, Debug)]
pub struct NodewisePrecision {
    /// Row `j` is `Θ̂_j`.
    pub theta: Array2<f64>,
    pub tau_sq: Array1<f64>,
    /// Residual mean square `‖X_j − X_{−j}γ̂_j‖²/n`; only when built from a design.
    pub tau_tilde_sq: Option<Array1<f64>>,
    pub lambdas: Array1<f64>,
    /// `λ_j / τ̂_j²`.
    pub kkt_bounds: Array1<f64>,
    /// `|(Σ̂Θ̂_j)_j − 1|` as recomputed.
    pub diag_gap: Array1<f64>,
    /// `max_{k≠j} |(Σ̂Θ̂_j)_k|` as recomputed.
    pub offdiag_max: Array1<f64>,
}

struct Row {
    gamma: Vec<f64>,
    tau_sq: f64,
    tau_tilde_sq: Option<f64>,
    /// `Σ̂Θ̂_j`.
    product: Array1<f64>,
}

impl NodewisePrecision {
    pub fn p(&self) -> usize {
        self.theta.nrows()
    }

    fn assemble(rows: Vec<Row>, lambdas: Vec<f64>, opts: &NodewiseOptions) -> Result<Self> {
        let p = rows.len();
        let mut theta = Array2::<f64>::zeros((p, p));
        let mut tau_sq = Array1::zeros(p);
        let mut tilde = Array1::zeros(p);
        let mut has_tilde = true;
        let mut diag_gap = Array1::zeros(p);
        let mut offdiag_max = Array1::zeros(p);
        let mut kkt_bounds = Array1::zeros(p);
        for (j, row) in rows.into_iter().enumerate() {
            let t2 = row.tau_sq;
            let bound = lambdas[j] / t2;
            for k in 0..p {
                theta[[j, k]] = if k == j { 1.0 / t2 } else { -row.gamma[k] / t2 };
            }
            let dg = (row.product[j] - 1.0).abs();
            let mut excess = dg;
            let mut off = 0.0f64;
            for k in (0..p).filter(|&k| k != j) {
                let v = row.product[k].abs();
                off = off.max(v);
                let allowed = if opts.unpenalized.contains(&k) { 0.0 } else { bound };
                excess = excess.max(v - allowed);
            }
            if excess > opts.certificate_tol {
                return Err(Error::Certificate { node: j, excess });
            }
            tau_sq[j] = t2;
            match row.tau_tilde_sq {
                Some(t) => tilde[j] = t,
                None => has_tilde = false,
            }
            diag_gap[j] = dg;
            offdiag_max[j] = off;
            kkt_bounds[j] = bound;
        }
        Ok(Self {
            theta,
            tau_sq,
            tau_tilde_sq: has_tilde.then_some(tilde),
            lambdas: Array1::from(lambdas),
            kkt_bounds,
            diag_gap,
            offdiag_max,
        })
    }

    /// `Ω̂_jj = τ̃_j²/τ̂_j⁴` when the residual mean squares are known.
    pub fn omega_diag_from_tau(&self) -> Option<Array1<f64>> {
        self.tau_tilde_sq
            .as_ref()
            .map(|t| Array1::from_shape_fn(self.p(), |j| t[j] / (self.tau_sq[j] * self.tau_sq[j])))
    }

    /// Number of nonzero off-diagonal entries per row.
    pub fn row_support(&self) -> Vec<usize> {
        self.theta
            .rows()
            .into_iter()
            .enumerate()
            .map(|(j, r)| r.iter().enumerate().filter(|(k, v)| *k != j && **v != 0.0).count())
            .collect()
    }
}

fn node_from_design(
    x: ArrayView2<f64>,
    cols: ArrayView2<f64>,
    gram: Option<ArrayView2<f64>>,
    j: usize,
    lambda: f64,
    opts: &NodewiseOptions,
) -> Result<Row> {
    let (n, p) = x.dim();
    let pen = opts.penalties(p, j, lambda);
    let mut gamma = vec![0.0; p];
    match gram {
        Some(q) => {
            let mut oracle = GramOracle::new(q, q.row(j).to_vec(), &gamma);
            coordinate_descent(&mut oracle, &mut gamma, &pen, &opts.control())?;
        }
        None => {
            let mut oracle = DesignOracle::new(cols, None, cols.row(j).to_vec());
            coordinate_descent(&mut oracle, &mut gamma, &pen, &opts.control())?;
        }
    }

    // Fresh residual r = X_j − X_{−j}γ̂.
    let mut r = cols.row(j).to_owned();
    for (k, &g) in gamma.iter().enumerate() {
        if g != 0.0 {
            r.scaled_add(-g, &cols.row(k));
        }
    }
    let tau_tilde_sq = r.dot(&r) / n as f64;
    let l1: f64 = gamma
        .iter()
        .zip(&pen)
        .filter(|(_, p)| p.is_finite())
        .map(|(g, p)| if *p > 0.0 { g.abs() } else { 0.0 })
        .sum();
    let tau_sq = tau_tilde_sq + lambda * l1;
    if !(tau_sq >= TAU_SQ_FLOOR) {
        return Err(Error::DegenerateNode { node: j, tau_sq });
    }
    // X Θ̂_j = r / τ̂², hence Σ̂Θ̂_j = Xᵀr / (n τ̂²).
    let product = cols.dot(&r) / (n as f64 * tau_sq);
    Ok(Row { gamma, tau_sq, tau_tilde_sq: Some(tau_tilde_sq), product })
}

fn node_from_matrix(sigma: ArrayView2<f64>, j: usize, lambda: f64, opts: &NodewiseOptions) -> Result<Row> {
    let p = sigma.nrows();
    let pen = opts.penalties(p, j, lambda);
    let mut gamma = vec![0.0; p];
    let c = sigma.row(j).to_vec();
    let mut oracle = GramOracle::new(sigma, c, &gamma);
    coordinate_descent(&mut oracle, &mut gamma, &pen, &opts.control())?;
    let g = Array1::from(gamma.clone());
    let tau_sq = sigma[[j, j]] - sigma.row(j).dot(&g);
    if !(tau_sq >= TAU_SQ_FLOOR) {
        return Err(Error::DegenerateNode { node: j, tau_sq });
    }
    let mut c_row = -&g;
    c_row[j] = 1.0;
    let product = sigma.dot(&c_row) / tau_sq;
    Ok(Row { gamma, tau_sq, tau_tilde_sq: None, product })
}

fn wrap(node: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        e @ Error::DegenerateNode { .. } => e,
        e => Error::Nodewise { node, source: Box::new(e) },
    }
}

/// Nodewise Lasso on the columns of a design matrix.
pub fn nodewise_from_design(
    x: ArrayView2<f64>,
    lambdas: &NodewiseLambdas,
    opts: &NodewiseOptions,
) -> Result<NodewisePrecision> {
    let (n, p) = x.dim();
    if p < 2 || n < 2 {
        return Err(Error::DimensionMismatch(format!("nodewise regression needs n >= 2 and p >= 2, got {n}x{p}")));
    }
    check_finite(x.iter(), "design matrix")?;
    let lambdas = lambdas.resolve(p)?;
    let cols = x.t().as_standard_layout().to_owned();
    let gram = (p <= GRAM_MAX_P).then(|| cols.dot(&cols.t()) / n as f64);
    let rows: Vec<Row> = (0..p)
        .into_par_iter()
        .map(|j| node_from_design(x, cols.view(), gram.as_ref().map(|g| g.view()), j, lambdas[j], opts).map_err(wrap(j)))
        .collect::<Result<_>>()?;
    NodewisePrecision::assemble(rows, lambdas, opts)
}

/// Nodewise Lasso on a symmetric matrix input, solving
/// `Σ̂_jj − 2Σ̂_{j,∖j}γ + γᵀΣ̂_{∖j,∖j}γ + 2λ_j‖γ‖₁` with
/// `τ̂_j² = Σ̂_jj − Σ̂_{j,∖j}γ̂_j`.
pub fn nodewise_from_matrix(
    sigma: ArrayView2<f64>,
    lambdas: &NodewiseLambdas,
    opts: &NodewiseOptions,
) -> Result<NodewisePrecision> {
    check_finite(sigma.iter(), "matrix input")?;
    check_symmetric(sigma, 1e-10)?;
    let p = sigma.nrows();
    if p < 2 {
        return Err(Error::DimensionMismatch("nodewise regression needs p >= 2".into()));
    }
    if let Some(j) = (0..p).find(|&j| !(sigma[[j, j]] > 0.0)) {
        return Err(Error::Domain(format!("diagonal entry {j} is not positive")));
    }
    let lambdas = lambdas.resolve(p)?;
    let sigma = sigma.as_standard_layout();
    let rows: Vec<Row> = (0..p)
        .into_par_iter()
        .map(|j| node_from_matrix(sigma.view(), j, lambdas[j], opts).map_err(wrap(j)))
        .collect::<Result<_>>()?;
    NodewisePrecision::assemble(rows, lambdas, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn walsh(n: usize, p: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, p), |(i, j)| if (i >> j) & 1 == 0 { 1.0 } else { -1.0 })
    }

    #[test]
    fn orthonormal_design_gives_identity() {
        let x = walsh(32, 5);
        let nw = nodewise_from_design(x.view(), &NodewiseLambdas::Shared(0.1), &NodewiseOptions::default()).unwrap();
        for j in 0..5 {
            assert!((nw.tau_sq[j] - 1.0).abs() < 1e-12);
            for k in 0..5 {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((nw.theta[[j, k]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_and_diagonal_matrix_inputs() {
        let id = Array2::<f64>::eye(4);
        let nw = nodewise_from_matrix(id.view(), &NodewiseLambdas::Shared(0.1), &NodewiseOptions::default()).unwrap();
        assert_eq!(nw.theta, Array2::<f64>::eye(4));
        assert!(nw.tau_tilde_sq.is_none());

        let d = Array2::from_diag(&ndarray::array![2.0, 0.5, 4.0]);
        let nw = nodewise_from_matrix(d.view(), &NodewiseLambdas::Shared(0.1), &NodewiseOptions::default()).unwrap();
        let want = Array2::from_diag(&ndarray::array![0.5, 2.0, 0.25]);
        for (a, b) in nw.theta.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_of_theta_is_inverse_tau() {
        let mut rng = RngStream::new(12);
        let x = Array2::from_shape_simple_fn((40, 15), || rng.standard_normal());
        let nw = nodewise_from_design(x.view(), &NodewiseLambdas::Shared(0.15), &NodewiseOptions::default()).unwrap();
        for j in 0..15 {
            assert_eq!(nw.theta[[j, j]], 1.0 / nw.tau_sq[j]);
        }
    }

    #[test]
    fn collinear_column_is_degenerate() {
        let mut rng = RngStream::new(4);
        let mut x = Array2::from_shape_simple_fn((30, 4), || rng.standard_normal());
        let c0 = x.column(0).to_owned();
        x.column_mut(3).assign(&c0);
        // With a tiny penalty, column 3 is reproduced exactly by column 0.
        let r = nodewise_from_design(x.view(), &NodewiseLambdas::Shared(1e-13), &NodewiseOptions::default());
        assert!(matches!(r, Err(Error::DegenerateNode { .. }) | Err(Error::Nodewise { .. })), "{r:?}");
    }

    #[test]
    fn rejects_bad_penalties() {
        let x = walsh(16, 3);
        assert!(nodewise_from_design(x.view(), &NodewiseLambdas::Shared(0.0), &NodewiseOptions::default()).is_err());
        assert!(nodewise_from_design(x.view(), &NodewiseLambdas::PerRow(vec![0.1; 2]), &NodewiseOptions::default()).is_err());
    }

    #[test]
    fn matrix_input_requires_positive_diagonal() {
        let s = ndarray::array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            nodewise_from_matrix(s.view(), &NodewiseLambdas::Shared(0.1), &NodewiseOptions::default()),
            Err(Error::Domain(_))
        ));
    }
}
