//! Coordinate-descent kernel shared by every ℓ1 problem in the crate.
//!
//! Each problem is written as
//!
//! ```text
//! minimize  f(β) + Σ_k pen_k |β_k|
//! ```
//!
//! with `f` quadratic. The kernel only needs the curvature `∂²f/∂β_k²` and
//! the current partial gradient; both are supplied by a [`QuadraticOracle`],
//! which keeps whatever running state (residual, Gram gradient) makes those
//! queries cheap. `pen_k = ∞` pins a coordinate at zero.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub(crate) trait QuadraticOracle {
    fn dim(&self) -> usize;
    fn curvature(&self, k: usize) -> f64;
    fn gradient(&self, k: usize) -> f64;
    /// Record `β_k += delta`.
    fn shift(&mut self, k: usize, delta: f64);
    /// Value of the smooth part `f`, up to an additive constant.
    fn smooth_value(&self, beta: &[f64]) -> f64;
    /// Only coordinates in `active` are queried or shifted until [`Self::widen`].
    fn narrow(&mut self, _active: &[usize]) {}
    fn widen(&mut self) {}
    /// Row-major `Q_AA`, the Hessian of `f` restricted to `active`.
    fn active_hessian(&self, active: &[usize]) -> Vec<f64>;
}

// Active sets larger than this skip the Newton step.
const NEWTON_MAX_ACTIVE: usize = 400;

/// Solves `A x = b` in place for symmetric positive definite `A`
/// (row-major, `k × k`); `None` if a pivot is not safely positive.
fn spd_solve(a: &mut [f64], b: &mut [f64], k: usize) -> Option<()> {
    let scale = (0..k).map(|i| a[i * k + i]).fold(0.0f64, f64::max);
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            d -= a[j * k + m] * a[j * k + m];
        }
        if !(d > 1e-12 * scale) {
            return None;
        }
        let ljj = d.sqrt();
        a[j * k + j] = ljj;
        for i in (j + 1)..k {
            let mut acc = a[i * k + j];
            for m in 0..j {
                acc -= a[i * k + m] * a[j * k + m];
            }
            a[i * k + j] = acc / ljj;
        }
    }
    for i in 0..k {
        let mut acc = b[i];
        for m in 0..i {
            acc -= a[i * k + m] * b[m];
        }
        b[i] = acc / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut acc = b[i];
        for m in (i + 1)..k {
            acc -= a[m * k + i] * b[m];
        }
        b[i] = acc / a[i * k + i];
    }
    Some(())
}

/// Jump to the minimizer of the objective on the current sign pattern,
/// `β_A ← β_A − Q_AA⁻¹(g_A + pen_A∘sign β_A)`; kept only if every penalized
/// sign survives and the objective does not increase.
fn newton_step<O: QuadraticOracle>(oracle: &mut O, beta: &mut [f64], pen: &[f64], active: &[usize]) -> bool {
    let k = active.len();
    if k == 0 || k > NEWTON_MAX_ACTIVE {
        return false;
    }
    let mut h = oracle.active_hessian(active);
    let mut step: Vec<f64> = active
        .iter()
        .map(|&j| oracle.gradient(j) + pen[j] * beta[j].signum())
        .collect();
    if spd_solve(&mut h, &mut step, k).is_none() {
        return false;
    }
    let proposal: Vec<f64> = active.iter().zip(&step).map(|(&j, s)| beta[j] - s).collect();
    let flips = active
        .iter()
        .zip(&proposal)
        .any(|(&j, v)| pen[j] > 0.0 && !(v * beta[j] > 0.0));
    if flips || proposal.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let before = objective(oracle, beta, pen);
    let old: Vec<f64> = active.iter().map(|&j| beta[j]).collect();
    for (&j, v) in active.iter().zip(&proposal) {
        oracle.shift(j, v - beta[j]);
        beta[j] = *v;
    }
    if objective(oracle, beta, pen) > before {
        for (&j, v) in active.iter().zip(&old) {
            oracle.shift(j, v - beta[j]);
            beta[j] = *v;
        }
        return false;
    }
    true
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Stationarity violation of one coordinate given its partial gradient.
#[inline]
pub(crate) fn kkt_violation(grad: f64, beta: f64, pen: f64) -> f64 {
    if pen.is_infinite() {
        0.0
    } else if beta == 0.0 {
        (grad.abs() - pen).max(0.0)
    } else {
        (grad + pen * beta.signum()).abs()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct CdControl {
    pub tol_change: f64,
    pub tol_kkt: f64,
    pub max_sweeps: usize,
    pub trace: bool,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct CdOutcome {
    pub sweeps: usize,
    pub kkt_gap: f64,
    pub trace: Vec<f64>,
}

fn update<O: QuadraticOracle>(oracle: &mut O, beta: &mut [f64], pen: &[f64], k: usize) -> f64 {
    let old = beta[k];
    if pen[k].is_infinite() {
        if old != 0.0 {
            oracle.shift(k, -old);
            beta[k] = 0.0;
        }
        return old.abs();
    }
    let a = oracle.curvature(k);
    if a <= 0.0 {
        return 0.0;
    }
    let new = soft_threshold(a * old - oracle.gradient(k), pen[k]) / a;
    if new != old {
        oracle.shift(k, new - old);
        beta[k] = new;
    }
    (new - old).abs()
}

fn objective<O: QuadraticOracle>(oracle: &O, beta: &[f64], pen: &[f64]) -> f64 {
    let l1: f64 = beta
        .iter()
        .zip(pen)
        .filter(|(_, p)| p.is_finite())
        .map(|(b, p)| p * b.abs())
        .sum();
    oracle.smooth_value(beta) + l1
}

pub(crate) fn kkt_gap<O: QuadraticOracle>(oracle: &O, beta: &[f64], pen: &[f64]) -> f64 {
    (0..beta.len())
        .map(|k| kkt_violation(oracle.gradient(k), beta[k], pen[k]))
        .fold(0.0, f64::max)
}

/// Full sweep, then sweeps restricted to the active set until they settle,
/// then another full sweep to verify; stops once a full sweep moves no
/// coordinate by more than `tol_change` and the KKT gap is below `tol_kkt`.
pub(crate) fn coordinate_descent<O: QuadraticOracle>(
    oracle: &mut O,
    beta: &mut [f64],
    pen: &[f64],
    ctrl: &CdControl,
) -> Result<CdOutcome> {
    let p = oracle.dim();
    debug_assert_eq!(beta.len(), p);
    debug_assert_eq!(pen.len(), p);
    let mut out = CdOutcome::default();
    if ctrl.trace {
        out.trace.push(objective(oracle, beta, pen));
    }
    let mut active: Vec<usize> = Vec::with_capacity(p);
    loop {
        let mut max_change = 0.0f64;
        for k in 0..p {
            max_change = max_change.max(update(oracle, beta, pen, k));
        }
        out.sweeps += 1;
        if ctrl.trace {
            out.trace.push(objective(oracle, beta, pen));
        }
        let gap = kkt_gap(oracle, beta, pen);
        out.kkt_gap = gap;
        if max_change <= ctrl.tol_change && gap <= ctrl.tol_kkt {
            return Ok(out);
        }
        if out.sweeps >= ctrl.max_sweeps {
            return Err(Error::NotConverged { sweeps: out.sweeps, kkt_gap: gap });
        }

        active.clear();
        active.extend((0..p).filter(|&k| beta[k] != 0.0));
        newton_step(oracle, beta, pen, &active);
        oracle.narrow(&active);
        loop {
            let mut change = 0.0f64;
            for &k in &active {
                change = change.max(update(oracle, beta, pen, k));
            }
            out.sweeps += 1;
            if ctrl.trace {
                out.trace.push(objective(oracle, beta, pen));
            }
            if change <= ctrl.tol_change {
                break;
            }
            if out.sweeps >= ctrl.max_sweeps {
                oracle.widen();
                let gap = kkt_gap(oracle, beta, pen);
                return Err(Error::NotConverged { sweeps: out.sweeps, kkt_gap: gap });
            }
        }
        oracle.widen();
    }
}

/// Oracle for `f(β) = Σ_i w_i (z_i − x_i β)² / (2n)`, tracking the residual.
///
/// `cols` holds the design transposed (`p × n`, row `k` is column `k`).
pub(crate) struct DesignOracle<'a> {
    cols: ArrayView2<'a, f64>,
    weights: Option<&'a [f64]>,
    resid: Vec<f64>,
    curv: Vec<f64>,
    inv_n: f64,
}

impl<'a> DesignOracle<'a> {
    /// `resid` must equal `z − Xβ` at the starting `β`.
    pub fn new(cols: ArrayView2<'a, f64>, weights: Option<&'a [f64]>, resid: Vec<f64>) -> Self {
        let n = cols.ncols();
        let inv_n = 1.0 / n as f64;
        let curv = cols
            .rows()
            .into_iter()
            .map(|c| match weights {
                Some(w) => c.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>() * inv_n,
                None => c.iter().map(|x| x * x).sum::<f64>() * inv_n,
            })
            .collect();
        Self { cols, weights, resid, curv, inv_n }
    }
}

impl QuadraticOracle for DesignOracle<'_> {
    fn dim(&self) -> usize {
        self.cols.nrows()
    }

    fn curvature(&self, k: usize) -> f64 {
        self.curv[k]
    }

    fn gradient(&self, k: usize) -> f64 {
        let col = self.cols.row(k);
        let col = col.as_slice().expect("design columns are contiguous");
        let dot: f64 = match self.weights {
            Some(w) => col
                .iter()
                .zip(&self.resid)
                .zip(w)
                .map(|((x, r), w)| x * r * w)
                .sum(),
            None => col.iter().zip(&self.resid).map(|(x, r)| x * r).sum(),
        };
        -dot * self.inv_n
    }

    fn shift(&mut self, k: usize, delta: f64) {
        let col = self.cols.row(k);
        let col = col.as_slice().expect("design columns are contiguous");
        for (r, x) in self.resid.iter_mut().zip(col) {
            *r -= delta * x;
        }
    }

    fn active_hessian(&self, active: &[usize]) -> Vec<f64> {
        let k = active.len();
        let mut h = vec![0.0; k * k];
        for a in 0..k {
            let ca = self.cols.row(active[a]);
            for b in 0..=a {
                let cb = self.cols.row(active[b]);
                let v: f64 = match self.weights {
                    Some(w) => ca.iter().zip(cb.iter()).zip(w).map(|((x, y), w)| w * x * y).sum(),
                    None => ca.dot(&cb),
                };
                h[a * k + b] = v * self.inv_n;
                h[b * k + a] = v * self.inv_n;
            }
        }
        h
    }

    fn smooth_value(&self, _beta: &[f64]) -> f64 {
        let s: f64 = match self.weights {
            Some(w) => self.resid.iter().zip(w).map(|(r, w)| w * r * r).sum(),
            None => self.resid.iter().map(|r| r * r).sum(),
        };
        0.5 * s * self.inv_n
    }
}

/// Oracle for `f(β) = βᵀQβ/2 − cᵀβ`, tracking `g = Qβ − c`.
///
/// `q` must be symmetric with contiguous rows.
pub(crate) struct GramOracle<'a> {
    q: ArrayView2<'a, f64>,
    c: Vec<f64>,
    grad: Vec<f64>,
    /// While narrowed: the tracked coordinates, and the shifts not yet
    /// applied to the others.
    narrowed: Option<Vec<usize>>,
    pending: Vec<f64>,
    tracked: Vec<bool>,
}

impl<'a> GramOracle<'a> {
    pub fn new(q: ArrayView2<'a, f64>, c: Vec<f64>, beta: &[f64]) -> Self {
        let mut grad: Vec<f64> = c.iter().map(|v| -v).collect();
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (g, qk) in grad.iter_mut().zip(q.row(k)) {
                    *g += b * qk;
                }
            }
        }
        let p = grad.len();
        Self { q, c, grad, narrowed: None, pending: vec![0.0; p], tracked: vec![false; p] }
    }
}

impl QuadraticOracle for GramOracle<'_> {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn curvature(&self, k: usize) -> f64 {
        self.q[[k, k]]
    }

    fn gradient(&self, k: usize) -> f64 {
        self.grad[k]
    }

    fn shift(&mut self, k: usize, delta: f64) {
        let row = self.q.row(k);
        let row = row.as_slice().expect("gram rows are contiguous");
        match &self.narrowed {
            Some(active) => {
                for &i in active {
                    self.grad[i] += delta * row[i];
                }
                self.pending[k] += delta;
            }
            None => {
                for (g, qk) in self.grad.iter_mut().zip(row) {
                    *g += delta * qk;
                }
            }
        }
    }

    fn active_hessian(&self, active: &[usize]) -> Vec<f64> {
        let k = active.len();
        let mut h = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..=a {
                let v = self.q[[active[a], active[b]]];
                h[a * k + b] = v;
                h[b * k + a] = v;
            }
        }
        h
    }

    fn narrow(&mut self, active: &[usize]) {
        for &i in active {
            self.tracked[i] = true;
        }
        self.narrowed = Some(active.to_vec());
    }

    fn widen(&mut self) {
        let Some(active) = self.narrowed.take() else { return };
        for &k in &active {
            let d = std::mem::take(&mut self.pending[k]);
            if d != 0.0 {
                let row = self.q.row(k);
                for (i, (g, qk)) in self.grad.iter_mut().zip(row).enumerate() {
                    if !self.tracked[i] {
                        *g += d * qk;
                    }
                }
            }
        }
        for &i in &active {
            self.tracked[i] = false;
        }
    }

    fn smooth_value(&self, beta: &[f64]) -> f64 {
        // βᵀQβ = βᵀ(g + c); only nonzero β_k (all tracked) contribute.
        beta.iter()
            .zip(self.grad.iter().zip(&self.c))
            .map(|(b, (g, c))| 0.5 * b * (g - c))
            .sum()
    }
}
