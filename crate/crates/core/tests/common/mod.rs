#![allow(dead_code)]

use hdinfer::glm::{logistic_family, LossFamily};
use hdinfer::numerics::RngStream;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub fn gaussian_design(rng: &mut RngStream, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, p), || rng.standard_normal())
}

/// Columns scaled to `‖X_j‖²/n = 1` and mutually orthogonal.
pub fn orthonormal_design(n: usize, p: usize) -> Array2<f64> {
    assert!(p <= n && n.is_power_of_two());
    // Rows of a Sylvester–Hadamard matrix.
    Array2::from_shape_fn((n, p), |(i, j)| if (i & (j + 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

pub fn lasso_objective(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let rss: f64 = (0..x.nrows())
        .map(|i| {
            let fit: f64 = beta.iter().enumerate().map(|(j, b)| x[[i, j]] * b).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    rss / n + 2.0 * lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

pub fn logistic_objective(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: &[f64], lambda: f64) -> f64 {
    let fam = logistic_family();
    let n = x.nrows() as f64;
    let loss: f64 = (0..x.nrows())
        .map(|i| {
            let a: f64 = beta.iter().enumerate().map(|(j, b)| x[[i, j]] * b).sum();
            fam.rho(y[i], a)
        })
        .sum();
    loss / n + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Brute-force minimizer of a convex function on `[-bound, bound]^p`:
/// exhaustive search on a lattice, then repeated zooming around the best
/// lattice point.
pub fn grid_minimize<F: Fn(&[f64]) -> f64>(f: F, p: usize, bound: f64, points: usize, tol: f64) -> Vec<f64> {
    let mut center = vec![0.0; p];
    let mut half = bound;
    let mut idx = vec![0usize; p];
    let mut probe = vec![0.0; p];
    while half > tol {
        let step = 2.0 * half / (points - 1) as f64;
        let mut best = (f64::INFINITY, center.clone());
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            for k in 0..p {
                probe[k] = center[k] - half + step * idx[k] as f64;
            }
            let v = f(&probe);
            if v < best.0 {
                best = (v, probe.clone());
            }
            let mut k = 0;
            while k < p {
                idx[k] += 1;
                if idx[k] < points {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == p {
                break;
            }
        }
        center = best.1;
        half = (4.0 * step).min(half * 0.5);
    }
    center
}

/// `Φ` from the positive-term series
/// `erf(z) = 2/√π · e^{−z²} Σ_k 2^k z^{2k+1} / (1·3·…·(2k+1))`.
pub fn series_normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let mut term = z;
    let mut sum = z;
    let mut k = 0.0;
    while term > 1e-18 * sum {
        k += 1.0;
        term *= 2.0 * z * z / (2.0 * k + 1.0);
        sum += term;
    }
    let erf = 2.0 / std::f64::consts::PI.sqrt() * (-z * z).exp() * sum;
    0.5 + 0.5 * erf.copysign(x)
}

/// `Φ⁻¹` by bisection on [`series_normal_cdf`].
pub fn series_normal_quantile(q: f64) -> f64 {
    let (mut lo, mut hi) = (-8.0, 8.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if series_normal_cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn sup(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Linear response `Xβ + ε` with standard Gaussian noise.
pub fn linear_response(rng: &mut RngStream, x: ArrayView2<f64>, beta: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    let eps = rng.normals(x.nrows());
    (x.dot(beta) + &eps, eps)
}

/// Largest coordinate gap between the coordinate-descent Lasso and the
/// brute-force minimizer on one seeded instance with `p ≤ 3`, `n ≤ 20`.
pub fn lasso_oracle_gap(seed: u64) -> f64 {
    use hdinfer::lasso::{fit_lasso, lambda_max, LassoOptions};
    let mut rng = RngStream::new(seed);
    let p = 1 + rng.below(3);
    let n = 5 + rng.below(16);
    let x = gaussian_design(&mut rng, n, p);
    let beta = Array1::from_shape_fn(p, |_| if rng.uniform() < 0.3 { 0.0 } else { 2.0 * rng.standard_normal() });
    let (y, _) = linear_response(&mut rng, x.view(), &beta);
    let lambda = lambda_max(x.view(), y.view(), false) * (0.05 + 0.9 * rng.uniform());
    let fit = fit_lasso(x.view(), y.view(), lambda, &LassoOptions::default()).expect("lasso converges");
    let bound = y.dot(&y) / (n as f64 * 2.0 * lambda);
    let oracle = grid_minimize(|b| lasso_objective(x.view(), y.view(), b, lambda), p, bound, 21, 1e-6);
    max_abs_diff(fit.beta.view(), Array1::from(oracle).view())
}

/// As [`lasso_oracle_gap`] for an `n = 40`, `p = 2` logistic toy without intercept.
pub fn logistic_oracle_gap(seed: u64) -> f64 {
    use hdinfer::glm::{fit_glm_lasso, sigmoid, GlmOptions};
    let mut rng = RngStream::new(seed);
    let (n, p) = (40, 2);
    let x = gaussian_design(&mut rng, n, p);
    let beta = Array1::from_shape_fn(p, |_| 1.5 * rng.standard_normal());
    let eta = x.dot(&beta);
    let y = eta.mapv(|a| if rng.uniform() < sigmoid(a) { 1.0 } else { 0.0 });
    let fam = logistic_family();
    let grad0 = x.t().dot(&y.mapv(|v| 0.5 - v)) / n as f64;
    let lambda = sup(grad0.view()) * (0.1 + 0.8 * rng.uniform());
    let opts = GlmOptions { intercept: false, ..GlmOptions::default() };
    let fit = fit_glm_lasso(x.view(), y.view(), &fam, lambda, &opts).expect("logistic lasso converges");
    let bound = std::f64::consts::LN_2 / lambda;
    let oracle = grid_minimize(|b| logistic_objective(x.view(), y.view(), b, lambda), p, bound, 41, 1e-6);
    max_abs_diff(fit.beta.view(), Array1::from(oracle).view())
}
