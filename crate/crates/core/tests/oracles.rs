mod common;

use approx::assert_abs_diff_eq;
use common::*;
use hdinfer::glm::{logistic_family, LossFamily};
use hdinfer::inference::{confidence_interval, desparsify};
use hdinfer::lasso::{fit_lasso, fit_scaled_lasso, LassoOptions};
use hdinfer::multiplicity::{holm_adjust, max_stat_pvalue};
use hdinfer::nodewise::{nodewise_from_matrix, NodewiseLambdas, NodewiseOptions};
use hdinfer::numerics::{
    cholesky, sample_gaussian_vector, sample_scaled_t5, std_normal_cdf, std_normal_quantile, toeplitz, two_sided_pvalue,
    RngStream,
};
use ndarray::{array, Array1, Array2};

#[test]
fn lasso_agrees_with_brute_force_minimizer() {
    for seed in 0..100 {
        let gap = lasso_oracle_gap(seed);
        assert!(gap < 2e-3, "instance {seed}: gap {gap}");
    }
}

#[test]
fn logistic_lasso_agrees_with_brute_force_minimizer() {
    for seed in 0..20 {
        let gap = logistic_oracle_gap(1000 + seed);
        assert!(gap < 5e-3, "instance {seed}: gap {gap}");
    }
}

#[test]
fn quantile_matches_series_oracle() {
    for k in 1..200 {
        let q = k as f64 / 200.0;
        let z = std_normal_quantile(q).unwrap();
        assert_abs_diff_eq!(z, series_normal_quantile(q), epsilon = 1e-9);
        assert_abs_diff_eq!(std_normal_cdf(z), series_normal_cdf(z), epsilon = 1e-12);
    }
    for q in [1e-6, 1e-4, 0.999_9, 0.999_999] {
        let z = std_normal_quantile(q).unwrap();
        assert!((std_normal_cdf(z) - q).abs() < 1e-12 * q.max(1e-3), "q = {q}");
    }
}

fn unit_fit(n: usize, alpha: f64) -> f64 {
    let x = orthonormal_design(n, 2);
    let theta = nodewise_from_matrix(Array2::eye(2).view(), &NodewiseLambdas::Shared(0.1), &NodewiseOptions::default()).unwrap();
    let y = Array1::from_shape_fn(n, |i| (i % 3) as f64 - 1.0);
    let fit = fit_lasso(x.view(), y.view(), 10.0, &LassoOptions::default()).unwrap();
    let d = desparsify(x.view(), y.view(), &fit, &theta, 1.0).unwrap();
    assert_abs_diff_eq!(d.omega_diag[0], 1.0, epsilon = 1e-12);
    let (lo, hi) = confidence_interval(&d, 0, alpha).unwrap();
    assert_abs_diff_eq!(0.5 * (lo + hi), d.b[0], epsilon = 1e-12);
    0.5 * (hi - lo)
}

#[test]
fn interval_half_widths() {
    assert_abs_diff_eq!(unit_fit(128, 0.05) * (128f64 / 100.0).sqrt(), 0.19600, epsilon = 1e-4);
    let oracle = series_normal_quantile(0.84) / 10.0;
    assert_abs_diff_eq!(unit_fit(128, 0.32) * (128f64 / 100.0).sqrt(), oracle, epsilon = 1e-6);
    assert_abs_diff_eq!(oracle, 0.09945, epsilon = 1e-5);
}

#[test]
fn holm_hand_computation() {
    let a = holm_adjust(&[0.01, 0.04, 0.03]).unwrap();
    for (got, want) in a.adjusted.iter().zip([0.03, 0.06, 0.06]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
    }
    assert_eq!(holm_adjust(&[1.0; 4]).unwrap().adjusted, vec![1.0; 4]);
    assert_eq!(holm_adjust(&[0.2]).unwrap().adjusted, vec![0.2]);
}

#[test]
fn logistic_derivatives_match_finite_differences() {
    let fam = logistic_family();
    let h = 1e-5;
    for y in [0.0, 1.0] {
        for k in -40..=40 {
            let a = k as f64 * 0.25;
            let d1 = (fam.rho(y, a + h) - fam.rho(y, a - h)) / (2.0 * h);
            let d2 = (fam.rho_dot(y, a + h) - fam.rho_dot(y, a - h)) / (2.0 * h);
            assert!((d1 - fam.rho_dot(y, a)).abs() < 1e-8, "rho_dot at y={y}, a={a}");
            assert!((d2 - fam.rho_ddot(y, a)).abs() < 1e-8, "rho_ddot at y={y}, a={a}");
            assert!(fam.rho_ddot(y, a) >= 0.0);
        }
    }
    assert_eq!(fam.rho_ddot(0.0, 0.0), 0.25);
    assert_eq!(fam.rho_dot(1.0, 0.0), -0.5);
    assert_eq!(fam.rho_dot(0.0, 0.0), 0.5);
    assert!(fam.rho(1.0, 700.0).is_finite() && fam.rho(0.0, -700.0).is_finite());
}

/// Half-width of a 3σ binomial band around `p` at `draws` draws.
fn band(p: f64, draws: usize) -> f64 {
    3.0 * (p * (1.0 - p) / draws as f64).sqrt() + 1.0 / draws as f64
}

#[test]
fn max_stat_matches_chi_square_closed_forms() {
    let rng = RngStream::new(77);
    for obs in [0.5, 2.0, 3.84, 6.0] {
        let (_, p1, _) = max_stat_pvalue(array![[2.5]].view(), obs, 10_000, &rng).unwrap();
        let exact = two_sided_pvalue(obs.sqrt());
        assert!((p1 - exact).abs() < band(exact, 10_000), "|G|=1, obs {obs}: {p1} vs {exact}");
        let (_, p2, _) = max_stat_pvalue(Array2::eye(2).view(), obs, 10_000, &rng).unwrap();
        let exact = 1.0 - (2.0 * std_normal_cdf(obs.sqrt()) - 1.0).powi(2);
        assert!((p2 - exact).abs() < band(exact, 10_000), "|G|=2, obs {obs}: {p2} vs {exact}");
    }
    let (exceed, p0, _) = max_stat_pvalue(Array2::eye(3).view(), 0.0, 500, &rng).unwrap();
    assert_eq!((exceed, p0), (500, 1.0));
}

#[test]
fn scaled_t5_has_unit_variance() {
    let mut rng = RngStream::new(5);
    let v = sample_scaled_t5(&mut rng, 200_000);
    let mean = v.mean().unwrap();
    let var = v.mapv(|e| (e - mean).powi(2)).mean().unwrap();
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn gaussian_sampler_reproduces_covariance() {
    let sigma = toeplitz(4, 0.9);
    let l = cholesky(sigma.view()).unwrap();
    let mut rng = RngStream::new(6);
    let draws = 40_000;
    let mut acc = Array2::<f64>::zeros((4, 4));
    for _ in 0..draws {
        let z = sample_gaussian_vector(&mut rng, l.view()).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                acc[[a, b]] += z[a] * z[b];
            }
        }
    }
    acc /= draws as f64;
    for ((a, b), v) in acc.indexed_iter() {
        assert!((v - sigma[[a, b]]).abs() < 0.03, "entry ({a},{b}): {v} vs {}", sigma[[a, b]]);
    }
}

#[test]
fn scaled_lasso_noise_estimate_is_consistent() {
    let mut rng = RngStream::new(8);
    let (n, p) = (200, 300);
    let x = gaussian_design(&mut rng, n, p);
    let mut beta = Array1::zeros(p);
    beta[0] = 2.0;
    beta[1] = -1.0;
    let mut sigmas = Vec::new();
    for _ in 0..20 {
        let eps = rng.normals(n).mapv(|e| 1.5 * e);
        let y = x.dot(&beta) + &eps;
        sigmas.push(fit_scaled_lasso(x.view(), y.view(), None, &LassoOptions::default()).unwrap().sigma_hat);
    }
    let mean = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
    assert!((mean - 1.5).abs() < 0.15, "mean sigma_hat {mean}");
}
