//! De-sparsified Lasso for the linear model.
//!
//! ```text
//! b̂ = β̂ + Θ̂Xᵀ(Y − Xβ̂)/n
//! se_j = σ̂_ε √(Ω̂_jj / n),   Ω̂ = Θ̂Σ̂Θ̂ᵀ
//! ```

mod pivot;

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_table};
use crate::lasso::LassoFit;
use crate::nodewise::NodewisePrecision;
use crate::numerics::{check_finite, std_normal_cdf, std_normal_quantile, std_normal_sf, two_sided_pvalue};

pub use pivot::{pivot_decomposition, PivotDecomposition};

/// Alternative hypothesis for coordinate-wise tests of `β⁰_j = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Alternative {
    #[default]
    TwoSided,
    Greater,
    Less,
}

impl Alternative {
    pub fn pvalue(self, z: f64) -> f64 {
        match self {
            Alternative::TwoSided => two_sided_pvalue(z),
            Alternative::Greater => std_normal_sf(z),
            Alternative::Less => std_normal_cdf(z),
        }
    }
}

/// Estimates with standard errors, and everything that follows from them.
pub trait CoordinateInference {
    fn estimates(&self) -> &Array1<f64>;
    fn standard_errors(&self) -> &Array1<f64>;

    fn z_scores(&self) -> Array1<f64> {
        self.estimates() / self.standard_errors()
    }

    fn p_values(&self, alt: Alternative) -> Array1<f64> {
        self.z_scores().mapv(|z| alt.pvalue(z))
    }

    /// `Φ⁻¹(1 − α/2) · se_j`.
    fn half_width(&self, j: usize, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        Ok(std_normal_quantile(1.0 - alpha / 2.0)? * self.standard_errors()[j])
    }

    fn ci(&self, j: usize, alpha: f64) -> Result<(f64, f64)> {
        let p = self.estimates().len();
        if j >= p {
            return Err(Error::DimensionMismatch(format!("coordinate {j} out of range for p = {p}")));
        }
        let c = self.half_width(j, alpha)?;
        let b = self.estimates()[j];
        Ok((b - c, b + c))
    }

    fn ci_all(&self, alpha: f64) -> Result<Vec<(f64, f64)>> {
        check_alpha(alpha)?;
        let q = std_normal_quantile(1.0 - alpha / 2.0)?;
        Ok(self
            .estimates()
            .iter()
            .zip(self.standard_errors())
            .map(|(b, s)| (b - q * s, b + q * s))
            .collect())
    }

    /// One row per coordinate: `index,b,se,z,p,ci_low,ci_high`, with an
    /// extra trailing `family` column when given.
    fn write_csv(&self, path: &Path, alpha: f64, family: Option<&str>) -> Result<()> {
        let z = self.z_scores();
        let pv = z.mapv(two_sided_pvalue);
        let cis = self.ci_all(alpha)?;
        let mut header = vec!["index", "b", "se", "z", "p", "ci_low", "ci_high"];
        if family.is_some() {
            header.push("family");
        }
        let rows: Vec<Vec<String>> = (0..z.len())
            .map(|j| {
                let mut r = vec![
                    j.to_string(),
                    fmt_f64(self.estimates()[j]),
                    fmt_f64(self.standard_errors()[j]),
                    fmt_f64(z[j]),
                    fmt_f64(pv[j]),
                    fmt_f64(cis[j].0),
                    fmt_f64(cis[j].1),
                ];
                if let Some(f) = family {
                    r.push(f.to_string());
                }
                r
            })
            .collect();
        write_table(path, &header, &rows)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// De-sparsified estimate with studentization.
#[derive(Clone, Debug)]
pub struct DesparsifiedFit {
    pub b: Array1<f64>,
    pub se: Array1<f64>,
    /// `(Θ̂Σ̂Θ̂ᵀ)_jj`.
    pub omega_diag: Array1<f64>,
    pub sigma_eps: f64,
    pub zscores: Array1<f64>,
    /// Two-sided.
    pub pvalues: Array1<f64>,
    pub n: usize,
    /// `max_j |Ω̂_jj − τ̃_j²/τ̂_j⁴|` when `Θ̂` came from the same design.
    pub omega_identity_gap: Option<f64>,
}

impl CoordinateInference for DesparsifiedFit {
    fn estimates(&self) -> &Array1<f64> {
        &self.b
    }

    fn standard_errors(&self) -> &Array1<f64> {
        &self.se
    }
}

/// `XΘ̂ᵀ`, the `n × p` matrix whose column `j` is `XΘ̂_j`.
fn design_times_theta(x: ArrayView2<f64>, theta: &NodewisePrecision) -> Result<Array2<f64>> {
    if theta.p() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "precision matrix is {}x{0}, design has {} columns",
            theta.p(),
            x.ncols()
        )));
    }
    Ok(x.dot(&theta.theta.t()))
}

/// Full `Ω̂ = Θ̂Σ̂Θ̂ᵀ`.
pub fn omega_full(x: ArrayView2<f64>, theta: &NodewisePrecision) -> Result<Array2<f64>> {
    let xt = design_times_theta(x, theta)?;
    Ok(xt.t().dot(&xt) / x.nrows() as f64)
}

/// `Ω̂` restricted to rows and columns in `group`.
pub fn omega_block(x: ArrayView2<f64>, theta: &NodewisePrecision, group: &[usize]) -> Result<Array2<f64>> {
    let p = theta.p();
    if let Some(j) = group.iter().find(|&&j| j >= p) {
        return Err(Error::DimensionMismatch(format!("group index {j} out of range for p = {p}")));
    }
    let rows = theta.theta.select(Axis(0), group);
    let xt = x.dot(&rows.t());
    Ok(xt.t().dot(&xt) / x.nrows() as f64)
}

/// Per-design state of the linear pipeline: `Θ̂` and the diagonal of `Ω̂`.
/// Build once per design, then apply to any number of responses.
#[derive(Clone, Debug)]
pub struct Desparsifier<'a> {
    x: ArrayView2<'a, f64>,
    theta: &'a NodewisePrecision,
    omega_diag: Array1<f64>,
    omega_identity_gap: Option<f64>,
}

impl<'a> Desparsifier<'a> {
    pub fn new(x: ArrayView2<'a, f64>, theta: &'a NodewisePrecision) -> Result<Self> {
        let n = x.nrows() as f64;
        let xt = design_times_theta(x, theta)?;
        let omega_diag = xt.map_axis(Axis(0), |c| c.dot(&c) / n);
        check_finite(omega_diag.iter(), "omega diagonal")?;
        let omega_identity_gap = theta.omega_diag_from_tau().map(|o| {
            o.iter()
                .zip(&omega_diag)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
        Ok(Self { x, theta, omega_diag, omega_identity_gap })
    }

    pub fn omega_diag(&self) -> &Array1<f64> {
        &self.omega_diag
    }

    /// `b̂ = β̂ + Θ̂Xᵀ(Y − Xβ̂)/n`.
    pub fn debias(&self, y: ArrayView1<f64>, fit: &LassoFit) -> Result<Array1<f64>> {
        let (n, p) = self.x.dim();
        if y.len() != n || fit.beta.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "design {n}x{p}, response {}, coefficients {}",
                y.len(),
                fit.beta.len()
            )));
        }
        let r = fit.residual(self.x, y);
        let score = self.x.t().dot(&r) / n as f64;
        let b = &fit.beta + &self.theta.theta.dot(&score);
        check_finite(b.iter(), "de-sparsified estimate")?;
        Ok(b)
    }

    pub fn apply(&self, y: ArrayView1<f64>, fit: &LassoFit, sigma_eps: f64) -> Result<DesparsifiedFit> {
        if !(sigma_eps > 0.0 && sigma_eps.is_finite()) {
            return Err(Error::Domain(format!("noise level must be positive, got {sigma_eps}")));
        }
        let b = self.debias(y, fit)?;
        let n = self.x.nrows();
        let se = self.omega_diag.mapv(|o| sigma_eps * (o / n as f64).sqrt());
        let zscores = &b / &se;
        check_finite(zscores.iter(), "z-scores")?;
        let pvalues = zscores.mapv(two_sided_pvalue);
        Ok(DesparsifiedFit {
            b,
            se,
            omega_diag: self.omega_diag.clone(),
            sigma_eps,
            zscores,
            pvalues,
            n,
            omega_identity_gap: self.omega_identity_gap,
        })
    }
}

/// De-sparsify a Lasso fit.
pub fn desparsify(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    fit: &LassoFit,
    theta: &NodewisePrecision,
    sigma_eps: f64,
) -> Result<DesparsifiedFit> {
    Desparsifier::new(x.view(), theta)?.apply(y, fit, sigma_eps)
}

/// `[b_j − c, b_j + c]` with `c = Φ⁻¹(1 − α/2) σ̂_ε √(Ω̂_jj/n)`.
pub fn confidence_interval(fit: &DesparsifiedFit, j: usize, alpha: f64) -> Result<(f64, f64)> {
    fit.ci(j, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::{fit_lasso, LassoOptions};
    use crate::nodewise::{nodewise_from_design, NodewiseLambdas, NodewiseOptions};
    use ndarray::array;

    fn walsh(n: usize, p: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, p), |(i, j)| if (i >> j) & 1 == 0 { 1.0 } else { -1.0 })
    }

    #[test]
    fn orthonormal_debiasing_cancels_shrinkage() {
        let x = walsh(16, 4);
        let y = array![1.0, -0.5, 2.0, 0.3, -1.2, 0.8, 0.1, 0.0, 1.5, -2.0, 0.4, 0.9, -0.3, 0.6, 1.1, -0.7];
        let fit = fit_lasso(x.view(), y.view(), 0.2, &LassoOptions::default()).unwrap();
        let nw = nodewise_from_design(x.view(), &NodewiseLambdas::Shared(0.3), &NodewiseOptions::default()).unwrap();
        let d = desparsify(x.view(), y.view(), &fit, &nw, 1.0).unwrap();
        let z = x.t().dot(&y) / 16.0;
        for j in 0..4 {
            assert!((d.b[j] - z[j]).abs() < 1e-12);
            assert!((d.omega_diag[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn half_width_matches_quantile() {
        let d = DesparsifiedFit {
            b: array![0.0],
            se: array![0.1],
            omega_diag: array![1.0],
            sigma_eps: 1.0,
            zscores: array![0.0],
            pvalues: array![1.0],
            n: 100,
            omega_identity_gap: None,
        };
        assert!((d.half_width(0, 0.05).unwrap() - 0.195_996_4).abs() < 1e-6);
        assert!(d.ci(0, 0.0).is_err());
        assert!(d.ci(1, 0.05).is_err());
        assert!(confidence_interval(&d, 0, 0.01).unwrap().0 < d.ci(0, 0.05).unwrap().0);
    }

    #[test]
    fn one_sided_pvalues_split_the_two_sided_one() {
        for z in [-2.5, -0.3, 0.0, 1.7] {
            let two = Alternative::TwoSided.pvalue(z);
            let lo = Alternative::Less.pvalue(z);
            let hi = Alternative::Greater.pvalue(z);
            assert!((lo + hi - 1.0).abs() < 1e-12);
            assert!((2.0 * lo.min(hi) - two).abs() < 1e-12);
        }
    }
}
