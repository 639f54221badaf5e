//! End-to-end inference on a data set: initial fit, nodewise `Θ̂`,
//! de-sparsified estimates and Holm-adjusted p-values.

use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::glm::{desparsify_glm, fit_glm_lasso, fit_glm_lasso_cv, glm_nodewise, glm_nodewise_cv, logistic_family, GlmFit, GlmOptions};
use crate::inference::{desparsify, CoordinateInference};
use crate::lasso::{fit_lasso, fit_lasso_cv, fit_scaled_lasso, LassoFit, LassoOptions};
use crate::multiplicity::{holm_adjust, AdjustedPvalues};
use crate::nodewise::{nodewise_from_design, nodewise_shared_lambda_cv, NodewiseLambdas, NodewiseOptions, NodewisePrecision};
use crate::numerics::RngStream;

pub const CV_FOLDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelFamily {
    Linear,
    Logistic,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Logistic => "logistic",
        }
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelFamily::Linear),
            "logistic" => Ok(ModelFamily::Logistic),
            other => Err(Error::Config(format!("unknown family {other:?} (expected linear or logistic)"))),
        }
    }
}

/// How the penalty of the initial fit is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaPolicy {
    Cv,
    /// Scaled Lasso (linear family only).
    Scaled,
    Fixed(f64),
}

impl LambdaPolicy {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Linear => LambdaPolicy::Scaled,
            ModelFamily::Logistic => LambdaPolicy::Cv,
        }
    }
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" => Ok(LambdaPolicy::Cv),
            "scaled" => Ok(LambdaPolicy::Scaled),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(LambdaPolicy::Fixed(v)),
                _ => Err(Error::Config(format!("expected cv, scaled or a positive number, got {other:?}"))),
            },
        }
    }
}

/// Coordinate-wise inference for one data set.
#[derive(Clone, Debug)]
pub struct InferenceReport {
    pub family: ModelFamily,
    pub b: Array1<f64>,
    pub se: Array1<f64>,
    /// Two-sided.
    pub pvalues: Array1<f64>,
    pub holm: AdjustedPvalues,
    /// Penalty of the initial fit.
    pub lambda: f64,
    /// Noise level used for studentization (linear family).
    pub sigma_hat: Option<f64>,
    /// Shared nodewise penalty.
    pub lambda_x: f64,
}

impl CoordinateInference for InferenceReport {
    fn estimates(&self) -> &Array1<f64> {
        &self.b
    }

    fn standard_errors(&self) -> &Array1<f64> {
        &self.se
    }
}

/// `‖r‖/√(n − |Ŝ|)`.
fn residual_sigma(x: ArrayView2<f64>, y: ArrayView1<f64>, fit: &LassoFit) -> Result<f64> {
    let r = fit.residual(x, y);
    let df = x.nrows() as f64 - fit.active_set.len() as f64;
    let sigma = if df >= 1.0 { (r.dot(&r) / df).sqrt() } else { 0.0 };
    if !(sigma > 1e-8) {
        return Err(Error::DegenerateNoise { sigma });
    }
    Ok(sigma)
}

fn linear_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, policy: LambdaPolicy, rng: &mut RngStream) -> Result<(LassoFit, f64)> {
    let opts = LassoOptions::default();
    match policy {
        LambdaPolicy::Scaled => {
            let s = fit_scaled_lasso(x, y, None, &opts)?;
            Ok((s.fit, s.sigma_hat))
        }
        LambdaPolicy::Cv => {
            let cv = fit_lasso_cv(x, y, CV_FOLDS, None, rng, &opts)?;
            let sigma = residual_sigma(x, y, &cv.fit)?;
            Ok((cv.fit, sigma))
        }
        LambdaPolicy::Fixed(l) => {
            let fit = fit_lasso(x, y, l, &opts)?;
            let sigma = residual_sigma(x, y, &fit)?;
            Ok((fit, sigma))
        }
    }
}

fn logistic_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, policy: LambdaPolicy, rng: &mut RngStream) -> Result<GlmFit> {
    let fam = logistic_family();
    let opts = GlmOptions::default();
    match policy {
        LambdaPolicy::Cv => Ok(fit_glm_lasso_cv(x, y, &fam, CV_FOLDS, None, rng, &opts)?.fit),
        LambdaPolicy::Fixed(l) => fit_glm_lasso(x, y, &fam, l, &opts),
        LambdaPolicy::Scaled => Err(Error::Config("the scaled penalty applies to the linear family only".into())),
    }
}

/// Substream 0 of `seed` drives the initial fit, substream 1 the nodewise
/// cross-validation; `Θ̂` uses one CV-chosen penalty for every row.
pub fn infer(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: ModelFamily,
    policy: Option<LambdaPolicy>,
    seed: u64,
) -> Result<InferenceReport> {
    let policy = policy.unwrap_or(LambdaPolicy::default_for(family));
    let root = RngStream::new(seed);
    let mut fit_rng = root.substream(0);
    let mut nw_rng = root.substream(1);
    let nw = NodewiseOptions::default();
    let report = match family {
        ModelFamily::Linear => {
            let (fit, sigma) = linear_fit(x, y, policy, &mut fit_rng)?;
            let (theta, cv) = nodewise_shared_lambda_cv(x, CV_FOLDS, None, &mut nw_rng, &nw)?;
            let d = desparsify(x, y, &fit, &theta, sigma)?;
            InferenceReport {
                family,
                holm: holm_adjust(d.pvalues.as_slice().expect("contiguous"))?,
                b: d.b,
                se: d.se,
                pvalues: d.pvalues,
                lambda: fit.lambda,
                sigma_hat: Some(sigma),
                lambda_x: cv.lambda,
            }
        }
        ModelFamily::Logistic => {
            let fam = logistic_family();
            let fit = logistic_fit(x, y, policy, &mut fit_rng)?;
            let (theta, cv) = glm_nodewise_cv(x, y, &fit, &fam, CV_FOLDS, &mut nw_rng, &nw)?;
            let d = desparsify_glm(x, y, &fit, &fam, &theta, None)?;
            InferenceReport {
                family,
                holm: holm_adjust(d.pvalues.as_slice().expect("contiguous"))?,
                b: d.b,
                se: d.se,
                pvalues: d.pvalues,
                lambda: fit.lambda,
                sigma_hat: None,
                lambda_x: cv.lambda,
            }
        }
    };
    Ok(report)
}

/// The `Θ̂` that [`infer`] would use, for inspection. Logistic models need
/// the response for their weights; `Scaled` is not a nodewise policy.
pub fn nodewise_precision(
    x: ArrayView2<f64>,
    y: Option<ArrayView1<f64>>,
    family: ModelFamily,
    policy: LambdaPolicy,
    seed: u64,
) -> Result<NodewisePrecision> {
    let root = RngStream::new(seed);
    let nw = NodewiseOptions::default();
    match (family, policy) {
        (_, LambdaPolicy::Scaled) => Err(Error::Config("nodewise penalties are cv or a fixed value".into())),
        (ModelFamily::Linear, LambdaPolicy::Cv) => Ok(nodewise_shared_lambda_cv(x, CV_FOLDS, None, &mut root.substream(1), &nw)?.0),
        (ModelFamily::Linear, LambdaPolicy::Fixed(l)) => nodewise_from_design(x, &NodewiseLambdas::Shared(l), &nw),
        (ModelFamily::Logistic, policy) => {
            let y = y.ok_or_else(|| Error::Config("logistic weights need the response".into()))?;
            let fam = logistic_family();
            let fit = logistic_fit(x, y, LambdaPolicy::Cv, &mut root.substream(0))?;
            match policy {
                LambdaPolicy::Fixed(l) => glm_nodewise(x, y, &fit, &fam, &NodewiseLambdas::Shared(l), &nw),
                _ => Ok(glm_nodewise_cv(x, y, &fit, &fam, CV_FOLDS, &mut root.substream(1), &nw)?.0),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn parses_policies_and_families() {
        assert_eq!("cv".parse::<LambdaPolicy>().unwrap(), LambdaPolicy::Cv);
        assert_eq!("0.25".parse::<LambdaPolicy>().unwrap(), LambdaPolicy::Fixed(0.25));
        assert!("-1".parse::<LambdaPolicy>().is_err());
        assert_eq!("logistic".parse::<ModelFamily>().unwrap(), ModelFamily::Logistic);
        assert!("poisson".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn scaled_policy_is_linear_only() {
        let mut rng = RngStream::new(1);
        let x = Array2::from_shape_simple_fn((30, 4), || rng.standard_normal());
        let y = Array1::from_shape_fn(30, |i| (i % 2) as f64);
        assert!(infer(x.view(), y.view(), ModelFamily::Logistic, Some(LambdaPolicy::Scaled), 1).is_err());
        let r = infer(x.view(), y.view(), ModelFamily::Linear, None, 1).unwrap();
        assert_eq!(r.holm.adjusted.len(), 4);
        assert!(r.sigma_hat.unwrap() > 0.0);
    }
}
