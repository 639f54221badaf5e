//! Python bindings. Matrices are lists of rows, vectors are lists of floats.

use std::path::PathBuf;

use hdinfer::inference::CoordinateInference;
use hdinfer::lasso::{fit_lasso, fit_scaled_lasso, LassoFit, LassoOptions};
use hdinfer::multiplicity::holm_adjust;
use hdinfer::pipeline::{self, LambdaPolicy, ModelFamily};
use hdinfer::simbench::{self, PipelineOptions};
use hdinfer::Error;
use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

/// Row-major matrix from equal-length rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> hdinfer::Result<Array2<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(Error::DimensionMismatch("design matrix is empty".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(Error::DimensionMismatch(format!("row {i} has {} entries, expected {p}", r.len())));
    }
    Ok(Array2::from_shape_fn((n, p), |(i, j)| rows[i][j]))
}

pub fn rows_from_matrix(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// Accepts `"cv"`, `"scaled"` or a positive number.
pub fn parse_policy(text: &str) -> hdinfer::Result<LambdaPolicy> {
    text.parse()
}

fn to_py(e: Error) -> PyErr {
    if e.is_solver_failure() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn design(x: &[Vec<f64>], y: &[f64]) -> PyResult<(Array2<f64>, Array1<f64>)> {
    let x = matrix_from_rows(x).map_err(to_py)?;
    if y.len() != x.nrows() {
        return Err(PyValueError::new_err(format!("y has {} entries, x has {} rows", y.len(), x.nrows())));
    }
    Ok((x, Array1::from(y.to_vec())))
}

fn policy(lam: Option<&Bound<'_, PyAny>>) -> PyResult<Option<LambdaPolicy>> {
    let Some(v) = lam else { return Ok(None) };
    let text = match v.extract::<f64>() {
        Ok(f) => f.to_string(),
        Err(_) => v.extract::<String>()?,
    };
    parse_policy(&text).map(Some).map_err(to_py)
}

fn lasso_dict<'py>(py: Python<'py>, fit: &LassoFit) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("beta", fit.beta.to_vec())?;
    d.set_item("lambda", fit.lambda)?;
    d.set_item("objective", fit.objective)?;
    d.set_item("kkt_gap", fit.kkt_gap)?;
    d.set_item("active_set", fit.active_set.clone())?;
    Ok(d)
}

/// Lasso at a fixed penalty: `‖y − Xβ‖²/n + 2λ‖β‖₁`.
#[pyfunction]
fn lasso<'py>(py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<f64>, lam: f64) -> PyResult<Bound<'py, PyDict>> {
    let (x, y) = design(&x, &y)?;
    let fit = fit_lasso(x.view(), y.view(), lam, &LassoOptions::default()).map_err(to_py)?;
    lasso_dict(py, &fit)
}

/// Scaled Lasso: joint estimate of `β` and the noise level.
#[pyfunction]
#[pyo3(signature = (x, y, lambda0=None))]
fn scaled_lasso<'py>(py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<f64>, lambda0: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let (x, y) = design(&x, &y)?;
    let s = fit_scaled_lasso(x.view(), y.view(), lambda0, &LassoOptions::default()).map_err(to_py)?;
    let d = lasso_dict(py, &s.fit)?;
    d.set_item("sigma_hat", s.sigma_hat)?;
    d.set_item("lambda0", s.lambda0)?;
    Ok(d)
}

/// Coordinate-wise inference: estimates, standard errors, p-values,
/// confidence intervals and Holm-adjusted p-values.
#[pyfunction]
#[pyo3(signature = (x, y, family="linear", lam=None, alpha=0.05, seed=1))]
fn infer<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    family: &str,
    lam: Option<&Bound<'py, PyAny>>,
    alpha: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let (x, y) = design(&x, &y)?;
    let family: ModelFamily = family.parse().map_err(to_py)?;
    let r = pipeline::infer(x.view(), y.view(), family, policy(lam)?, seed).map_err(to_py)?;
    let cis = r.ci_all(alpha).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("family", r.family.name())?;
    d.set_item("b", r.b.to_vec())?;
    d.set_item("se", r.se.to_vec())?;
    d.set_item("z", r.z_scores().to_vec())?;
    d.set_item("p", r.pvalues.to_vec())?;
    d.set_item("ci_low", cis.iter().map(|c| c.0).collect::<Vec<_>>())?;
    d.set_item("ci_high", cis.iter().map(|c| c.1).collect::<Vec<_>>())?;
    d.set_item("p_holm", r.holm.adjusted.to_vec())?;
    d.set_item("reject", r.holm.rejections(alpha))?;
    d.set_item("lambda", r.lambda)?;
    d.set_item("sigma_hat", r.sigma_hat)?;
    d.set_item("lambda_x", r.lambda_x)?;
    Ok(d)
}

/// Nodewise relaxed inverse `Θ̂` with its diagnostics.
#[pyfunction]
#[pyo3(signature = (x, y=None, family="linear", lam=None, seed=1))]
fn nodewise<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Option<Vec<f64>>,
    family: &str,
    lam: Option<&Bound<'py, PyAny>>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let x = matrix_from_rows(&x).map_err(to_py)?;
    let y = y.map(Array1::from);
    let family: ModelFamily = family.parse().map_err(to_py)?;
    let policy = policy(lam)?.unwrap_or(LambdaPolicy::Cv);
    let t = pipeline::nodewise_precision(x.view(), y.as_ref().map(|v| v.view()), family, policy, seed).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("theta", rows_from_matrix(&t.theta))?;
    d.set_item("tau_sq", t.tau_sq.to_vec())?;
    d.set_item("lambdas", t.lambdas.to_vec())?;
    d.set_item("kkt_bounds", t.kkt_bounds.to_vec())?;
    Ok(d)
}

/// Holm step-down adjusted p-values.
#[pyfunction]
fn holm(pvalues: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(holm_adjust(&pvalues).map_err(to_py)?.adjusted.to_vec())
}

/// Runs every scenario of a TOML file; one metrics dict per scenario.
#[pyfunction]
#[pyo3(signature = (scenario, small=false, seed=None))]
fn simulate<'py>(py: Python<'py>, scenario: PathBuf, small: bool, seed: Option<u64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let file = simbench::read_scenarios(&scenario).map_err(to_py)?;
    let scenarios: Vec<_> = file
        .scenarios
        .into_iter()
        .map(|mut sc| {
            if let Some(s) = seed {
                sc.seed = s;
            }
            if small {
                sc = sc.small();
            }
            sc
        })
        .collect();
    let runs = simbench::run_scenarios(&scenarios, &PipelineOptions::default()).map_err(to_py)?;
    runs.iter()
        .map(|run| {
            let r = &run.report;
            let d = PyDict::new(py);
            d.set_item("name", &run.scenario.name)?;
            d.set_item("reps", r.reps)?;
            d.set_item("avgcov_S0", r.avgcov_s0)?;
            d.set_item("avglen_S0", r.avglen_s0)?;
            d.set_item("avgcov_S0c", r.avgcov_s0c)?;
            d.set_item("avglen_S0c", r.avglen_s0c)?;
            d.set_item("power", r.power)?;
            d.set_item("fwer", r.fwer)?;
            d.set_item("lambda_x", run.lambda_x)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn hdinfer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(lasso, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_lasso, m)?)?;
    m.add_function(wrap_pyfunction!(infer, m)?)?;
    m.add_function(wrap_pyfunction!(nodewise, m)?)?;
    m.add_function(wrap_pyfunction!(holm, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
