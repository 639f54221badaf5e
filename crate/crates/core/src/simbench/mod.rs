//! Simulation harness: fixed Gaussian designs, replicated errors, and the
//! coverage, interval-length, power and familywise-error summaries of the
//! de-sparsified Lasso.
//!
//! Random streams per scenario seed: `0` design rows, `1` random support,
//! `2` coefficients, `3` nodewise cross-validation folds, `1000 + r`
//! replication `r` (its child `0` draws the response, child `1` the folds of
//! the logistic fit).

mod report;
mod scenario;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{desparsify_glm, fit_glm_lasso_cv, glm_nodewise, glm_nodewise_cv, logistic_family, sigmoid, GlmOptions};
use crate::inference::{pivot_decomposition, CoordinateInference, Desparsifier};
use crate::lasso::{LassoFit, LassoOptions, LassoSolver};
use crate::multiplicity::holm_adjust;
use crate::nodewise::{nodewise_shared_lambda_cv, NodewiseLambdas, NodewiseOptions, NodewisePrecision};
use crate::numerics::{cholesky, equicorrelation, sample_gaussian_vector, sample_scaled_t5, std_normal_quantile, toeplitz, RngStream};

pub use report::{write_manifest, write_reps_csv, write_table_csv, Manifest, MEASURES};
pub use scenario::{
    parse_scenarios, read_scenarios, Design, ErrorLaw, Family, ScenarioFile, SimulationScenario, Support, EQUICORR_RHO,
    SMALL_P, TOEPLITZ_RHO,
};

const DESIGN_STREAM: u64 = 0;
const SUPPORT_STREAM: u64 = 1;
const COEF_STREAM: u64 = 2;
const NODEWISE_STREAM: u64 = 3;
const REP_STREAM: u64 = 1000;

pub fn population_covariance(design: Design, p: usize) -> Array2<f64> {
    match design {
        Design::Toeplitz { rho } => toeplitz(p, rho),
        Design::EquiCorr { rho } => equicorrelation(p, rho),
    }
}

/// Fixed part of a scenario: design, true coefficients and their support.
#[derive(Clone, Debug)]
pub struct Instance {
    pub x: Array2<f64>,
    pub beta0: Array1<f64>,
    /// Sorted.
    pub support: Vec<usize>,
}

/// One replication's response; `eps` is known for the linear family.
#[derive(Clone, Debug)]
pub struct Response {
    pub y: Array1<f64>,
    pub eps: Option<Array1<f64>>,
}

pub fn generate_instance(sc: &SimulationScenario) -> Result<Instance> {
    sc.validate()?;
    let root = RngStream::new(sc.seed);
    let l = cholesky(population_covariance(sc.design, sc.p).view())?;
    let mut rows = root.substream(DESIGN_STREAM);
    let mut x = Array2::zeros((sc.n, sc.p));
    for mut row in x.rows_mut() {
        row.assign(&sample_gaussian_vector(&mut rows, l.view())?);
    }
    let mut support: Vec<usize> = match sc.support {
        Support::First => (0..sc.s0).collect(),
        Support::Random { seed } => RngStream::new(seed.unwrap_or(sc.seed)).substream(SUPPORT_STREAM).permutation(sc.p)[..sc.s0].to_vec(),
    };
    support.sort_unstable();
    let mut coefs = root.substream(COEF_STREAM);
    let mut beta0 = Array1::zeros(sc.p);
    for &j in &support {
        beta0[j] = sc.coef_max * coefs.uniform();
    }
    Ok(Instance { x, beta0, support })
}

impl Instance {
    /// Fresh errors (linear) or Bernoulli draws (logistic) for replication `rep`.
    pub fn response(&self, sc: &SimulationScenario, rep: usize) -> Response {
        let mut rng = RngStream::new(sc.seed).substream(REP_STREAM + rep as u64).substream(0);
        let eta = self.x.dot(&self.beta0);
        match sc.family {
            Family::Linear => {
                let eps = match sc.error {
                    ErrorLaw::Gaussian => rng.normals(sc.n),
                    ErrorLaw::T5 => sample_scaled_t5(&mut rng, sc.n),
                };
                Response { y: &eta + &eps, eps: Some(eps) }
            }
            Family::Logistic => {
                let y = eta.mapv(|a| f64::from(rng.uniform() < sigmoid(a)));
                Response { y, eps: None }
            }
        }
    }

    /// FNV-1a over the bit patterns of `X` and `β⁰`, as 16 hex digits.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.x.iter().chain(self.beta0.iter()) {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    fn probe(&self) -> Option<usize> {
        (0..self.beta0.len()).find(|j| self.support.binary_search(j).is_err())
    }
}

/// `‖Δ‖_∞` of the pivot decomposition; simulation only (needs `β⁰`, `ε`).
pub fn delta_diagnostic(
    inst: &Instance,
    y: ArrayView1<f64>,
    eps: ArrayView1<f64>,
    fit: &LassoFit,
    theta: &NodewisePrecision,
) -> Result<f64> {
    Ok(pivot_decomposition(inst.x.view(), y, fit, theta, inst.beta0.view(), eps)?.delta_sup())
}

/// Solver settings shared by every replication.
#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub lasso: LassoOptions,
    /// Scaled-Lasso `λ₀`; `None` uses `√(2 log p / n)`.
    pub lambda0: Option<f64>,
    pub glm: GlmOptions,
    pub nodewise: NodewiseOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            lasso: LassoOptions::default(),
            lambda0: None,
            glm: GlmOptions::default(),
            nodewise: NodewiseOptions::default(),
        }
    }
}

/// Per-replication outcomes. Rates are fractions within the replication,
/// so scenario metrics are plain means over replications.
#[derive(Clone, Debug, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    /// Scaled-Lasso noise estimate (linear family).
    pub sigma_hat: Option<f64>,
    /// Penalty of the initial fit.
    pub lambda: f64,
    pub cov_s0: f64,
    pub len_s0: f64,
    pub cov_s0c: f64,
    pub len_s0c: f64,
    /// Fraction of `S₀` rejected after Holm adjustment.
    pub power: f64,
    /// Holm rejections in `S₀ᶜ`.
    pub false_rejections: usize,
    pub delta_sup: Option<f64>,
    pub w_sup: Option<f64>,
    /// `max_j |√n(b̂_j − β⁰_j) − W_j − Δ_j|`.
    pub identity_gap: Option<f64>,
    /// z-score and p-value of the first coordinate outside `S₀`.
    pub probe_z: f64,
    pub probe_p: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub avgcov_s0: f64,
    pub avglen_s0: f64,
    pub avgcov_s0c: f64,
    pub avglen_s0c: f64,
    pub power: f64,
    /// Fraction of replications with at least one false rejection.
    pub fwer: f64,
    pub reps: usize,
    pub median_delta_sup: Option<f64>,
    pub median_w_sup: Option<f64>,
    pub median_sigma_hat: Option<f64>,
}

fn median(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

impl MetricsReport {
    pub fn from_records(records: &[RepRecord]) -> Self {
        let k = records.len() as f64;
        let mean = |f: fn(&RepRecord) -> f64| records.iter().map(f).sum::<f64>() / k;
        Self {
            avgcov_s0: mean(|r| r.cov_s0),
            avglen_s0: mean(|r| r.len_s0),
            avgcov_s0c: mean(|r| r.cov_s0c),
            avglen_s0c: mean(|r| r.len_s0c),
            power: mean(|r| r.power),
            fwer: mean(|r| f64::from(u8::from(r.false_rejections > 0))),
            reps: records.len(),
            median_delta_sup: median(records.iter().map(|r| r.delta_sup)),
            median_w_sup: median(records.iter().map(|r| r.w_sup)),
            median_sigma_hat: median(records.iter().map(|r| r.sigma_hat)),
        }
    }

    pub fn measure(&self, name: &str) -> Option<f64> {
        Some(match name {
            "avgcov_S0" => self.avgcov_s0,
            "avglen_S0" => self.avglen_s0,
            "avgcov_S0c" => self.avgcov_s0c,
            "avglen_S0c" => self.avglen_s0c,
            "power" => self.power,
            "fwer" => self.fwer,
            _ => return None,
        })
    }
}

/// Outcome of one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub scenario: SimulationScenario,
    pub report: MetricsReport,
    pub records: Vec<RepRecord>,
    /// Shared nodewise penalty.
    pub lambda_x: f64,
    /// `Θ̂` came from an earlier scenario with the same design.
    pub theta_reused: bool,
    pub fingerprint: String,
    pub seconds: f64,
}

/// Linear-family `Θ̂` keyed by design realization.
#[derive(Default)]
pub struct ThetaCache {
    map: HashMap<(usize, usize, u64, u64, u64), Arc<(NodewisePrecision, f64)>>,
}

/// Coverage, lengths and Holm decisions of one replication.
fn summarize(
    inst: &Instance,
    inf: &dyn CoordinateInference,
    pvalues: &[f64],
    alpha: f64,
) -> Result<(f64, f64, f64, f64, f64, usize)> {
    let q = std_normal_quantile(1.0 - alpha / 2.0)?;
    let b = inf.estimates();
    let se = inf.standard_errors();
    let reject = holm_adjust(pvalues)?.rejections(alpha);
    let (mut cov, mut len, mut hits) = ([0.0f64; 2], [0.0f64; 2], 0.0f64);
    let mut false_rejections = 0;
    for j in 0..b.len() {
        // 0 for S₀, 1 for S₀ᶜ.
        let k = usize::from(inst.support.binary_search(&j).is_err());
        let c = q * se[j];
        if (b[j] - inst.beta0[j]).abs() <= c {
            cov[k] += 1.0;
        }
        len[k] += 2.0 * c;
        if reject[j] {
            if k == 0 {
                hits += 1.0;
            } else {
                false_rejections += 1;
            }
        }
    }
    let s0 = inst.support.len() as f64;
    let s0c = b.len() as f64 - s0;
    Ok((cov[0] / s0, len[0] / s0, cov[1] / s0c, len[1] / s0c, hits / s0, false_rejections))
}

fn probe_stats(inst: &Instance, z: &Array1<f64>, p: &Array1<f64>) -> (f64, f64) {
    inst.probe().map_or((f64::NAN, f64::NAN), |j| (z[j], p[j]))
}

fn linear_rep(
    sc: &SimulationScenario,
    inst: &Instance,
    solver: &LassoSolver,
    desp: &Desparsifier,
    theta: &NodewisePrecision,
    opts: &PipelineOptions,
    rep: usize,
) -> Result<RepRecord> {
    let resp = inst.response(sc, rep);
    let eps = resp.eps.as_ref().expect("linear responses carry their errors");
    let scaled = solver.fit_scaled(resp.y.view(), opts.lambda0)?;
    let sigma = if sc.known_sigma { 1.0 } else { scaled.sigma_hat };
    let d = desp.apply(resp.y.view(), &scaled.fit, sigma)?;
    let (cov_s0, len_s0, cov_s0c, len_s0c, power, false_rejections) =
        summarize(inst, &d, d.pvalues.as_slice().expect("contiguous"), sc.alpha)?;
    let piv = pivot_decomposition(inst.x.view(), resp.y.view(), &scaled.fit, theta, inst.beta0.view(), eps.view())?;
    let (probe_z, probe_p) = probe_stats(inst, &d.zscores, &d.pvalues);
    Ok(RepRecord {
        rep,
        sigma_hat: Some(scaled.sigma_hat),
        lambda: scaled.fit.lambda,
        cov_s0,
        len_s0,
        cov_s0c,
        len_s0c,
        power,
        false_rejections,
        delta_sup: Some(piv.delta_sup()),
        w_sup: Some(piv.w_sup()),
        identity_gap: Some(piv.identity_gap),
        probe_z,
        probe_p,
    })
}

fn run_linear(
    sc: &SimulationScenario,
    inst: &Instance,
    opts: &PipelineOptions,
    cache: &mut ThetaCache,
) -> Result<(Vec<RepRecord>, f64, bool)> {
    let key = sc.design_key();
    let reused = cache.map.contains_key(&key);
    let entry = match cache.map.get(&key) {
        Some(e) => Arc::clone(e),
        None => {
            let mut folds = RngStream::new(sc.seed).substream(NODEWISE_STREAM);
            let (theta, cv) = nodewise_shared_lambda_cv(inst.x.view(), sc.folds, None, &mut folds, &opts.nodewise)?;
            let e = Arc::new((theta, cv.lambda));
            cache.map.insert(key, Arc::clone(&e));
            e
        }
    };
    let (theta, lambda_x) = (&entry.0, entry.1);
    let desp = Desparsifier::new(inst.x.view(), theta)?;
    let solver = LassoSolver::new(inst.x.view(), opts.lasso.clone())?.with_gram();
    let records = (0..sc.reps)
        .into_par_iter()
        .map(|rep| {
            linear_rep(sc, inst, &solver, &desp, theta, opts, rep)
                .map_err(|e| Error::Replication { rep, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, lambda_x, reused))
}

fn run_logistic(sc: &SimulationScenario, inst: &Instance, opts: &PipelineOptions) -> Result<(Vec<RepRecord>, f64)> {
    let family = logistic_family();
    let x = inst.x.view();
    let glm = GlmOptions { intercept: false, ..opts.glm.clone() };
    let fit_rep = |rep: usize| -> Result<(Response, crate::glm::GlmCv)> {
        let resp = inst.response(sc, rep);
        let mut folds = RngStream::new(sc.seed).substream(REP_STREAM + rep as u64).substream(1);
        let cv = fit_glm_lasso_cv(x, resp.y.view(), &family, sc.folds, None, &mut folds, &glm)?;
        Ok((resp, cv))
    };
    // λ_X is chosen once, on the weighted design of the first replication.
    let (pilot, pilot_cv) = fit_rep(0).map_err(|e| Error::Replication { rep: 0, source: Box::new(e) })?;
    let mut folds = RngStream::new(sc.seed).substream(NODEWISE_STREAM);
    let (_, nw_cv) = glm_nodewise_cv(x, pilot.y.view(), &pilot_cv.fit, &family, sc.folds, &mut folds, &opts.nodewise)
        .map_err(|e| Error::Replication { rep: 0, source: Box::new(e) })?;
    let lambda_x = nw_cv.lambda;
    let records = (0..sc.reps)
        .into_par_iter()
        .map(|rep| {
            let run = || -> Result<RepRecord> {
                let (resp, cv) = fit_rep(rep)?;
                let theta = glm_nodewise(x, resp.y.view(), &cv.fit, &family, &NodewiseLambdas::Shared(lambda_x), &opts.nodewise)?;
                let d = desparsify_glm(x, resp.y.view(), &cv.fit, &family, &theta, None)?;
                let (cov_s0, len_s0, cov_s0c, len_s0c, power, false_rejections) =
                    summarize(inst, &d, d.pvalues.as_slice().expect("contiguous"), sc.alpha)?;
                let (probe_z, probe_p) = probe_stats(inst, &d.zscores, &d.pvalues);
                Ok(RepRecord {
                    rep,
                    sigma_hat: None,
                    lambda: cv.lambda,
                    cov_s0,
                    len_s0,
                    cov_s0c,
                    len_s0c,
                    power,
                    false_rejections,
                    delta_sup: None,
                    w_sup: None,
                    identity_gap: None,
                    probe_z,
                    probe_p,
                })
            };
            run().map_err(|e| Error::Replication { rep, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, lambda_x))
}

/// Runs every replication of `sc`, reusing linear-family `Θ̂` from `cache`
/// when an earlier scenario had the same design.
pub fn run_scenario_cached(sc: &SimulationScenario, opts: &PipelineOptions, cache: &mut ThetaCache) -> Result<ScenarioRun> {
    let start = Instant::now();
    let inst = generate_instance(sc)?;
    let (records, lambda_x, theta_reused) = match sc.family {
        Family::Linear => run_linear(sc, &inst, opts, cache)?,
        Family::Logistic => {
            let (r, l) = run_logistic(sc, &inst, opts)?;
            (r, l, false)
        }
    };
    Ok(ScenarioRun {
        scenario: sc.clone(),
        report: MetricsReport::from_records(&records),
        records,
        lambda_x,
        theta_reused,
        fingerprint: inst.fingerprint(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_scenario(sc: &SimulationScenario, opts: &PipelineOptions) -> Result<ScenarioRun> {
    run_scenario_cached(sc, opts, &mut ThetaCache::default())
}

/// Runs the scenarios in file order with one shared `Θ̂` cache.
pub fn run_scenarios(scenarios: &[SimulationScenario], opts: &PipelineOptions) -> Result<Vec<ScenarioRun>> {
    let mut cache = ThetaCache::default();
    scenarios.iter().map(|sc| run_scenario_cached(sc, opts, &mut cache)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(family: Family) -> SimulationScenario {
        SimulationScenario {
            name: "toy".into(),
            n: 40,
            p: 12,
            design: Design::Toeplitz { rho: 0.9 },
            s0: 3,
            support: Support::Random { seed: Some(5) },
            coef_max: 2.0,
            error: ErrorLaw::Gaussian,
            family,
            reps: 4,
            alpha: 0.05,
            seed: 11,
            known_sigma: false,
            folds: 5,
        }
    }

    #[test]
    fn population_covariances() {
        let t = population_covariance(Design::Toeplitz { rho: TOEPLITZ_RHO }, 4);
        assert_eq!(t[[0, 1]], 0.9);
        assert!((t[[0, 3]] - 0.729).abs() < 1e-15);
        let e = population_covariance(Design::EquiCorr { rho: EQUICORR_RHO }, 4);
        assert_eq!((e[[2, 2]], e[[0, 3]]), (1.0, 0.8));
    }

    #[test]
    fn instance_is_fixed_by_seed() {
        let sc = toy(Family::Linear);
        let a = generate_instance(&sc).unwrap();
        let b = generate_instance(&sc).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.support.len(), 3);
        assert!(a.support.iter().all(|&j| a.beta0[j] >= 0.0 && a.beta0[j] <= 2.0));
        let r = a.response(&sc, 2);
        let eps = r.eps.unwrap();
        let back = &r.y - &a.x.dot(&a.beta0);
        assert!(back.iter().zip(&eps).all(|(u, v)| (u - v).abs() < 1e-12));
        let first = generate_instance(&SimulationScenario { support: Support::First, ..sc }).unwrap();
        assert_eq!(first.support, vec![0, 1, 2]);
    }

    #[test]
    fn metrics_are_means_of_records() {
        let run = run_scenario(&toy(Family::Linear), &PipelineOptions::default()).unwrap();
        let k = run.records.len() as f64;
        let cov: f64 = run.records.iter().map(|r| r.cov_s0c).sum::<f64>() / k;
        assert!((cov - run.report.avgcov_s0c).abs() < 1e-12);
        assert!(run.records.iter().all(|r| r.identity_gap.unwrap() < 1e-8));
        for m in MEASURES {
            let v = run.report.measure(m).unwrap();
            assert!(v >= 0.0 && v.is_finite());
        }
    }

    #[test]
    fn cache_reuses_theta_for_same_design() {
        let a = toy(Family::Linear);
        let b = SimulationScenario { name: "b".into(), coef_max: 4.0, ..a.clone() };
        let runs = run_scenarios(&[a, b], &PipelineOptions::default()).unwrap();
        assert!(!runs[0].theta_reused && runs[1].theta_reused);
        assert_eq!(runs[0].lambda_x, runs[1].lambda_x);
    }

    #[test]
    fn logistic_runs() {
        let mut sc = toy(Family::Logistic);
        sc.n = 80;
        let run = run_scenario(&sc, &PipelineOptions::default()).unwrap();
        assert_eq!(run.records.len(), 4);
        assert!(run.records.iter().all(|r| r.sigma_hat.is_none()));
        assert!((0.0..=1.0).contains(&run.report.fwer));
    }
}
