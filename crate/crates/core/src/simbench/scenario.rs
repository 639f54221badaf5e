use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Table;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Design {
    /// `Σ_jk = ρ^|j−k|`.
    Toeplitz { rho: f64 },
    /// `Σ_jj = 1`, `Σ_jk = ρ` otherwise.
    EquiCorr { rho: f64 },
}

impl Design {
    pub fn rho(&self) -> f64 {
        match *self {
            Design::Toeplitz { rho } | Design::EquiCorr { rho } => rho,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Support {
    /// `{0, …, s0 − 1}`.
    First,
    /// `s0` draws without replacement, fixed by `seed` (the scenario seed
    /// when `None`).
    Random { seed: Option<u64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorLaw {
    Gaussian,
    /// Student t₅ scaled to unit variance.
    T5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
}

/// One column of a simulation table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationScenario {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub design: Design,
    pub s0: usize,
    pub support: Support,
    /// Coefficients on the support are i.i.d. `U[0, coef_max]`.
    pub coef_max: f64,
    pub error: ErrorLaw,
    pub family: Family,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Studentize with the true noise level (1) instead of the scaled-Lasso estimate.
    pub known_sigma: bool,
    pub folds: usize,
}

pub const TOEPLITZ_RHO: f64 = 0.9;
pub const EQUICORR_RHO: f64 = 0.8;

const KEYS: [&str; 16] = [
    "name", "n", "p", "design", "rho", "s0", "support", "support_seed", "coef_max", "error", "family", "reps",
    "alpha", "seed", "known_sigma", "folds",
];

/// Flat TOML form; enums are strings with side keys for their parameters.
#[derive(Deserialize)]
struct RawScenario {
    name: String,
    n: usize,
    p: usize,
    design: String,
    rho: Option<f64>,
    s0: usize,
    #[serde(default = "default_support")]
    support: String,
    support_seed: Option<u64>,
    coef_max: f64,
    #[serde(default = "default_error")]
    error: String,
    #[serde(default = "default_family")]
    family: String,
    #[serde(default = "default_reps")]
    reps: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    known_sigma: bool,
    #[serde(default = "default_folds")]
    folds: usize,
}

fn default_support() -> String {
    "first".into()
}
fn default_error() -> String {
    "gaussian".into()
}
fn default_family() -> String {
    "linear".into()
}
fn default_reps() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.05
}
fn default_folds() -> usize {
    10
}

impl RawScenario {
    fn resolve(self) -> Result<SimulationScenario> {
        let bad = |key: &str, v: &str| Error::Config(format!("scenario {:?}: unknown {key} {v:?}", self.name));
        let design = match self.design.as_str() {
            "toeplitz" => Design::Toeplitz { rho: self.rho.unwrap_or(TOEPLITZ_RHO) },
            "equicorr" => Design::EquiCorr { rho: self.rho.unwrap_or(EQUICORR_RHO) },
            other => return Err(bad("design", other)),
        };
        let support = match self.support.as_str() {
            "first" => Support::First,
            "random" => Support::Random { seed: self.support_seed },
            other => return Err(bad("support", other)),
        };
        let error = match self.error.as_str() {
            "gaussian" => ErrorLaw::Gaussian,
            "t5" => ErrorLaw::T5,
            other => return Err(bad("error", other)),
        };
        let family = match self.family.as_str() {
            "linear" => Family::Linear,
            "logistic" => Family::Logistic,
            other => return Err(bad("family", other)),
        };
        let sc = SimulationScenario {
            name: self.name,
            n: self.n,
            p: self.p,
            design,
            s0: self.s0,
            support,
            coef_max: self.coef_max,
            error,
            family,
            reps: self.reps,
            alpha: self.alpha,
            seed: self.seed,
            known_sigma: self.known_sigma,
            folds: self.folds,
        };
        sc.validate()?;
        Ok(sc)
    }
}

impl SimulationScenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("scenario {:?}: {msg}", self.name)));
        if self.n < 2 || self.p < 2 {
            return fail(format!("need n >= 2 and p >= 2, got n = {}, p = {}", self.n, self.p));
        }
        if self.s0 > self.p {
            return fail(format!("s0 = {} exceeds p = {}", self.s0, self.p));
        }
        let rho = self.design.rho();
        if !(0.0..1.0).contains(&rho) {
            return fail(format!("rho must lie in [0, 1), got {rho}"));
        }
        if !(self.coef_max >= 0.0 && self.coef_max.is_finite()) {
            return fail(format!("coef_max must be finite and nonnegative, got {}", self.coef_max));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.reps == 0 {
            return fail("reps must be positive".into());
        }
        if self.folds < 2 || self.folds > self.n {
            return fail(format!("folds must lie in [2, n], got {}", self.folds));
        }
        if self.family == Family::Logistic && (self.known_sigma || self.error != ErrorLaw::Gaussian) {
            return fail("error law and known_sigma apply to the linear family only".into());
        }
        Ok(())
    }

    /// The reduced profile: `p = 120`, everything else unchanged.
    pub fn small(mut self) -> Self {
        self.p = SMALL_P;
        self.s0 = self.s0.min(self.p);
        self
    }

    /// Identifies the fixed design realization (shared across scenarios
    /// that differ only in coefficients or replications).
    pub(crate) fn design_key(&self) -> (usize, usize, u64, u64, u64) {
        let kind = match self.design {
            Design::Toeplitz { .. } => 0,
            Design::EquiCorr { .. } => 1,
        };
        (self.n, self.p, kind, self.design.rho().to_bits(), self.seed)
    }
}

pub const SMALL_P: usize = 120;

/// Scenario file: optional `title`, an optional `[defaults]` table merged
/// into every entry, and one `[[scenario]]` table per column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioFile {
    pub title: String,
    pub scenarios: Vec<SimulationScenario>,
}

fn unknown_keys(t: &Table, allowed: &[&str]) -> Vec<String> {
    t.keys().filter(|k| !allowed.contains(&k.as_str())).cloned().collect()
}

pub fn parse_scenarios(text: &str) -> Result<ScenarioFile> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(format!("scenario file: {}", e.message())))?;
    let mut unknown = unknown_keys(&doc, &["title", "defaults", "scenario"]);
    let defaults = match doc.get("defaults") {
        None => Table::new(),
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(Error::Config("`defaults` must be a table".into())),
    };
    unknown.extend(unknown_keys(&defaults, &KEYS).into_iter().map(|k| format!("defaults.{k}")));
    let entries = match doc.get("scenario") {
        Some(toml::Value::Array(a)) if !a.is_empty() => a.clone(),
        _ => return Err(Error::Config("scenario file needs at least one [[scenario]] table".into())),
    };
    let mut merged = Vec::with_capacity(entries.len());
    for (i, e) in entries.into_iter().enumerate() {
        let toml::Value::Table(t) = e else {
            return Err(Error::Config(format!("scenario entry {i} is not a table")));
        };
        unknown.extend(unknown_keys(&t, &KEYS).into_iter().map(|k| format!("scenario[{i}].{k}")));
        let mut m = defaults.clone();
        m.extend(t);
        merged.push(m);
    }
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown scenario keys: {}", unknown.join(", "))));
    }
    let title = match doc.get("title") {
        None => String::new(),
        Some(toml::Value::String(s)) => s.clone(),
        Some(_) => return Err(Error::Config("`title` must be a string".into())),
    };
    let scenarios = merged
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let raw: RawScenario = toml::Value::Table(m)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("scenario entry {i}: {}", e.message())))?;
            raw.resolve()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate scenario name {:?}", w[0])));
    }
    Ok(ScenarioFile { title, scenarios })
}

pub fn read_scenarios(path: &Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read scenario file {}: {e}", path.display())))?;
    parse_scenarios(&text)
}
