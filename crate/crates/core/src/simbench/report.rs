use std::path::Path;

use serde::Serialize;

use super::{MetricsReport, ScenarioRun, SimulationScenario};
use crate::error::Result;
use crate::io::{fmt_f64, write_table};

/// Row order of the table CSV.
pub const MEASURES: [&str; 6] = ["avgcov_S0", "avglen_S0", "avgcov_S0c", "avglen_S0c", "power", "fwer"];

/// Measures as rows, scenarios as columns.
pub fn write_table_csv(path: &Path, runs: &[ScenarioRun]) -> Result<()> {
    let mut header = vec!["measure"];
    header.extend(runs.iter().map(|r| r.scenario.name.as_str()));
    let rows: Vec<Vec<String>> = MEASURES
        .iter()
        .map(|m| {
            let mut row = vec![m.to_string()];
            row.extend(runs.iter().map(|r| fmt_f64(r.report.measure(m).expect("known measure"))));
            row
        })
        .collect();
    write_table(path, &header, &rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One row per replication of every scenario.
pub fn write_reps_csv(path: &Path, runs: &[ScenarioRun]) -> Result<()> {
    let header = [
        "scenario",
        "rep",
        "sigma_hat",
        "lambda",
        "cov_S0",
        "len_S0",
        "cov_S0c",
        "len_S0c",
        "power",
        "false_rejections",
        "delta_sup",
        "w_sup",
        "identity_gap",
        "probe_z",
        "probe_p",
    ];
    let rows: Vec<Vec<String>> = runs
        .iter()
        .flat_map(|run| {
            run.records.iter().map(move |r| {
                vec![
                    run.scenario.name.clone(),
                    r.rep.to_string(),
                    opt(r.sigma_hat),
                    fmt_f64(r.lambda),
                    fmt_f64(r.cov_s0),
                    fmt_f64(r.len_s0),
                    fmt_f64(r.cov_s0c),
                    fmt_f64(r.len_s0c),
                    fmt_f64(r.power),
                    r.false_rejections.to_string(),
                    opt(r.delta_sup),
                    opt(r.w_sup),
                    opt(r.identity_gap),
                    fmt_f64(r.probe_z),
                    fmt_f64(r.probe_p),
                ]
            })
        })
        .collect();
    write_table(path, &header, &rows)
}

#[derive(Serialize)]
pub struct ManifestEntry<'a> {
    pub scenario: &'a SimulationScenario,
    pub fingerprint: &'a str,
    pub lambda_x: f64,
    pub theta_reused: bool,
    pub seconds: f64,
    pub report: &'a MetricsReport,
}

/// Run metadata: inputs, seeds, versions and timings.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub title: &'a str,
    pub scenario_file: String,
    pub version: &'static str,
    pub threads: usize,
    pub small: bool,
    pub seed_override: Option<u64>,
    pub total_seconds: f64,
    pub outputs: Vec<String>,
    pub scenarios: Vec<ManifestEntry<'a>>,
}

impl<'a> Manifest<'a> {
    pub fn new(title: &'a str, scenario_file: &Path, runs: &'a [ScenarioRun]) -> Self {
        Self {
            title,
            scenario_file: scenario_file.display().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
            small: false,
            seed_override: None,
            total_seconds: runs.iter().map(|r| r.seconds).sum(),
            outputs: Vec::new(),
            scenarios: runs
                .iter()
                .map(|r| ManifestEntry {
                    scenario: &r.scenario,
                    fingerprint: &r.fingerprint,
                    lambda_x: r.lambda_x,
                    theta_reused: r.theta_reused,
                    seconds: r.seconds,
                    report: &r.report,
                })
                .collect(),
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| std::io::Error::other(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    #[test]
    fn table_layout() {
        let sc = SimulationScenario {
            name: "col".into(),
            n: 30,
            p: 8,
            design: Design::Toeplitz { rho: 0.5 },
            s0: 2,
            support: Support::First,
            coef_max: 1.0,
            error: ErrorLaw::T5,
            family: Family::Linear,
            reps: 3,
            alpha: 0.1,
            seed: 2,
            known_sigma: false,
            folds: 3,
        };
        let runs = vec![run_scenario(&sc, &PipelineOptions::default()).unwrap()];
        let dir = tempfile::tempdir().unwrap();
        write_table_csv(&dir.path().join("t.csv"), &runs).unwrap();
        write_reps_csv(&dir.path().join("r.csv"), &runs).unwrap();
        let m = Manifest::new("demo", Path::new("x.toml"), &runs);
        write_manifest(&dir.path().join("m.json"), &m).unwrap();
        let t = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "measure,col");
        assert_eq!(lines.len(), 7);
        assert!(lines[6].starts_with("fwer,"));
        let r = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(r.lines().count(), 4);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
        assert_eq!(v["scenarios"][0]["scenario"]["name"], "col");
    }
}
