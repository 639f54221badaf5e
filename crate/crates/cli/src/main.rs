use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdinfer::inference::CoordinateInference;
use hdinfer::io::{read_dataset, Dataset};
use hdinfer::pipeline::{self, LambdaPolicy, ModelFamily};
use hdinfer::simbench::{self, Manifest, PipelineOptions};
use hdinfer::{Error, Result};
use ndarray::Array1;

#[derive(Parser)]
#[command(name = "hdinfer", version, about = "De-sparsified Lasso inference for high-dimensional regression")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Confidence intervals and p-values for every coefficient.
    Infer(InferArgs),
    /// Run a simulation scenario file.
    Simulate(SimulateArgs),
    /// Dump the nodewise relaxed inverse with its diagnostics.
    Nodewise(InferArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum FamilyArg {
    Linear,
    Logistic,
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(a) if a > 0.0 && a < 1.0 => Ok(a),
        _ => Err(format!("alpha must lie in (0, 1), got {s:?}")),
    }
}

#[derive(Args)]
struct InferArgs {
    /// CSV with a header row; the column named `y` is the response.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "0.05", value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "linear")]
    family: FamilyArg,
    /// Penalty of the initial fit: `cv`, `scaled` (linear only) or a value.
    /// Defaults to `scaled` for linear and `cv` for logistic models.
    #[arg(long)]
    lambda: Option<LambdaPolicy>,
    #[arg(long, default_value = "1")]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for `<stem>.csv`, `<stem>_reps.csv` and `<stem>_manifest.json`.
    #[arg(long)]
    output: PathBuf,
    /// Replace every scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Reduced profile with p = 120.
    #[arg(long)]
    small: bool,
}

fn load(path: &Path) -> Result<(Dataset, Array1<f64>)> {
    let data = read_dataset(path)?;
    let y = data
        .y
        .clone()
        .ok_or_else(|| Error::Config(format!("{} has no column named y", path.display())))?;
    Ok((data, y))
}

impl From<FamilyArg> for ModelFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Linear => ModelFamily::Linear,
            FamilyArg::Logistic => ModelFamily::Logistic,
        }
    }
}

fn cmd_infer(args: &InferArgs) -> Result<()> {
    let (data, y) = load(&args.input)?;
    let x = data.x.view();
    let r = pipeline::infer(x, y.view(), args.family.into(), args.lambda, args.seed)?;
    let family = r.family.name();
    r.write_csv(&args.output, args.alpha, Some(family))?;
    let sigma = r.sigma_hat.map(|s| format!(" sigma_hat={s}")).unwrap_or_default();
    let holm = r.holm.rejections(args.alpha).iter().filter(|v| **v).count();
    println!(
        "family={family} n={} p={} lambda={}{sigma} lambda_x={} holm_rejections={holm}",
        x.nrows(),
        x.ncols(),
        r.lambda,
        r.lambda_x
    );
    Ok(())
}

fn cmd_nodewise(args: &InferArgs) -> Result<()> {
    let data = read_dataset(&args.input)?;
    let policy = args.lambda.unwrap_or(LambdaPolicy::Cv);
    let theta = pipeline::nodewise_precision(data.x.view(), data.y.as_ref().map(|y| y.view()), args.family.into(), policy, args.seed)?;
    theta.write_csv(&args.output)?;
    let worst = theta.kkt_bounds.iter().fold(0.0f64, |m, v| m.max(*v));
    println!("p={} lambda={} max_kkt_bound={worst}", theta.p(), theta.lambdas[0]);
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let file = simbench::read_scenarios(&args.scenario)?;
    let scenarios: Vec<_> = file
        .scenarios
        .iter()
        .cloned()
        .map(|mut sc| {
            if let Some(s) = args.seed {
                sc.seed = s;
            }
            if args.small {
                sc = sc.small();
            }
            sc
        })
        .collect();
    std::fs::create_dir_all(&args.output)?;
    let runs = simbench::run_scenarios(&scenarios, &PipelineOptions::default())?;
    let stem = args.scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("simulation");
    let table = args.output.join(format!("{stem}.csv"));
    let reps = args.output.join(format!("{stem}_reps.csv"));
    let manifest_path = args.output.join(format!("{stem}_manifest.json"));
    simbench::write_table_csv(&table, &runs)?;
    simbench::write_reps_csv(&reps, &runs)?;
    let mut manifest = Manifest::new(&file.title, &args.scenario, &runs);
    manifest.small = args.small;
    manifest.seed_override = args.seed;
    manifest.outputs = [&table, &reps].iter().map(|p| p.display().to_string()).collect();
    simbench::write_manifest(&manifest_path, &manifest)?;
    for run in &runs {
        let r = &run.report;
        println!(
            "{}: avgcov_S0={:.3} avglen_S0={:.3} avgcov_S0c={:.3} avglen_S0c={:.3} power={:.3} fwer={:.3} ({:.1}s)",
            run.scenario.name, r.avgcov_s0, r.avglen_s0, r.avgcov_s0c, r.avglen_s0c, r.power, r.fwer, run.seconds
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: code=2 kind=config: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Infer(a) => cmd_infer(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Nodewise(a) => cmd_nodewise(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = if e.is_solver_failure() { (3, "solver") } else { (2, "input") };
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: code={code} kind={kind}: {msg}");
            ExitCode::from(code)
        }
    }
}
