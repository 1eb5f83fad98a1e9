//! Command-line front end: simulate panels, register them with any of the
//! methods, cross-validate the penalty parameter, and evaluate results.
//!
//! Config precedence is CLI flags > config file > defaults; every command
//! echoes its effective configuration into the output directory. Exit
//! codes: 0 success, 1 user error, 2 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use elastic_spatial::alignment::DpConfig;
use elastic_spatial::error::Error;
use elastic_spatial::eval;
use elastic_spatial::io;
use elastic_spatial::pipeline::{self, Method};
use elastic_spatial::registration::MvSample;
use elastic_spatial::simgen::{self, SimConfig};
use elastic_spatial::spatial::VariogramBins;
use elastic_spatial::spatial_registration::{InitTemplate, SpatialRegConfig};

#[derive(Parser)]
#[command(
    name = "elastic-spatial-align",
    version,
    about = "Elastic registration of multivariate functional data with spatially correlated phase"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel with latent truth.
    Simulate(SimulateArgs),
    /// Register a panel and write templates, warps and aligned functions.
    Register(RegisterArgs),
    /// Compute metrics and template variograms for a registration run.
    Evaluate(EvaluateArgs),
    /// Cross-validate the penalty parameter.
    Cv(CvArgs),
}

#[derive(Args, Debug, Clone, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateArgs {
    /// Simulation setting (1 or 2).
    #[arg(long)]
    setting: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Cross-observation phase scale Z.
    #[arg(long)]
    z: Option<f64>,
    /// Cross-component phase scale B.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long = "sigma-a")]
    sigma_a: Option<f64>,
    #[arg(long = "sigma-e")]
    sigma_e: Option<f64>,
    /// Grid size.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a pre-smoothed copy of the sample.
    #[arg(long)]
    presmooth: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file (CLI flags take precedence).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegisterArgs {
    /// Directory with sample.csv and sites.csv.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// none | componentwise | universal | spatial.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Select lambda by cross-validation before registering.
    #[arg(long, default_value_t = false)]
    #[serde(skip)]
    cv: bool,
    /// Comma-separated lambda grid for --cv.
    #[arg(long = "lambda-grid")]
    lambda_grid: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long = "cv-seed")]
    cv_seed: Option<u64>,
    /// Pre-smoothing strength (0 disables; low-SNR inputs default to 1e-5).
    #[arg(long)]
    presmooth: Option<f64>,
    /// Resample inputs onto a uniform grid of this size.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "slope-bound")]
    slope_bound: Option<u32>,
    #[arg(long = "max-outer")]
    max_outer: Option<usize>,
    #[arg(long = "max-inner")]
    max_inner: Option<usize>,
    #[arg(long = "eps-outer")]
    eps_outer: Option<f64>,
    #[arg(long = "eps-inner")]
    eps_inner: Option<f64>,
    /// aligned | raw-mean.
    #[arg(long = "init-template")]
    init_template: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateArgs {
    /// Registration output directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Simulation directory with truth/ (enables MSE/QMSE).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory (defaults to the input directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CvArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "lambda-grid")]
    lambda_grid: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    presmooth: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "slope-bound")]
    slope_bound: Option<u32>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let code = match e.kind() {
                DisplayHelp | DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Register(args) => cmd_register(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Cv(args) => cmd_cv(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidGrid(_)
        | Error::InvalidInput(_)
        | Error::InvalidParameter(_)
        | Error::GridMismatch(_)
        | Error::CsvParse { .. }
        | Error::Io(_)
        | Error::Json(_) => 1,
        Error::Stage { source, .. } => exit_code_for(source),
        _ => 2,
    }
}

/// Load a JSON config file into the Args type (missing file is a user error).
fn load_file_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, Error> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(Error::Json)
        }
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, Error> {
    value.ok_or_else(|| Error::InvalidParameter(format!("missing required option --{flag}")))
}

fn parse_lambda_grid(spec: &Option<String>) -> Result<Vec<f64>, Error> {
    match spec {
        None => Ok(eval::default_lambda_grid()),
        Some(s) => s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad lambda value '{tok}'")))
            })
            .collect(),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let file: SimulateArgs = load_file_config(&args.config)?;
    let setting = args.setting.or(file.setting).unwrap_or(1);
    let mut cfg = match setting {
        1 => SimConfig::setting1(),
        2 => SimConfig::setting2(args.sigma_e.or(file.sigma_e).unwrap_or(0.5)),
        other => {
            return Err(Error::InvalidParameter(format!(
                "setting must be 1 or 2, got {other}"
            )))
        }
    };
    if let Some(v) = args.n.or(file.n) {
        cfg.n = v;
    }
    if let Some(v) = args.k.or(file.k) {
        cfg.k = v;
    }
    if let Some(v) = args.z.or(file.z) {
        cfg.z = v;
    }
    if let Some(v) = args.b.or(file.b) {
        cfg.b = v;
    }
    if let Some(v) = args.sigma_a.or(file.sigma_a) {
        cfg.sigma_a = v;
    }
    if let Some(v) = args.sigma_e.or(file.sigma_e) {
        cfg.sigma_e = v;
    }
    if let Some(v) = args.m.or(file.m) {
        cfg.m = v;
    }
    if let Some(v) = args.seed.or(file.seed) {
        cfg.seed = v;
    }
    let presmooth = args.presmooth.or(file.presmooth);
    let out = require(args.out.or(file.out), "out")?;

    let truth = simgen::gen(&cfg)?;
    let smoothed = match presmooth {
        Some(s) if s > 0.0 => Some(truth.sample.presmoothed(s)?),
        _ => None,
    };
    let echo = serde_json::json!({
        "command": "simulate",
        "sim": cfg,
        "low_snr": cfg.low_snr(),
        "presmooth": presmooth,
    });
    pipeline::save_simulation(&out, &truth, &echo, smoothed.as_ref())?;
    println!(
        "simulated setting {} panel: n={} K={} m={} seed={} -> {}",
        cfg.setting,
        cfg.n,
        cfg.k,
        cfg.m,
        cfg.seed,
        out.display()
    );
    Ok(())
}

/// Pre-smoothing policy: explicit value wins (0 disables); otherwise
/// low-SNR inputs get the small default.
fn effective_presmooth(explicit: Option<f64>, input_dir: &Path) -> (f64, Option<String>) {
    if let Some(s) = explicit {
        return (s.max(0.0), None);
    }
    let cfg_path = input_dir.join("config.json");
    if let Ok(text) = std::fs::read_to_string(cfg_path) {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
            let low = value
                .get("low_snr")
                .and_then(|v| v.as_bool())
                .unwrap_or(false);
            if low {
                return (
                    1e-5,
                    Some("low-SNR input: applied default pre-smoothing 1e-5".to_string()),
                );
            }
        }
    }
    (0.0, None)
}

struct RegisterSetup {
    sample: MvSample,
    cfg: SpatialRegConfig,
    method: Method,
    presmooth: f64,
    warnings: Vec<String>,
}

fn build_register_setup(
    input: &Path,
    method: Option<String>,
    lambda: f64,
    m: Option<usize>,
    presmooth: Option<f64>,
    slope_bound: Option<u32>,
    max_outer: Option<usize>,
    max_inner: Option<usize>,
    eps_outer: Option<f64>,
    eps_inner: Option<f64>,
    init_template: Option<String>,
) -> Result<RegisterSetup, Error> {
    let method = match method {
        Some(s) => Method::from_str(&s)?,
        None => Method::Spatial,
    };
    let raw = pipeline::load_sample_dir(input, m)?;
    let (strength, note) = effective_presmooth(presmooth, input);
    let mut warnings = Vec::new();
    if let Some(n) = note {
        log::info!("{n}");
        warnings.push(n);
    }
    let sample = if strength > 0.0 {
        raw.presmoothed(strength)?
    } else {
        raw
    };

    let mut cfg = SpatialRegConfig::new(lambda);
    if let Some(b) = slope_bound {
        cfg.dp = DpConfig::with_slope_bound(b);
        cfg.init_reg.dp = cfg.dp.clone();
    }
    if let Some(v) = max_outer {
        cfg.max_outer = v;
    }
    if let Some(v) = max_inner {
        cfg.max_inner = v;
    }
    if let Some(v) = eps_outer {
        cfg.eps_outer = v;
    }
    if let Some(v) = eps_inner {
        cfg.eps_inner = v;
    }
    if let Some(s) = init_template {
        cfg.init_template = match s.as_str() {
            "aligned" => InitTemplate::Aligned,
            "raw-mean" => InitTemplate::RawMean,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown init-template '{other}' (expected aligned|raw-mean)"
                )))
            }
        };
    }
    Ok(RegisterSetup {
        sample,
        cfg,
        method,
        presmooth: strength,
        warnings,
    })
}

fn cmd_register(args: RegisterArgs) -> Result<(), Error> {
    let file: RegisterArgs = load_file_config(&args.config)?;
    let input = require(args.input.or(file.input), "input")?;
    let out = require(args.out.or(file.out), "out")?;
    let lambda_given = args.lambda.or(file.lambda);
    let use_cv = args.cv;
    if lambda_given.is_none() && !use_cv {
        return Err(Error::InvalidParameter(
            "either --lambda or --cv is required".into(),
        ));
    }

    let mut setup = build_register_setup(
        &input,
        args.method.or(file.method),
        lambda_given.unwrap_or(0.0),
        args.m.or(file.m),
        args.presmooth.or(file.presmooth),
        args.slope_bound.or(file.slope_bound),
        args.max_outer.or(file.max_outer),
        args.max_inner.or(file.max_inner),
        args.eps_outer.or(file.eps_outer),
        args.eps_inner.or(file.eps_inner),
        args.init_template.or(file.init_template),
    )?;

    let folds = args.folds.or(file.folds).unwrap_or(4);
    let cv_seed = args.cv_seed.or(file.cv_seed).unwrap_or(0);
    let mut cv_report = None;
    if use_cv {
        let grid = parse_lambda_grid(&args.lambda_grid.or(file.lambda_grid))?;
        let report = eval::cross_validate_lambda(
            &setup.sample,
            &grid,
            setup.method,
            folds,
            cv_seed,
            &setup.cfg,
        )?;
        setup.cfg.lambda = report.selected_lambda;
        println!("cross-validation selected lambda = {}", report.selected_lambda);
        cv_report = Some(report);
    }

    let mut output = pipeline::run_registration(&setup.sample, setup.method, &setup.cfg)?;
    output.diagnostics.presmooth = Some(setup.presmooth);
    output.diagnostics.warnings.extend(setup.warnings.clone());

    let echo = serde_json::json!({
        "command": "register",
        "input": input.display().to_string(),
        "method": setup.method.as_str(),
        "lambda": setup.cfg.lambda,
        "presmooth": setup.presmooth,
        "m": setup.sample.grid().len(),
        "slope_count": setup.cfg.dp.slopes.len(),
        "max_outer": setup.cfg.max_outer,
        "max_inner": setup.cfg.max_inner,
        "eps_outer": setup.cfg.eps_outer,
        "eps_inner": setup.cfg.eps_inner,
        "cv": use_cv,
        "folds": folds,
        "cv_seed": cv_seed,
    });
    pipeline::save_registration(&out, &output, &echo)?;
    io::write_sites_csv(&out.join("sites.csv"), &setup.sample.layout)?;
    if let Some(report) = cv_report {
        io::write_json(&out.join("cv.json"), &report)?;
    }
    println!(
        "registered {} observations x {} components with method={} lambda={} ({} iterations, converged={}) -> {}",
        setup.sample.n(),
        setup.sample.k(),
        setup.method.as_str(),
        setup.cfg.lambda,
        output.diagnostics.iterations,
        output.diagnostics.converged,
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let file: EvaluateArgs = load_file_config(&args.config)?;
    let input = require(args.input.or(file.input), "input")?;
    let truth_dir = args.truth.or(file.truth);
    let out = args.out.or(file.out).unwrap_or_else(|| input.clone());
    std::fs::create_dir_all(&out)?;

    let aligned_path = input.join("aligned.csv");
    let sites_path = input.join("sites.csv");
    if !aligned_path.exists() {
        return Err(Error::InvalidInput(format!(
            "no aligned.csv in {}",
            input.display()
        )));
    }
    let aligned = io::read_sample_csv(&aligned_path, &sites_path, None)?;
    let templates = io::read_component_csv(&input.join("templates.csv"))?;

    // Method/lambda tags from the run's diagnostics when present.
    let (method_tag, lambda) = std::fs::read_to_string(input.join("diagnostics.json"))
        .ok()
        .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
        .map(|v| {
            (
                v.get("method")
                    .and_then(|x| x.as_str())
                    .unwrap_or("unknown")
                    .to_string(),
                v.get("lambda").and_then(|x| x.as_f64()).unwrap_or(0.0),
            )
        })
        .unwrap_or_else(|| ("unknown".to_string(), 0.0));

    let mut metrics_json = serde_json::json!(null);
    if let Some(truth) = &truth_dir {
        let truth_templates = pipeline::load_truth_templates(truth, aligned.grid())?;
        if truth_templates.len() != aligned.k() {
            return Err(Error::InvalidInput(format!(
                "truth has {} components but aligned data has {}",
                truth_templates.len(),
                aligned.k()
            )));
        }
        let aligned_srsf = pipeline::srsfs_of_aligned(&aligned.funcs)?;
        let report = eval::metric_report(
            &aligned.funcs,
            &aligned_srsf,
            &truth_templates,
            &method_tag,
            lambda,
            None,
        )?;
        println!("mse = {}  qmse = {}", report.mse, report.qmse);
        metrics_json = serde_json::to_value(&report)?;
        io::write_json(&out.join("metrics.json"), &report)?;
    }

    // Template trace-variogram over the registered component templates.
    if aligned.k() >= 2 {
        let bins = VariogramBins::default_for(&aligned.layout)?;
        let emp = eval::template_trace_variogram(&templates, &aligned.layout, &bins)?;
        let model = elastic_spatial::spatial::fit_variogram(&emp).ok();
        io::write_variogram_csv(&out.join("template_variogram.csv"), &emp, model.as_ref())?;
    }

    let echo = serde_json::json!({
        "command": "evaluate",
        "input": input.display().to_string(),
        "truth": truth_dir.map(|p| p.display().to_string()),
        "method": method_tag,
        "lambda": lambda,
        "metrics": metrics_json,
    });
    io::write_json(&out.join("evaluate.json"), &echo)?;
    println!("evaluation written to {}", out.display());
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<(), Error> {
    let file: CvArgs = load_file_config(&args.config)?;
    let input = require(args.input.or(file.input), "input")?;
    let out = require(args.out.or(file.out), "out")?;
    std::fs::create_dir_all(&out)?;
    let folds = args.folds.or(file.folds).unwrap_or(4);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let grid = parse_lambda_grid(&args.lambda_grid.or(file.lambda_grid))?;

    let setup = build_register_setup(
        &input,
        args.method.or(file.method),
        0.0,
        args.m.or(file.m),
        args.presmooth.or(file.presmooth),
        args.slope_bound.or(file.slope_bound),
        None,
        None,
        None,
        None,
        None,
    )?;
    let report = eval::cross_validate_lambda(
        &setup.sample,
        &grid,
        setup.method,
        folds,
        seed,
        &setup.cfg,
    )?;
    let echo = serde_json::json!({
        "command": "cv",
        "input": input.display().to_string(),
        "method": setup.method.as_str(),
        "folds": folds,
        "seed": seed,
        "presmooth": setup.presmooth,
        "lambda_grid": grid,
    });
    io::write_json(&out.join("cv.json"), &report)?;
    io::write_json(&out.join("config.json"), &echo)?;
    println!("selected lambda = {}", report.selected_lambda);
    Ok(())
}
