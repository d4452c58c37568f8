//! Command-line interface: simulate series, calibrate joint prediction
//! regions, predict, and run coverage experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/model error. The
//! `JANET_SEED` environment variable supplies the seed when `--seed` is
//! absent.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use janet::conformal::{
    build_jpr, calibrate_single, CalibrationOutput, CalibrationSettings, Sidedness,
};
use janet::forecast::{
    fit_ar, fit_conditional_scale, fit_global_scale, predict_iterated, ArModel, ConditionalScale,
    GlobalScale, ScaleModel, DEFAULT_SCALE_FEATURES, DEFAULT_SCALE_FLOOR,
};
use janet::harness::{
    grid_results_csv, paper_grid, run_grid, simulate_ar2, windowed_real_data_eval, Ar2Dgp, Method,
    WindowedEvalConfig,
};
use janet::permute::nob_group;
use janet::series::{log_diff_preprocess, read_csv, split_series, write_csv};

#[derive(Parser)]
#[command(
    name = "janet",
    version,
    about = "Joint prediction regions for multi-step time-series forecasts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an AR(2) series to CSV.
    Simulate(SimulateArgs),
    /// Fit, calibrate, and write a model bundle JSON.
    Calibrate(CalibrateArgs),
    /// Build a region from a model bundle and write it as CSV.
    Predict(PredictArgs),
    /// Rolling-window coverage evaluation on a CSV series.
    Evaluate(EvaluateArgs),
    /// Run an experiment grid and write a results CSV plus manifest.
    Grid(GridArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    length: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1.25)]
    phi1: f64,
    #[arg(long, default_value_t = -0.75)]
    phi2: f64,
    #[arg(long, default_value_t = 1.0)]
    innovation_sd: f64,
    #[arg(long, default_value_t = 200)]
    burn_in: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    horizon: usize,
    /// History length T.
    #[arg(long, default_value_t = DEFAULT_SCALE_FEATURES)]
    history: usize,
    #[arg(long, default_value_t = 1)]
    block_size: usize,
    /// Scale family: global or conditional.
    #[arg(long, default_value = "global")]
    scale: String,
    /// two, lower, upper, or asymmetric:EPS_PLUS,EPS_MINUS.
    #[arg(long, default_value = "two")]
    sided: String,
    #[arg(long, default_value_t = false)]
    exclude_wrap: bool,
    #[arg(long, default_value_t = 2)]
    ar_order: usize,
    #[arg(long, default_value_t = DEFAULT_SCALE_FEATURES)]
    scale_features: usize,
    /// Absolute training length; overrides --train-fraction.
    #[arg(long)]
    train_length: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
}

#[derive(Args)]
struct PredictArgs {
    /// Model bundle JSON written by `calibrate`.
    #[arg(long)]
    bundle: PathBuf,
    /// CSV series whose last T rows form the history.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    method: String,
    #[arg(long)]
    input: PathBuf,
    /// Rows per evaluation window, including the horizon truth rows.
    #[arg(long)]
    window: usize,
    #[arg(long)]
    horizon: usize,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_SCALE_FEATURES)]
    history: usize,
    #[arg(long, default_value_t = 1)]
    block_size: usize,
    #[arg(long, default_value_t = 2)]
    ar_order: usize,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 1000)]
    n_boot: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Apply the log-difference preprocessing before evaluating.
    #[arg(long, default_value_t = false)]
    log_diff: bool,
    #[arg(long, default_value_t = false)]
    exclude_wrap: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Grid preset; `paper-mc` is the full comparison grid.
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = 1000)]
    n_sims: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    output: PathBuf,
    /// Optional per-simulation detail CSV.
    #[arg(long)]
    per_sim_detail: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Library(janet::Error),
}

impl From<janet::Error> for CliError {
    fn from(e: janet::Error) -> Self {
        CliError::Library(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("janet: usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Library(e)) => {
            eprintln!("janet: error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Grid(args) => cmd_grid(args),
    }
}

/// Seed resolution: flag, then JANET_SEED, then 0.
fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("JANET_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| usage(format!("JANET_SEED {v:?} is not a valid integer seed"))),
        Err(_) => Ok(0),
    }
}

fn check_epsilon(epsilon: f64) -> CliResult<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(usage(format!("--epsilon {epsilon} must lie strictly in (0, 1)")));
    }
    Ok(())
}

fn parse_sidedness(text: &str, epsilon: f64) -> CliResult<Sidedness> {
    match text {
        "two" | "two-sided" => Ok(Sidedness::TwoSided),
        "lower" => Ok(Sidedness::Lower),
        "upper" => Ok(Sidedness::Upper),
        other => {
            let rest = other
                .strip_prefix("asymmetric:")
                .ok_or_else(|| usage(format!(
                    "--sided {other:?}: expected two, lower, upper, or asymmetric:EPS_PLUS,EPS_MINUS"
                )))?;
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 2 {
                return Err(usage("asymmetric sidedness needs exactly two epsilons"));
            }
            let plus: f64 = parts[0]
                .parse()
                .map_err(|_| usage(format!("asymmetric epsilon {:?} is not a number", parts[0])))?;
            let minus: f64 = parts[1]
                .parse()
                .map_err(|_| usage(format!("asymmetric epsilon {:?} is not a number", parts[1])))?;
            if plus <= 0.0 || minus <= 0.0 || (plus + minus - epsilon).abs() > 1e-9 {
                return Err(usage(format!(
                    "asymmetric epsilons must be positive and sum to --epsilon: \
                     {plus} + {minus} != {epsilon}"
                )));
            }
            Ok(Sidedness::Asymmetric {
                epsilon_plus: plus,
                epsilon_minus: minus,
            })
        }
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| {
        CliError::Library(janet::Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    })
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    if args.length == 0 {
        return Err(usage("--length must be at least 1"));
    }
    let dgp = Ar2Dgp {
        phi1: args.phi1,
        phi2: args.phi2,
        innovation_sd: args.innovation_sd,
        burn_in: args.burn_in,
        seed: resolve_seed(args.seed)?,
    };
    let series = simulate_ar2(&dgp, args.length)?;
    write_csv(&series, &args.output)?;
    println!("wrote {} rows to {}", series.len(), args.output.display());
    Ok(())
}

/// Everything `predict` needs, written by `calibrate`.
#[derive(Serialize, Deserialize)]
struct ModelBundle {
    history_len: usize,
    horizon: usize,
    block_size: usize,
    model: ArModel,
    scale: ScaleBundle,
    calibration: CalibrationOutput,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum ScaleBundle {
    Global(GlobalScale),
    Conditional(ConditionalScale),
}

impl ScaleBundle {
    fn scales(&self, history: &Array2<f64>, horizon: usize) -> janet::Result<Array2<f64>> {
        match self {
            ScaleBundle::Global(s) => s.scales(history, horizon),
            ScaleBundle::Conditional(s) => s.scales(history, horizon),
        }
    }
}

fn cmd_calibrate(args: CalibrateArgs) -> CliResult<()> {
    check_epsilon(args.epsilon)?;
    if args.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    if args.horizon == 0 {
        return Err(usage("--horizon must be at least 1"));
    }
    if !(args.train_fraction > 0.0 && args.train_fraction < 1.0) {
        return Err(usage("--train-fraction must lie strictly in (0, 1)"));
    }
    let sidedness = parse_sidedness(&args.sided, args.epsilon)?;
    let series = read_csv(&args.input)?;
    let l_tr = args
        .train_length
        .unwrap_or((args.train_fraction * series.len() as f64).round() as usize);
    let split = split_series(&series, l_tr, args.history, args.horizon)?;
    let model = fit_ar(&split.train, args.ar_order)?;
    let group = nob_group(split.calibration.len(), args.block_size)?;
    let settings = CalibrationSettings::new(args.epsilon, args.k)
        .with_sidedness(sidedness)
        .with_exclude_wrap(args.exclude_wrap);

    let (scale, calibration) = match args.scale.as_str() {
        "global" => {
            let s = fit_global_scale(
                &model,
                &split.train,
                args.history,
                args.horizon,
                DEFAULT_SCALE_FLOOR,
            )?;
            let cal = calibrate_single(
                &split, &group, &model, &s, args.history, args.horizon, &settings,
            )?;
            (ScaleBundle::Global(s), cal)
        }
        "conditional" => {
            let s = fit_conditional_scale(
                &model,
                &split.train,
                args.history,
                args.horizon,
                args.scale_features,
                DEFAULT_SCALE_FLOOR,
            )?;
            let cal = calibrate_single(
                &split, &group, &model, &s, args.history, args.horizon, &settings,
            )?;
            (ScaleBundle::Conditional(s), cal)
        }
        other => {
            return Err(usage(format!(
                "--scale {other:?}: expected global or conditional"
            )))
        }
    };

    let bundle = ModelBundle {
        history_len: args.history,
        horizon: args.horizon,
        block_size: args.block_size,
        model,
        scale,
        calibration,
    };
    let json = serde_json::to_string_pretty(&bundle).expect("bundle serializes");
    write_text(&args.output, &json)?;
    println!(
        "calibrated on {} permutations; q_lower={} q_upper={}; bundle at {}",
        bundle.calibration.n_units(),
        bundle.calibration.q_lower,
        bundle.calibration.q_upper,
        args.output.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.bundle).map_err(|e| {
        CliError::Library(janet::Error::Io {
            path: args.bundle.display().to_string(),
            message: e.to_string(),
        })
    })?;
    let bundle: ModelBundle = serde_json::from_str(&text).map_err(|e| {
        CliError::Library(janet::Error::ParseError {
            row: 0,
            col: 0,
            message: format!("model bundle: {e}"),
        })
    })?;
    let series = read_csv(&args.input)?;
    let t = bundle.history_len;
    if series.len() < t {
        return Err(CliError::Library(janet::Error::HistoryTooShort {
            have: series.len(),
            need: t,
        }));
    }
    let history = series
        .slice_rows(series.len() - t, series.len())?
        .values()
        .clone();
    let center = predict_iterated(&bundle.model, &history, bundle.horizon)?;
    let sigma = bundle.scale.scales(&history, bundle.horizon)?;
    let region = build_jpr(&center, &sigma, &bundle.calibration)?;
    write_text(&args.output, &region.to_csv_string())?;
    println!(
        "wrote {}-step region to {}",
        bundle.horizon,
        args.output.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    check_epsilon(args.epsilon)?;
    let method: Method = args
        .method
        .parse()
        .map_err(|e: janet::Error| usage(e.to_string()))?;
    let raw = read_csv(&args.input)?;
    let series = if args.log_diff {
        log_diff_preprocess(&raw)?
    } else {
        raw
    };
    let mut cfg = WindowedEvalConfig::new(method, args.epsilon, args.k, args.window, args.horizon);
    cfg.history_len = args.history;
    cfg.ar_order = args.ar_order;
    cfg.split_fraction = args.train_fraction;
    cfg.block_size = args.block_size;
    cfg.n_boot = args.n_boot;
    cfg.seed = resolve_seed(args.seed)?;
    cfg.exclude_wrap = args.exclude_wrap;
    let result = windowed_real_data_eval(&series, &cfg)?;
    println!("coverage {}", result.empirical_coverage);
    println!("mean_geo_width {}", result.mean_geo_width);
    println!("windows {}", result.outcomes.len());
    if let Some(path) = args.output {
        let mut csv =
            String::from("method,epsilon,k,horizon,window,coverage,mean_geo_width,n_windows,seed\n");
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            method.as_str(),
            args.epsilon,
            args.k,
            args.horizon,
            args.window,
            result.empirical_coverage,
            result.mean_geo_width,
            result.outcomes.len(),
            cfg.seed
        ));
        write_text(&path, &csv)?;
    }
    Ok(())
}

/// Run manifest for grid outputs: configuration echo plus timing.
#[derive(Serialize)]
struct GridManifest {
    preset: String,
    n_sims: usize,
    seed: u64,
    workers: usize,
    library_version: &'static str,
    rows_written: usize,
    failures: Vec<String>,
    wall_time_secs: f64,
}

fn cmd_grid(args: GridArgs) -> CliResult<()> {
    if args.preset != "paper-mc" {
        return Err(usage(format!(
            "unknown preset {:?}; available: paper-mc",
            args.preset
        )));
    }
    if args.n_sims == 0 {
        return Err(usage("--n-sims must be at least 1"));
    }
    if args.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let seed = resolve_seed(args.seed)?;
    let start = std::time::Instant::now();
    let specs = paper_grid(args.n_sims, seed);
    let results = run_grid(&specs, args.workers);

    let csv = grid_results_csv(&specs, &results);
    write_text(&args.output, &csv)?;

    let failures: Vec<String> = specs
        .iter()
        .zip(&results)
        .filter_map(|(s, r)| {
            r.as_ref().err().map(|e| {
                format!(
                    "{} eps={} k={} h={}: {e}",
                    s.method.as_str(),
                    s.epsilon,
                    s.k,
                    s.horizon
                )
            })
        })
        .collect();
    for f in &failures {
        eprintln!("janet: grid cell failed: {f}");
    }

    if let Some(detail_path) = args.per_sim_detail {
        let mut detail = String::from("spec_index,method,epsilon,k,h,sim,covered,misses,geo_width\n");
        for (i, (spec, result)) in specs.iter().zip(&results).enumerate() {
            if let Ok(r) = result {
                for (sim, o) in r.outcomes.iter().enumerate() {
                    detail.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{}\n",
                        i,
                        spec.method.as_str(),
                        spec.epsilon,
                        spec.k,
                        spec.horizon,
                        sim,
                        o.covered,
                        o.misses,
                        o.geo_width
                    ));
                }
            }
        }
        write_text(&detail_path, &detail)?;
    }

    let manifest = GridManifest {
        preset: args.preset,
        n_sims: args.n_sims,
        seed,
        workers: args.workers,
        library_version: env!("CARGO_PKG_VERSION"),
        rows_written: csv.lines().count().saturating_sub(1),
        failures,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    let manifest_path = args.output.with_extension("manifest.json");
    write_text(
        &manifest_path,
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    println!(
        "wrote {} rows to {} (manifest {})",
        manifest.rows_written,
        args.output.display(),
        manifest_path.display()
    );
    Ok(())
}
