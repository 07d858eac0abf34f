//! `ksupport` command-line front end.
//!
//! Exit status: 0 success, 2 usage or validation error, 3 I/O error,
//! 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ksupport::data::{load_csv, load_svmlight, standardize, Dataset, LabelColumn, SyntheticSpec};
use ksupport::exec::Execution;
use ksupport::fmt::{join_sig12, sig12};
use ksupport::norms::{elastic_dual_norm, elastic_norm, ksup_dual_norm, ksup_norm};
use ksupport::prox::{prox_ksup_sq, ProxWeight};
use ksupport::selection::{grid_search, mse, render_report, run_synthetic_experiment, write_experiment, GridSpec, Method};
use ksupport::solver::{fit, FitConfig, FitResult, Penalty, SolverOptions};
use ksupport::Error;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ksupport", version, about = "k-support norm regularized regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the k-support norm (prints the value and r) or the elastic-net norm.
    Norm(NormArgs),
    /// Evaluate the dual of the k-support or elastic-net norm.
    Dualnorm(DualArgs),
    /// Proximity operator of (beta/2) times the squared k-support norm.
    Prox(ProxArgs),
    /// Fit one penalized regression and write a JSON document.
    Fit(FitArgs),
    /// Select hyperparameters on a validation file and write a JSON document.
    Gridfit(GridfitArgs),
    /// Run the replicated synthetic benchmark.
    Synthetic(SyntheticArgs),
}

#[derive(Args)]
struct NormArgs {
    /// Comma-separated values, or @path to read them from a file.
    #[arg(long, allow_hyphen_values = true)]
    vector: String,
    /// Sparsity level; real values are accepted with --elastic.
    #[arg(long)]
    k: f64,
    #[arg(long)]
    elastic: bool,
}

#[derive(Args)]
struct DualArgs {
    #[command(flatten)]
    norm: NormArgs,
    /// Absolute accuracy of the elastic-net dual.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args)]
struct ProxArgs {
    #[arg(long, allow_hyphen_values = true)]
    vector: String,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    beta: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svmlight,
}

#[derive(Args)]
struct InputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// CSV only: the first row holds column names.
    #[arg(long)]
    header: bool,
    /// CSV only: label column as a zero-based index or a header name; defaults to the last column.
    #[arg(long)]
    label: Option<String>,
    /// Standardize features with training-set mean and standard deviation.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = SolverOptions::default().max_iters)]
    max_iters: usize,
    /// Relative objective change that, sustained, ends a fit.
    #[arg(long, default_value_t = SolverOptions::default().rel_tol)]
    tol: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    /// Optional file scored with the fitted coefficients.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    method: Method,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct GridfitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    method: Method,
    /// Comma-separated k values; defaults to 1..=d.
    #[arg(long)]
    k_values: Option<String>,
    /// Comma-separated base-10 exponents for lambda; defaults to -15..=5.
    #[arg(long, allow_hyphen_values = true)]
    lambda_exponents: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Fit the grid cells one after another.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the within-group feature noise.
    #[arg(long, default_value_t = SyntheticSpec::default().within_group_noise_sd)]
    sigma: f64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = SolverOptions::default().max_iters)]
    max_iters: usize,
    #[arg(long)]
    sequential: bool,
}

/// A failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::Divergence { .. } | Error::Internal(_) => 4,
        Error::GridExhausted(inner) => exit_code(inner),
        Error::Replication { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })
}

fn parse_vector(arg: &str) -> Result<Vec<f64>, Failure> {
    let text = match arg.strip_prefix('@') {
        Some(path) => read_text(Path::new(path))?,
        None => arg.to_string(),
    };
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| usage(format!("not a number: {s:?}"))))
        .collect::<Result<Vec<f64>, Failure>>()?;
    if values.is_empty() {
        return Err(usage("vector is empty"));
    }
    Ok(values)
}

fn parse_list<T: std::str::FromStr>(arg: &str, what: &str) -> Result<Vec<T>, Failure> {
    arg.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| usage(format!("bad {what}: {s:?}"))))
        .collect()
}

fn integer_k(k: f64) -> Result<usize, Failure> {
    if k.fract() != 0.0 || k < 0.0 {
        return Err(usage(format!("k must be an integer without --elastic, got {k}")));
    }
    Ok(k as usize)
}

fn cmd_norm(a: &NormArgs) -> Result<String, Failure> {
    let w = parse_vector(&a.vector)?;
    if a.elastic {
        return Ok(sig12(elastic_norm(&w, a.k)?));
    }
    let b = ksup_norm(&w, integer_k(a.k)?)?;
    Ok(format!("{} r={}", sig12(b.value), b.r))
}

fn cmd_dualnorm(a: &DualArgs) -> Result<String, Failure> {
    let u = parse_vector(&a.norm.vector)?;
    let v = if a.norm.elastic {
        elastic_dual_norm(&u, a.norm.k, a.tol)?
    } else {
        ksup_dual_norm(&u, integer_k(a.norm.k)?)?
    };
    Ok(sig12(v))
}

fn cmd_prox(a: &ProxArgs) -> Result<String, Failure> {
    let v = parse_vector(&a.vector)?;
    let q = prox_ksup_sq(&v, a.k, ProxWeight::new(a.beta)?)?;
    Ok(join_sig12(&q))
}

fn load(path: &Path, input: &InputArgs) -> Result<Dataset, Failure> {
    let ds = match input.format {
        Format::Svmlight => load_svmlight(path)?,
        Format::Csv => {
            let label = match &input.label {
                None => LabelColumn::Last,
                Some(s) => match s.parse::<usize>() {
                    Ok(i) => LabelColumn::Index(i),
                    Err(_) => LabelColumn::Name(s.clone()),
                },
            };
            load_csv(path, input.header, &label)?
        }
    };
    Ok(ds)
}

/// Load train and an optional second file, standardizing both with train statistics.
fn load_pair(train: &Path, other: Option<&Path>, input: &InputArgs) -> Result<(Dataset, Option<Dataset>), Failure> {
    let train = load(train, input)?;
    let other = other.map(|p| load(p, input)).transpose()?;
    if let Some(o) = &other {
        if o.n_features() != train.n_features() {
            return Err(Error::DimensionMismatch {
                expected: train.n_features(),
                got: o.n_features(),
            }
            .into());
        }
    }
    if !input.standardize {
        return Ok((train, other));
    }
    let others: Vec<Dataset> = other.into_iter().collect();
    let s = standardize(&train, &others)?;
    if !s.constant_features.is_empty() {
        eprintln!("warning: constant features zeroed: {:?}", s.constant_features);
    }
    Ok((s.train, s.others.into_iter().next()))
}

fn options(input: &InputArgs) -> SolverOptions {
    SolverOptions {
        max_iters: input.max_iters,
        rel_tol: input.tol,
        ..Default::default()
    }
}

fn require(v: Option<f64>, flag: &str, method: Method) -> Result<f64, Failure> {
    v.ok_or_else(|| usage(format!("--{flag} is required for --method {}", method.name())))
}

fn penalty_from(a: &FitArgs) -> Result<Penalty, Failure> {
    let m = a.method;
    let unused = |flag: &str, given: bool| -> Result<(), Failure> {
        if given {
            Err(usage(format!("--{flag} does not apply to --method {}", m.name())))
        } else {
            Ok(())
        }
    };
    Ok(match m {
        Method::KSupport => {
            unused("lambda1", a.lambda1.is_some())?;
            unused("lambda2", a.lambda2.is_some())?;
            let k = a.k.ok_or_else(|| usage("--k is required for --method ksupport"))?;
            Penalty::KSupport {
                k,
                lambda: require(a.lambda, "lambda", m)?,
            }
        }
        Method::Lasso => {
            unused("k", a.k.is_some())?;
            unused("lambda1", a.lambda1.is_some())?;
            unused("lambda2", a.lambda2.is_some())?;
            Penalty::Lasso {
                lambda: require(a.lambda, "lambda", m)?,
            }
        }
        Method::Elastic => {
            unused("k", a.k.is_some())?;
            unused("lambda", a.lambda.is_some())?;
            Penalty::Elastic {
                lambda1: require(a.lambda1, "lambda1", m)?,
                lambda2: require(a.lambda2, "lambda2", m)?,
            }
        }
    })
}

/// JSON number rounded to twelve significant digits.
fn num(x: f64) -> Value {
    sig12(x).parse::<f64>().map(Value::from).unwrap_or(Value::Null)
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

fn penalty_json(p: &Penalty) -> Value {
    match *p {
        Penalty::KSupport { k, lambda } => json!({"method": "ksupport", "k": k, "lambda": num(lambda)}),
        Penalty::Lasso { lambda } => json!({"method": "lasso", "lambda": num(lambda)}),
        Penalty::Elastic { lambda1, lambda2 } => {
            json!({"method": "elastic", "lambda1": num(lambda1), "lambda2": num(lambda2)})
        }
    }
}

fn fit_json(res: &FitResult, val_mse: Option<f64>) -> Value {
    let trace = &res.objective_trace;
    json!({
        "coefficients": nums(&res.w),
        "iterations": res.iterations,
        "converged": res.converged,
        "best_iteration": res.best_iteration,
        "objective_initial": num(trace[0]),
        "objective_best": num(res.best_objective()),
        "objective_last": num(*trace.last().unwrap()),
        "lipschitz": num(res.lipschitz),
        "val_mse": val_mse.map(num),
    })
}

fn write_json(path: &Path, doc: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(doc).expect("json values serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_fit(a: &FitArgs) -> Result<String, Failure> {
    let penalty = penalty_from(a)?;
    let (train, val) = load_pair(&a.train, a.val.as_deref(), &a.input)?;
    let cfg = FitConfig {
        penalty,
        options: options(&a.input),
    };
    let res = fit(&train, &cfg)?;
    let val_mse = val.as_ref().map(|v| mse(&res.w, v)).transpose()?;
    let doc = json!({
        "config": {
            "penalty": penalty_json(&penalty),
            "max_iters": cfg.options.max_iters,
            "rel_tol": num(cfg.options.rel_tol),
            "standardize": a.input.standardize,
            "train": a.train.display().to_string(),
            "n_train": train.n_samples(),
            "d": train.n_features(),
        },
        "result": fit_json(&res, val_mse),
        "timing": {"seconds": num(res.elapsed.as_secs_f64())},
    });
    write_json(&a.out, &doc)?;
    Ok(format!("wrote {}", a.out.display()))
}

fn cmd_gridfit(a: &GridfitArgs) -> Result<String, Failure> {
    let (train, val) = load_pair(&a.train, Some(&a.val), &a.input)?;
    let val = val.expect("validation set requested");
    let mut grid = GridSpec::default_for(a.method, train.n_features());
    if let Some(s) = &a.k_values {
        grid.k_values = parse_list(s, "k value")?;
    }
    if let Some(s) = &a.lambda_exponents {
        grid.lambda_exponents = parse_list(s, "lambda exponent")?;
    }
    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let opts = options(&a.input);
    let outcome = grid_search(&train, &val, &grid, &opts, exec)?;
    let (best, best_fit) = outcome.best();
    let cells: Vec<Value> = outcome
        .cells
        .iter()
        .map(|c| match &c.outcome {
            Ok(f) => json!({"penalty": penalty_json(&c.penalty), "val_mse": num(f.val_mse),
                            "iterations": f.iterations, "converged": f.converged}),
            Err(e) => json!({"penalty": penalty_json(&c.penalty), "error": e.to_string()}),
        })
        .collect();
    let doc = json!({
        "config": {
            "method": a.method.name(),
            "k_values": grid.k_values,
            "lambda_exponents": grid.lambda_exponents,
            "max_iters": opts.max_iters,
            "rel_tol": num(opts.rel_tol),
            "standardize": a.input.standardize,
            "n_train": train.n_samples(),
            "n_val": val.n_samples(),
            "d": train.n_features(),
        },
        "selected": penalty_json(best),
        "val_mse": num(best_fit.val_mse),
        "coefficients": nums(&best_fit.w),
        "cells": cells,
    });
    write_json(&a.out, &doc)?;
    Ok(format!("selected {} (val mse {})", penalty_json(best), sig12(best_fit.val_mse)))
}

fn cmd_synthetic(a: &SyntheticArgs) -> Result<String, Failure> {
    let spec = SyntheticSpec {
        within_group_noise_sd: a.sigma,
        ..Default::default()
    };
    let grids: Vec<GridSpec> = [Method::Lasso, Method::Elastic, Method::KSupport]
        .into_iter()
        .map(|m| GridSpec::default_for(m, spec.d))
        .collect();
    let opts = SolverOptions {
        max_iters: a.max_iters,
        ..Default::default()
    };
    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let report = run_synthetic_experiment(&spec, &grids, a.reps, a.seed, &opts, exec)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", a.out_dir.display()),
    })?;
    write_experiment(&report, &a.out_dir)?;
    let text = render_report(&report);
    let summary: String = text
        .lines()
        .skip_while(|l| *l != "[summary]")
        .take_while(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Norm(a) => cmd_norm(a),
        Command::Dualnorm(a) => cmd_dualnorm(a),
        Command::Prox(a) => cmd_prox(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Gridfit(a) => cmd_gridfit(a),
        Command::Synthetic(a) => cmd_synthetic(a),
    };
    match result {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
