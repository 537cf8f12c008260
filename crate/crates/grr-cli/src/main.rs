//! `grr`: generalized rank regression from the command line.
//!
//! Subcommands: `fit`, `bootstrap`, `simulate`, `variance`, `score-table`,
//! `score-curve`. Exit codes: 0 success, 2 usage error, 1 runtime error.
//! Stochastic commands require an explicit `--seed`; every output file is
//! accompanied by a manifest that reproduces it.

mod args;
mod data;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use grr_core::bootstrap::{run_bootstrap, BootstrapConfig, IntervalMode, ReplicateInit};
use grr_core::cqr::variance_convergence_check;
use grr_core::kde::{estimate_optimal_generator, EstimateOptions};
use grr_core::loss::Dataset;
use grr_core::optim::{fit, FitOptions, FitResult};
use grr_core::score::ScoreGenerator;
use grr_core::sim::{run_cell, Method, NoiseModel, SimConfig};

use args::ScoreSpec;
use data::{destandardize_coefficients, load_csv, LoadOptions};
use manifest::RunManifest;
use output::{fmt_float, save_csv, save_json};

#[derive(Parser)]
#[command(name = "grr", version, about = "Generalized rank regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit regression coefficients by two-stage subgradient descent.
    Fit(FitArgs),
    /// Multiplier-bootstrap confidence intervals around a fit.
    Bootstrap(BootstrapArgs),
    /// Monte-Carlo benchmark of estimators on synthetic designs.
    Simulate(SimulateArgs),
    /// Asymptotic-variance table over composite-quantile grids.
    Variance(VarianceArgs),
    /// Discrete score table for a given sample size.
    ScoreTable(ScoreTableArgs),
    /// Tabulated score-generating curve for plotting.
    ScoreCurve(ScoreCurveArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with covariates and response
    #[arg(long)]
    data: PathBuf,
    /// First row is a header
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    has_header: bool,
    /// Response column name (or zero-based index)
    #[arg(long, default_value = "y")]
    response_column: String,
    /// Center and unit-scale covariates and response before fitting
    #[arg(long)]
    standardize: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset<f64>> {
        load_csv(
            &self.data,
            &LoadOptions {
                has_header: self.has_header,
                response_column: self.response_column.clone(),
                standardize: self.standardize,
            },
        )
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Stage-one iterations (decaying steps on the surrogate)
    #[arg(long, default_value_t = 50)]
    t1: usize,
    /// Stage-two iterations (constant step on the target loss)
    #[arg(long, default_value_t = 150)]
    t2: usize,
    /// Step decay exponent in (1/2, 1)
    #[arg(long, default_value_t = 2.0 / 3.0)]
    zeta: f64,
    /// Step scale C in C t^{-zeta}
    #[arg(long, default_value_t = 1.0)]
    step_scale: f64,
    /// Constant stage-two step (default: the schedule value at t1)
    #[arg(long)]
    eta: Option<f64>,
    /// Normalize the first stage-one update to unit length
    #[arg(long)]
    normalize_first_step: bool,
}

impl SolverArgs {
    fn options(&self) -> FitOptions<f64> {
        FitOptions {
            surrogate: ScoreGenerator::wilcoxon(),
            stage_one_iterations: self.t1,
            step_scale: self.step_scale,
            decay: self.zeta,
            stage_two_iterations: self.t2,
            stage_two_step: self.eta,
            init: None,
            normalize_first_step: self.normalize_first_step,
            radius_cap: None,
        }
    }

    fn config_json(&self, score: &str) -> serde_json::Value {
        json!({
            "score": score,
            "t1": self.t1,
            "t2": self.t2,
            "zeta": self.zeta,
            "step_scale": self.step_scale,
            "eta": self.eta,
            "normalize_first_step": self.normalize_first_step,
        })
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Score: wilcoxon | sign | single-level:<tau> | sinusoidal |
    /// optimal:<density> | optimal-est
    #[arg(long)]
    score: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Seed recorded in the manifest (the fit itself is deterministic)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Score for both the point fit and the replicates
    #[arg(long)]
    score: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Number of bootstrap replicates
    #[arg(short = 'B', long, default_value_t = 1000)]
    replicates: usize,
    /// Significance level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Interval mode: centered | percentile
    #[arg(long, default_value = "centered")]
    mode: String,
    /// Start replicates from the stage-one output instead of the point
    /// estimate
    #[arg(long)]
    init_stage_one: bool,
    /// Mandatory seed for the multiplier streams
    #[arg(long)]
    seed: u64,
    /// Keep the full replicate matrix in the output JSON
    #[arg(long)]
    keep_replicates: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Noise family: normal | laplace | cauchy | mixture | smoothed-uniform
    #[arg(long)]
    noise: String,
    #[arg(long, default_value_t = 1800)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    p: usize,
    /// Design correlation base
    #[arg(long, default_value_t = 0.7)]
    rho: f64,
    /// Comma list: srr,wrr,orr-est,orr-orc,mle
    #[arg(long, default_value = "srr,wrr,orr-orc")]
    methods: String,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Mandatory seed for the replication streams
    #[arg(long)]
    seed: u64,
    /// Run the full benchmark grid (three noises, n in {1800, 2400, 3000},
    /// p in {5, 10}) instead of the single cell
    #[arg(long)]
    full: bool,
    /// Cross-fit aggregation: average-folds | pooled-score
    #[arg(long, default_value = "average-folds")]
    aggregation: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct VarianceArgs {
    /// Score whose variance limit anchors the table
    #[arg(long)]
    score: String,
    /// Noise family for the density-quantile weights
    #[arg(long)]
    noise: String,
    /// Covariance spec: identity | ar:<rho>
    #[arg(long, default_value = "identity")]
    sigma: String,
    /// Dimension of the covariance
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Direction: e<k> or comma list
    #[arg(long, default_value = "e1")]
    v: String,
    /// Comma list of composite grid sizes
    #[arg(long, default_value = "10,100,1000")]
    k_list: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ScoreTableArgs {
    /// Score kind
    #[arg(long)]
    kind: String,
    /// Sample size
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ScoreCurveArgs {
    /// Score kind
    #[arg(long)]
    kind: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    // GRR_THREADS caps the worker pool; default is the logical core count
    if let Ok(threads) = std::env::var("GRR_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Bootstrap(args) => cmd_bootstrap(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Variance(args) => cmd_variance(args),
        Command::ScoreTable(args) => cmd_score_table(args),
        Command::ScoreCurve(args) => cmd_score_curve(args),
    }
}

/// Resolve the score generator, running the pilot-and-estimate pipeline
/// for `optimal-est`.
fn resolve_score(
    spec: &ScoreSpec,
    data: &Dataset<f64>,
    options: &FitOptions<f64>,
) -> Result<ScoreGenerator<f64>> {
    if *spec == ScoreSpec::OptimalEstimated {
        let pilot = fit(data, &ScoreGenerator::wilcoxon(), options)?;
        let residuals = data.residuals(&pilot.beta_array())?;
        let generator = estimate_optimal_generator(
            residuals.as_slice().expect("contiguous"),
            &EstimateOptions::default(),
        )?;
        Ok(generator)
    } else {
        spec.generator()
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    fit: &'a FitResult<f64>,
    score_generator: &'a ScoreGenerator<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_original_scale: Option<Vec<f64>>,
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let spec = ScoreSpec::parse(&args.score)?;
    let dataset = args.data.load()?;
    let options = args.solver.options();
    let generator = resolve_score(&spec, &dataset, &options)?;
    let result = fit(&dataset, &generator, &options)?;
    let beta_original_scale = dataset
        .standardization()
        .map(|s| destandardize_coefficients(&result.beta, s));

    let mut manifest = RunManifest::new("fit", args.solver.config_json(&args.score), Some(args.seed));
    manifest.digest_input(&args.data.data)?;
    let report = FitReport {
        fit: &result,
        score_generator: &generator,
        beta_original_scale,
    };
    save_json(&report, &manifest, &args.out, args.force)?;
    println!(
        "fit: beta = {:?}",
        result.beta.iter().map(|b| (b * 1e6).round() / 1e6).collect::<Vec<_>>()
    );
    Ok(())
}

#[derive(Serialize)]
struct BootstrapReport<'a> {
    center: &'a [f64],
    intervals: &'a [(f64, f64)],
    alpha: f64,
    interval_mode: IntervalMode,
    seed: u64,
    warnings: &'a [String],
    score_generator: &'a ScoreGenerator<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    replicates: Option<&'a Vec<Vec<f64>>>,
}

fn cmd_bootstrap(args: BootstrapArgs) -> Result<()> {
    let spec = ScoreSpec::parse(&args.score)?;
    let dataset = args.data.load()?;
    let options = args.solver.options();
    let generator = resolve_score(&spec, &dataset, &options)?;
    let point = fit(&dataset, &generator, &options)?;
    let table = generator.score_table(dataset.n())?;

    let mode = match args.mode.as_str() {
        "centered" => IntervalMode::Centered,
        "percentile" => IntervalMode::Percentile,
        other => bail!("unknown interval mode '{other}'"),
    };
    let cfg = BootstrapConfig {
        replicates: args.replicates,
        iterations: args.solver.t2,
        step: args.solver.eta,
        alpha: args.alpha,
        seed: args.seed,
        interval_mode: mode,
        init: if args.init_stage_one {
            ReplicateInit::StageOneBest
        } else {
            ReplicateInit::PointEstimate
        },
    };
    let result = run_bootstrap(&dataset, &table, &point, &cfg)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let mut config = args.solver.config_json(&args.score);
    config["replicates"] = json!(args.replicates);
    config["alpha"] = json!(args.alpha);
    config["mode"] = json!(args.mode);
    let mut manifest = RunManifest::new("bootstrap", config, Some(args.seed));
    manifest.digest_input(&args.data.data)?;
    let report = BootstrapReport {
        center: &result.center,
        intervals: &result.intervals,
        alpha: result.alpha,
        interval_mode: result.interval_mode,
        seed: result.seed,
        warnings: &result.warnings,
        score_generator: &generator,
        replicates: args.keep_replicates.then_some(&result.replicates),
    };
    save_json(&report, &manifest, &args.out, args.force)?;
    for (l, (lo, hi)) in result.intervals.iter().enumerate() {
        println!("beta[{l}]: {:.6} in [{:.6}, {:.6}]", result.center[l], lo, hi);
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|m| Ok(Method::parse(m.trim())?))
        .collect::<Result<_>>()?;
    let aggregation = match args.aggregation.as_str() {
        "average-folds" => grr_core::sim::CrossFitAggregation::AverageFolds,
        "pooled-score" => grr_core::sim::CrossFitAggregation::PooledScore,
        other => bail!("unknown aggregation '{other}'"),
    };
    let cells: Vec<(NoiseModel, usize, usize)> = if args.full {
        let noises = [
            NoiseModel::Cauchy,
            NoiseModel::GaussianMixture,
            NoiseModel::SmoothedUniform,
        ];
        let mut grid = Vec::new();
        for noise in noises {
            for n in [1800, 2400, 3000] {
                for p in [5, 10] {
                    grid.push((noise, n, p));
                }
            }
        }
        grid
    } else {
        vec![(NoiseModel::parse(&args.noise)?, args.n, args.p)]
    };

    let mut rows = Vec::new();
    for (noise, n, p) in cells {
        let mut cfg = SimConfig::<f64>::new(noise, n, p, methods.clone());
        cfg.rho = args.rho;
        cfg.replications = args.reps;
        cfg.seed = args.seed;
        cfg.aggregation = aggregation;
        for row in run_cell(&cfg)? {
            rows.push(vec![
                row.noise.clone(),
                row.n.to_string(),
                row.p.to_string(),
                row.method.clone(),
                fmt_float(row.mean_l2),
                fmt_float(row.sd_l2),
                fmt_float(row.mean_runtime_ms),
            ]);
        }
    }

    let config = json!({
        "noise": args.noise,
        "n": args.n,
        "p": args.p,
        "rho": args.rho,
        "methods": args.methods,
        "reps": args.reps,
        "full": args.full,
        "aggregation": args.aggregation,
    });
    let manifest = RunManifest::new("simulate", config, Some(args.seed));
    save_csv(
        &["noise", "n", "p", "method", "mean_l2", "sd_l2", "mean_runtime_ms"],
        &rows,
        &manifest,
        &args.out,
        args.force,
    )?;
    println!("simulate: wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_variance(args: VarianceArgs) -> Result<()> {
    let spec = ScoreSpec::parse(&args.score)?;
    let generator = spec.generator()?;
    let noise = NoiseModel::parse(&args.noise)?;
    let density = args::density_for(noise);
    let sigma = args::parse_sigma(&args.sigma, args.p)?;
    let v = args::parse_direction(&args.v, args.p)?;
    let k_list = args::parse_usize_list(&args.k_list)?;

    let report = variance_convergence_check(&generator, density.as_ref(), &sigma, &v, &k_list)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                fmt_float(r.variance),
                fmt_float(report.limit),
            ]
        })
        .collect();

    let config = json!({
        "score": args.score,
        "noise": args.noise,
        "sigma": args.sigma,
        "p": args.p,
        "v": args.v,
        "k_list": args.k_list,
    });
    let manifest = RunManifest::new("variance", config, None);
    save_csv(&["K", "V_K", "sigma2_inf"], &rows, &manifest, &args.out, args.force)?;
    println!(
        "variance: limit {:.6}, worst gap {:.2e}",
        report.limit,
        report
            .rows
            .iter()
            .map(|r| r.gap)
            .fold(f64::NEG_INFINITY, f64::max)
    );
    Ok(())
}

fn cmd_score_table(args: ScoreTableArgs) -> Result<()> {
    let spec = ScoreSpec::parse(&args.kind)?;
    let generator = spec.generator()?;
    let table = generator.score_table(args.n)?;
    let rows: Vec<Vec<String>> = (1..=args.n)
        .map(|i| {
            vec![
                i.to_string(),
                fmt_float(i as f64 / (args.n as f64 + 1.0)),
                fmt_float(table.score(i)),
            ]
        })
        .collect();
    let manifest = RunManifest::new(
        "score-table",
        json!({"kind": args.kind, "n": args.n}),
        None,
    );
    save_csv(&["i", "u_i", "a_i"], &rows, &manifest, &args.out, args.force)?;
    Ok(())
}

fn cmd_score_curve(args: ScoreCurveArgs) -> Result<()> {
    let spec = ScoreSpec::parse(&args.kind)?;
    let generator = spec.generator()?;
    let rows: Vec<Vec<String>> = generator
        .grid()
        .iter()
        .map(|&(u, v)| vec![fmt_float(u), fmt_float(v)])
        .collect();
    let manifest = RunManifest::new("score-curve", json!({"kind": args.kind}), None);
    save_csv(&["u", "phi"], &rows, &manifest, &args.out, args.force)?;
    Ok(())
}
