//! Command-line front end.
//!
//! Two-phase collection workflow: `plan` picks burn-in rows, fits the error
//! model, solves for the sampling rule, and writes per-row probabilities and
//! labeling decisions; once the sampled labels are filled in, `estimate`
//! replays the plan and produces the estimate with its interval. `simulate`
//! runs the repeated-trial harness from a JSON config, `tune` cross-validates
//! the constraint radius, and `report` re-renders charts from an existing
//! summary.
//!
//! Exit codes: 2 configuration error, 3 data error, 4 numeric failure,
//! 5 sampled rows missing labels.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data_model::{load_csv, Budget, CsvSchema, EstimandSpec};
use crate::error::{Error, Result};
use crate::harness::{
    build_plan, tune_c, ConstraintConfig, ConstraintKindConfig, CvConfig, ExperimentConfig,
    FitterConfig, PlanContext, RegionSource, RhoPolicy, RuleRecipe, StructuredConfig,
};
use crate::paths::{PathKind, SamplingRule};
use crate::report::{emit_charts, emit_report, write_atomic, SummaryDocument};
use crate::robust_opt::{write_trace_csv, RhoGrid};
use crate::sampler::LabelDraw;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_MISSING_LABELS: i32 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "robust-ai",
    about = "Budget-aware label collection with misspecification-robust sampling rules",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a sampling plan (per-row probabilities and labeling decisions).
    Plan(PlanArgs),
    /// Estimate from a data file and a realized plan.
    Estimate(EstimateArgs),
    /// Cross-validate the constraint radius on burn-in data.
    Tune(TuneArgs),
    /// Run a repeated-trial simulation from a JSON config.
    Simulate(SimulateArgs),
    /// Re-render charts from an existing summary.json.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PathArg {
    Linear,
    Geometric,
    Hellinger,
}

impl From<PathArg> for PathKind {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Linear => PathKind::Linear,
            PathArg::Geometric => PathKind::Geometric,
            PathArg::Hellinger => PathKind::Hellinger,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConstraintArg {
    None,
    L2,
    L1,
    RelL1,
    RelL2,
    Structured,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RuleArg {
    Uniform,
    PropUncertainty,
    PropEhat,
    PropOneMinusConf,
}

impl From<RuleArg> for RuleRecipe {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Uniform => RuleRecipe::Uniform,
            RuleArg::PropUncertainty => RuleRecipe::PropUncertainty,
            RuleArg::PropEhat => RuleRecipe::PropEhat,
            RuleArg::PropOneMinusConf => RuleRecipe::PropOneMinusConf,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FitterArg {
    /// `ehat2` column when present, otherwise k-NN on the features.
    Auto,
    Knn,
    Binned,
    External,
    AnalyticBinary,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EstimandArg {
    Mean,
    Linreg,
    Logreg,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Input CSV (features x*, predictions f, labels y; burn-in rows must be
    /// labeled).
    #[arg(long)]
    pub data: PathBuf,
    /// Total label budget n_b.
    #[arg(long)]
    pub budget: usize,
    /// Burn-in size (counts toward the budget).
    #[arg(long = "burn-in", default_value_t = 0)]
    pub burn_in: usize,
    #[arg(long, value_enum, default_value_t = PathArg::Geometric)]
    pub path: PathArg,
    #[arg(long, value_enum, default_value_t = ConstraintArg::L2)]
    pub constraint: ConstraintArg,
    /// Fixed constraint radius.
    #[arg(long)]
    pub c: Option<f64>,
    /// Choose the radius by cross-validation instead of --c.
    #[arg(long, default_value_t = false)]
    pub cv: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated candidate radii for --cv.
    #[arg(long = "c-grid", value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long = "rho-step", default_value_t = 0.01)]
    pub rho_step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output plan CSV (row_id, pi, xi); a .meta.json sidecar lands next to
    /// it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = RuleArg::PropEhat)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t = FitterArg::Auto)]
    pub fitter: FitterArg,
    #[arg(long, value_enum, default_value_t = EstimandArg::Mean)]
    pub estimand: EstimandArg,
    #[arg(long, default_value_t = 0)]
    pub coord: usize,
    #[arg(long = "no-intercept", default_value_t = false)]
    pub no_intercept: bool,
    #[arg(long, default_value_t = crate::paths::DEFAULT_FLOOR)]
    pub floor: f64,
    /// Optional CSV trace of the grid search (rho, objective, robust_value).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Radius for the overconfident region with --constraint structured.
    #[arg(long = "c-overconfident")]
    pub c_overconfident: Option<f64>,
    #[arg(long = "c-other", default_value_t = 0.0)]
    pub c_other: f64,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Data CSV with labels filled in wherever the plan sampled (xi = 1).
    #[arg(long)]
    pub data: PathBuf,
    /// Plan CSV produced by `plan`.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimandArg::Mean)]
    pub estimand: EstimandArg,
    #[arg(long, default_value_t = 0)]
    pub coord: usize,
    #[arg(long = "no-intercept", default_value_t = false)]
    pub no_intercept: bool,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Optional output file for the result JSON (also printed to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub budget: usize,
    #[arg(long = "burn-in")]
    pub burn_in: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long = "c-grid", value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = PathArg::Geometric)]
    pub path: PathArg,
    #[arg(long, value_enum, default_value_t = ConstraintArg::L2)]
    pub constraint: ConstraintArg,
    #[arg(long, value_enum, default_value_t = RuleArg::PropEhat)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t = FitterArg::Auto)]
    pub fitter: FitterArg,
    #[arg(long, value_enum, default_value_t = EstimandArg::Mean)]
    pub estimand: EstimandArg,
    #[arg(long, default_value_t = 0)]
    pub coord: usize,
    #[arg(long = "no-intercept", default_value_t = false)]
    pub no_intercept: bool,
    #[arg(long = "rho-step", default_value_t = 0.01)]
    pub rho_step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::paths::DEFAULT_FLOOR)]
    pub floor: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "out-dir", default_value = "out")]
    pub out_dir: PathBuf,
    /// Skip the SVG charts.
    #[arg(long = "no-svg", default_value_t = false)]
    pub no_svg: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Existing summary.json.
    #[arg(long)]
    pub summary: PathBuf,
    #[arg(long = "out-dir", default_value = "out")]
    pub out_dir: PathBuf,
}

/// Error plus the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

fn classify(err: &Error) -> i32 {
    match err {
        Error::ConfigError(_) | Error::InvalidInput(_) | Error::RhoOutOfRange(_) => EXIT_CONFIG,
        Error::MissingColumn(_)
        | Error::ParseError { .. }
        | Error::EmptyDataset
        | Error::BurnInTooLarge { .. }
        | Error::BurnInTooSmall { .. }
        | Error::EmptyBurnIn
        | Error::KTooLarge { .. }
        | Error::DimensionMismatch(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => EXIT_DATA,
        Error::SingularHessian(_)
        | Error::SingularSystem
        | Error::NoConvergence { .. }
        | Error::NonpositiveVariance(_)
        | Error::InfeasibleBudget { .. }
        | Error::AllZeroWeights => EXIT_NUMERIC,
        Error::MissingLabelAtSampledUnit { .. } => EXIT_MISSING_LABELS,
    }
}

fn lift(err: Error) -> CliError {
    CliError { code: classify(&err), message: err.to_string() }
}

fn estimand_spec(arg: EstimandArg, coord: usize, no_intercept: bool) -> EstimandSpec {
    match arg {
        EstimandArg::Mean => EstimandSpec::mean(),
        EstimandArg::Linreg => EstimandSpec::linear(coord, !no_intercept),
        EstimandArg::Logreg => EstimandSpec::logistic(coord, !no_intercept),
    }
}

fn resolve_fitter(arg: FitterArg, data: &crate::data_model::Dataset) -> FitterConfig {
    match arg {
        FitterArg::Auto => {
            if data.ehat2().is_some() {
                FitterConfig::External
            } else {
                FitterConfig::Knn { k: None }
            }
        }
        FitterArg::Knn => FitterConfig::Knn { k: None },
        FitterArg::Binned => FitterConfig::Binned { bins: 10 },
        FitterArg::External => FitterConfig::External,
        FitterArg::AnalyticBinary => FitterConfig::AnalyticBinary,
    }
}

#[derive(Serialize)]
struct PlanSidecar {
    rho_robust: f64,
    c: Option<f64>,
    path: PathKind,
    seed: u64,
    budget: usize,
    burn_in: usize,
    n: usize,
}

fn run_plan(args: &PlanArgs) -> std::result::Result<(), CliError> {
    let data = load_csv(&args.data, &CsvSchema::default()).map_err(lift)?;
    let budget = Budget::new(args.budget, data.n()).map_err(lift)?;
    if args.burn_in > args.budget {
        return Err(CliError::config(format!(
            "burn-in {} exceeds budget {}",
            args.burn_in, args.budget
        )));
    }
    let grid = RhoGrid::new(args.rho_step).map_err(lift)?;
    let fitter = resolve_fitter(args.fitter, &data);
    let spec = estimand_spec(args.estimand, args.coord, args.no_intercept);
    let ctx = PlanContext {
        data: &data,
        budget,
        burn_size: args.burn_in,
        estimand: spec,
        recipe: args.rule.into(),
        fitter: &fitter,
        path: args.path.into(),
        grid,
        floor: args.floor,
    };

    let structured_config;
    let constraint_config;
    let policy = match args.constraint {
        ConstraintArg::Structured => {
            let c_over = args.c_overconfident.or(args.c).ok_or_else(|| {
                CliError::config("--constraint structured needs --c-overconfident (or --c)")
            })?;
            structured_config = StructuredConfig {
                c_overconfident: c_over,
                c_other: args.c_other,
                regions: if data.region().is_some() {
                    RegionSource::Column
                } else {
                    RegionSource::Learned
                },
                depth: 2,
            };
            RhoPolicy::RobustStructured(&structured_config)
        }
        other => {
            let kind = match other {
                ConstraintArg::None => ConstraintKindConfig::None,
                ConstraintArg::L2 => ConstraintKindConfig::L2,
                ConstraintArg::L1 => ConstraintKindConfig::L1,
                ConstraintArg::RelL1 => ConstraintKindConfig::RelL1,
                ConstraintArg::RelL2 => ConstraintKindConfig::RelL2,
                ConstraintArg::Structured => unreachable!(),
            };
            let (c, cv) = match kind {
                ConstraintKindConfig::None => (None, None),
                _ if args.cv => {
                    (None, Some(CvConfig { folds: args.folds, c_grid: args.c_grid.clone() }))
                }
                _ => {
                    let c = args.c.ok_or_else(|| {
                        CliError::config("give --c or --cv for a constrained plan")
                    })?;
                    (Some(c), None)
                }
            };
            constraint_config = ConstraintConfig { kind, c, cv };
            RhoPolicy::Robust(&constraint_config)
        }
    };

    let outcome = build_plan(&ctx, &policy, args.seed).map_err(|e| {
        // Unlabeled burn-in rows are a data problem at plan time.
        let code = match &e {
            Error::MissingLabelAtSampledUnit { .. } => EXIT_DATA,
            other => classify(other),
        };
        CliError { code, message: e.to_string() }
    })?;

    let mut csv = String::from("row_id,pi,xi\n");
    for (i, (&p, &xi)) in outcome.probs.iter().zip(&outcome.xi).enumerate() {
        csv.push_str(&format!("{i},{p},{}\n", u8::from(xi)));
    }
    write_atomic(&args.out, csv.as_bytes()).map_err(lift)?;

    let sidecar = PlanSidecar {
        rho_robust: outcome.rho,
        c: outcome.c,
        path: args.path.into(),
        seed: args.seed,
        budget: args.budget,
        burn_in: args.burn_in,
        n: data.n(),
    };
    let sidecar_path = args.out.with_extension("meta.json");
    write_atomic(
        &sidecar_path,
        serde_json::to_string_pretty(&sidecar).map_err(Error::from).map_err(lift)?.as_bytes(),
    )
    .map_err(lift)?;

    if let Some(trace_path) = &args.trace {
        if let Some(trace) = &outcome.trace {
            write_trace_csv(trace, trace_path).map_err(lift)?;
        }
    }

    println!(
        "plan written to {} (rho={}, c={}, {} burn-in rows, {} sampled)",
        args.out.display(),
        outcome.rho,
        outcome.c.map(|c| c.to_string()).unwrap_or_else(|| "-".into()),
        outcome.burn_in.len(),
        outcome.xi.iter().filter(|&&b| b).count(),
    );
    Ok(())
}

fn read_plan(path: &Path, n: usize) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut probs = vec![f64::NAN; n];
    let mut xi = vec![false; n];
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col("row_id")?;
    let pi_col = col("pi")?;
    let xi_col = col("xi")?;
    let mut seen = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |c: usize, name: &str| -> Result<f64> {
            record
                .get(c)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::ParseError {
                    row,
                    column: name.into(),
                    value: record.get(c).unwrap_or("").to_string(),
                })
        };
        let id = parse(id_col, "row_id")? as usize;
        if id >= n {
            return Err(Error::InvalidInput(format!(
                "plan row_id {id} out of range for n={n}"
            )));
        }
        probs[id] = parse(pi_col, "pi")?;
        xi[id] = parse(xi_col, "xi")? != 0.0;
        seen += 1;
    }
    if seen != n {
        return Err(Error::DimensionMismatch(format!("plan has {seen} rows for n={n}")));
    }
    Ok((probs, xi))
}

fn run_estimate(args: &EstimateArgs) -> std::result::Result<(), CliError> {
    let data = load_csv(&args.data, &CsvSchema::default()).map_err(lift)?;
    let (probs, xi) = read_plan(&args.plan, data.n()).map_err(lift)?;
    let rule = SamplingRule::from_probs(probs).map_err(lift)?;
    let draw = LabelDraw::from_indicators(xi, 0);
    let spec = estimand_spec(args.estimand, args.coord, args.no_intercept);
    let result = crate::estimation::estimate_m(&spec, &data, &draw, &rule, args.alpha)
        .map_err(lift)?;
    let json = result.to_json().map_err(lift)?;
    println!("{json}");
    if let Some(out) = &args.out {
        write_atomic(out, json.as_bytes()).map_err(lift)?;
    }
    Ok(())
}

fn run_tune(args: &TuneArgs) -> std::result::Result<(), CliError> {
    let data = load_csv(&args.data, &CsvSchema::default()).map_err(lift)?;
    let budget = Budget::new(args.budget, data.n()).map_err(lift)?;
    if args.burn_in < args.folds {
        return Err(CliError {
            code: EXIT_DATA,
            message: format!(
                "burn-in {} is smaller than the fold count {}",
                args.burn_in, args.folds
            ),
        });
    }
    let grid = RhoGrid::new(args.rho_step).map_err(lift)?;
    let fitter = resolve_fitter(args.fitter, &data);
    let spec = estimand_spec(args.estimand, args.coord, args.no_intercept);
    let ctx = PlanContext {
        data: &data,
        budget,
        burn_size: args.burn_in,
        estimand: spec,
        recipe: args.rule.into(),
        fitter: &fitter,
        path: args.path.into(),
        grid,
        floor: args.floor,
    };
    let kind = match args.constraint {
        ConstraintArg::None => ConstraintKindConfig::None,
        ConstraintArg::L2 => ConstraintKindConfig::L2,
        ConstraintArg::L1 => ConstraintKindConfig::L1,
        ConstraintArg::RelL1 => ConstraintKindConfig::RelL1,
        ConstraintArg::RelL2 => ConstraintKindConfig::RelL2,
        ConstraintArg::Structured => {
            return Err(CliError::config("tune supports norm-ball constraints only"))
        }
    };
    let constraint = ConstraintConfig {
        kind,
        c: None,
        cv: Some(CvConfig { folds: args.folds, c_grid: args.c_grid.clone() }),
    };
    let cv = constraint.cv.clone().expect("set above");
    let result = tune_c(&ctx, &constraint, &cv, args.seed).map_err(|e| {
        let code = match &e {
            Error::BurnInTooSmall { .. } => EXIT_DATA,
            other => classify(other),
        };
        CliError { code, message: e.to_string() }
    })?;
    println!("{}", serde_json::to_string_pretty(&result).map_err(Error::from).map_err(lift)?);
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> std::result::Result<(), CliError> {
    let config = ExperimentConfig::from_json_file(&args.config).map_err(|e| CliError {
        code: EXIT_CONFIG,
        message: format!("config {}: {e}", args.config.display()),
    })?;
    let output = crate::harness::run_trials(&config).map_err(lift)?;
    let written = emit_report(&args.out_dir, &config, &output, !args.no_svg).map_err(lift)?;
    for s in &output.summaries {
        println!(
            "{:>18} budget {:>6}: n_eff {:8.1} +- {:6.1}  coverage {:.3}  mean rho {:.3}",
            s.method.label(),
            s.budget,
            s.n_eff_mean,
            s.n_eff_std,
            s.coverage,
            s.mean_rho,
        );
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_report(args: &ReportArgs) -> std::result::Result<(), CliError> {
    let doc = SummaryDocument::from_file(&args.summary).map_err(lift)?;
    let written = emit_charts(&args.out_dir, &doc.config, &doc.summaries).map_err(lift)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Run a parsed command.
pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    match &cli.command {
        Command::Plan(args) => run_plan(args),
        Command::Estimate(args) => run_estimate(args),
        Command::Tune(args) => run_tune(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Report(args) => run_report(args),
    }
}

/// Parse arguments (excluding the binary name is fine; clap handles both)
/// and run, returning the process exit code. Used by tests to drive the CLI
/// in-process.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes.
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                0
            } else {
                EXIT_CONFIG
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
