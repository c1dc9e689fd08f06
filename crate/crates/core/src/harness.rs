//! Repeated-trial simulation: builds sampling plans per method, resamples
//! the data, draws labels, and measures effective sample size and coverage.
//!
//! Each trial derives its own seed from `(base_seed, trial)`, resamples the
//! rows with replacement (coverage is measured against the full-data
//! estimate, so trial-to-trial variability must include the data's own
//! sampling noise), draws burn-in labels, fits the error model, picks `rho`
//! per method, and runs the estimator with all labels masked except burn-in
//! and sampled units. Methods share the trial seed, so their label draws use
//! common random numbers and comparisons are paired.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    load_csv, split_burn_in, Budget, BurnInPlan, CsvSchema, Dataset, EstimandKind, EstimandSpec,
    Matrix,
};
use crate::error::{Error, Result};
use crate::error_model::{
    default_k, design_matrix, fit_binned_error, fit_knn_error, fit_pilot_logistic,
    glm_error_transform, hessian_inverse_column_for_design, ErrorEstimate, HessianColumn,
};
use crate::estimation::{estimate_m, population_variance, EstimateResult};
use crate::paths::{normalize_to_budget, path_eval, uniform_rule, PathKind, SamplingRule};
use crate::robust_opt::{
    cross_validate_c, default_c_grid, learn_regions, solve_rho, ConstraintSet, RhoGrid,
};
use crate::rng::{mix, Rng};
use crate::sampler::{draw_labels, LabelDraw};

const TAG_BOOT: u64 = 1;
const TAG_BURN: u64 = 2;
const TAG_DRAW: u64 = 3;
const TAG_CV: u64 = 4;

/// Where the dataset comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: String },
    ToyRegions { n: usize, seed: u64 },
    GaussianMean { n: usize, seed: u64 },
}

/// Label-collection strategies compared within one experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Uniform,
    Active,
    Robust,
    RobustStructured,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::Active => "active",
            Method::Robust => "robust",
            Method::RobustStructured => "robust_structured",
        }
    }
}

/// How the initial (active) sampling rule is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleRecipe {
    Uniform,
    /// Proportional to `min(f, 1 - f)` for probability predictions.
    PropUncertainty,
    /// Proportional to the fitted error magnitude `sqrt(ehat2)`.
    PropEhat,
    /// Proportional to `1 - confidence`.
    PropOneMinusConf,
}

/// Error-model configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitterConfig {
    Knn {
        #[serde(default)]
        k: Option<usize>,
    },
    Binned {
        bins: usize,
    },
    /// Use the dataset's `ehat2` column verbatim.
    External,
    /// `p (1 - p)` from probability predictions with binary labels.
    AnalyticBinary,
}

/// Cross-validation settings for the constraint radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    #[serde(default)]
    pub c_grid: Option<Vec<f64>>,
}

/// Norm-ball family for the robust method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKindConfig {
    None,
    L2,
    L1,
    RelL1,
    RelL2,
}

/// Constraint configuration: a family plus either a fixed radius or a
/// cross-validation recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub kind: ConstraintKindConfig,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub cv: Option<CvConfig>,
}

impl ConstraintConfig {
    pub fn none() -> Self {
        Self { kind: ConstraintKindConfig::None, c: None, cv: None }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            ConstraintKindConfig::None => Ok(()),
            _ => {
                if self.c.is_some() == self.cv.is_some() {
                    Err(Error::ConfigError(
                        "constraint needs exactly one of a fixed `c` or a `cv` block".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn make_cset(&self, c: f64) -> ConstraintSet {
        match self.kind {
            ConstraintKindConfig::None => ConstraintSet::None,
            ConstraintKindConfig::L2 => ConstraintSet::L2 { c },
            ConstraintKindConfig::L1 => ConstraintSet::L1 { c },
            ConstraintKindConfig::RelL1 => ConstraintSet::RelativeL1 { c },
            ConstraintKindConfig::RelL2 => ConstraintSet::RelativeL2 { c },
        }
    }
}

/// Where the region labels for the structured constraint come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSource {
    /// Use the dataset's `region` column.
    Column,
    /// Fit the shallow region tree on burn-in data each trial.
    Learned,
}

/// Structured constraint: independent radii for the overconfident region
/// (label 1) and everything else (label 0).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructuredConfig {
    pub c_overconfident: f64,
    #[serde(default)]
    pub c_other: f64,
    pub regions: RegionSource,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    2
}

fn default_trials() -> usize {
    500
}

fn default_rho_step() -> f64 {
    0.01
}

fn default_alpha() -> f64 {
    0.1
}

fn default_floor() -> f64 {
    crate::paths::DEFAULT_FLOOR
}

fn default_resample() -> bool {
    true
}

fn default_burn_in() -> BurnInConfig {
    BurnInConfig { size: 0 }
}

/// Burn-in size; the per-trial seed supplies the randomness.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BurnInConfig {
    pub size: usize,
}

/// Full experiment description, loadable from JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    pub estimand: EstimandSpec,
    pub methods: Vec<Method>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_burn_in")]
    pub burn_in: BurnInConfig,
    pub initial_rule: RuleRecipe,
    pub error_fitter: FitterConfig,
    pub path: PathKind,
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub structured: Option<StructuredConfig>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_rho_step")]
    pub rho_step: f64,
    pub base_seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_resample")]
    pub resample: bool,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

impl ExperimentConfig {
    pub fn from_json_file<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        Ok(config)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DataSource::Csv { path } => load_csv(path, &CsvSchema::default()),
            DataSource::ToyRegions { n, seed } => generate_toy_regions(*n, *seed),
            DataSource::GaussianMean { n, seed } => generate_gaussian_mean(*n, *seed),
        }
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::ConfigError("trials must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::ConfigError("at least one method is required".into()));
        }
        if self.budgets.is_empty() {
            return Err(Error::ConfigError("at least one budget is required".into()));
        }
        for &n_b in &self.budgets {
            if n_b == 0 || n_b > data.n() {
                return Err(Error::ConfigError(format!(
                    "budget {n_b} outside 1..={}",
                    data.n()
                )));
            }
            if self.burn_in.size > n_b {
                return Err(Error::ConfigError(format!(
                    "burn-in {} exceeds budget {n_b}",
                    self.burn_in.size
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::ConfigError(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        self.constraint.validate()?;
        if self.methods.contains(&Method::RobustStructured) {
            match &self.structured {
                None => {
                    return Err(Error::ConfigError(
                        "robust_structured requires a `structured` block".into(),
                    ))
                }
                Some(s) => {
                    if s.regions == RegionSource::Column && data.region().is_none() {
                        return Err(Error::ConfigError(
                            "structured regions come from the `region` column, which is missing"
                                .into(),
                        ));
                    }
                }
            }
        }
        if !data.fully_labeled() {
            return Err(Error::ConfigError(
                "simulation requires a fully labeled dataset".into(),
            ));
        }
        self.estimand.validate(data.d())?;
        RhoGrid::new(self.rho_step)?;
        Ok(())
    }
}

/// One trial's outcome. Failed trials carry the error text and NaN metrics.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub method: Method,
    pub budget: usize,
    pub trial: usize,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_labeled: usize,
    pub rho: f64,
    pub c: Option<f64>,
    pub sigma2_hat: f64,
    pub n_eff: f64,
    pub error: Option<String>,
}

/// Aggregates for one (method, budget) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub method: Method,
    pub budget: usize,
    pub n_trials: usize,
    pub n_failed: usize,
    pub estimate_mean: f64,
    pub estimate_std: f64,
    /// Across-trial variance of the estimates.
    pub v_hat: f64,
    /// Mean and std of the per-trial effective sample size (plug-in based).
    pub n_eff_mean: f64,
    pub n_eff_std: f64,
    /// Effective sample size implied by `v_hat`.
    pub n_eff_from_v_hat: f64,
    pub coverage: f64,
    pub mean_rho: f64,
    pub mean_c: Option<f64>,
}

/// Everything a simulation run produces.
#[derive(Clone, Debug, Serialize)]
pub struct RunOutput {
    pub theta_star: f64,
    pub curve_a: f64,
    pub curve_b: f64,
    pub summaries: Vec<MetricsSummary>,
    pub records: Vec<TrialRecord>,
}

/// Uniform-baseline variance curve `V(m) = A + B / m`, inverted to map a
/// variance to the uniform budget that would match it.
#[derive(Clone, Copy, Debug)]
pub struct EssCurve {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl EssCurve {
    /// Mean estimand: `A = (var(y) - mean r^2) / n`, `B = mean r^2`, both
    /// from the fully labeled data.
    pub fn for_mean(data: &Dataset) -> Result<Self> {
        if !data.fully_labeled() {
            return Err(Error::ConfigError("curve needs fully labeled data".into()));
        }
        let r2: Vec<f64> = (0..data.n()).map(|i| data.residual2(i)).collect();
        let b = crate::estimation::mean(&r2);
        let var_y = population_variance(data.labels());
        Ok(Self { a: (var_y - b) / data.n() as f64, b, n: data.n() })
    }

    /// Coordinate variance curve for any estimand: the same inversion with
    /// the residuals transformed by `(x' h_j)^2` and the full-data influence
    /// variance in place of `var(y)`.
    pub fn for_estimand(spec: &EstimandSpec, data: &Dataset) -> Result<Self> {
        if spec.kind == EstimandKind::Mean {
            return Self::for_mean(data);
        }
        let full = full_data_estimate(spec, data)?;
        let design = design_matrix(spec, data);
        let h = hessian_inverse_column_for_design(
            spec.kind,
            &design,
            &full.theta_hat,
            spec.coordinate_j,
        )?;
        let mut influences = Vec::with_capacity(data.n());
        let mut transformed_r2 = Vec::with_capacity(data.n());
        let loss = crate::estimation::Loss::for_estimand(spec.kind);
        let p = design.ncols();
        let mut grad = vec![0.0; p];
        for i in 0..data.n() {
            let row = design.row(i);
            loss.gradient(&full.theta_hat, row, data.labels()[i], &mut grad);
            let s: f64 = grad.iter().zip(h.as_slice()).map(|(g, hj)| g * hj).sum();
            influences.push(s);
            let xh: f64 = row.iter().zip(h.as_slice()).map(|(x, hj)| x * hj).sum();
            transformed_r2.push(data.residual2(i) * xh * xh);
        }
        let b = crate::estimation::mean(&transformed_r2);
        let var_s = population_variance(&influences);
        Ok(Self { a: (var_s - b) / data.n() as f64, b, n: data.n() })
    }

    /// Variance of the uniform baseline at budget `m`.
    pub fn v_at(&self, m: f64) -> f64 {
        self.a + self.b / m
    }

    /// Invert the curve. Returns +inf when `v_hat` falls at or below the
    /// horizontal asymptote `A`.
    pub fn n_eff(&self, v_hat: f64) -> Result<f64> {
        if v_hat.is_nan() || v_hat <= 0.0 {
            return Err(Error::NonpositiveVariance(v_hat));
        }
        if v_hat <= self.a {
            return Ok(f64::INFINITY);
        }
        Ok(self.b / (v_hat - self.a))
    }

    /// Inversion capped at `10 n` for reporting.
    pub fn n_eff_capped(&self, v_hat: f64) -> Result<f64> {
        Ok(self.n_eff(v_hat)?.min(10.0 * self.n as f64))
    }
}

/// Invert the mean-estimand baseline curve for a single variance value.
pub fn effective_sample_size(v_hat: f64, data: &Dataset) -> Result<f64> {
    EssCurve::for_mean(data)?.n_eff(v_hat)
}

/// Full-data estimate (every label observed, probability one everywhere).
pub fn full_data_estimate(spec: &EstimandSpec, data: &Dataset) -> Result<EstimateResult> {
    let rule = SamplingRule::from_probs(vec![1.0; data.n()])?;
    let draw = LabelDraw::from_indicators(vec![true; data.n()], 0);
    estimate_m(spec, data, &draw, &rule, 0.1)
}

/// Coverage of the full-data estimate by the per-trial intervals. Failed
/// trials are excluded from the proportion and counted separately.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoverageStats {
    pub proportion: f64,
    pub n_used: usize,
    pub n_failed: usize,
}

pub fn coverage(records: &[TrialRecord], theta_star: f64) -> CoverageStats {
    let mut hits = 0usize;
    let mut used = 0usize;
    let mut failed = 0usize;
    for r in records {
        if r.error.is_some() {
            failed += 1;
            continue;
        }
        used += 1;
        if r.ci_lo <= theta_star && theta_star <= r.ci_hi {
            hits += 1;
        }
    }
    CoverageStats {
        proportion: if used > 0 { hits as f64 / used as f64 } else { f64::NAN },
        n_used: used,
        n_failed: failed,
    }
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Two flanking easy regions around a central hard one.
///
/// `x ~ U(-5, 5)`; the hard region is `|x| <= 2`. Per-unit error magnitudes
/// are `|N(1, 0.25)|` (hard) and `|N(2, 0.05)|` (easy), labels are
/// `y = e * z` with standard-normal `z` and a zero prediction column. The
/// provided error column deliberately underestimates the hard region and
/// overestimates the easy one: `ehat2 = 0.25` (hard) vs `6.25` (easy).
/// Region column: 1 = hard (overconfident), 0 = easy.
pub fn generate_toy_regions(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 units".into()));
    }
    let mut rng = Rng::new(mix(seed, 0x7079));
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut e2 = Vec::with_capacity(n);
    let mut ehat2 = Vec::with_capacity(n);
    let mut region = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.next_uniform(-5.0, 5.0);
        let hard = x.abs() <= 2.0;
        // Second parameter read as a variance; |.| keeps the second moment.
        let e = if hard {
            (1.0 + 0.25_f64.sqrt() * rng.next_normal()).abs()
        } else {
            (2.0 + 0.05_f64.sqrt() * rng.next_normal()).abs()
        };
        let z = rng.next_normal();
        rows.push(vec![x]);
        labels.push(e * z);
        e2.push(e * e);
        ehat2.push(if hard { 0.25 } else { 6.25 });
        region.push(usize::from(hard));
    }
    Dataset::new(Matrix::from_rows(&rows)?, vec![0.0; n], labels, vec![true; n])?
        .with_ehat2(ehat2)?
        .with_e2_true(e2)?
        .with_region(region)
}

/// Heteroscedastic Gaussian mean problem: `x ~ N(0, 1)`, predictions `2x`,
/// labels `2x + s(x) z` with `s(x) = 0.3 + 0.5 x^2`. The error model has to
/// be learned from burn-in data here (no `ehat2` column).
pub fn generate_gaussian_mean(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 units".into()));
    }
    let mut rng = Rng::new(mix(seed, 0x676d));
    let mut rows = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut e2 = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.next_normal();
        let s = 0.3 + 0.5 * x * x;
        rows.push(vec![x]);
        preds.push(2.0 * x);
        labels.push(2.0 * x + s * rng.next_normal());
        e2.push(s * s);
    }
    Dataset::new(Matrix::from_rows(&rows)?, preds, labels, vec![true; n])?.with_e2_true(e2)
}

// ---------------------------------------------------------------------------
// Plan construction (shared by the harness and the CLI)
// ---------------------------------------------------------------------------

/// Inputs for building one sampling plan.
#[derive(Clone, Debug)]
pub struct PlanContext<'a> {
    pub data: &'a Dataset,
    pub budget: Budget,
    pub burn_size: usize,
    pub estimand: EstimandSpec,
    pub recipe: RuleRecipe,
    pub fitter: &'a FitterConfig,
    pub path: PathKind,
    pub grid: RhoGrid,
    pub floor: f64,
}

/// How `rho` is chosen for one method.
#[derive(Clone, Debug)]
pub enum RhoPolicy<'a> {
    Uniform,
    Active,
    Robust(&'a ConstraintConfig),
    RobustStructured(&'a StructuredConfig),
}

/// A realized sampling plan over all `n` units: burn-in units carry
/// probability one (they are labeled by construction; weighting them as
/// certain keeps the estimator unbiased conditional on the burn-in draw),
/// and the remaining units carry the path rule scaled to the leftover
/// budget.
#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub probs: Vec<f64>,
    pub xi: Vec<bool>,
    pub burn_in: Vec<usize>,
    pub rho: f64,
    pub c: Option<f64>,
    /// Grid trace of the robust solve, when one ran.
    pub trace: Option<Vec<crate::robust_opt::RhoTraceRow>>,
}

fn fit_base_ehat2(data: &Dataset, burn: &[usize], fitter: &FitterConfig) -> Result<ErrorEstimate> {
    match fitter {
        FitterConfig::External => match data.ehat2() {
            Some(col) => ErrorEstimate::from_external(col),
            None => Err(Error::MissingColumn("ehat2".into())),
        },
        FitterConfig::AnalyticBinary => {
            let values: Vec<f64> = data
                .predictions()
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0)) * (1.0 - p.clamp(0.0, 1.0)))
                .collect();
            ErrorEstimate::new(values, crate::error_model::ErrorSource::ExternalColumn)
        }
        FitterConfig::Knn { k } => {
            if burn.is_empty() {
                return Err(Error::EmptyBurnIn);
            }
            let burn_features = data.features().select_rows(burn);
            let residuals: Vec<f64> = burn.iter().map(|&i| data.residual2(i)).collect();
            let k = k.unwrap_or_else(|| default_k(burn.len())).min(burn.len());
            fit_knn_error(&burn_features, &residuals, k, data.features())
        }
        FitterConfig::Binned { bins } => {
            let conf = data
                .confidence()
                .ok_or_else(|| Error::MissingColumn("conf".into()))?;
            if burn.is_empty() {
                return Err(Error::EmptyBurnIn);
            }
            let burn_conf: Vec<f64> = burn.iter().map(|&i| conf[i]).collect();
            let residuals: Vec<f64> = burn.iter().map(|&i| data.residual2(i)).collect();
            fit_binned_error(&burn_conf, &residuals, *bins, conf)
        }
    }
}

/// Error estimate on the scale the variance surrogate needs: the base fit,
/// multiplied by `(x' h_j)^2` for regression estimands.
fn ehat2_for_estimand(
    data: &Dataset,
    burn: &[usize],
    fitter: &FitterConfig,
    spec: &EstimandSpec,
) -> Result<(ErrorEstimate, Option<HessianColumn>)> {
    let base = fit_base_ehat2(data, burn, fitter)?;
    match spec.kind {
        EstimandKind::Mean => Ok((base, None)),
        _ => {
            let design = design_matrix(spec, data);
            let pilot = match spec.kind {
                EstimandKind::LogisticRegression => fit_pilot_logistic(data, burn, spec)?,
                _ => vec![0.0; design.ncols()],
            };
            let h = hessian_inverse_column_for_design(
                spec.kind,
                &design,
                &pilot,
                spec.coordinate_j,
            )?;
            let transformed = glm_error_transform(&base, &design, &h)?;
            Ok((transformed, Some(h)))
        }
    }
}

fn recipe_weights(
    data: &Dataset,
    idx: &[usize],
    recipe: RuleRecipe,
    ehat2: Option<&ErrorEstimate>,
) -> Result<Vec<f64>> {
    match recipe {
        RuleRecipe::Uniform => Ok(vec![1.0; idx.len()]),
        RuleRecipe::PropUncertainty => idx
            .iter()
            .map(|&i| {
                let f = data.predictions()[i];
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::InvalidInput(format!(
                        "prediction {f} at row {i} is not a probability"
                    )));
                }
                Ok(f.min(1.0 - f))
            })
            .collect(),
        RuleRecipe::PropEhat => {
            let e = ehat2.ok_or_else(|| {
                Error::ConfigError("prop_ehat needs an error estimate".into())
            })?;
            Ok(idx.iter().map(|&i| e.values()[i].sqrt()).collect())
        }
        RuleRecipe::PropOneMinusConf => {
            let conf = data
                .confidence()
                .ok_or_else(|| Error::MissingColumn("conf".into()))?;
            Ok(idx.iter().map(|&i| 1.0 - conf[i]).collect())
        }
    }
}

fn restrict_estimate(e: &ErrorEstimate, idx: &[usize]) -> ErrorEstimate {
    ErrorEstimate::new(idx.iter().map(|&i| e.values()[i]).collect(), e.source())
        .expect("restriction preserves validity")
}

/// Build one sampling plan. All randomness derives from `seed`; the same
/// context and seed always produce the same plan bit for bit.
pub fn build_plan(ctx: &PlanContext, policy: &RhoPolicy, seed: u64) -> Result<PlanOutcome> {
    let data = ctx.data;
    let n = data.n();
    let (burn, rest) =
        split_burn_in(n, &BurnInPlan { size: ctx.burn_size, seed: mix(seed, TAG_BURN) })?;
    let missing: Vec<usize> = burn.iter().copied().filter(|&i| !data.observed()[i]).collect();
    if !missing.is_empty() {
        return Err(Error::MissingLabelAtSampledUnit { rows: missing });
    }

    let remaining = ctx.budget.n_b() - ctx.burn_size;
    let mut probs = vec![0.0; n];
    for &i in &burn {
        probs[i] = 1.0;
    }

    let needs_error_model = matches!(ctx.recipe, RuleRecipe::PropEhat)
        || matches!(policy, RhoPolicy::Robust(_) | RhoPolicy::RobustStructured(_));
    let fitted = if needs_error_model && remaining > 0 {
        Some(ehat2_for_estimand(data, &burn, ctx.fitter, &ctx.estimand)?)
    } else {
        None
    };
    let ehat2 = fitted.as_ref().map(|(e, _)| e);
    let h = fitted.as_ref().and_then(|(_, h)| h.as_ref());

    let mut rho = 1.0;
    let mut chosen_c = None;
    let mut trace = None;

    if remaining > 0 {
        let rest_budget = Budget::new(remaining, rest.len())?;
        let rest_floor = ctx.floor.min(rest_budget.rate());
        let initial = match ctx.recipe {
            RuleRecipe::Uniform => uniform_rule(&rest_budget),
            _ => {
                let weights = recipe_weights(data, &rest, ctx.recipe, ehat2)?;
                normalize_to_budget(&weights, &rest_budget, rest_floor)?
            }
        };

        let rest_rule = match policy {
            RhoPolicy::Uniform => {
                rho = 1.0;
                uniform_rule(&rest_budget)
            }
            RhoPolicy::Active => {
                rho = 0.0;
                initial
            }
            RhoPolicy::Robust(constraint) => {
                let ehat2 =
                    ehat2.ok_or_else(|| Error::ConfigError("robust needs an error model".into()))?;
                let c = match (&constraint.c, &constraint.cv) {
                    (Some(c), _) => *c,
                    (None, Some(cv)) => {
                        chosen_c_by_cv(ctx, constraint, cv, &burn, ehat2, h, seed)?.c_star
                    }
                    (None, None) => 0.0,
                };
                chosen_c = match constraint.kind {
                    ConstraintKindConfig::None => None,
                    _ => Some(c),
                };
                let cset = constraint.make_cset(c);
                let sol = solve_rho(
                    ctx.path,
                    &initial,
                    &restrict_estimate(ehat2, &rest),
                    &cset,
                    &ctx.grid,
                )?;
                rho = sol.rho;
                trace = Some(sol.trace);
                path_eval(ctx.path, &initial, rho)?
            }
            RhoPolicy::RobustStructured(structured) => {
                let ehat2 =
                    ehat2.ok_or_else(|| Error::ConfigError("robust needs an error model".into()))?;
                let labels = match structured.regions {
                    RegionSource::Column => data
                        .region()
                        .ok_or_else(|| Error::MissingColumn("region".into()))?
                        .to_vec(),
                    RegionSource::Learned => {
                        if burn.is_empty() {
                            return Err(Error::EmptyBurnIn);
                        }
                        let burn_features = data.features().select_rows(&burn);
                        // Residuals on the same scale as the error estimate
                        // (transformed by (x'h)^2 for regression estimands).
                        let design = design_matrix(&ctx.estimand, data);
                        let burn_r2: Vec<f64> = burn
                            .iter()
                            .map(|&i| {
                                let base = data.residual2(i);
                                match h {
                                    None => base,
                                    Some(h) => {
                                        let xh: f64 = design
                                            .row(i)
                                            .iter()
                                            .zip(h.as_slice())
                                            .map(|(x, hj)| x * hj)
                                            .sum();
                                        base * xh * xh
                                    }
                                }
                            })
                            .collect();
                        let burn_e2: Vec<f64> =
                            burn.iter().map(|&i| ehat2.values()[i]).collect();
                        learn_regions(
                            &burn_features,
                            &burn_r2,
                            &burn_e2,
                            structured.depth,
                            data.features(),
                        )?
                    }
                };
                let mut c_map = std::collections::BTreeMap::new();
                c_map.insert(1usize, structured.c_overconfident);
                c_map.insert(0usize, structured.c_other);
                for &r in &labels {
                    c_map.entry(r).or_insert(0.0);
                }
                let cset = ConstraintSet::StructuredL2 {
                    region_labels: labels,
                    c_per_region: c_map,
                }
                .restrict(&rest);
                chosen_c = Some(structured.c_overconfident);
                let sol = solve_rho(
                    ctx.path,
                    &initial,
                    &restrict_estimate(ehat2, &rest),
                    &cset,
                    &ctx.grid,
                )?;
                rho = sol.rho;
                trace = Some(sol.trace);
                path_eval(ctx.path, &initial, rho)?
            }
        };
        for (pos, &i) in rest.iter().enumerate() {
            probs[i] = rest_rule.probs()[pos];
        }
    }

    let rule = SamplingRule::from_probs(probs.clone())?;
    let draw = draw_labels(&rule, mix(seed, TAG_DRAW));
    Ok(PlanOutcome { probs, xi: draw.xi().to_vec(), burn_in: burn, rho, c: chosen_c, trace })
}

/// Standalone radius tuning: split the burn-in, fit the error model, and
/// cross-validate the constraint radius. Used by the `tune` subcommand.
pub fn tune_c(
    ctx: &PlanContext,
    constraint: &ConstraintConfig,
    cv: &CvConfig,
    seed: u64,
) -> Result<crate::robust_opt::CvResult> {
    let (burn, _rest) = split_burn_in(
        ctx.data.n(),
        &BurnInPlan { size: ctx.burn_size, seed: mix(seed, TAG_BURN) },
    )?;
    let missing: Vec<usize> =
        burn.iter().copied().filter(|&i| !ctx.data.observed()[i]).collect();
    if !missing.is_empty() {
        return Err(Error::MissingLabelAtSampledUnit { rows: missing });
    }
    let (ehat2, h) = ehat2_for_estimand(ctx.data, &burn, ctx.fitter, &ctx.estimand)?;
    chosen_c_by_cv(ctx, constraint, cv, &burn, &ehat2, h.as_ref(), seed)
}

/// Cross-validate the constraint radius on the burn-in, using the idealized
/// single-phase rule (full budget over all units) so validation units have
/// well-defined path probabilities.
fn chosen_c_by_cv(
    ctx: &PlanContext,
    constraint: &ConstraintConfig,
    cv: &CvConfig,
    burn: &[usize],
    ehat2: &ErrorEstimate,
    h: Option<&HessianColumn>,
    seed: u64,
) -> Result<crate::robust_opt::CvResult> {
    let data = ctx.data;
    let full_floor = ctx.floor.min(ctx.budget.rate());
    let full_rule = match ctx.recipe {
        RuleRecipe::Uniform => uniform_rule(&ctx.budget),
        _ => {
            let all: Vec<usize> = (0..data.n()).collect();
            let weights = recipe_weights(data, &all, ctx.recipe, Some(ehat2))?;
            normalize_to_budget(&weights, &ctx.budget, full_floor)?
        }
    };

    // Residuals on the same scale as the error model.
    let design = design_matrix(&ctx.estimand, data);
    let residual2: Vec<f64> = (0..data.n())
        .map(|i| {
            if !data.observed()[i] {
                return f64::NAN;
            }
            let base = data.residual2(i);
            match h {
                None => base,
                Some(h) => {
                    let xh: f64 =
                        design.row(i).iter().zip(h.as_slice()).map(|(x, hj)| x * hj).sum();
                    base * xh * xh
                }
            }
        })
        .collect();

    let c_grid = match &cv.c_grid {
        Some(grid) => grid.clone(),
        None => default_c_grid(ehat2),
    };
    let fitter = ctx.fitter.clone();
    let spec = ctx.estimand;
    cross_validate_c(
        burn,
        &residual2,
        &full_rule,
        ctx.path,
        &ctx.grid,
        cv.folds,
        &c_grid,
        |c| constraint.make_cset(c),
        mix(seed, TAG_CV),
        |train| {
            let base = fit_base_ehat2(data, train, &fitter)?;
            match h {
                None => Ok(base),
                Some(h) => {
                    let design = design_matrix(&spec, data);
                    glm_error_transform(&base, &design, h)
                }
            }
        },
    )
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("ROBUST_AI_THREADS") {
        let threads: usize = value
            .parse()
            .map_err(|_| Error::ConfigError(format!("ROBUST_AI_THREADS={value} is not a count")))?;
        if threads > 0 {
            builder = builder.num_threads(threads);
        }
    }
    builder
        .build()
        .map_err(|e| Error::ConfigError(format!("thread pool: {e}")))
}

fn run_single_trial(
    config: &ExperimentConfig,
    data: &Dataset,
    curve: &EssCurve,
    method: Method,
    budget: usize,
    trial: usize,
) -> TrialRecord {
    let failed = |err: &Error| TrialRecord {
        method,
        budget,
        trial,
        estimate: f64::NAN,
        ci_lo: f64::NAN,
        ci_hi: f64::NAN,
        n_labeled: 0,
        rho: f64::NAN,
        c: None,
        sigma2_hat: f64::NAN,
        n_eff: f64::NAN,
        error: Some(err.to_string()),
    };

    let seed_t = mix(config.base_seed, trial as u64);
    let trial_data = if config.resample {
        let mut rng = Rng::new(mix(seed_t, TAG_BOOT));
        let idx: Vec<usize> = (0..data.n()).map(|_| rng.next_range(data.n())).collect();
        data.subset(&idx)
    } else {
        data.clone()
    };

    let budget_obj = match Budget::new(budget, trial_data.n()) {
        Ok(b) => b,
        Err(e) => return failed(&e),
    };
    let ctx = PlanContext {
        data: &trial_data,
        budget: budget_obj,
        burn_size: config.burn_in.size,
        estimand: config.estimand,
        recipe: config.initial_rule,
        fitter: &config.error_fitter,
        path: config.path,
        grid: match RhoGrid::new(config.rho_step) {
            Ok(g) => g,
            Err(e) => return failed(&e),
        },
        floor: config.floor,
    };
    let policy = match method {
        Method::Uniform => RhoPolicy::Uniform,
        Method::Active => RhoPolicy::Active,
        Method::Robust => RhoPolicy::Robust(&config.constraint),
        Method::RobustStructured => match &config.structured {
            Some(s) => RhoPolicy::RobustStructured(s),
            None => {
                return failed(&Error::ConfigError(
                    "robust_structured requires a `structured` block".into(),
                ))
            }
        },
    };

    let outcome = match build_plan(&ctx, &policy, seed_t) {
        Ok(o) => o,
        Err(e) => return failed(&e),
    };
    let rule = match SamplingRule::from_probs(outcome.probs) {
        Ok(r) => r,
        Err(e) => return failed(&e),
    };
    let draw = LabelDraw::from_indicators(outcome.xi, mix(seed_t, TAG_DRAW));
    let est = match estimate_m(&config.estimand, &trial_data, &draw, &rule, config.alpha) {
        Ok(e) => e,
        Err(e) => return failed(&e),
    };
    let v_hat = est.sigma2_hat / trial_data.n() as f64;
    let n_eff = curve.n_eff_capped(v_hat).unwrap_or(f64::NAN);

    TrialRecord {
        method,
        budget,
        trial,
        estimate: est.estimate,
        ci_lo: est.ci_lo,
        ci_hi: est.ci_hi,
        n_labeled: est.n_labeled,
        rho: outcome.rho,
        c: outcome.c,
        sigma2_hat: est.sigma2_hat,
        n_eff,
        error: None,
    }
}

/// Run every (method, budget, trial) cell. Records come back in
/// deterministic order regardless of the worker count.
pub fn run_trials(config: &ExperimentConfig) -> Result<RunOutput> {
    let data = config.load_dataset()?;
    run_trials_on(config, &data)
}

/// Same as [`run_trials`] with a caller-provided dataset.
pub fn run_trials_on(config: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    config.validate(data)?;
    let curve = EssCurve::for_estimand(&config.estimand, data)?;
    let theta_star = full_data_estimate(&config.estimand, data)?.estimate;

    let mut cells: Vec<(Method, usize, usize)> = Vec::new();
    for &method in &config.methods {
        for &budget in &config.budgets {
            for trial in 0..config.trials {
                cells.push((method, budget, trial));
            }
        }
    }

    let pool = thread_pool()?;
    let records: Vec<TrialRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(method, budget, trial)| {
                run_single_trial(config, data, &curve, method, budget, trial)
            })
            .collect()
    });

    let mut summaries = Vec::new();
    for &method in &config.methods {
        for &budget in &config.budgets {
            let cell: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.method == method && r.budget == budget)
                .collect();
            summaries.push(summarize_cell(&cell, method, budget, theta_star, &curve));
        }
    }

    Ok(RunOutput {
        theta_star,
        curve_a: curve.a,
        curve_b: curve.b,
        summaries,
        records,
    })
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = crate::estimation::mean(xs);
    (xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn summarize_cell(
    cell: &[&TrialRecord],
    method: Method,
    budget: usize,
    theta_star: f64,
    curve: &EssCurve,
) -> MetricsSummary {
    let ok: Vec<&&TrialRecord> = cell.iter().filter(|r| r.error.is_none()).collect();
    let estimates: Vec<f64> = ok.iter().map(|r| r.estimate).collect();
    let n_effs: Vec<f64> = ok.iter().map(|r| r.n_eff).filter(|v| v.is_finite()).collect();
    let rhos: Vec<f64> = ok.iter().map(|r| r.rho).filter(|v| v.is_finite()).collect();
    let cs: Vec<f64> = ok.iter().filter_map(|r| r.c).collect();
    let owned: Vec<TrialRecord> = cell.iter().map(|r| (**r).clone()).collect();
    let cov = coverage(&owned, theta_star);

    let estimate_mean = if estimates.is_empty() {
        f64::NAN
    } else {
        crate::estimation::mean(&estimates)
    };
    let v_hat = if estimates.len() < 2 {
        f64::NAN
    } else {
        let s = sample_std(&estimates);
        s * s
    };
    MetricsSummary {
        method,
        budget,
        n_trials: cell.len(),
        n_failed: cell.len() - ok.len(),
        estimate_mean,
        estimate_std: sample_std(&estimates),
        v_hat,
        n_eff_mean: if n_effs.is_empty() { f64::NAN } else { crate::estimation::mean(&n_effs) },
        n_eff_std: sample_std(&n_effs),
        n_eff_from_v_hat: if v_hat.is_finite() && v_hat > 0.0 {
            curve.n_eff_capped(v_hat).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        },
        coverage: cov.proportion,
        mean_rho: if rhos.is_empty() { f64::NAN } else { crate::estimation::mean(&rhos) },
        mean_c: if cs.is_empty() { None } else { Some(crate::estimation::mean(&cs)) },
    }
}

// ---------------------------------------------------------------------------
// Perturbation demo
// ---------------------------------------------------------------------------

/// Comparison of estimated, worst-case-perturbed, and true squared errors in
/// an underestimation regime.
#[derive(Clone, Debug, Serialize)]
pub struct PerturbationReport {
    pub n: usize,
    pub c: f64,
    pub rho: f64,
    pub mean_abs_gap_estimated: f64,
    pub mean_abs_gap_perturbed: f64,
    pub triples: Vec<(f64, f64, f64)>,
}

/// Underestimated errors pushed back toward the truth by the inner
/// maximizer: true magnitudes near 5, estimates near 3, an L2 ball of radius
/// 50, and the linear path at `rho = 0.5`.
pub fn perturbation_demo(seed: u64) -> Result<PerturbationReport> {
    let n = 50;
    let c = 50.0;
    let rho = 0.5;
    let mut rng = Rng::new(mix(seed, 0x7064));
    let sd = 0.25_f64.sqrt();
    let e_true: Vec<f64> = (0..n).map(|_| (5.0 + sd * rng.next_normal()).abs()).collect();
    let e_hat: Vec<f64> = (0..n).map(|_| (3.0 + sd * rng.next_normal()).abs()).collect();
    let e2_true: Vec<f64> = e_true.iter().map(|&e| e * e).collect();
    let ehat2 = ErrorEstimate::new(
        e_hat.iter().map(|&e| e * e).collect(),
        crate::error_model::ErrorSource::ExternalColumn,
    )?;

    let budget = Budget::new(15, n)?;
    let initial = normalize_to_budget(&e_hat, &budget, crate::paths::DEFAULT_FLOOR)?;
    let rule = path_eval(PathKind::Linear, &initial, rho)?;
    let inner = crate::robust_opt::inner_max(&ehat2, &rule, &ConstraintSet::L2 { c })?;

    let mut gap_est = 0.0;
    let mut gap_pert = 0.0;
    let mut triples = Vec::with_capacity(n);
    for ((&est, &eps), &truth) in ehat2.values().iter().zip(&inner.eps).zip(&e2_true) {
        let pert = est + eps;
        gap_est += (est - truth).abs();
        gap_pert += (pert - truth).abs();
        triples.push((est, pert, truth));
    }
    Ok(PerturbationReport {
        n,
        c,
        rho,
        mean_abs_gap_estimated: gap_est / n as f64,
        mean_abs_gap_perturbed: gap_pert / n as f64,
        triples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DataSource::ToyRegions { n: 400, seed: 9 },
            estimand: EstimandSpec::mean(),
            methods: vec![Method::Uniform, Method::Active, Method::Robust],
            budgets: vec![80],
            burn_in: BurnInConfig { size: 0 },
            initial_rule: RuleRecipe::PropEhat,
            error_fitter: FitterConfig::External,
            path: PathKind::Geometric,
            constraint: ConstraintConfig {
                kind: ConstraintKindConfig::L2,
                c: Some(5.0),
                cv: None,
            },
            structured: None,
            trials,
            rho_step: 0.1,
            base_seed: 77,
            alpha: 0.1,
            resample: true,
            floor: 1e-3,
        }
    }

    #[test]
    fn toy_generator_matches_description() {
        let ds = generate_toy_regions(20_000, 3).unwrap();
        let region = ds.region().unwrap();
        let hard_frac = region.iter().sum::<usize>() as f64 / ds.n() as f64;
        assert!((hard_frac - 0.4).abs() < 0.02, "hard fraction {hard_frac}");
        for (i, &r) in region.iter().enumerate() {
            let x = ds.features().get(i, 0);
            assert!((-5.0..=5.0).contains(&x));
            let hard = x.abs() <= 2.0;
            assert_eq!(r, usize::from(hard));
            let e2 = ds.ehat2().unwrap()[i];
            assert_eq!(e2, if hard { 0.25 } else { 6.25 });
        }
    }

    #[test]
    fn ess_curve_self_inverts() {
        let ds = generate_gaussian_mean(5000, 4).unwrap();
        let curve = EssCurve::for_mean(&ds).unwrap();
        for m in [100.0, 500.0, 1000.0] {
            let v = curve.v_at(m);
            assert!((curve.n_eff(v).unwrap() - m).abs() / m < 1e-12);
        }
        assert!(matches!(curve.n_eff(0.0), Err(Error::NonpositiveVariance(_))));
        assert_eq!(curve.n_eff(curve.a * 0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn coverage_edge_cases() {
        let record = |lo: f64, hi: f64, err: Option<String>| TrialRecord {
            method: Method::Uniform,
            budget: 10,
            trial: 0,
            estimate: 0.5 * (lo + hi),
            ci_lo: lo,
            ci_hi: hi,
            n_labeled: 5,
            rho: 1.0,
            c: None,
            sigma2_hat: 1.0,
            n_eff: 10.0,
            error: err,
        };
        // Huge intervals always cover.
        let wide: Vec<TrialRecord> =
            (0..10).map(|_| record(-1e12, 1e12, None)).collect();
        assert_eq!(coverage(&wide, 0.3).proportion, 1.0);
        // Zero-width intervals away from the target never cover.
        let narrow: Vec<TrialRecord> = (0..10).map(|_| record(2.0, 2.0, None)).collect();
        assert_eq!(coverage(&narrow, 0.3).proportion, 0.0);
        // Failed trials are excluded but counted.
        let mut mixed = wide;
        mixed.push(record(0.0, 1.0, Some("boom".into())));
        let stats = coverage(&mixed, 0.3);
        assert_eq!(stats.n_failed, 1);
        assert_eq!(stats.n_used, 10);
    }

    #[test]
    fn run_trials_is_deterministic() {
        let config = toy_config(3);
        let a = run_trials(&config).unwrap();
        let b = run_trials(&config).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.estimate.to_bits(), y.estimate.to_bits());
            assert_eq!(x.rho, y.rho);
            assert_eq!(x.n_labeled, y.n_labeled);
        }
    }

    #[test]
    fn single_uniform_trial_uses_the_uniform_rule() {
        let mut config = toy_config(1);
        config.methods = vec![Method::Uniform];
        config.resample = false;
        let out = run_trials(&config).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert!(r.error.is_none());
        assert_eq!(r.rho, 1.0);
        // Expected labels ~ n_b.
        assert!((r.n_labeled as f64 - 80.0).abs() < 40.0);
    }

    #[test]
    fn forcing_a_huge_radius_pushes_rho_toward_uniform() {
        let mut small = toy_config(20);
        small.constraint.c = Some(0.0);
        let mut big = toy_config(20);
        big.constraint.c = Some(1e6);
        let a = run_trials(&small).unwrap();
        let b = run_trials(&big).unwrap();
        let mean_rho = |out: &RunOutput| {
            out.summaries
                .iter()
                .find(|s| s.method == Method::Robust)
                .unwrap()
                .mean_rho
        };
        assert!(mean_rho(&b) >= mean_rho(&a));
    }

    #[test]
    fn perturbation_shrinks_the_gap() {
        let report = perturbation_demo(5).unwrap();
        assert!(report.mean_abs_gap_perturbed < report.mean_abs_gap_estimated);
        // The L2 maximizer only adds to underestimated errors.
        assert!(report.triples.iter().all(|(est, pert, _)| pert >= est));
    }

    #[test]
    fn exact_fit_perturbation_stays_within_the_directional_bound() {
        // When ehat2 equals the truth, the worst-case L2 perturbation can
        // move each unit away from it by at most c * max(w) / ||w||.
        let n = 40;
        let mut rng = Rng::new(6);
        let e2: Vec<f64> = (0..n).map(|_| rng.next_uniform(0.5, 2.0)).collect();
        let ehat2 = crate::error_model::ErrorEstimate::new(
            e2.clone(),
            crate::error_model::ErrorSource::ExternalColumn,
        )
        .unwrap();
        let weights: Vec<f64> = e2.iter().map(|&v| v.sqrt()).collect();
        let rule =
            normalize_to_budget(&weights, &Budget::new(10, n).unwrap(), 1e-3).unwrap();
        let c = 0.25;
        let inner =
            crate::robust_opt::inner_max(&ehat2, &rule, &ConstraintSet::L2 { c }).unwrap();
        let w: Vec<f64> = rule.probs().iter().map(|&p| 1.0 / (n as f64 * p)).collect();
        let norm = w.iter().map(|&x| x * x).sum::<f64>().sqrt();
        let bound = c * w.iter().copied().fold(0.0, f64::max) / norm;
        for (i, &eps) in inner.eps.iter().enumerate() {
            let gap = (e2[i] + eps - e2[i]).abs();
            assert!(gap <= bound + 1e-12, "unit {i}: gap {gap} > bound {bound}");
        }
    }

    #[test]
    fn config_validation_catches_mistakes() {
        let ds = generate_toy_regions(100, 1).unwrap();
        let mut config = toy_config(1);
        config.budgets = vec![500];
        assert!(config.validate(&ds).is_err());
        let mut config = toy_config(1);
        config.burn_in.size = 90;
        config.budgets = vec![80];
        assert!(config.validate(&ds).is_err());
        let mut config = toy_config(1);
        config.constraint.cv = Some(CvConfig { folds: 5, c_grid: None });
        assert!(config.validate(&ds).is_err(), "both c and cv set");
        let mut config = toy_config(1);
        config.methods = vec![];
        assert!(config.validate(&ds).is_err(), "empty method list");
    }

    #[test]
    fn tune_with_a_single_candidate_returns_it() {
        let ds = generate_gaussian_mean(300, 4).unwrap();
        let fitter = FitterConfig::Knn { k: None };
        let ctx = PlanContext {
            data: &ds,
            budget: Budget::new(60, ds.n()).unwrap(),
            burn_size: 40,
            estimand: EstimandSpec::mean(),
            recipe: RuleRecipe::PropEhat,
            fitter: &fitter,
            path: PathKind::Geometric,
            grid: RhoGrid::new(0.1).unwrap(),
            floor: 1e-3,
        };
        let constraint =
            ConstraintConfig { kind: ConstraintKindConfig::L2, c: None, cv: None };
        let cv = CvConfig { folds: 4, c_grid: Some(vec![0.7]) };
        let result = tune_c(&ctx, &constraint, &cv, 2).unwrap();
        assert_eq!(result.c_star, 0.7);
        assert_eq!(result.scores.len(), 1);
    }
}
