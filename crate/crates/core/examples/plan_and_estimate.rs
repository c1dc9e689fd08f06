//! The two-phase collection workflow, driven through the library API.
//!
//! Phase one builds a sampling plan from a fully diagnosed dataset: burn-in
//! rows are picked uniformly, an error model is fit on them, and the rule is
//! hardened against misspecification. Phase two pretends the sampled labels
//! came back and runs the estimator.
//!
//! ```bash
//! cargo run -p robust-active-inference --example plan_and_estimate
//! ```

use robust_active_inference::data_model::EstimandSpec;
use robust_active_inference::estimation::estimate_mean;
use robust_active_inference::harness::{
    build_plan, generate_gaussian_mean, ConstraintConfig, ConstraintKindConfig, CvConfig,
    FitterConfig, PlanContext, RhoPolicy, RuleRecipe,
};
use robust_active_inference::paths::PathKind;
use robust_active_inference::sampler::LabelDraw;
use robust_active_inference::{Budget, RhoGrid, SamplingRule};

fn main() {
    let data = generate_gaussian_mean(1500, 3).unwrap();
    let budget = Budget::new(300, data.n()).unwrap();

    let fitter = FitterConfig::Knn { k: None };
    let ctx = PlanContext {
        data: &data,
        budget,
        burn_size: 100,
        estimand: EstimandSpec::mean(),
        recipe: RuleRecipe::PropEhat,
        fitter: &fitter,
        path: PathKind::Geometric,
        grid: RhoGrid::default(),
        floor: 1e-3,
    };
    let constraint = ConstraintConfig {
        kind: ConstraintKindConfig::L2,
        c: None,
        cv: Some(CvConfig { folds: 5, c_grid: None }),
    };
    let outcome = build_plan(&ctx, &RhoPolicy::Robust(&constraint), 12345).unwrap();

    println!(
        "plan: rho = {:.3}, cross-validated c = {:.4}, {} burn-in rows, {} sampled rows",
        outcome.rho,
        outcome.c.unwrap(),
        outcome.burn_in.len(),
        outcome.xi.iter().filter(|&&b| b).count()
    );

    // In a real deployment the sampled labels arrive now; in simulation the
    // dataset already has them all.
    let rule = SamplingRule::from_probs(outcome.probs).unwrap();
    let draw = LabelDraw::from_indicators(outcome.xi, 0);
    let result = estimate_mean(&data, &draw, &rule, 0.1).unwrap();

    let truth = data.labels().iter().sum::<f64>() / data.n() as f64;
    println!(
        "estimate {:.4} in [{:.4}, {:.4}], full-data mean {truth:.4}",
        result.estimate, result.ci_lo, result.ci_hi
    );
    println!(
        "labels used: {} of {} (max inverse weight {:.1})",
        result.n_labeled,
        data.n(),
        result.diagnostics.max_inverse_weight
    );
}
