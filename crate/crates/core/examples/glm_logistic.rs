//! Coefficient inference for a logistic regression under a label budget.
//!
//! The target is the slope on a binary treatment-style covariate, fitted
//! with an intercept. Prediction-corrected losses let every unlabeled unit
//! contribute through its predicted probability; the sampled units correct
//! the bias through inverse-probability weights.
//!
//! ```bash
//! cargo run -p robust-active-inference --example glm_logistic
//! ```

use robust_active_inference::data_model::{Dataset, EstimandSpec, Matrix};
use robust_active_inference::estimation::estimate_m;
use robust_active_inference::harness::{
    build_plan, full_data_estimate, ConstraintConfig, ConstraintKindConfig, FitterConfig,
    PlanContext, RhoPolicy, RuleRecipe,
};
use robust_active_inference::paths::PathKind;
use robust_active_inference::rng::Rng;
use robust_active_inference::sampler::LabelDraw;
use robust_active_inference::{Budget, RhoGrid, SamplingRule};

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn main() {
    // y ~ Bernoulli(sigmoid(-0.4 + 1.2 x)) with a slightly biased predictor.
    let n = 3000;
    let mut rng = Rng::new(2);
    let mut rows = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = f64::from(rng.next_f64() < 0.5);
        let p = sigmoid(-0.4 + 1.2 * x);
        rows.push(vec![x]);
        preds.push(sigmoid(-0.2 + 0.9 * x));
        labels.push(f64::from(rng.next_f64() < p));
    }
    let data =
        Dataset::new(Matrix::from_rows(&rows).unwrap(), preds, labels, vec![true; n]).unwrap();

    // Slope coordinate: intercept is column 0, the covariate column 1.
    let spec = EstimandSpec::logistic(1, true);
    let budget = Budget::new(600, n).unwrap();
    let fitter = FitterConfig::Knn { k: None };
    let ctx = PlanContext {
        data: &data,
        budget,
        burn_size: 150,
        estimand: spec,
        recipe: RuleRecipe::PropEhat,
        fitter: &fitter,
        path: PathKind::Geometric,
        grid: RhoGrid::default(),
        floor: 1e-3,
    };
    let constraint =
        ConstraintConfig { kind: ConstraintKindConfig::L2, c: Some(0.5), cv: None };
    let outcome = build_plan(&ctx, &RhoPolicy::Robust(&constraint), 77).unwrap();
    println!("rho = {:.3}, sampled {} labels", outcome.rho, outcome.xi.iter().filter(|&&b| b).count());

    let rule = SamplingRule::from_probs(outcome.probs).unwrap();
    let draw = LabelDraw::from_indicators(outcome.xi, 0);
    let result = estimate_m(&spec, &data, &draw, &rule, 0.1).unwrap();
    let full = full_data_estimate(&spec, &data).unwrap();

    println!(
        "slope estimate {:.4} in [{:.4}, {:.4}] after {} Newton iterations",
        result.estimate, result.ci_lo, result.ci_hi, result.diagnostics.solver_iterations
    );
    println!("full-data slope {:.4} (all {} labels)", full.estimate, n);
    println!("generating slope 1.2");
}
