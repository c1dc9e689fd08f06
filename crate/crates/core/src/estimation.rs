//! Inverse-probability-weighted estimators, plug-in variances, and
//! confidence intervals.
//!
//! Every estimator takes the prediction column as a free covariate and
//! corrects it with labeled residuals reweighted by `xi_i / pi_i`. Units
//! whose labels were not collected contribute only their prediction terms,
//! so a fully-unlabeled draw degrades softly to the prediction-only
//! estimate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data_model::{Dataset, EstimandKind, EstimandSpec, Matrix};
use crate::error::{Error, Result};
use crate::error_model::{design_matrix, hessian_inverse_column_for_design, HessianColumn};
use crate::normal;
use crate::paths::SamplingRule;
use crate::sampler::LabelDraw;

/// Convex per-unit loss family: the mean squared-error loss, linear
/// regression squared loss, and logistic log-loss. All three are affine in
/// the label, which is what lets predictions act as pseudo-labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    Mean,
    Linear,
    Logistic,
}

impl Loss {
    pub fn for_estimand(kind: EstimandKind) -> Self {
        match kind {
            EstimandKind::Mean => Loss::Mean,
            EstimandKind::LinearRegression => Loss::Linear,
            EstimandKind::LogisticRegression => Loss::Logistic,
        }
    }

    pub fn loss(&self, theta: &[f64], x: &[f64], y: f64) -> f64 {
        match self {
            Loss::Mean => {
                let r = y - theta[0];
                0.5 * r * r
            }
            Loss::Linear => {
                let r = y - dot(x, theta);
                0.5 * r * r
            }
            Loss::Logistic => {
                let eta = dot(x, theta);
                softplus(eta) - y * eta
            }
        }
    }

    pub fn gradient(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) {
        match self {
            Loss::Mean => out[0] = theta[0] - y,
            Loss::Linear => {
                let r = dot(x, theta) - y;
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = r * xi;
                }
            }
            Loss::Logistic => {
                let r = sigmoid(dot(x, theta)) - y;
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = r * xi;
                }
            }
        }
    }

    /// Hessian contribution of one unit, accumulated into `out` (p x p,
    /// row-major). Independent of the label for all three families.
    pub fn accumulate_hessian(&self, theta: &[f64], x: &[f64], out: &mut [f64], p: usize) {
        let w = match self {
            Loss::Mean | Loss::Linear => 1.0,
            Loss::Logistic => {
                let mu = sigmoid(dot(x, theta));
                mu * (1.0 - mu)
            }
        };
        for a in 0..p {
            for b in 0..p {
                out[a * p + b] += w * x[a] * x[b];
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else if t < -30.0 {
        t.exp()
    } else {
        (1.0 + t.exp()).ln()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Solver and weighting diagnostics attached to every estimate.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub max_inverse_weight: f64,
    pub solver_iterations: usize,
    pub newton_fallback: bool,
    pub zero_labels: bool,
}

/// Point estimate with its plug-in variance and confidence interval.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateResult {
    pub theta_hat: Vec<f64>,
    pub estimate: f64,
    pub sigma2_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_labeled: usize,
    pub alpha: f64,
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_labels(data: &Dataset, draw: &LabelDraw) -> Result<()> {
    let missing: Vec<usize> = (0..data.n())
        .filter(|&i| draw.xi()[i] && !data.observed()[i])
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingLabelAtSampledUnit { rows: missing })
    }
}

fn dims_check(data: &Dataset, draw: &LabelDraw, rule: &SamplingRule) -> Result<()> {
    if draw.len() != data.n() || rule.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "n={}, draw={}, rule={}",
            data.n(),
            draw.len(),
            rule.len()
        )));
    }
    Ok(())
}

/// Per-unit pseudo-outcome `f_i + (y_i - f_i) xi_i / pi_i`.
fn pseudo_outcomes(data: &Dataset, draw: &LabelDraw, rule: &SamplingRule) -> Vec<f64> {
    (0..data.n())
        .map(|i| {
            let f = data.predictions()[i];
            if draw.xi()[i] {
                f + (data.labels()[i] - f) / rule.probs()[i]
            } else {
                f
            }
        })
        .collect()
}

fn max_inverse_weight(draw: &LabelDraw, rule: &SamplingRule) -> f64 {
    draw.xi()
        .iter()
        .zip(rule.probs())
        .filter(|&(&xi, _)| xi)
        .map(|(_, &p)| 1.0 / p)
        .fold(0.0, f64::max)
}

/// Mean estimator: the average of the pseudo-outcomes.
pub fn estimate_mean(
    data: &Dataset,
    draw: &LabelDraw,
    rule: &SamplingRule,
    alpha: f64,
) -> Result<EstimateResult> {
    dims_check(data, draw, rule)?;
    check_labels(data, draw)?;
    let t = pseudo_outcomes(data, draw, rule);
    let theta = mean(&t);
    let sigma2 = population_variance(&t);
    let (ci_lo, ci_hi) = confidence_interval(theta, sigma2, data.n(), alpha);
    Ok(EstimateResult {
        theta_hat: vec![theta],
        estimate: theta,
        sigma2_hat: sigma2,
        ci_lo,
        ci_hi,
        n_labeled: draw.realized_count(),
        alpha,
        diagnostics: Diagnostics {
            max_inverse_weight: max_inverse_weight(draw, rule),
            solver_iterations: 0,
            newton_fallback: false,
            zero_labels: draw.realized_count() == 0,
        },
    })
}

/// M-estimator: minimizes the prediction-corrected empirical loss.
///
/// The mean delegates to [`estimate_mean`]. Linear regression has the closed
/// form `(X'X) theta = X' t` with pseudo-outcomes `t` (the label enters each
/// loss affinely, and the per-unit weights `1 - xi/pi` and `xi/pi` sum to
/// one). Logistic regression runs damped Newton from zero and falls back to
/// backtracking gradient descent if a Newton step fails, flagging the
/// fallback in the diagnostics.
pub fn estimate_m(
    spec: &EstimandSpec,
    data: &Dataset,
    draw: &LabelDraw,
    rule: &SamplingRule,
    alpha: f64,
) -> Result<EstimateResult> {
    spec.validate(data.d())?;
    if spec.kind == EstimandKind::Mean {
        return estimate_mean(data, draw, rule, alpha);
    }
    dims_check(data, draw, rule)?;
    check_labels(data, draw)?;

    let design = design_matrix(spec, data);
    let pseudo = pseudo_outcomes(data, draw, rule);

    let (theta, iterations, fallback) = match spec.kind {
        EstimandKind::LinearRegression => (solve_linear(&design, &pseudo)?, 0, false),
        EstimandKind::LogisticRegression => solve_logistic(&design, &pseudo)?,
        EstimandKind::Mean => unreachable!(),
    };

    let h = hessian_inverse_column_for_design(spec.kind, &design, &theta, spec.coordinate_j)?;
    let sigma2 = variance_plugin_inner(spec, data, draw, rule, &design, &theta, &h);
    let estimate = theta[spec.coordinate_j];
    let (ci_lo, ci_hi) = confidence_interval(estimate, sigma2, data.n(), alpha);
    Ok(EstimateResult {
        theta_hat: theta,
        estimate,
        sigma2_hat: sigma2,
        ci_lo,
        ci_hi,
        n_labeled: draw.realized_count(),
        alpha,
        diagnostics: Diagnostics {
            max_inverse_weight: max_inverse_weight(draw, rule),
            solver_iterations: iterations,
            newton_fallback: fallback,
            zero_labels: draw.realized_count() == 0,
        },
    })
}

fn solve_linear(design: &Matrix, pseudo: &[f64]) -> Result<Vec<f64>> {
    let p = design.ncols();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for (i, &t) in pseudo.iter().enumerate() {
        let row = design.row(i);
        for a in 0..p {
            xty[a] += row[a] * t;
            for b in a..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let lu = xtx.lu();
    let theta = lu.solve(&xty).ok_or(Error::SingularSystem)?;
    Ok(theta.iter().copied().collect())
}

const NEWTON_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 100;

/// Weighted logistic objective over pseudo-labels (may lie outside [0, 1]).
fn logistic_objective(design: &Matrix, pseudo: &[f64], theta: &[f64]) -> f64 {
    pseudo
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let eta = dot(design.row(i), theta);
            softplus(eta) - t * eta
        })
        .sum::<f64>()
        / pseudo.len() as f64
}

fn logistic_gradient(design: &Matrix, pseudo: &[f64], theta: &[f64], out: &mut DVector<f64>) {
    out.fill(0.0);
    for (i, &t) in pseudo.iter().enumerate() {
        let row = design.row(i);
        let r = sigmoid(dot(row, theta)) - t;
        for (a, &x) in row.iter().enumerate() {
            out[a] += r * x;
        }
    }
    *out /= pseudo.len() as f64;
}

fn solve_logistic(design: &Matrix, pseudo: &[f64]) -> Result<(Vec<f64>, usize, bool)> {
    let n = design.nrows();
    let p = design.ncols();
    let mut theta = vec![0.0; p];
    let mut grad = DVector::<f64>::zeros(p);
    let mut fallback = false;

    for iter in 0..NEWTON_MAX_ITER {
        logistic_gradient(design, pseudo, &theta, &mut grad);
        let gnorm = grad.norm();
        if gnorm <= NEWTON_TOL {
            return Ok((theta, iter, fallback));
        }
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let row = design.row(i);
            let mu = sigmoid(dot(row, &theta));
            let w = mu * (1.0 - mu);
            for a in 0..p {
                for b in a..p {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        hess /= n as f64;

        let direction = hess.lu().solve(&grad);
        let step: Vec<f64> = match direction {
            Some(d) if d.iter().all(|v| v.is_finite()) => d.iter().copied().collect(),
            // Singular curvature: descend along the gradient instead.
            _ => {
                fallback = true;
                grad.iter().copied().collect()
            }
        };

        // Step halving until the objective decreases.
        let current = logistic_objective(design, pseudo, &theta);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let candidate: Vec<f64> =
                theta.iter().zip(&step).map(|(t, s)| t - scale * s).collect();
            let value = logistic_objective(design, pseudo, &candidate);
            if value.is_finite() && value < current {
                theta = candidate;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // No descent in this direction; try plain gradient descent once
            // before giving up.
            if !fallback {
                fallback = true;
                let mut scale = 1.0;
                for _ in 0..50 {
                    let candidate: Vec<f64> =
                        theta.iter().zip(grad.iter()).map(|(t, g)| t - scale * g).collect();
                    let value = logistic_objective(design, pseudo, &candidate);
                    if value.is_finite() && value < current {
                        theta = candidate;
                        accepted = true;
                        break;
                    }
                    scale *= 0.5;
                }
            }
            if !accepted {
                return Err(Error::NoConvergence { iterations: iter, grad_norm: gnorm });
            }
        }
    }
    logistic_gradient(design, pseudo, &theta, &mut grad);
    let gnorm = grad.norm();
    if gnorm <= 1e-5 {
        // Close enough for the plug-in variance; flag the rough finish.
        return Ok((theta, NEWTON_MAX_ITER, true));
    }
    Err(Error::NoConvergence { iterations: NEWTON_MAX_ITER, grad_norm: gnorm })
}

/// Plug-in variance of the requested coordinate: the empirical variance of
/// the per-unit influence terms.
pub fn variance_plugin(
    spec: &EstimandSpec,
    data: &Dataset,
    draw: &LabelDraw,
    rule: &SamplingRule,
    theta_hat: &[f64],
    h: &HessianColumn,
) -> Result<f64> {
    dims_check(data, draw, rule)?;
    if spec.kind == EstimandKind::Mean {
        let t = pseudo_outcomes(data, draw, rule);
        return Ok(population_variance(&t));
    }
    let design = design_matrix(spec, data);
    Ok(variance_plugin_inner(spec, data, draw, rule, &design, theta_hat, h))
}

fn variance_plugin_inner(
    spec: &EstimandSpec,
    data: &Dataset,
    draw: &LabelDraw,
    rule: &SamplingRule,
    design: &Matrix,
    theta_hat: &[f64],
    h: &HessianColumn,
) -> f64 {
    let loss = Loss::for_estimand(spec.kind);
    let p = design.ncols();
    let mut grad_f = vec![0.0; p];
    let mut grad_y = vec![0.0; p];
    let influences: Vec<f64> = (0..data.n())
        .map(|i| {
            let row = design.row(i);
            loss.gradient(theta_hat, row, data.predictions()[i], &mut grad_f);
            let mut s = dot(&grad_f, h.as_slice());
            if draw.xi()[i] {
                loss.gradient(theta_hat, row, data.labels()[i], &mut grad_y);
                let correction: f64 = grad_y
                    .iter()
                    .zip(&grad_f)
                    .zip(h.as_slice())
                    .map(|((gy, gf), hj)| (gy - gf) * hj)
                    .sum();
                s += correction / rule.probs()[i];
            }
            s
        })
        .collect();
    population_variance(&influences)
}

/// Two-sided normal interval `estimate +- z_{1-alpha/2} sqrt(sigma2 / n)`.
pub fn confidence_interval(estimate: f64, sigma2_hat: f64, n: usize, alpha: f64) -> (f64, f64) {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha={alpha} outside (0, 1)");
    let half_width = if sigma2_hat <= 0.0 {
        0.0
    } else {
        normal::inverse_cdf(1.0 - alpha / 2.0) * (sigma2_hat / n as f64).sqrt()
    };
    (estimate - half_width, estimate + half_width)
}
