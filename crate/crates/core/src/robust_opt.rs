//! Worst-case tuning of the path parameter `rho`.
//!
//! The plain objective is the empirical variance surrogate
//! `(1/n) sum_i ehat2_i / pi_i`. The robust variant maximizes the same
//! objective over an admissible set of additive perturbations to `ehat2`
//! before minimizing over `rho`; every implemented set admits a closed-form
//! inner maximizer, so the outer problem is a one-dimensional grid search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::ErrorEstimate;
use crate::paths::{path_eval, PathKind, SamplingRule};
use crate::rng::Rng;

/// Admissible misspecification region for the inner maximization.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSet {
    /// No perturbation: the inner maximum equals the plain objective.
    None,
    /// `||eps||_2 <= c`.
    L2 { c: f64 },
    /// `||eps||_1 <= c`.
    L1 { c: f64 },
    /// `eps_i = ehat2_i * eta_i` with `||eta||_1 <= c`.
    RelativeL1 { c: f64 },
    /// `eps_i = ehat2_i * eta_i` with `||eta||_2 <= c`.
    RelativeL2 { c: f64 },
    /// Independent L2 balls per region: `||eps_r||_2 <= c_r`.
    StructuredL2 {
        region_labels: Vec<usize>,
        c_per_region: BTreeMap<usize, f64>,
    },
}

impl ConstraintSet {
    pub fn validate(&self, n: usize) -> Result<()> {
        let check_c = |c: f64| {
            if c.is_finite() && c >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("constraint radius {c} must be finite >= 0")))
            }
        };
        match self {
            ConstraintSet::None => Ok(()),
            ConstraintSet::L2 { c }
            | ConstraintSet::L1 { c }
            | ConstraintSet::RelativeL1 { c }
            | ConstraintSet::RelativeL2 { c } => check_c(*c),
            ConstraintSet::StructuredL2 { region_labels, c_per_region } => {
                if region_labels.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{} region labels for n={n}",
                        region_labels.len()
                    )));
                }
                for &r in region_labels {
                    match c_per_region.get(&r) {
                        Some(&c) => check_c(c)?,
                        None => {
                            return Err(Error::InvalidInput(format!(
                                "region {r} has no radius"
                            )))
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Restrict the set to a subset of units (used when burn-in units are
    /// excluded from the active phase).
    pub fn restrict(&self, idx: &[usize]) -> ConstraintSet {
        match self {
            ConstraintSet::StructuredL2 { region_labels, c_per_region } => {
                ConstraintSet::StructuredL2 {
                    region_labels: idx.iter().map(|&i| region_labels[i]).collect(),
                    c_per_region: c_per_region.clone(),
                }
            }
            other => other.clone(),
        }
    }
}

/// Evenly spaced grid on `[0, 1]` that always contains both endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoGrid {
    pub step: f64,
}

impl RhoGrid {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidInput(format!("grid step {step} outside (0, 1]")));
        }
        Ok(Self { step })
    }

    pub fn points(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        let mut k = 0u64;
        loop {
            let rho = k as f64 * self.step;
            if rho >= 1.0 - 1e-12 {
                break;
            }
            pts.push(rho);
            k += 1;
        }
        pts.push(1.0);
        pts
    }
}

impl Default for RhoGrid {
    fn default() -> Self {
        Self { step: 0.01 }
    }
}

/// Empirical variance surrogate `(1/n) sum_i ehat2_i / pi_i`.
pub fn objective(ehat2: &ErrorEstimate, rule: &SamplingRule) -> f64 {
    debug_assert_eq!(ehat2.len(), rule.len());
    let n = rule.len() as f64;
    ehat2
        .values()
        .iter()
        .zip(rule.probs())
        .map(|(&e2, &p)| e2 / p)
        .sum::<f64>()
        / n
}

/// Result of the inner maximization: the worst-case objective value and the
/// maximizing perturbation.
#[derive(Clone, Debug)]
pub struct InnerMax {
    pub value: f64,
    pub eps: Vec<f64>,
}

/// Maximize `(1/n) sum_i (ehat2_i + eps_i) / pi_i` over the constraint set.
///
/// With weights `w_i = 1 / (n pi_i)` the perturbation term is the linear form
/// `<eps, w>`, so each ball has a closed-form maximizer.
pub fn inner_max(
    ehat2: &ErrorEstimate,
    rule: &SamplingRule,
    cset: &ConstraintSet,
) -> Result<InnerMax> {
    let n = rule.len();
    if ehat2.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} error values for n={n}",
            ehat2.len()
        )));
    }
    cset.validate(n)?;
    let base = objective(ehat2, rule);
    let w: Vec<f64> = rule.probs().iter().map(|&p| 1.0 / (n as f64 * p)).collect();

    let out = match cset {
        ConstraintSet::None => InnerMax { value: base, eps: vec![0.0; n] },
        ConstraintSet::L2 { c } => {
            let norm = w.iter().map(|&x| x * x).sum::<f64>().sqrt();
            if *c == 0.0 || norm == 0.0 {
                InnerMax { value: base, eps: vec![0.0; n] }
            } else {
                let eps: Vec<f64> = w.iter().map(|&x| c * x / norm).collect();
                InnerMax { value: base + c * norm, eps }
            }
        }
        ConstraintSet::L1 { c } => {
            // All mass on the largest weight, i.e. the smallest probability;
            // ties break toward the lowest index.
            let (best, &wmax) = w
                .iter()
                .enumerate()
                .fold((0usize, &w[0]), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
            let mut eps = vec![0.0; n];
            eps[best] = *c;
            InnerMax { value: base + c * wmax, eps }
        }
        ConstraintSet::RelativeL1 { c } => {
            let g: Vec<f64> = ehat2.values().iter().zip(&w).map(|(&e2, &x)| e2 * x).collect();
            let (best, &gmax) = g
                .iter()
                .enumerate()
                .fold((0usize, &g[0]), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
            let mut eps = vec![0.0; n];
            eps[best] = c * ehat2.values()[best];
            InnerMax { value: base + c * gmax, eps }
        }
        ConstraintSet::RelativeL2 { c } => {
            let g: Vec<f64> = ehat2.values().iter().zip(&w).map(|(&e2, &x)| e2 * x).collect();
            let norm = g.iter().map(|&x| x * x).sum::<f64>().sqrt();
            if *c == 0.0 || norm == 0.0 {
                InnerMax { value: base, eps: vec![0.0; n] }
            } else {
                let eps: Vec<f64> = ehat2
                    .values()
                    .iter()
                    .zip(&g)
                    .map(|(&e2, &gi)| e2 * (c * gi / norm))
                    .collect();
                InnerMax { value: base + c * norm, eps }
            }
        }
        ConstraintSet::StructuredL2 { region_labels, c_per_region } => {
            let mut eps = vec![0.0; n];
            let mut value = base;
            for (&region, &c) in c_per_region {
                if c == 0.0 {
                    continue;
                }
                let members: Vec<usize> = (0..n).filter(|&i| region_labels[i] == region).collect();
                if members.is_empty() {
                    continue;
                }
                let norm = members.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                for &i in &members {
                    eps[i] = c * w[i] / norm;
                }
                value += c * norm;
            }
            InnerMax { value, eps }
        }
    };
    Ok(out)
}

/// One grid evaluation of the outer search.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RhoTraceRow {
    pub rho: f64,
    pub objective: f64,
    pub robust_value: f64,
}

/// Outcome of the grid search over `rho`.
#[derive(Clone, Debug)]
pub struct RhoSolution {
    pub rho: f64,
    pub value: f64,
    pub trace: Vec<RhoTraceRow>,
}

/// The path materialized on a grid: one rule per grid point. Building this
/// once lets several constraint sets (e.g. cross-validation candidates) share
/// the path evaluations.
#[derive(Clone, Debug)]
pub struct PathRules {
    pub kind: PathKind,
    pub points: Vec<f64>,
    pub rules: Vec<SamplingRule>,
}

impl PathRules {
    pub fn build(kind: PathKind, pi: &SamplingRule, grid: &RhoGrid) -> Result<Self> {
        let points = grid.points();
        let mut rules = Vec::with_capacity(points.len());
        for &rho in &points {
            rules.push(path_eval(kind, pi, rho)?);
        }
        Ok(Self { kind, points, rules })
    }

    /// Rule at a grid point previously returned by [`solve_on_path`].
    pub fn rule_at(&self, rho: f64) -> Option<&SamplingRule> {
        self.points.iter().position(|&r| r == rho).map(|i| &self.rules[i])
    }
}

/// Worst-case objective value without materializing the maximizer.
pub fn inner_max_value(
    ehat2: &ErrorEstimate,
    rule: &SamplingRule,
    cset: &ConstraintSet,
) -> Result<f64> {
    let n = rule.len();
    if ehat2.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} error values for n={n}",
            ehat2.len()
        )));
    }
    cset.validate(n)?;
    let base = objective(ehat2, rule);
    let nf = n as f64;
    let value = match cset {
        ConstraintSet::None => base,
        ConstraintSet::L2 { c } => {
            let norm2: f64 = rule.probs().iter().map(|&p| 1.0 / (nf * p)).map(|w| w * w).sum();
            base + c * norm2.sqrt()
        }
        ConstraintSet::L1 { c } => {
            let wmax = rule
                .probs()
                .iter()
                .map(|&p| 1.0 / (nf * p))
                .fold(f64::NEG_INFINITY, f64::max);
            base + c * wmax
        }
        ConstraintSet::RelativeL1 { c } => {
            let gmax = ehat2
                .values()
                .iter()
                .zip(rule.probs())
                .map(|(&e2, &p)| e2 / (nf * p))
                .fold(f64::NEG_INFINITY, f64::max);
            base + c * gmax
        }
        ConstraintSet::RelativeL2 { c } => {
            let norm2: f64 = ehat2
                .values()
                .iter()
                .zip(rule.probs())
                .map(|(&e2, &p)| e2 / (nf * p))
                .map(|g| g * g)
                .sum();
            base + c * norm2.sqrt()
        }
        ConstraintSet::StructuredL2 { region_labels, c_per_region } => {
            let mut value = base;
            for (&region, &c) in c_per_region {
                if c == 0.0 {
                    continue;
                }
                let norm2: f64 = rule
                    .probs()
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| region_labels[i] == region)
                    .map(|(_, &p)| {
                        let w = 1.0 / (nf * p);
                        w * w
                    })
                    .sum();
                value += c * norm2.sqrt();
            }
            value
        }
    };
    Ok(value)
}

/// Grid-search `rho` against a prebuilt path. Ties break toward larger `rho`
/// (closer to uniform).
pub fn solve_on_path(
    path: &PathRules,
    ehat2: &ErrorEstimate,
    cset: &ConstraintSet,
) -> Result<RhoSolution> {
    let mut trace = Vec::with_capacity(path.points.len());
    let mut best_rho = path.points[0];
    let mut best_value = f64::INFINITY;
    for (&rho, rule) in path.points.iter().zip(&path.rules) {
        let plain = objective(ehat2, rule);
        let robust_value = inner_max_value(ehat2, rule, cset)?;
        trace.push(RhoTraceRow { rho, objective: plain, robust_value });
        if robust_value <= best_value {
            best_value = robust_value;
            best_rho = rho;
        }
    }
    Ok(RhoSolution { rho: best_rho, value: best_value, trace })
}

/// Grid-search the worst-case objective over `rho` in `[0, 1]`.
pub fn solve_rho(
    kind: PathKind,
    pi: &SamplingRule,
    ehat2: &ErrorEstimate,
    cset: &ConstraintSet,
    grid: &RhoGrid,
) -> Result<RhoSolution> {
    let path = PathRules::build(kind, pi, grid)?;
    solve_on_path(&path, ehat2, cset)
}

/// Write a solve trace as CSV (`rho, objective, robust_value`).
pub fn write_trace_csv<P: AsRef<std::path::Path>>(trace: &[RhoTraceRow], path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["rho", "objective", "robust_value"])?;
    for row in trace {
        w.write_record(&[
            format!("{}", row.rho),
            format!("{}", row.objective),
            format!("{}", row.robust_value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cross-validation outcome: the chosen radius and every candidate's score.
#[derive(Clone, Debug, Serialize)]
pub struct CvResult {
    pub c_star: f64,
    pub scores: Vec<CvScore>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CvScore {
    pub c: f64,
    pub score: f64,
}

/// Default candidate radii: zero plus seven log-spaced multiples
/// (1e-2 .. 1e1) of the L2 norm of the full-burn-in error fit.
pub fn default_c_grid(ehat2_full: &ErrorEstimate) -> Vec<f64> {
    let norm = ehat2_full.values().iter().map(|&v| v * v).sum::<f64>().sqrt();
    let mut grid = vec![0.0];
    for k in 0..7 {
        let exponent = -2.0 + 3.0 * k as f64 / 6.0;
        grid.push(10f64.powf(exponent) * norm);
    }
    grid
}

/// Choose the constraint radius by K-fold cross-validation on the burn-in.
///
/// For each fold the error model is refit on the training folds (via the
/// caller-supplied `fit` closure mapping training indices to a full-length
/// error estimate), `rho` is solved per candidate radius, and the candidate
/// is scored by the validation-fold mean of `r_i^2 / pi^(rho)_i`, an unbiased
/// stand-in for the variance surrogate. Ties break toward the larger radius.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_c<F>(
    burn_in: &[usize],
    residual2: &[f64],
    pi: &SamplingRule,
    kind: PathKind,
    grid: &RhoGrid,
    folds: usize,
    c_grid: &[f64],
    make_cset: impl Fn(f64) -> ConstraintSet,
    seed: u64,
    fit: F,
) -> Result<CvResult>
where
    F: Fn(&[usize]) -> Result<ErrorEstimate>,
{
    if folds < 2 || burn_in.len() < folds {
        return Err(Error::BurnInTooSmall { size: burn_in.len(), needed: folds.max(2) });
    }
    if c_grid.is_empty() {
        return Err(Error::InvalidInput("empty candidate grid".into()));
    }
    let path = PathRules::build(kind, pi, grid)?;

    // Seeded shuffle, then stripe into folds.
    let mut order: Vec<usize> = burn_in.to_vec();
    Rng::new(seed).shuffle(&mut order);
    let mut fold_of = vec![0usize; order.len()];
    for (pos, _) in order.iter().enumerate() {
        fold_of[pos] = pos % folds;
    }

    // Per-point inverse probabilities, shared across folds and candidates.
    let n = pi.len();
    let inv_probs: Vec<Vec<f64>> = path
        .rules
        .iter()
        .map(|rule| rule.probs().iter().map(|&p| 1.0 / (n as f64 * p)).collect())
        .collect();
    // The worst-case value is objective + c * gain with gain independent of
    // c for every ball family; for the absolute-norm families the gain does
    // not depend on the fold's error fit either.
    let unit_cset = make_cset(1.0);
    let fold_invariant_gains: Option<Vec<f64>> = match &unit_cset {
        ConstraintSet::None | ConstraintSet::L2 { .. } | ConstraintSet::L1 { .. } => Some(
            inv_probs
                .iter()
                .map(|w| match &unit_cset {
                    ConstraintSet::L2 { .. } => {
                        w.iter().map(|&x| x * x).sum::<f64>().sqrt()
                    }
                    ConstraintSet::L1 { .. } => w.iter().copied().fold(0.0, f64::max),
                    _ => 0.0,
                })
                .collect(),
        ),
        _ => None,
    };

    let mut totals = vec![0.0; c_grid.len()];
    for fold in 0..folds {
        let train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|&(pos, _)| fold_of[pos] != fold)
            .map(|(_, &i)| i)
            .collect();
        let valid: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|&(pos, _)| fold_of[pos] == fold)
            .map(|(_, &i)| i)
            .collect();
        let ehat2 = fit(&train)?;
        let mut objectives = Vec::with_capacity(path.points.len());
        let mut gains = Vec::with_capacity(path.points.len());
        for (k, rule) in path.rules.iter().enumerate() {
            let obj: f64 = ehat2
                .values()
                .iter()
                .zip(&inv_probs[k])
                .map(|(&e2, &w)| e2 * w)
                .sum();
            objectives.push(obj);
            match &fold_invariant_gains {
                Some(g) => gains.push(g[k]),
                None => gains.push(inner_max_value(&ehat2, rule, &unit_cset)? - obj),
            }
        }
        for (ci, &c) in c_grid.iter().enumerate() {
            let mut best_k = 0;
            let mut best_value = f64::INFINITY;
            for k in 0..path.points.len() {
                let value = objectives[k] + c * gains[k];
                if value <= best_value {
                    best_value = value;
                    best_k = k;
                }
            }
            let rule = &path.rules[best_k];
            let score: f64 = valid
                .iter()
                .map(|&i| residual2[i] / rule.probs()[i])
                .sum::<f64>()
                / valid.len() as f64;
            totals[ci] += score;
        }
    }

    let mut scores = Vec::with_capacity(c_grid.len());
    let mut c_star = c_grid[0];
    let mut best = f64::INFINITY;
    let mut indexed: Vec<(f64, f64)> =
        c_grid.iter().zip(&totals).map(|(&c, &t)| (c, t / folds as f64)).collect();
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for &(c, score) in &indexed {
        scores.push(CvScore { c, score });
        if score <= best {
            best = score;
            c_star = c;
        }
    }
    Ok(CvResult { c_star, scores })
}

/// Depth-limited axis-aligned decision tree over two classes:
/// 1 where the error model underestimates (`r^2 > ehat2`, "overconfident"),
/// 0 elsewhere. Splits greedily by Gini impurity; pure misclassification
/// gain is zero for any split that leaves both children majority-0, which is
/// exactly the geometry this learner must handle, so Gini is used instead.
#[derive(Clone, Debug)]
pub enum RegionTree {
    Leaf {
        class: usize,
    },
    Node {
        feature: usize,
        threshold: f64,
        left: Box<RegionTree>,
        right: Box<RegionTree>,
    },
}

impl RegionTree {
    /// Fit on burn-in rows. Deterministic: split ties break toward the lower
    /// feature index, then the lower threshold.
    pub fn fit(
        features: &crate::data_model::Matrix,
        residuals_sq: &[f64],
        ehat2: &[f64],
        depth: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::EmptyBurnIn);
        }
        if residuals_sq.len() != n || ehat2.len() != n {
            return Err(Error::DimensionMismatch(
                "residuals and error estimates must match the burn-in rows".into(),
            ));
        }
        let classes: Vec<usize> =
            residuals_sq.iter().zip(ehat2).map(|(&r2, &e2)| usize::from(r2 > e2)).collect();
        let idx: Vec<usize> = (0..n).collect();
        Ok(Self::fit_node(features, &classes, &idx, depth))
    }

    fn majority(classes: &[usize], idx: &[usize]) -> usize {
        let ones: usize = idx.iter().map(|&i| classes[i]).sum();
        usize::from(2 * ones > idx.len())
    }

    fn gini(ones: f64, total: f64) -> f64 {
        if total == 0.0 {
            return 0.0;
        }
        let p = ones / total;
        2.0 * p * (1.0 - p) * total
    }

    fn fit_node(
        features: &crate::data_model::Matrix,
        classes: &[usize],
        idx: &[usize],
        depth: usize,
    ) -> Self {
        let majority = Self::majority(classes, idx);
        if depth == 0 || idx.len() < 2 {
            return RegionTree::Leaf { class: majority };
        }
        let total_ones: f64 = idx.iter().map(|&i| classes[i] as f64).sum();
        let total = idx.len() as f64;
        if total_ones == 0.0 || total_ones == total {
            return RegionTree::Leaf { class: majority };
        }
        let parent_impurity = Self::gini(total_ones, total);

        let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
        for feature in 0..features.ncols() {
            let mut vals: Vec<(f64, usize)> =
                idx.iter().map(|&i| (features.get(i, feature), classes[i])).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut left_ones = 0.0;
            let mut left_n = 0.0;
            for w in 0..vals.len() - 1 {
                left_ones += vals[w].1 as f64;
                left_n += 1.0;
                if vals[w].0 == vals[w + 1].0 {
                    continue;
                }
                let threshold = 0.5 * (vals[w].0 + vals[w + 1].0);
                let impurity = Self::gini(left_ones, left_n)
                    + Self::gini(total_ones - left_ones, total - left_n);
                let better = match best {
                    None => impurity < parent_impurity - 1e-12,
                    Some((bi, bf, bt)) => {
                        impurity < bi - 1e-12
                            || ((impurity - bi).abs() <= 1e-12
                                && (feature < bf || (feature == bf && threshold < bt)))
                    }
                };
                if better {
                    best = Some((impurity, feature, threshold));
                }
            }
        }

        match best {
            None => RegionTree::Leaf { class: majority },
            Some((_, feature, threshold)) => {
                let left_idx: Vec<usize> =
                    idx.iter().copied().filter(|&i| features.get(i, feature) <= threshold).collect();
                let right_idx: Vec<usize> =
                    idx.iter().copied().filter(|&i| features.get(i, feature) > threshold).collect();
                RegionTree::Node {
                    feature,
                    threshold,
                    left: Box::new(Self::fit_node(features, classes, &left_idx, depth - 1)),
                    right: Box::new(Self::fit_node(features, classes, &right_idx, depth - 1)),
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        match self {
            RegionTree::Leaf { class } => *class,
            RegionTree::Node { feature, threshold, left, right } => {
                if row[*feature] <= *threshold {
                    left.predict_row(row)
                } else {
                    right.predict_row(row)
                }
            }
        }
    }

    pub fn predict(&self, features: &crate::data_model::Matrix) -> Vec<usize> {
        (0..features.nrows()).map(|i| self.predict_row(features.row(i))).collect()
    }
}

/// Fit the region tree on burn-in data and label every query row.
pub fn learn_regions(
    burn_features: &crate::data_model::Matrix,
    residuals_sq: &[f64],
    ehat2: &[f64],
    depth: usize,
    query: &crate::data_model::Matrix,
) -> Result<Vec<usize>> {
    let tree = RegionTree::fit(burn_features, residuals_sq, ehat2, depth)?;
    Ok(tree.predict(query))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{Budget, Matrix};
    use crate::error_model::ErrorSource;
    use crate::paths::{normalize_to_budget, uniform_rule};

    fn estimate(values: Vec<f64>) -> ErrorEstimate {
        ErrorEstimate::new(values, ErrorSource::ExternalColumn).unwrap()
    }

    fn budget(n_b: usize, n: usize) -> Budget {
        Budget::new(n_b, n).unwrap()
    }

    #[test]
    fn objective_hand_values() {
        let rule = uniform_rule(&budget(1, 2));
        assert_eq!(objective(&estimate(vec![0.0, 0.0]), &rule), 0.0);
        assert_eq!(objective(&estimate(vec![1.0, 1.0]), &rule), 2.0);

        let rule = SamplingRule::from_probs(vec![0.5, 0.25]).unwrap();
        assert_eq!(objective(&estimate(vec![1.0, 4.0]), &rule), 9.0);
    }

    #[test]
    fn inner_max_zero_radius_degenerates() {
        let rule = uniform_rule(&budget(1, 2));
        let e = estimate(vec![1.0, 1.0]);
        for cset in [
            ConstraintSet::L2 { c: 0.0 },
            ConstraintSet::L1 { c: 0.0 },
            ConstraintSet::RelativeL1 { c: 0.0 },
            ConstraintSet::RelativeL2 { c: 0.0 },
        ] {
            let out = inner_max(&e, &rule, &cset).unwrap();
            assert_eq!(out.value, objective(&e, &rule));
            assert!(out.eps.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn inner_max_l2_closed_form() {
        let rule = uniform_rule(&budget(1, 2));
        let e = estimate(vec![1.0, 1.0]);
        let out = inner_max(&e, &rule, &ConstraintSet::L2 { c: 1.0 }).unwrap();
        assert!((out.value - (2.0 + 2.0_f64.sqrt())).abs() < 1e-12);
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        assert!((out.eps[0] - inv_sqrt2).abs() < 1e-12);
        assert!((out.eps[1] - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn inner_max_l1_closed_form() {
        let rule = uniform_rule(&budget(1, 2));
        let e = estimate(vec![1.0, 1.0]);
        let out = inner_max(&e, &rule, &ConstraintSet::L1 { c: 1.0 }).unwrap();
        assert!((out.value - 3.0).abs() < 1e-12);
        assert_eq!(out.eps, vec![1.0, 0.0]); // tie -> lowest index
    }

    #[test]
    fn inner_max_none_equals_objective() {
        let rule = SamplingRule::from_probs(vec![0.9, 0.3, 0.3]).unwrap();
        let e = estimate(vec![0.5, 2.0, 0.1]);
        let out = inner_max(&e, &rule, &ConstraintSet::None).unwrap();
        assert_eq!(out.value, objective(&e, &rule));
    }

    #[test]
    fn inner_max_dominates_random_feasible_points() {
        let mut rng = Rng::new(77);
        let n = 12;
        for trial in 0..20 {
            let weights: Vec<f64> = (0..n).map(|_| 0.2 + rng.next_f64()).collect();
            let rule = normalize_to_budget(&weights, &budget(4, n), 1e-3).unwrap();
            let e = estimate((0..n).map(|_| rng.next_f64() * 2.0).collect());
            let c = 0.5 + rng.next_f64();
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let mut cmap = BTreeMap::new();
            cmap.insert(0, c);
            cmap.insert(1, 0.3 * c);
            for cset in [
                ConstraintSet::L2 { c },
                ConstraintSet::L1 { c },
                ConstraintSet::RelativeL1 { c },
                ConstraintSet::RelativeL2 { c },
                ConstraintSet::StructuredL2 { region_labels: labels.clone(), c_per_region: cmap },
            ] {
                let out = inner_max(&e, &rule, &cset).unwrap();
                for _ in 0..100 {
                    let eps = crate::robust_opt::test_support::sample_feasible(
                        &cset,
                        e.values(),
                        &mut rng,
                    );
                    let value: f64 = e
                        .values()
                        .iter()
                        .zip(&eps)
                        .zip(rule.probs())
                        .map(|((&e2, &ep), &p)| (e2 + ep) / p)
                        .sum::<f64>()
                        / n as f64;
                    assert!(
                        out.value >= value - 1e-10,
                        "trial {trial}: {cset:?} value {} < sample {value}",
                        out.value
                    );
                }
            }
        }
    }

    #[test]
    fn inner_max_value_is_monotone_in_c() {
        let rule = SamplingRule::from_probs(vec![0.9, 0.3, 0.3]).unwrap();
        let e = estimate(vec![0.5, 2.0, 0.1]);
        for make in [
            (|c| ConstraintSet::L2 { c }) as fn(f64) -> ConstraintSet,
            (|c| ConstraintSet::L1 { c }) as fn(f64) -> ConstraintSet,
        ] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..10 {
                let c = k as f64 * 0.5;
                let v = inner_max(&e, &rule, &make(c)).unwrap().value;
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn grid_contains_endpoints() {
        assert_eq!(RhoGrid::new(1.0).unwrap().points(), vec![0.0, 1.0]);
        let pts = RhoGrid::new(0.01).unwrap().points();
        assert_eq!(pts.len(), 101);
        assert_eq!(pts[0], 0.0);
        assert_eq!(*pts.last().unwrap(), 1.0);
        let pts = RhoGrid::new(0.3).unwrap().points();
        assert_eq!(pts.len(), 5);
        assert_eq!(*pts.last().unwrap(), 1.0);
    }

    #[test]
    fn constant_error_prefers_uniform() {
        let weights: Vec<f64> = (0..20).map(|i| 1.0 + (i % 5) as f64).collect();
        let pi = normalize_to_budget(&weights, &budget(6, 20), 1e-3).unwrap();
        let e = estimate(vec![1.0; 20]);
        for kind in [PathKind::Linear, PathKind::Geometric, PathKind::Hellinger] {
            let sol =
                solve_rho(kind, &pi, &e, &ConstraintSet::None, &RhoGrid::default()).unwrap();
            assert_eq!(sol.rho, 1.0, "{kind:?}");
        }
    }

    #[test]
    fn proportional_rule_prefers_rho_zero() {
        // pi proportional to ehat (without clipping): the plain objective is
        // minimized exactly at the active endpoint.
        let ehat: Vec<f64> = (0..30).map(|i| 0.5 + 1.5 * ((i as f64 * 0.7).sin().abs())).collect();
        let ehat2: Vec<f64> = ehat.iter().map(|&v| v * v).collect();
        let pi = normalize_to_budget(&ehat, &budget(9, 30), 1e-3).unwrap();
        for kind in [PathKind::Linear, PathKind::Geometric, PathKind::Hellinger] {
            let sol = solve_rho(kind, &pi, &estimate(ehat2.clone()), &ConstraintSet::None, &RhoGrid::default())
                .unwrap();
            assert_eq!(sol.rho, 0.0, "{kind:?}");
        }
    }

    #[test]
    fn two_point_grid_picks_better_endpoint() {
        let ehat: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        let ehat2: Vec<f64> = ehat.iter().map(|&v| v * v).collect();
        let pi = normalize_to_budget(&ehat, &budget(3, 10), 1e-3).unwrap();
        let grid = RhoGrid::new(1.0).unwrap();
        let sol = solve_rho(PathKind::Geometric, &pi, &estimate(ehat2), &ConstraintSet::None, &grid)
            .unwrap();
        assert_eq!(sol.trace.len(), 2);
        assert_eq!(sol.rho, 0.0); // proportional rule wins at the active end
        assert!(sol.value <= sol.trace[1].robust_value);
    }

    #[test]
    fn solution_dominates_both_endpoints() {
        let weights: Vec<f64> = (0..40).map(|i| 0.3 + ((i * 13) % 7) as f64).collect();
        let pi = normalize_to_budget(&weights, &budget(10, 40), 1e-3).unwrap();
        let e = estimate((0..40).map(|i| 0.1 + ((i * 5) % 11) as f64 * 0.3).collect());
        let sol = solve_rho(
            PathKind::Geometric,
            &pi,
            &e,
            &ConstraintSet::L2 { c: 2.0 },
            &RhoGrid::default(),
        )
        .unwrap();
        assert!(sol.value <= sol.trace[0].robust_value);
        assert!(sol.value <= sol.trace.last().unwrap().robust_value);
    }

    #[test]
    fn cv_tie_break_toward_larger_c() {
        // With zero residuals every candidate scores identically, so the
        // largest radius wins the tie.
        let n = 40;
        let pi = uniform_rule(&budget(10, n));
        let burn: Vec<usize> = (0..20).collect();
        let residual2 = vec![0.0; n];
        let result = cross_validate_c(
            &burn,
            &residual2,
            &pi,
            PathKind::Geometric,
            &RhoGrid::new(0.1).unwrap(),
            4,
            &[0.0, 1.0, 5.0],
            |c| ConstraintSet::L2 { c },
            9,
            |_train| Ok(estimate(vec![1.0; n])),
        )
        .unwrap();
        assert_eq!(result.c_star, 5.0);
    }

    #[test]
    fn cv_radius_tracks_error_fit_quality() {
        // Residuals equal to the error estimate exactly: the smallest radii
        // score best. Anti-correlated estimates: the largest radius wins and
        // drags rho toward uniform.
        let n = 200;
        let mut rng = Rng::new(31);
        let scale: Vec<f64> = (0..n).map(|_| rng.next_uniform(0.5, 2.0)).collect();
        let burn: Vec<usize> = (0..80).collect();
        let grid = RhoGrid::new(0.05).unwrap();
        let c_grid = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
        let median = 2.0;

        let run = |ehat2: Vec<f64>, residual2: Vec<f64>| {
            let ehat: Vec<f64> = ehat2.iter().map(|&v| v.sqrt()).collect();
            let pi = normalize_to_budget(&ehat, &budget(50, n), 1e-3).unwrap();
            let fit_values = ehat2.clone();
            let result = cross_validate_c(
                &burn,
                &residual2,
                &pi,
                PathKind::Geometric,
                &grid,
                5,
                &c_grid,
                |c| ConstraintSet::L2 { c },
                9,
                move |_train| estimate_ok(fit_values.clone()),
            )
            .unwrap();
            let e = estimate(ehat2);
            let rho_at = |c: f64| {
                solve_rho(PathKind::Geometric, &pi, &e, &ConstraintSet::L2 { c }, &grid)
                    .unwrap()
                    .rho
            };
            (result.c_star, rho_at(result.c_star), rho_at(0.0))
        };

        // Degenerate perfect fit: r^2 == ehat^2 per unit.
        let perfect_e2: Vec<f64> = scale.iter().map(|&s| s * s).collect();
        let (c_star, _, _) = run(perfect_e2.clone(), perfect_e2);
        assert!(c_star <= median, "perfect fit chose c={c_star}");

        // Adversarial fit: confident exactly where errors are large.
        let adv_e2: Vec<f64> = scale.iter().map(|&s| 1.0 / (s * s)).collect();
        let adv_r2: Vec<f64> = scale.iter().map(|&s| s * s).collect();
        let (c_star, rho_chosen, rho_zero) = run(adv_e2, adv_r2);
        assert_eq!(c_star, 16.0, "adversarial fit should choose the grid max");
        assert!(rho_chosen >= rho_zero);
    }

    fn estimate_ok(values: Vec<f64>) -> crate::error::Result<ErrorEstimate> {
        ErrorEstimate::new(values, ErrorSource::ExternalColumn)
    }

    #[test]
    fn cv_requires_enough_burn_in() {
        let pi = uniform_rule(&budget(2, 10));
        let err = cross_validate_c(
            &[0, 1],
            &[0.0; 10],
            &pi,
            PathKind::Linear,
            &RhoGrid::new(0.5).unwrap(),
            3,
            &[0.0],
            |c| ConstraintSet::L2 { c },
            0,
            |_| Ok(estimate(vec![1.0; 10])),
        );
        assert!(matches!(err, Err(Error::BurnInTooSmall { .. })));
    }

    #[test]
    fn region_tree_one_class_collapses() {
        let features = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        // ehat2 above every residual: nobody is overconfident.
        let labels = learn_regions(&features, &[0.1, 0.2, 0.3], &[1.0, 1.0, 1.0], 3, &features)
            .unwrap();
        assert_eq!(labels, vec![0, 0, 0]);
    }

    #[test]
    fn region_tree_depth_zero_is_single_region() {
        let features = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let labels =
            learn_regions(&features, &[5.0, 0.0], &[1.0, 1.0], 0, &features).unwrap();
        assert_eq!(labels[0], labels[1]);
    }

    #[test]
    fn region_tree_recovers_interval_geometry() {
        // Hard region |x| <= 2 is systematically underestimated.
        let mut rng = Rng::new(4);
        let n = 1500;
        let mut rows = Vec::with_capacity(n);
        let mut r2 = Vec::with_capacity(n);
        let mut e2 = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.next_uniform(-5.0, 5.0);
            let hard = x.abs() <= 2.0;
            let e = if hard { 1.0 + 0.5 * rng.next_normal() } else { 2.0 + 0.2236 * rng.next_normal() };
            let z = rng.next_normal();
            rows.push(vec![x]);
            r2.push((e * z) * (e * z));
            e2.push(if hard { 0.25 } else { 6.25 });
            truth.push(usize::from(hard));
        }
        let features = Matrix::from_rows(&rows).unwrap();
        let labels = learn_regions(&features, &r2, &e2, 2, &features).unwrap();
        let correct: usize =
            labels.iter().zip(&truth).filter(|&(a, b)| a == b).count();
        let accuracy = correct as f64 / n as f64;
        assert!(accuracy >= 0.95, "accuracy={accuracy}");
    }
}

/// Helpers shared with integration tests: uniform samples from each
/// constraint set, independent of the closed-form maximizer.
pub mod test_support {
    use super::ConstraintSet;
    use crate::rng::Rng;

    /// Draw a feasible perturbation on or inside the constraint set.
    pub fn sample_feasible(cset: &ConstraintSet, ehat2: &[f64], rng: &mut Rng) -> Vec<f64> {
        let n = ehat2.len();
        match cset {
            ConstraintSet::None => vec![0.0; n],
            ConstraintSet::L2 { c } => scaled_l2_ball(n, *c, rng),
            ConstraintSet::L1 { c } => scaled_l1_ball(n, *c, rng),
            ConstraintSet::RelativeL2 { c } => {
                let eta = scaled_l2_ball(n, *c, rng);
                eta.iter().zip(ehat2).map(|(&h, &e2)| e2 * h).collect()
            }
            ConstraintSet::RelativeL1 { c } => {
                let eta = scaled_l1_ball(n, *c, rng);
                eta.iter().zip(ehat2).map(|(&h, &e2)| e2 * h).collect()
            }
            ConstraintSet::StructuredL2 { region_labels, c_per_region } => {
                let mut eps = vec![0.0; n];
                for (&region, &c) in c_per_region {
                    let members: Vec<usize> =
                        (0..n).filter(|&i| region_labels[i] == region).collect();
                    if members.is_empty() {
                        continue;
                    }
                    let ball = scaled_l2_ball(members.len(), c, rng);
                    for (slot, &i) in members.iter().enumerate() {
                        eps[i] = ball[slot];
                    }
                }
                eps
            }
        }
    }

    fn scaled_l2_ball(n: usize, c: f64, rng: &mut Rng) -> Vec<f64> {
        let dirs: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        let norm = dirs.iter().map(|&x| x * x).sum::<f64>().sqrt().max(1e-300);
        let radius = c * rng.next_f64().powf(1.0 / n as f64);
        dirs.iter().map(|&x| radius * x / norm).collect()
    }

    fn scaled_l1_ball(n: usize, c: f64, rng: &mut Rng) -> Vec<f64> {
        // Exponential spacings give a uniform point on the simplex; random
        // signs extend it to the L1 ball surface, then shrink inward.
        let exps: Vec<f64> = (0..n).map(|_| -(1.0 - rng.next_f64()).ln()).collect();
        let total: f64 = exps.iter().sum();
        let radius = c * rng.next_f64();
        exps.iter()
            .map(|&e| {
                let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
                sign * radius * e / total
            })
            .collect()
    }
}
