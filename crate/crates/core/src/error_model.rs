//! Fitting the squared-error function and its transform for GLM estimands.
//!
//! The error model approximates the conditional mean squared prediction
//! residual from burn-in labels. For regression estimands the base error is
//! multiplied by `(x' h_j)^2`, where `h_j` is the j-th column of the inverse
//! Hessian, so the same one-dimensional tuning machinery applies to any
//! coordinate of interest.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_model::{Dataset, EstimandKind, EstimandSpec, Matrix};
use crate::error::{Error, Result};

/// How an error estimate was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSource {
    Knn,
    Binned,
    ExternalColumn,
}

/// Nonnegative per-unit estimates of the squared error.
#[derive(Clone, Debug)]
pub struct ErrorEstimate {
    values: Vec<f64>,
    source: ErrorSource,
}

impl ErrorEstimate {
    pub fn new(values: Vec<f64>, source: ErrorSource) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "error estimate {v} at unit {i} is not finite >= 0"
                )));
            }
        }
        Ok(Self { values, source })
    }

    /// External column accepted verbatim, clamped below at zero.
    pub fn from_external(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v.max(0.0)).collect(), ErrorSource::ExternalColumn)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> ErrorSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Default neighbor count for the k-NN error fit.
pub fn default_k(burn_in_size: usize) -> usize {
    ((burn_in_size as f64).sqrt().ceil() as usize).max(5).min(burn_in_size.max(1))
}

/// k-nearest-neighbor fit of the squared error.
///
/// Each query row receives the mean squared residual of its `k` nearest
/// burn-in rows in Euclidean feature distance; exact distance ties break
/// toward the lower burn-in row index.
pub fn fit_knn_error(
    burn_features: &Matrix,
    residuals_sq: &[f64],
    k: usize,
    query: &Matrix,
) -> Result<ErrorEstimate> {
    let b = burn_features.nrows();
    if b == 0 {
        return Err(Error::EmptyBurnIn);
    }
    if k == 0 || k > b {
        return Err(Error::KTooLarge { k, available: b });
    }
    if residuals_sq.len() != b {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals for {b} burn-in rows",
            residuals_sq.len()
        )));
    }
    if burn_features.ncols() != query.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "burn-in has {} feature columns, query has {}",
            burn_features.ncols(),
            query.ncols()
        )));
    }

    let mut values = Vec::with_capacity(query.nrows());
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(b);
    for q in 0..query.nrows() {
        let qrow = query.row(q);
        scratch.clear();
        for i in 0..b {
            let mut d2 = 0.0;
            for (a, c) in burn_features.row(i).iter().zip(qrow) {
                let diff = a - c;
                d2 += diff * diff;
            }
            scratch.push((d2, i));
        }
        // Total order on (distance, index) makes the selected set unique
        // even under exact distance ties.
        if k < b {
            scratch.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        }
        let sum: f64 = scratch[..k].iter().map(|&(_, i)| residuals_sq[i]).sum();
        values.push(sum / k as f64);
    }
    ErrorEstimate::new(values, ErrorSource::Knn)
}

/// Equal-width-bin fit of the squared error over confidence scores in
/// `[0, 1]`. Empty bins inherit the value of the nearest nonempty bin
/// (ties toward the lower bin index).
pub fn fit_binned_error(
    burn_confidence: &[f64],
    residuals_sq: &[f64],
    bins: usize,
    query_confidence: &[f64],
) -> Result<ErrorEstimate> {
    if burn_confidence.is_empty() {
        return Err(Error::EmptyBurnIn);
    }
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be >= 1".into()));
    }
    if residuals_sq.len() != burn_confidence.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals for {} burn-in confidences",
            residuals_sq.len(),
            burn_confidence.len()
        )));
    }
    let bin_of = |c: f64| ((c * bins as f64) as usize).min(bins - 1);

    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for (&c, &r2) in burn_confidence.iter().zip(residuals_sq) {
        let b = bin_of(c.clamp(0.0, 1.0));
        sums[b] += r2;
        counts[b] += 1;
    }
    let mut bin_values = vec![f64::NAN; bins];
    for b in 0..bins {
        if counts[b] > 0 {
            bin_values[b] = sums[b] / counts[b] as f64;
        }
    }
    // Fill empty bins from the nearest nonempty one.
    let filled: Vec<f64> = (0..bins)
        .map(|b| {
            if counts[b] > 0 {
                return bin_values[b];
            }
            let mut best = f64::NAN;
            let mut best_dist = usize::MAX;
            for (j, &v) in bin_values.iter().enumerate() {
                if counts[j] > 0 {
                    let dist = b.abs_diff(j);
                    if dist < best_dist {
                        best_dist = dist;
                        best = v;
                    }
                }
            }
            best
        })
        .collect();

    let values: Vec<f64> =
        query_confidence.iter().map(|&c| filled[bin_of(c.clamp(0.0, 1.0))]).collect();
    ErrorEstimate::new(values, ErrorSource::Binned)
}

/// j-th column of the inverse Hessian of the population loss.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianColumn {
    h: Vec<f64>,
}

impl HessianColumn {
    pub fn new(h: Vec<f64>) -> Self {
        Self { h }
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

const MAX_CONDITION: f64 = 1e12;

/// Build the design matrix for the estimand: a constant-1 column for the
/// mean, otherwise the features with an optional prepended intercept.
pub fn design_matrix(spec: &EstimandSpec, data: &Dataset) -> Matrix {
    match spec.kind {
        EstimandKind::Mean => {
            Matrix::from_vec(vec![1.0; data.n()], data.n(), 1).expect("ones column")
        }
        _ => {
            if spec.include_intercept {
                data.features().with_intercept()
            } else {
                data.features().clone()
            }
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Estimate the Hessian of the loss at `pilot_theta` and return column `j`
/// of its inverse via a linear solve. Errors when the condition number
/// exceeds 1e12.
pub fn estimate_hessian_inverse_column(
    spec: &EstimandSpec,
    data: &Dataset,
    pilot_theta: &[f64],
    j: usize,
) -> Result<HessianColumn> {
    if spec.kind == EstimandKind::Mean {
        return Ok(HessianColumn::new(vec![1.0]));
    }
    let design = design_matrix(spec, data);
    hessian_inverse_column_for_design(spec.kind, &design, pilot_theta, j)
}

/// Same as [`estimate_hessian_inverse_column`] but with an explicit design
/// matrix (used when the design is already materialized).
pub fn hessian_inverse_column_for_design(
    kind: EstimandKind,
    design: &Matrix,
    pilot_theta: &[f64],
    j: usize,
) -> Result<HessianColumn> {
    let n = design.nrows();
    let p = design.ncols();
    if j >= p {
        return Err(Error::InvalidInput(format!("coordinate {j} out of range for p={p}")));
    }
    if kind != EstimandKind::Mean && pilot_theta.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "pilot theta has {} entries for p={p}",
            pilot_theta.len()
        )));
    }
    let mut hessian = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let row = design.row(i);
        let w = match kind {
            EstimandKind::Mean => 1.0,
            EstimandKind::LinearRegression => 1.0,
            EstimandKind::LogisticRegression => {
                let eta: f64 = row.iter().zip(pilot_theta).map(|(x, t)| x * t).sum();
                let mu = sigmoid(eta);
                mu * (1.0 - mu)
            }
        };
        for a in 0..p {
            for b in a..p {
                hessian[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            hessian[(a, b)] = hessian[(b, a)];
        }
    }
    hessian /= n as f64;

    let svd = hessian.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 || smax / smin >= MAX_CONDITION {
        return Err(Error::SingularHessian(if smin > 0.0 { smax / smin } else { f64::INFINITY }));
    }

    let mut e_j = DVector::<f64>::zeros(p);
    e_j[j] = 1.0;
    let lu = hessian.lu();
    let h = lu.solve(&e_j).ok_or(Error::SingularHessian(f64::INFINITY))?;
    Ok(HessianColumn::new(h.iter().copied().collect()))
}

/// Multiply a base squared-error estimate by `(x_i' h_j)^2`.
pub fn glm_error_transform(
    base: &ErrorEstimate,
    design: &Matrix,
    h: &HessianColumn,
) -> Result<ErrorEstimate> {
    if base.len() != design.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} error values for {} design rows",
            base.len(),
            design.nrows()
        )));
    }
    if design.ncols() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, h has {}",
            design.ncols(),
            h.len()
        )));
    }
    let values: Vec<f64> = (0..design.nrows())
        .map(|i| {
            let xh: f64 = design.row(i).iter().zip(h.as_slice()).map(|(x, hj)| x * hj).sum();
            base.values()[i] * xh * xh
        })
        .collect();
    ErrorEstimate::new(values, base.source())
}

/// Pilot logistic fit used to evaluate the Hessian before labels are
/// collected: burn-in rows keep their labels, all other rows use the model
/// prediction as a pseudo-label. Plain Newton on the (convex) log-loss.
pub fn fit_pilot_logistic(
    data: &Dataset,
    burn_in: &[usize],
    spec: &EstimandSpec,
) -> Result<Vec<f64>> {
    let design = design_matrix(spec, data);
    let n = design.nrows();
    let p = design.ncols();
    let mut target: Vec<f64> = data.predictions().to_vec();
    for &i in burn_in {
        if !data.observed()[i] {
            return Err(Error::MissingLabelAtSampledUnit { rows: vec![i] });
        }
        target[i] = data.labels()[i];
    }

    let mut theta = DVector::<f64>::zeros(p);
    let tol = 1e-8;
    for iter in 0..100 {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (i, &t_i) in target.iter().enumerate() {
            let row = design.row(i);
            let eta: f64 = row.iter().zip(theta.iter()).map(|(x, t)| x * t).sum();
            let mu = sigmoid(eta);
            let g = mu - t_i;
            let w = mu * (1.0 - mu);
            for a in 0..p {
                grad[a] += g * row[a];
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
        grad /= n as f64;
        hess /= n as f64;
        let gnorm = grad.norm();
        if gnorm <= tol {
            return Ok(theta.iter().copied().collect());
        }
        let step = hess
            .lu()
            .solve(&grad)
            .ok_or(Error::NoConvergence { iterations: iter, grad_norm: gnorm })?;
        theta -= step;
    }
    Err(Error::NoConvergence { iterations: 100, grad_norm: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::Matrix;

    fn matrix(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn knn_with_full_neighborhood_is_global_mean() {
        let burn = matrix(&[vec![0.0], vec![1.0], vec![2.0]]);
        let query = matrix(&[vec![0.5], vec![5.0]]);
        let est = fit_knn_error(&burn, &[1.0, 2.0, 3.0], 3, &query).unwrap();
        for &v in est.values() {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn knn_single_point_is_constant() {
        let burn = matrix(&[vec![0.0, 0.0]]);
        let query = matrix(&[vec![1.0, 1.0], vec![-3.0, 2.0]]);
        let est = fit_knn_error(&burn, &[0.04], 1, &query).unwrap();
        assert_eq!(est.values(), &[0.04, 0.04]);
    }

    #[test]
    fn knn_nearest_neighbor_by_hand() {
        let burn = matrix(&[vec![0.0, 0.0], vec![10.0, 10.0]]);
        let query = matrix(&[vec![1.0, 1.0]]);
        let est = fit_knn_error(&burn, &[1.0, 9.0], 1, &query).unwrap();
        assert_eq!(est.values(), &[1.0]);
    }

    #[test]
    fn knn_error_paths() {
        let burn = matrix(&[vec![0.0]]);
        assert!(matches!(
            fit_knn_error(&burn, &[1.0], 2, &burn),
            Err(Error::KTooLarge { .. })
        ));
        let empty = Matrix::zeros(0, 1);
        assert!(matches!(
            fit_knn_error(&empty, &[], 1, &burn),
            Err(Error::EmptyBurnIn)
        ));
    }

    #[test]
    fn knn_permutation_invariant_without_ties() {
        let burn = matrix(&[vec![0.0], vec![1.0], vec![2.5], vec![4.0]]);
        let r2 = [1.0, 2.0, 3.0, 4.0];
        let query = matrix(&[vec![0.6], vec![3.1]]);
        let a = fit_knn_error(&burn, &r2, 2, &query).unwrap();
        let perm = matrix(&[vec![4.0], vec![2.5], vec![1.0], vec![0.0]]);
        let r2p = [4.0, 3.0, 2.0, 1.0];
        let b = fit_knn_error(&perm, &r2p, 2, &query).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn binned_single_bin_is_global_mean() {
        let est = fit_binned_error(&[0.1, 0.9], &[1.0, 3.0], 1, &[0.2, 0.7]).unwrap();
        assert_eq!(est.values(), &[2.0, 2.0]);
    }

    #[test]
    fn binned_constant_field() {
        let est = fit_binned_error(&[0.1, 0.5, 0.9], &[0.7, 0.7, 0.7], 4, &[0.3, 0.99]).unwrap();
        for &v in est.values() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn binned_two_bins_by_hand() {
        // Bins [0, 0.5) and [0.5, 1]: means 0.1 and 0.9. Query 0.75 -> 0.9.
        let est =
            fit_binned_error(&[0.2, 0.3, 0.6, 0.8], &[0.1, 0.1, 0.9, 0.9], 2, &[0.75]).unwrap();
        assert_eq!(est.values(), &[0.9]);
    }

    #[test]
    fn binned_empty_bins_inherit_nearest() {
        let est = fit_binned_error(&[0.05], &[2.0], 10, &[0.95]).unwrap();
        assert_eq!(est.values(), &[2.0]);
    }

    #[test]
    fn mean_estimand_has_identity_hessian() {
        let ds = Dataset::new(
            matrix(&[vec![1.0], vec![2.0]]),
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![true, true],
        )
        .unwrap();
        let h =
            estimate_hessian_inverse_column(&EstimandSpec::mean(), &ds, &[0.0], 0).unwrap();
        assert_eq!(h.as_slice(), &[1.0]);
    }

    #[test]
    fn orthonormal_design_gives_unit_column() {
        // Rows chosen so that (1/n) sum x x' = I, hence h_j = e_j.
        let s = 2.0_f64.sqrt();
        let ds = Dataset::new(
            matrix(&[vec![s, 0.0], vec![-s, 0.0], vec![0.0, s], vec![0.0, -s]]),
            vec![0.0; 4],
            vec![0.0; 4],
            vec![true; 4],
        )
        .unwrap();
        let spec = EstimandSpec::linear(1, false);
        let h = estimate_hessian_inverse_column(&spec, &ds, &[0.0, 0.0], 1).unwrap();
        assert!((h.as_slice()[0]).abs() < 1e-12);
        assert!((h.as_slice()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_hessian_at_zero_matches_direct_build() {
        let rows = vec![vec![1.0, 0.5], vec![1.0, -0.25], vec![1.0, 2.0]];
        let ds = Dataset::new(
            matrix(&rows),
            vec![0.5; 3],
            vec![1.0, 0.0, 1.0],
            vec![true; 3],
        )
        .unwrap();
        let spec = EstimandSpec::logistic(1, false);
        // At theta = 0 all mu = 0.5, so H = 0.25 * (1/n) sum x x'.
        let h = estimate_hessian_inverse_column(&spec, &ds, &[0.0, 0.0], 0).unwrap();
        let mut hess = DMatrix::<f64>::zeros(2, 2);
        for r in &rows {
            for a in 0..2 {
                for b in 0..2 {
                    hess[(a, b)] += 0.25 * r[a] * r[b];
                }
            }
        }
        hess /= 3.0;
        let inv = hess.try_inverse().unwrap();
        assert!((h.as_slice()[0] - inv[(0, 0)]).abs() < 1e-9);
        assert!((h.as_slice()[1] - inv[(1, 0)]).abs() < 1e-9);
    }

    #[test]
    fn singular_hessian_is_rejected() {
        // Duplicate feature columns make the design rank-deficient.
        let ds = Dataset::new(
            matrix(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]),
            vec![0.0; 3],
            vec![0.0; 3],
            vec![true; 3],
        )
        .unwrap();
        let spec = EstimandSpec::linear(0, false);
        assert!(matches!(
            estimate_hessian_inverse_column(&spec, &ds, &[0.0, 0.0], 0),
            Err(Error::SingularHessian(_))
        ));
    }

    #[test]
    fn transform_examples() {
        let design = matrix(&[vec![2.0], vec![0.5]]);
        let base = ErrorEstimate::new(vec![1.0, 4.0], ErrorSource::ExternalColumn).unwrap();
        let out = glm_error_transform(&base, &design, &HessianColumn::new(vec![1.0])).unwrap();
        assert_eq!(out.values(), &[4.0, 1.0]);

        let zero = glm_error_transform(&base, &design, &HessianColumn::new(vec![0.0])).unwrap();
        assert_eq!(zero.values(), &[0.0, 0.0]);
    }

    #[test]
    fn transform_is_identity_for_mean_pipeline() {
        let ones = matrix(&[vec![1.0], vec![1.0], vec![1.0]]);
        let base = ErrorEstimate::new(vec![0.3, 0.6, 0.9], ErrorSource::Knn).unwrap();
        let out = glm_error_transform(&base, &ones, &HessianColumn::new(vec![1.0])).unwrap();
        assert_eq!(out.values(), base.values());
    }

    #[test]
    fn transform_is_quadratically_homogeneous_in_h() {
        let design = matrix(&[vec![1.0, 2.0], vec![-1.0, 0.5]]);
        let base = ErrorEstimate::new(vec![1.5, 2.5], ErrorSource::Knn).unwrap();
        let h = HessianColumn::new(vec![0.7, -0.2]);
        let h3 = HessianColumn::new(vec![2.1, -0.6]);
        let a = glm_error_transform(&base, &design, &h).unwrap();
        let b = glm_error_transform(&base, &design, &h3).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((y - 9.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn pilot_logistic_recovers_strong_signal_direction() {
        let n = 200;
        let mut rows = Vec::with_capacity(n);
        let mut preds = Vec::with_capacity(n);
        for i in 0..n {
            let x = (i as f64 / n as f64) * 4.0 - 2.0;
            rows.push(vec![x]);
            preds.push(sigmoid(1.5 * x));
        }
        let ds = Dataset::new(matrix(&rows), preds.clone(), preds, vec![true; n]).unwrap();
        let spec = EstimandSpec::logistic(0, false);
        let theta = fit_pilot_logistic(&ds, &[], &spec).unwrap();
        assert!((theta[0] - 1.5).abs() < 0.05, "theta={theta:?}");
    }
}
