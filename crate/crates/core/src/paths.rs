//! Sampling rules and budget-preserving paths.
//!
//! A [`SamplingRule`] assigns each unit a label-collection probability with a
//! strictly positive floor (to keep inverse-probability weights bounded) and
//! a mean equal to the budget rate `n_b / n`. A path `rho -> pi^(rho)`
//! connects an arbitrary rule (`rho = 0`) to the uniform rule (`rho = 1`)
//! while preserving the mean at every point.

use serde::{Deserialize, Serialize};

use crate::data_model::Budget;
use crate::error::{Error, Result};

/// Default probability floor. Caps inverse-probability weights at 1000.
pub const DEFAULT_FLOOR: f64 = 1e-3;

/// Tolerance on the empirical budget constraint `|mean(probs) - n_b/n|`.
pub const BUDGET_TOL: f64 = 1e-9;

/// Below this angle the spherical interpolation collapses to the linear one.
const ANGLE_TOL: f64 = 1e-10;

/// Per-unit label-collection probabilities satisfying the budget constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingRule {
    probs: Vec<f64>,
    floor: f64,
    budget: Budget,
}

impl SamplingRule {
    /// Validating constructor: every probability must lie in `[floor, 1]`
    /// (within 1e-12 slack, then clamped) and the mean must match the budget
    /// rate within [`BUDGET_TOL`].
    pub fn new(mut probs: Vec<f64>, floor: f64, budget: Budget) -> Result<Self> {
        if probs.len() != budget.n() {
            return Err(Error::DimensionMismatch(format!(
                "rule has {} probabilities for n={}",
                probs.len(),
                budget.n()
            )));
        }
        if !(0.0..=1.0).contains(&floor) {
            return Err(Error::InvalidInput(format!("floor {floor} outside [0, 1]")));
        }
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < floor - 1e-12 || *p > 1.0 + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "probability {p} at unit {i} outside [{floor}, 1]"
                )));
            }
            *p = p.clamp(floor, 1.0);
        }
        let mean = probs.iter().sum::<f64>() / probs.len() as f64;
        if (mean - budget.rate()).abs() > BUDGET_TOL {
            return Err(Error::InvalidInput(format!(
                "rule mean {mean} violates budget rate {} beyond tolerance",
                budget.rate()
            )));
        }
        Ok(Self { probs, floor, budget })
    }

    /// Wrap explicit probabilities without enforcing the budget identity.
    ///
    /// Realized two-phase rules (burn-in units pinned at probability 1) and
    /// rules replayed from plan files are built this way; the stored budget
    /// is the rounded-up expected label count. Zero probabilities are
    /// allowed here because a unit with `pi = 0` is simply never sampled.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        let mut floor = 1.0f64;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0 + 1e-12).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "probability {p} at unit {i} outside [0, 1]"
                )));
            }
            floor = floor.min(p);
        }
        let n = probs.len();
        let n_b = (probs.iter().sum::<f64>().ceil() as usize).clamp(1, n);
        Ok(Self { probs, floor, budget: Budget::new(n_b, n)? })
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn floor(&self) -> f64 {
        self.floor
    }

    #[inline]
    pub fn budget(&self) -> Budget {
        self.budget
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Parametric family connecting an active rule to the uniform rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Linear,
    Geometric,
    Hellinger,
}

impl std::fmt::Display for PathKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PathKind::Linear => write!(f, "linear"),
            PathKind::Geometric => write!(f, "geometric"),
            PathKind::Hellinger => write!(f, "hellinger"),
        }
    }
}

/// The uniform rule: every unit gets probability `n_b / n`.
pub fn uniform_rule(budget: &Budget) -> SamplingRule {
    let rate = budget.rate();
    let floor = DEFAULT_FLOOR.min(rate);
    SamplingRule { probs: vec![rate; budget.n()], floor, budget: *budget }
}

/// Map nonnegative raw weights to probabilities in `[floor, 1]` with mean
/// exactly `n_b / n`, proportional to the weights on every unit not pinned
/// at the floor or the cap.
///
/// The clipped sum `S(s) = sum_i clamp(s * w_i, floor, 1)` is continuous and
/// nondecreasing in the scale `s`, so the fixed point is found exactly by a
/// scan over its breakpoints (`floor / w_i` and `1 / w_i`) rather than by
/// repeated clip-and-rescale passes, which can deadlock when an early
/// under-scaled pass pins units that the solution leaves free.
pub fn normalize_to_budget(raw: &[f64], budget: &Budget, floor: f64) -> Result<SamplingRule> {
    let n = budget.n();
    if raw.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for n={n}",
            raw.len()
        )));
    }
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(Error::InvalidInput(format!("floor {floor} outside (0, 1]")));
    }
    for (i, &w) in raw.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidInput(format!("weight {w} at unit {i} is not finite >= 0")));
        }
    }
    if raw.iter().all(|&w| w == 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let target = budget.n_b() as f64;
    if floor * n as f64 > target + 1e-9 {
        return Err(Error::InfeasibleBudget { floor, n, n_b: budget.n_b() });
    }
    // Supremum of S(s): positive-weight units saturate at 1, zero-weight
    // units stay at the floor.
    let n_pos = raw.iter().filter(|&&w| w > 0.0).count();
    let max_sum = n_pos as f64 + floor * (n - n_pos) as f64;
    if target > max_sum + 1e-9 {
        return Err(Error::InfeasibleBudget { floor, n, n_b: budget.n_b() });
    }

    let clipped_sum = |s: f64| raw.iter().map(|&w| (s * w).clamp(floor, 1.0)).sum::<f64>();

    let mut bps: Vec<f64> = Vec::with_capacity(2 * n_pos);
    for &w in raw.iter().filter(|&&w| w > 0.0) {
        bps.push(floor / w);
        bps.push(1.0 / w);
    }
    bps.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    // Binary search for the first breakpoint where S reaches the target.
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut left = 0usize;
    let mut right = bps.len();
    while left < right {
        let mid = (left + right) / 2;
        if clipped_sum(bps[mid]) >= target {
            right = mid;
        } else {
            left = mid + 1;
        }
    }
    if left > 0 {
        lo = bps[left - 1];
    }
    if left < bps.len() {
        hi = bps[left];
    }

    // Classify units on the open segment (lo, hi); S is affine there.
    let probe = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
    let mut pinned = 0.0;
    let mut free_weight = 0.0;
    for &w in raw {
        let v = probe * w;
        if v <= floor {
            pinned += floor;
        } else if v >= 1.0 {
            pinned += 1.0;
        } else {
            free_weight += w;
        }
    }
    let scale = if free_weight > 0.0 {
        (target - pinned) / free_weight
    } else {
        // Plateau segment: S is constant and already equals the target.
        probe
    };

    let probs: Vec<f64> = raw
        .iter()
        .map(|&w| {
            let v = probe * w;
            if v <= floor {
                floor
            } else if v >= 1.0 {
                1.0
            } else {
                (scale * w).clamp(floor, 1.0)
            }
        })
        .collect();

    SamplingRule::new(probs, floor, *budget)
}

/// Evaluate the budget-preserving path at `rho` in `[0, 1]`.
///
/// `rho = 0` returns the rule unchanged and `rho = 1` returns the uniform
/// rule exactly. Every intermediate point preserves the budget constraint;
/// the geometric and spherical forms fall back to [`normalize_to_budget`]
/// when a raw value escapes `[floor, 1]`.
pub fn path_eval(kind: PathKind, pi: &SamplingRule, rho: f64) -> Result<SamplingRule> {
    if !(0.0..=1.0).contains(&rho) || rho.is_nan() {
        return Err(Error::RhoOutOfRange(rho));
    }
    let budget = pi.budget();
    let rate = budget.rate();
    let floor = pi.floor().min(rate);
    if rho == 0.0 {
        return Ok(pi.clone());
    }
    if rho == 1.0 {
        return SamplingRule::new(vec![rate; budget.n()], floor, budget);
    }

    match kind {
        PathKind::Linear => {
            let probs: Vec<f64> =
                pi.probs().iter().map(|&p| (1.0 - rho) * p + rho * rate).collect();
            SamplingRule::new(probs, floor, budget)
        }
        PathKind::Geometric => {
            let powered: Vec<f64> = pi.probs().iter().map(|&p| p.powf(1.0 - rho)).collect();
            let mean = powered.iter().sum::<f64>() / powered.len() as f64;
            let scaled: Vec<f64> = powered.iter().map(|&v| rate * v / mean).collect();
            if scaled.iter().all(|&v| v >= floor - 1e-12 && v <= 1.0 + 1e-12) {
                SamplingRule::new(scaled, floor, budget)
            } else {
                normalize_to_budget(&powered, &budget, floor)
            }
        }
        PathKind::Hellinger => {
            hellinger_eval(pi, rho, rate, floor, budget)
        }
    }
}

/// Spherical interpolation between `sqrt(pi)` and the constant vector
/// `sqrt(rate)`. Both endpoints have Euclidean norm `sqrt(n_b)`, so the
/// normalized inner product lies in [-1, 1] and the interpolated squares sum
/// to `n_b` identically.
fn hellinger_eval(
    pi: &SamplingRule,
    rho: f64,
    rate: f64,
    floor: f64,
    budget: Budget,
) -> Result<SamplingRule> {
    let sqrt_rate = rate.sqrt();
    let roots: Vec<f64> = pi.probs().iter().map(|&p| p.sqrt()).collect();
    let dot: f64 = roots.iter().map(|&u| u * sqrt_rate).sum();
    let cos_beta = (dot / budget.n_b() as f64).clamp(-1.0, 1.0);
    let beta = cos_beta.acos();
    if beta < ANGLE_TOL {
        // The rule is (numerically) uniform already; the chord degenerates.
        let probs: Vec<f64> =
            pi.probs().iter().map(|&p| (1.0 - rho) * p + rho * rate).collect();
        return SamplingRule::new(probs, floor, budget);
    }
    let sin_beta = beta.sin();
    let a = ((1.0 - rho) * beta).sin() / sin_beta;
    let b = (rho * beta).sin() / sin_beta;
    let probs: Vec<f64> = roots
        .iter()
        .map(|&u| {
            let v = a * u + b * sqrt_rate;
            v * v
        })
        .collect();
    if probs.iter().all(|&v| v >= floor - 1e-12 && v <= 1.0 + 1e-12) {
        SamplingRule::new(probs, floor, budget)
    } else {
        normalize_to_budget(&probs, &budget, floor)
    }
}
