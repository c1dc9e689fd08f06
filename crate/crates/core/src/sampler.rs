//! Label-collection draws and budget auditing.

use serde::Serialize;

use crate::data_model::Budget;
use crate::error::{Error, Result};
use crate::paths::SamplingRule;
use crate::rng::unit_uniform;

/// Realized labeling decisions: `xi[i]` is an independent Bernoulli draw with
/// success probability `pi(x_i)`.
#[derive(Clone, Debug)]
pub struct LabelDraw {
    xi: Vec<bool>,
    seed: u64,
    realized_count: usize,
}

impl LabelDraw {
    #[inline]
    pub fn xi(&self) -> &[bool] {
        &self.xi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn realized_count(&self) -> usize {
        self.realized_count
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Rebuild from an explicit indicator vector (e.g. a plan file).
    pub fn from_indicators(xi: Vec<bool>, seed: u64) -> Self {
        let realized_count = xi.iter().filter(|&&b| b).count();
        Self { xi, seed, realized_count }
    }
}

/// Draw labeling indicators. Unit `i`'s draw depends only on `(seed, i)`, so
/// parallel generation, row reordering, and appended units all leave other
/// units' draws untouched.
pub fn draw_labels(rule: &SamplingRule, seed: u64) -> LabelDraw {
    let xi: Vec<bool> = rule
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| unit_uniform(seed, i as u64) < p)
        .collect();
    LabelDraw::from_indicators(xi, seed)
}

/// Outcome of checking a realized draw against the budget.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BudgetAudit {
    pub realized_rate: f64,
    pub target_rate: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// `log(1/delta) / (2 epsilon^2)`: the sample size above which the
    /// realized rate stays within `epsilon` of the target with probability
    /// at least `1 - delta`.
    pub sample_size_threshold: f64,
    pub sample_size_ok: bool,
    pub exceeded: bool,
}

/// Compare the realized labeling rate against `n_b/n + epsilon` and report
/// whether the concentration precondition `n > log(1/delta) / (2 eps^2)`
/// holds.
pub fn budget_audit(
    draw: &LabelDraw,
    budget: &Budget,
    epsilon: f64,
    delta: f64,
) -> Result<BudgetAudit> {
    if !(0.0 < epsilon && epsilon < 1.0) || !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon={epsilon} and delta={delta} must lie in (0, 1)"
        )));
    }
    let realized_rate = draw.realized_count() as f64 / draw.len() as f64;
    let target_rate = budget.rate();
    let threshold = (1.0 / delta).ln() / (2.0 * epsilon * epsilon);
    Ok(BudgetAudit {
        realized_rate,
        target_rate,
        epsilon,
        delta,
        sample_size_threshold: threshold,
        sample_size_ok: (draw.len() as f64) > threshold,
        exceeded: realized_rate > target_rate + epsilon,
    })
}
