//! Pools of label assignments that satisfy overall accuracy equality
//! exactly while disagreeing on as many samples as possible.
//!
//! Each model makes exactly `floor(n_j * eps)` mistakes in group `j`, so
//! every model has the same per-group error and the accuracy gap between
//! groups is zero whenever `n_j * eps` is an integer. Error regions are laid
//! out as disjointly as the group sizes allow.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness;
use crate::multiplicity::{self, ScoreMatrix};

/// Slack absorbing representation error in `n * eps` before flooring,
/// e.g. `10 * 0.3 = 2.9999999999999996`.
const FLOOR_TOL: f64 = 1e-9;

pub(crate) fn floor_tol(v: f64) -> usize {
    (v + FLOOR_TOL).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignmentPool {
    pub epsilon: f64,
    /// `predictions[u][i]` is model `u`'s label for row `i`.
    pub predictions: Vec<Vec<u8>>,
    /// `error_regions[u][j]`: rows of group `j` that model `u` gets wrong.
    pub error_regions: Vec<Vec<Vec<usize>>>,
}

impl LabelAssignmentPool {
    pub fn m(&self) -> usize {
        self.predictions.len()
    }

    /// Predictions as 0/1 scores over all rows.
    pub fn to_score_matrix(&self) -> Result<ScoreMatrix> {
        let rows = self
            .predictions
            .iter()
            .map(|p| p.iter().map(|&v| f64::from(v)).collect())
            .collect();
        ScoreMatrix::from_rows(rows)
    }
}

/// Builds `m` label assignments with per-group error budget `floor(n_j * eps)`.
///
/// Within group `j` (rows in dataset order, budget `b`), model `u` errs on
/// positions `u*b, ..., u*b + b - 1` taken modulo `n_j`. For `m <= 1/eps`
/// these are the first `m` disjoint consecutive blocks. Beyond that the
/// `(floor(1/eps) + 1)`-th model takes the remainder block padded from the
/// start of the group, and later models continue rotating by `b`.
pub fn construct(ds: &Dataset, epsilon: f64, m: usize) -> Result<LabelAssignmentPool> {
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(Error::Validation(format!(
            "epsilon must lie in [0, 0.5], got {epsilon}"
        )));
    }
    if m == 0 {
        return Err(Error::Validation("need at least one model".into()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ds.k()];
    for i in 0..ds.n() {
        members[ds.group(i)].push(i);
    }
    let budgets: Vec<usize> = members
        .iter()
        .enumerate()
        .map(|(j, rows)| {
            let b = floor_tol(rows.len() as f64 * epsilon);
            if b == 0 && epsilon > 0.0 {
                Err(Error::InfeasibleGroup {
                    group: j,
                    size: rows.len(),
                    epsilon,
                })
            } else {
                Ok(b)
            }
        })
        .collect::<Result<_>>()?;

    let mut predictions = Vec::with_capacity(m);
    let mut error_regions = Vec::with_capacity(m);
    for u in 0..m {
        let mut pred = ds.labels().to_vec();
        let mut regions = Vec::with_capacity(ds.k());
        for (rows, &b) in members.iter().zip(&budgets) {
            let n_j = rows.len();
            let start = (u % n_j) * b % n_j;
            let mut region: Vec<usize> = (0..b).map(|k| rows[(start + k) % n_j]).collect();
            for &i in &region {
                pred[i] = 1 - pred[i];
            }
            region.sort_unstable();
            regions.push(region);
        }
        predictions.push(pred);
        error_regions.push(regions);
    }
    Ok(LabelAssignmentPool {
        epsilon,
        predictions,
        error_regions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub ambiguity: f64,
    /// Largest accuracy gap between groups over all models.
    pub oae_gap: f64,
    /// `error_counts[u][j]`: mistakes of model `u` in group `j`.
    pub error_counts: Vec<Vec<usize>>,
    pub error_rates: Vec<Vec<f64>>,
}

/// Recomputes error rates, accuracy gaps and ambiguity from the raw
/// predictions through the fairness and multiplicity metrics.
pub fn verify(pool: &LabelAssignmentPool, ds: &Dataset) -> Result<WorstCaseReport> {
    let idx = ds.all_indices();
    let mut oae_gap = 0.0f64;
    let mut error_counts = Vec::with_capacity(pool.m());
    let mut error_rates = Vec::with_capacity(pool.m());
    for pred in &pool.predictions {
        let rates = fairness::group_rates(pred, ds, &idx)?;
        oae_gap = oae_gap.max(fairness::oae_gap(&rates));
        let counts: Vec<usize> = rates.groups.iter().map(|g| g.counts.fn_ + g.counts.fp).collect();
        error_rates.push(
            counts
                .iter()
                .zip(&rates.groups)
                .map(|(&c, g)| c as f64 / g.counts.total() as f64)
                .collect(),
        );
        error_counts.push(counts);
    }
    Ok(WorstCaseReport {
        ambiguity: multiplicity::ambiguity(&pool.to_score_matrix()?),
        oae_gap,
        error_counts,
        error_rates,
    })
}
