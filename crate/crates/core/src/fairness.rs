//! Group-fairness and accuracy metrics over thresholded predictions.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Confusion counts of one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    pub fn total(&self) -> usize {
        self.positives() + self.negatives()
    }

    fn ratio(num: usize, den: usize) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    /// `None` when the group has no positives.
    pub fn tpr(&self) -> Option<f64> {
        Self::ratio(self.tp, self.positives())
    }

    /// `None` when the group has no negatives.
    pub fn fpr(&self) -> Option<f64> {
        Self::ratio(self.fp, self.negatives())
    }

    pub fn positive_rate(&self) -> Option<f64> {
        Self::ratio(self.tp + self.fp, self.total())
    }

    pub fn accuracy(&self) -> Option<f64> {
        Self::ratio(self.tp + self.tn, self.total())
    }
}

/// Per-group rates. A rate is `None` when its conditioning cell is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub positive_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub counts: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub groups: Vec<GroupRate>,
}

impl GroupRates {
    pub fn from_counts(counts: &[Confusion]) -> Self {
        GroupRates {
            groups: counts
                .iter()
                .map(|c| GroupRate {
                    tpr: c.tpr(),
                    fpr: c.fpr(),
                    positive_rate: c.positive_rate(),
                    accuracy: c.accuracy(),
                    counts: *c,
                })
                .collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    /// Groups with at least one row.
    fn present(&self) -> impl Iterator<Item = (usize, &GroupRate)> {
        self.groups.iter().enumerate().filter(|(_, g)| g.counts.total() > 0)
    }
}

/// Counts predictions `preds[j]` against row `idx[j]` of `ds`, per group.
pub fn group_rates(preds: &[u8], ds: &Dataset, idx: &[usize]) -> Result<GroupRates> {
    if preds.len() != idx.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} rows",
            preds.len(),
            idx.len()
        )));
    }
    ds.check_indices(idx)?;
    let mut counts = vec![Confusion::default(); ds.k()];
    for (&p, &i) in preds.iter().zip(idx) {
        let c = &mut counts[ds.group(i)];
        match (ds.label(i), p >= 1) {
            (1, true) => c.tp += 1,
            (1, false) => c.fn_ += 1,
            (_, true) => c.fp += 1,
            (_, false) => c.tn += 1,
        }
    }
    Ok(GroupRates::from_counts(&counts))
}

/// Equalized-odds rates of every group with data; errors on a missing
/// label cell.
fn eo_rates(rates: &GroupRates) -> Result<Vec<(f64, f64)>> {
    rates
        .present()
        .map(|(g, r)| {
            let tpr = r.tpr.ok_or(Error::UndefinedRate { group: g, label: 1 })?;
            let fpr = r.fpr.ok_or(Error::UndefinedRate { group: g, label: 0 })?;
            Ok((tpr, fpr))
        })
        .collect()
}

fn pair_meo(a: (f64, f64), b: (f64, f64)) -> f64 {
    0.5 * ((a.0 - b.0).abs() + (a.1 - b.1).abs())
}

fn max_pairwise<T: Copy>(items: &[T], f: impl Fn(T, T) -> f64) -> f64 {
    let mut best = 0.0f64;
    for (i, &a) in items.iter().enumerate() {
        for &b in &items[i + 1..] {
            best = best.max(f(a, b));
        }
    }
    best
}

/// Mean EO: `½(|ΔTPR| + |ΔFPR|)` for two groups, the maximum of that
/// quantity over group pairs otherwise. Groups absent from the evaluated
/// rows are skipped.
pub fn mean_eo(rates: &GroupRates) -> Result<f64> {
    let r = eo_rates(rates)?;
    if r.len() == 2 {
        Ok(pair_meo(r[0], r[1]))
    } else {
        Ok(max_pairwise(&r, pair_meo))
    }
}

/// Mean EO always through the pairwise maximum; agrees with [`mean_eo`].
pub fn mean_eo_pairwise(rates: &GroupRates) -> Result<f64> {
    Ok(max_pairwise(&eo_rates(rates)?, pair_meo))
}

/// Half the largest gap in positive-prediction rate between two groups.
pub fn sp_violation(rates: &GroupRates) -> f64 {
    let r: Vec<f64> = rates.present().filter_map(|(_, g)| g.positive_rate).collect();
    max_pairwise(&r, |a, b| 0.5 * (a - b).abs())
}

/// Largest gap in accuracy between two groups.
pub fn oae_gap(rates: &GroupRates) -> f64 {
    let r: Vec<f64> = rates.present().filter_map(|(_, g)| g.accuracy).collect();
    max_pairwise(&r, |a, b| (a - b).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub mean_eo: f64,
    pub sp_violation: f64,
    pub oae_gap: f64,
    pub rates: GroupRates,
}

impl FairnessReport {
    pub fn evaluate(preds: &[u8], ds: &Dataset, idx: &[usize]) -> Result<Self> {
        let rates = group_rates(preds, ds, idx)?;
        Self::from_rates(rates)
    }

    pub fn from_rates(rates: GroupRates) -> Result<Self> {
        let (correct, total) = rates.groups.iter().fold((0, 0), |(c, t), g| {
            (c + g.counts.tp + g.counts.tn, t + g.counts.total())
        });
        if total == 0 {
            return Err(Error::Validation("no rows to evaluate".into()));
        }
        Ok(FairnessReport {
            accuracy: correct as f64 / total as f64,
            mean_eo: mean_eo(&rates)?,
            sp_violation: sp_violation(&rates),
            oae_gap: oae_gap(&rates),
            rates,
        })
    }
}
