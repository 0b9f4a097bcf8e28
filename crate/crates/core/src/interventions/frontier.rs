use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{self, Confusion, GroupRates};

/// Error minimizers closer than this to the minimum count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub threshold: f64,
    pub error: f64,
    pub mean_eo: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub points: Vec<FrontierPoint>,
    /// Positions in `points` of every feasible error minimizer.
    pub argmin: Vec<usize>,
    /// Set when no threshold satisfies the cap.
    pub diagnostic: Option<String>,
}

impl Frontier {
    pub fn argmin_thresholds(&self) -> Vec<f64> {
        self.argmin.iter().map(|&k| self.points[k].threshold).collect()
    }
}

/// `size` evenly spaced cut points over the feature range of rows `idx`.
pub fn frontier_grid(ds: &Dataset, idx: &[usize], size: usize) -> Result<Vec<f64>> {
    if ds.d() != 1 {
        return Err(Error::Dimensionality(format!(
            "frontier needs one feature, got {}",
            ds.d()
        )));
    }
    if idx.is_empty() || size == 0 {
        return Err(Error::Validation(
            "frontier grid needs rows and at least one point".into(),
        ));
    }
    ds.check_indices(idx)?;
    let (lo, hi) = idx
        .iter()
        .map(|&i| ds.row(i)[0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(crate::models::threshold_grid(lo, hi, size))
}

/// Error and Mean EO of every classifier `1{x > t}` on the grid, and all
/// feasible (`mean_eo <= meo_cap`) error minimizers.
pub fn threshold_frontier(ds: &Dataset, idx: &[usize], grid: &[f64], meo_cap: f64) -> Result<Frontier> {
    if ds.d() != 1 {
        return Err(Error::Dimensionality(format!(
            "frontier needs one feature, got {}",
            ds.d()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Validation("threshold grid is empty".into()));
    }
    if idx.is_empty() {
        return Err(Error::Validation("no rows to evaluate".into()));
    }
    ds.check_indices(idx)?;
    // sorted feature values per (group, label) cell
    let mut cells: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; ds.k()];
    for &i in idx {
        cells[ds.group(i)][ds.label(i) as usize].push(ds.row(i)[0]);
    }
    for c in cells.iter_mut().flatten() {
        c.sort_by(f64::total_cmp);
    }
    let n = idx.len() as f64;
    let points = grid
        .iter()
        .map(|&t| {
            let above = |v: &Vec<f64>| v.len() - v.partition_point(|&x| x <= t);
            let counts: Vec<Confusion> = cells
                .iter()
                .map(|[neg, pos]| {
                    let tp = above(pos);
                    let fp = above(neg);
                    Confusion {
                        tp,
                        fn_: pos.len() - tp,
                        fp,
                        tn: neg.len() - fp,
                    }
                })
                .collect();
            let errors: usize = counts.iter().map(|c| c.fn_ + c.fp).sum();
            let mean_eo = fairness::mean_eo(&GroupRates::from_counts(&counts))?;
            Ok(FrontierPoint {
                threshold: t,
                error: errors as f64 / n,
                mean_eo,
                feasible: mean_eo <= meo_cap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_argmin(points, meo_cap))
}

pub(crate) fn collect_argmin(points: Vec<FrontierPoint>, meo_cap: f64) -> Frontier {
    let best = points
        .iter()
        .filter(|p| p.feasible)
        .map(|p| p.error)
        .fold(f64::INFINITY, f64::min);
    let argmin: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.feasible && p.error <= best + TIE_TOLERANCE)
        .map(|(k, _)| k)
        .collect();
    let diagnostic = argmin.is_empty().then(|| {
        let lowest = points
            .iter()
            .min_by(|a, b| a.mean_eo.total_cmp(&b.mean_eo))
            .expect("grid is nonempty");
        format!(
            "no threshold has mean_eo <= {meo_cap}; lowest is {} at t = {}",
            lowest.mean_eo, lowest.threshold
        )
    });
    Frontier {
        points,
        argmin,
        diagnostic,
    }
}
