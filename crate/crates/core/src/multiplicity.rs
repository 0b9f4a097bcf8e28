//! Predictive-multiplicity metrics over a matrix of scores: ambiguity,
//! per-sample score spread and its empirical distribution, and the
//! accuracy by Mean EO binning used to group comparable models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `m` models scored on `n` samples, row-major, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    values: Vec<f64>,
    m: usize,
    n: usize,
    model_ids: Vec<String>,
    sample_idx: Vec<usize>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>, model_ids: Vec<String>, sample_idx: Vec<usize>) -> Result<Self> {
        let m = rows.len();
        let n = sample_idx.len();
        if m == 0 {
            return Err(Error::Validation("score matrix needs at least one model".into()));
        }
        if model_ids.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} rows but {} model ids",
                model_ids.len()
            )));
        }
        let mut values = Vec::with_capacity(m * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} scores, expected {n}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Validation(format!("score {v} of model {i} outside [0, 1]")));
            }
            values.extend(row);
        }
        Ok(ScoreMatrix {
            values,
            m,
            n,
            model_ids,
            sample_idx,
        })
    }

    /// Matrix with ids `0..m` and samples `0..n`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(rows, ids, (0..n).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn sample_idx(&self) -> &[usize] {
        &self.sample_idx
    }

    /// Sub-matrix of the given model rows, in the given order; repeats allowed.
    pub fn select_models(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("cannot select zero models".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * self.n);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.m {
                return Err(Error::IndexOutOfBounds { index: r, len: self.m });
            }
            values.extend_from_slice(self.row(r));
            ids.push(self.model_ids[r].clone());
        }
        Ok(ScoreMatrix {
            values,
            m: rows.len(),
            n: self.n,
            model_ids: ids,
            sample_idx: self.sample_idx.clone(),
        })
    }

    /// Sub-matrix restricted to the given column positions.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.n) {
            return Err(Error::IndexOutOfBounds { index: c, len: self.n });
        }
        let rows = (0..self.m)
            .map(|i| cols.iter().map(|&j| self.get(i, j)).collect())
            .collect();
        Self::new(
            rows,
            self.model_ids.clone(),
            cols.iter().map(|&j| self.sample_idx[j]).collect(),
        )
    }

    /// Thresholded predictions `1{score >= 0.5}` of model `i`.
    pub fn predictions(&self, i: usize) -> Vec<u8> {
        self.row(i).iter().map(|&s| predict(s)).collect()
    }
}

/// The decision rule shared by every module.
pub fn predict(score: f64) -> u8 {
    u8::from(score >= 0.5)
}

/// Fraction of samples on which two models disagree after thresholding.
///
/// A column is ambiguous iff its thresholded minimum and maximum differ.
/// A single model has ambiguity 0.
pub fn ambiguity(sm: &ScoreMatrix) -> f64 {
    if sm.n == 0 {
        return 0.0;
    }
    let mut lo = vec![1u8; sm.n];
    let mut hi = vec![0u8; sm.n];
    for i in 0..sm.m {
        for (j, &s) in sm.row(i).iter().enumerate() {
            let p = predict(s);
            lo[j] = lo[j].min(p);
            hi[j] = hi[j].max(p);
        }
    }
    let conflicting = lo.iter().zip(&hi).filter(|(l, h)| l != h).count();
    conflicting as f64 / sm.n as f64
}

/// Bessel-corrected standard deviation of each column.
pub fn score_std(sm: &ScoreMatrix) -> Result<Vec<f64>> {
    if sm.m < 2 {
        return Err(Error::UndefinedStd(sm.m));
    }
    let m = sm.m as f64;
    let mut mean = vec![0.0; sm.n];
    for i in 0..sm.m {
        for (acc, s) in mean.iter_mut().zip(sm.row(i)) {
            *acc += s;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut ss = vec![0.0; sm.n];
    for i in 0..sm.m {
        for ((acc, s), mu) in ss.iter_mut().zip(sm.row(i)).zip(&mean) {
            *acc += (s - mu) * (s - mu);
        }
    }
    Ok(ss.into_iter().map(|v| (v / (m - 1.0)).sqrt()).collect())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Lower inverse-CDF quantile: the smallest observed value `t` with
/// `F(t) >= q`, where `F` is the right-continuous empirical CDF.
pub fn std_quantile(stds: &[f64], q: f64) -> Result<f64> {
    if stds.is_empty() {
        return Err(Error::Validation("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Validation(format!("quantile level {q} outside [0, 1]")));
    }
    Ok(quantile_sorted(&sorted(stds), q))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    // smallest k in 1..=n with k / n >= q
    let k = (1..=n).find(|&k| k as f64 / n as f64 >= q).unwrap_or(n);
    sorted[k - 1]
}

/// `(t, q)`-pairs for each requested level.
pub fn quantile_table(stds: &[f64], levels: &[f64]) -> Result<Vec<(f64, f64)>> {
    levels.iter().map(|&q| Ok((q, std_quantile(stds, q)?))).collect()
}

/// Empirical CDF as `(t, F(t))` at every distinct observed value.
pub fn cdf_table(stds: &[f64]) -> Vec<(f64, f64)> {
    let s = sorted(stds);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = f,
            _ => out.push((v, f)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub ambiguity: f64,
    pub per_sample_std: Vec<f64>,
    pub quantile_table: Vec<(f64, f64)>,
    pub cdf: Vec<(f64, f64)>,
}

impl MultiplicityReport {
    pub fn compute(sm: &ScoreMatrix, levels: &[f64]) -> Result<Self> {
        let per_sample_std = score_std(sm)?;
        Ok(MultiplicityReport {
            ambiguity: ambiguity(sm),
            quantile_table: quantile_table(&per_sample_std, levels)?,
            cdf: cdf_table(&per_sample_std),
            per_sample_std,
        })
    }
}

/// Number of cells per axis of the frontier grid.
pub const FRONTIER_BINS: usize = 8;

/// One occupied cell of the accuracy by Mean EO grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierBin {
    pub accuracy_bin: usize,
    pub mean_eo_bin: usize,
    pub accuracy_interval: (f64, f64),
    pub mean_eo_interval: (f64, f64),
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn over(values: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Axis { lo, hi }
    }

    fn degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    fn edge(&self, k: usize) -> f64 {
        if k == FRONTIER_BINS {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / FRONTIER_BINS as f64
        }
    }

    /// Bin `b` covers `(edge(b), edge(b + 1)]`; bin 0 also holds the minimum.
    fn index(&self, v: f64) -> usize {
        if self.degenerate() {
            return 0;
        }
        (1..FRONTIER_BINS).filter(|&k| self.edge(k) < v).count()
    }

    fn interval(&self, b: usize) -> (f64, f64) {
        if self.degenerate() {
            (self.lo, self.hi)
        } else {
            (self.edge(b), self.edge(b + 1))
        }
    }
}

/// Places each `(model id, accuracy, mean_eo)` in an 8 by 8 grid spanning
/// the observed range of each axis. Values on an interior edge go to the
/// lower bin. Returns the occupied bins ordered by `(accuracy_bin,
/// mean_eo_bin)`, members in input order.
pub fn bin_frontier(reports: &[(String, f64, f64)]) -> Result<Vec<FrontierBin>> {
    if reports.is_empty() {
        return Err(Error::Validation("cannot bin an empty frontier".into()));
    }
    let acc = Axis::over(reports.iter().map(|r| r.1));
    let meo = Axis::over(reports.iter().map(|r| r.2));
    let mut bins: Vec<FrontierBin> = Vec::new();
    for (id, a, e) in reports {
        let (ab, eb) = (acc.index(*a), meo.index(*e));
        match bins.iter_mut().find(|b| b.accuracy_bin == ab && b.mean_eo_bin == eb) {
            Some(bin) => bin.members.push(id.clone()),
            None => bins.push(FrontierBin {
                accuracy_bin: ab,
                mean_eo_bin: eb,
                accuracy_interval: acc.interval(ab),
                mean_eo_interval: meo.interval(eb),
                members: vec![id.clone()],
            }),
        }
    }
    bins.sort_by_key(|b| (b.accuracy_bin, b.mean_eo_bin));
    Ok(bins)
}
