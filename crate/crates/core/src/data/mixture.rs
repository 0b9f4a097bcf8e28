use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// One `(group, label)` cell of a one-dimensional Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureCell {
    pub group: usize,
    pub label: u8,
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub cells: Vec<MixtureCell>,
}

impl GaussianMixtureSpec {
    /// Two groups with unit-variance classes, group 1 shifted left by 0.5:
    /// group 0 positives N(1, 1), negatives N(-1, 1); group 1 positives
    /// N(0.5, 1), negatives N(-1.5, 1); all cells weighted 1/4.
    ///
    /// The group-blind error-optimal threshold is -0.25 and Mean EO is
    /// mirror-symmetric around it.
    pub fn asymmetric() -> Self {
        let cell = |group, label, mean| MixtureCell {
            group,
            label,
            mean,
            std: 1.0,
            weight: 0.25,
        };
        GaussianMixtureSpec {
            cells: vec![cell(0, 1, 1.0), cell(0, 0, -1.0), cell(1, 1, 0.5), cell(1, 0, -1.5)],
        }
    }

    /// Both groups share the same class-conditional distributions.
    pub fn symmetric() -> Self {
        let cell = |group, label, mean| MixtureCell {
            group,
            label,
            mean,
            std: 1.0,
            weight: 0.25,
        };
        GaussianMixtureSpec {
            cells: vec![cell(0, 1, 1.0), cell(0, 0, -1.0), cell(1, 1, 1.0), cell(1, 0, -1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Validation("mixture has no cells".into()));
        }
        let mut total = 0.0;
        for c in &self.cells {
            if !(c.std > 0.0 && c.std.is_finite()) {
                return Err(Error::Validation(format!("cell std must be > 0, got {}", c.std)));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::Validation(format!("cell weight must be >= 0, got {}", c.weight)));
            }
            if !c.mean.is_finite() {
                return Err(Error::Validation("cell mean must be finite".into()));
            }
            if c.label > 1 {
                return Err(Error::Validation(format!("cell label {} is not 0 or 1", c.label)));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("cell weights sum to {total}, not 1")));
        }
        let k = self.cells.iter().map(|c| c.group).max().unwrap_or(0) + 1;
        for g in 0..k {
            if !self.cells.iter().any(|c| c.group == g) {
                return Err(Error::Validation(format!("group ids skip {g}")));
            }
        }
        Ok(())
    }

    fn cumulative(&self) -> Vec<f64> {
        self.cells
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.weight;
                Some(*acc)
            })
            .collect()
    }
}

/// Draws `n` rows iid from the mixture. Pure function of `(spec, n, seed)`.
///
/// Groups that receive no rows are dropped and the remaining ids compacted,
/// keeping the original ids as group names.
pub fn sample_mixture(spec: &GaussianMixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Validation("n must be at least 1".into()));
    }
    let cumulative = spec.cumulative();
    let total = *cumulative.last().unwrap();
    let mut rng = rng::stream(seed, rng::purpose::SAMPLE);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let ci = cumulative.iter().position(|&c| u < c).unwrap_or(spec.cells.len() - 1);
        let cell = &spec.cells[ci];
        let noise = Normal::new(cell.mean, cell.std)
            .map_err(|e| Error::Validation(e.to_string()))?
            .sample(&mut rng);
        rows.push((cell.group, cell.label, noise));
    }
    assemble(spec, rows)
}

/// Deterministic stratified discretization of the mixture: cell sizes are
/// `w * n` rounded by largest remainder, and a cell with `c` rows places
/// them at the mid-quantiles `mean + std * z((i + 0.5) / c)`.
///
/// The quantiles are antisymmetric (`z(1 - p) == -z(p)` bit-for-bit), so a
/// mixture that is mirror-symmetric about some point produces an exactly
/// mirror-symmetric sample. Rows are ordered by cell.
pub fn discretize_mixture(spec: &GaussianMixtureSpec, n: usize) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Validation("n must be at least 1".into()));
    }
    let counts = largest_remainder(&spec.cells.iter().map(|c| c.weight).collect::<Vec<_>>(), n);
    let unit = StatNormal::new(0.0, 1.0).expect("standard normal");
    let mut rows = Vec::with_capacity(n);
    for (cell, &c) in spec.cells.iter().zip(&counts) {
        for i in 0..c {
            let z = if 2 * i < c {
                unit.inverse_cdf((i as f64 + 0.5) / c as f64)
            } else {
                -unit.inverse_cdf(((c - i) as f64 - 0.5) / c as f64)
            };
            rows.push((cell.group, cell.label, cell.mean + cell.std * z));
        }
    }
    assemble(spec, rows)
}

/// Splits `total` into integer parts proportional to `weights`; leftover
/// units go to the largest fractional parts, earlier entries first on ties.
pub(crate) fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn assemble(spec: &GaussianMixtureSpec, rows: Vec<(usize, u8, f64)>) -> Result<Dataset> {
    let k = spec.cells.iter().map(|c| c.group).max().unwrap_or(0) + 1;
    let mut present = vec![false; k];
    for &(g, _, _) in &rows {
        present[g] = true;
    }
    let mut remap = vec![usize::MAX; k];
    let mut names = Vec::new();
    for g in 0..k {
        if present[g] {
            remap[g] = names.len();
            names.push(g.to_string());
        }
    }
    let mut features = Vec::with_capacity(rows.len());
    let mut group = Vec::with_capacity(rows.len());
    let mut label = Vec::with_capacity(rows.len());
    for (g, y, x) in rows {
        features.push(x);
        group.push(remap[g]);
        label.push(y);
    }
    Dataset::with_group_names(features, 1, group, label, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row() {
        let ds = sample_mixture(&GaussianMixtureSpec::asymmetric(), 1, 3).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.k(), 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = GaussianMixtureSpec::asymmetric();
        let a = sample_mixture(&spec, 500, 11).unwrap();
        let b = sample_mixture(&spec, 500, 11).unwrap();
        let c = sample_mixture(&spec, 500, 12).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = GaussianMixtureSpec::asymmetric();
        spec.cells[0].std = 0.0;
        assert!(sample_mixture(&spec, 10, 0).is_err());
        let mut spec = GaussianMixtureSpec::asymmetric();
        spec.cells[0].weight = 0.5;
        assert!(sample_mixture(&spec, 10, 0).is_err());
        let mut spec = GaussianMixtureSpec::asymmetric();
        spec.cells[2].group = 2;
        spec.cells[3].group = 2;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn cell_proportions_concentrate() {
        // Binomial concentration: each cell count is within 5 standard
        // deviations of n * w.
        let spec = GaussianMixtureSpec::asymmetric();
        let n = 20_000;
        let ds = sample_mixture(&spec, n, 2024).unwrap();
        for cell in &spec.cells {
            let count = (0..n)
                .filter(|&i| ds.group(i) == cell.group && ds.label(i) == cell.label)
                .count();
            let p = count as f64 / n as f64;
            let tol = 5.0 * (cell.weight * (1.0 - cell.weight) / n as f64).sqrt();
            assert!((p - cell.weight).abs() <= tol, "cell {cell:?}: {p}");
        }
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(&[0.25; 4], 10), vec![3, 3, 2, 2]);
        assert_eq!(largest_remainder(&[0.98, 0.01, 0.01], 300), vec![294, 3, 3]);
    }

    #[test]
    fn discretization_is_mirror_symmetric() {
        // Asymmetric mixture mirrors about -0.25: (g0, +, 1) <-> (g1, -, -1.5)
        // and (g1, +, 0.5) <-> (g0, -, -1).
        let ds = discretize_mixture(&GaussianMixtureSpec::asymmetric(), 4000).unwrap();
        let cell = |g: usize, y: u8| -> Vec<f64> {
            let mut v: Vec<f64> = (0..ds.n())
                .filter(|&i| ds.group(i) == g && ds.label(i) == y)
                .map(|i| ds.row(i)[0])
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let a = cell(0, 1);
        let mut b: Vec<f64> = cell(1, 0).iter().map(|x| -0.5 - x).collect();
        b.sort_by(f64::total_cmp);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
