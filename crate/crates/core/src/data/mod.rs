//! Datasets of `(features, group, label)` triplets, CSV ingestion,
//! stratified splitting and the Gaussian-mixture generators.

mod io;
mod mixture;
mod split;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use io::{load_csv, read_canonical, write_canonical, CsvSchema};
pub use mixture::{discretize_mixture, sample_mixture, GaussianMixtureSpec, MixtureCell};
pub use split::{split, Split};

/// Per-column affine transform applied at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Column-wise mean and population standard deviation. Constant columns
    /// get scale 1 so they map to 0.
    pub fn fit(columns: Vec<String>, features: &[f64], d: usize) -> Self {
        let n = features.len() / d;
        let mut mean = vec![0.0; d];
        for row in features.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in features.chunks_exact(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { columns, mean, scale }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

/// `n` rows of `d` real features, a group id in `0..k` and a binary label.
///
/// Group ids are contiguous and every group has at least one row. The
/// struct is immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    d: usize,
    group: Vec<usize>,
    label: Vec<u8>,
    group_names: Vec<String>,
    standardization: Option<Standardization>,
    fingerprint: OnceLock<String>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
            && self.features == other.features
            && self.group == other.group
            && self.label == other.label
            && self.group_names == other.group_names
            && self.standardization == other.standardization
    }
}

impl Dataset {
    /// Builds a dataset from row-major features. Group names default to the
    /// decimal group ids.
    pub fn new(features: Vec<f64>, d: usize, group: Vec<usize>, label: Vec<u8>) -> Result<Self> {
        let k = group.iter().copied().max().map_or(0, |g| g + 1);
        let names = (0..k).map(|g| g.to_string()).collect();
        Self::with_group_names(features, d, group, label, names)
    }

    pub fn with_group_names(
        features: Vec<f64>,
        d: usize,
        group: Vec<usize>,
        label: Vec<u8>,
        group_names: Vec<String>,
    ) -> Result<Self> {
        let n = label.len();
        if n == 0 {
            return Err(Error::Validation("dataset must have at least one row".into()));
        }
        if d == 0 {
            return Err(Error::Validation("feature dimension must be at least 1".into()));
        }
        if group.len() != n || features.len() != n * d {
            return Err(Error::Validation(format!(
                "column lengths disagree: {} labels, {} groups, {} feature values for d = {d}",
                n,
                group.len(),
                features.len()
            )));
        }
        if let Some(bad) = label.iter().find(|&&y| y > 1) {
            return Err(Error::Validation(format!("label {bad} is not 0 or 1")));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite feature in row {}", pos / d)));
        }
        let k = group_names.len();
        let mut counts = vec![0usize; k];
        for &g in &group {
            if g >= k {
                return Err(Error::Validation(format!("group id {g} outside 0..{k}")));
            }
            counts[g] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Validation(format!("group {empty} has no rows")));
        }
        Ok(Dataset {
            features,
            d,
            group,
            label,
            group_names,
            standardization: None,
            fingerprint: OnceLock::new(),
        })
    }

    pub(crate) fn with_standardization(mut self, s: Standardization) -> Self {
        self.standardization = Some(s);
        self.fingerprint = OnceLock::new();
        self
    }

    pub fn n(&self) -> usize {
        self.label.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.group_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn group(&self, i: usize) -> usize {
        self.group[i]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.label[i]
    }

    pub fn groups(&self) -> &[usize] {
        &self.group
    }

    pub fn labels(&self) -> &[u8] {
        &self.label
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &g in &self.group {
            sizes[g] += 1;
        }
        sizes
    }

    /// Indices of every row, in order.
    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }

    pub(crate) fn check_indices(&self, idx: &[usize]) -> Result<()> {
        match idx.iter().find(|&&i| i >= self.n()) {
            Some(&index) => Err(Error::IndexOutOfBounds { index, len: self.n() }),
            None => Ok(()),
        }
    }

    /// Canonical CSV encoding: header `group_id,group,label,x0..`, floats in
    /// shortest round-trip form.
    pub fn to_canonical_csv(&self) -> Vec<u8> {
        let mut out = String::with_capacity(self.n() * (8 + 20 * self.d));
        out.push_str("group_id,group,label");
        for j in 0..self.d {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for i in 0..self.n() {
            let g = self.group[i];
            out.push_str(&format!("{g},{},{}", csv_field(&self.group_names[g]), self.label[i]));
            for v in self.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out.into_bytes()
    }

    /// SHA-256 (hex) of the canonical CSV bytes.
    pub fn fingerprint(&self) -> &str {
        self.fingerprint
            .get_or_init(|| hex::encode(Sha256::digest(self.to_canonical_csv())))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Dataset::new(vec![], 1, vec![], vec![]).is_err());
        assert!(Dataset::new(vec![0.0, 1.0], 1, vec![0], vec![0, 1]).is_err());
        assert!(Dataset::new(vec![0.0], 1, vec![0], vec![2]).is_err());
        // group 0 empty
        assert!(Dataset::new(vec![0.0], 1, vec![1], vec![0]).is_err());
        assert!(Dataset::new(vec![f64::NAN], 1, vec![0], vec![0]).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Dataset::new(vec![0.5, 1.5], 1, vec![0, 1], vec![0, 1]).unwrap();
        let b = Dataset::new(vec![0.5, 1.5], 1, vec![0, 1], vec![0, 1]).unwrap();
        let c = Dataset::new(vec![0.5, 1.25], 1, vec![0, 1], vec![0, 1]).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn standardization_handles_constant_columns() {
        let s = Standardization::fit(vec!["a".into(), "b".into()], &[1.0, 5.0, 3.0, 5.0], 2);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        let mut row = [3.0, 5.0];
        s.apply(&mut row);
        assert_eq!(row, [1.0, 0.0]);
    }
}
