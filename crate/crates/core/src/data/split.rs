use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mixture::largest_remainder;
use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Disjoint train / validation / test index lists covering `0..n`, each sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub fractions: [f64; 3],
    pub seed: u64,
}

/// Stratified split by `(group, label)` cell.
///
/// Part sizes are `fractions * n` rounded by largest remainder. Inside each
/// cell the rows are shuffled and the `r`-th shuffled row gets key
/// `r / cell_size`; rows are then dealt to train, valid, test in key order.
/// Every cell therefore contributes its first shuffled row before any cell
/// contributes a second, and each part receives a near-proportional share of
/// every cell.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Split> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::Validation(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("split fractions sum to {total}, not 1")));
    }
    let n = ds.n();
    if n < 3 {
        return Err(Error::TooSmall(format!("cannot split {n} rows three ways")));
    }
    let sizes = largest_remainder(&fractions, n);

    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); ds.k() * 2];
    for i in 0..n {
        cells[ds.group(i) * 2 + ds.label(i) as usize].push(i);
    }
    let mut rng = rng::stream(seed, rng::purpose::SPLIT);
    let mut keyed: Vec<(f64, usize, usize, usize)> = Vec::with_capacity(n);
    for (c, rows) in cells.iter_mut().enumerate() {
        rows.shuffle(&mut rng);
        let size = rows.len() as f64;
        for (rank, &i) in rows.iter().enumerate() {
            keyed.push((rank as f64 / size, c, rank, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    let mut it = keyed.into_iter().map(|k| k.3);
    for (part, &size) in parts.iter_mut().zip(&sizes) {
        part.extend(it.by_ref().take(size));
        part.sort_unstable();
    }
    let [train_idx, valid_idx, test_idx] = parts;
    Ok(Split {
        train_idx,
        valid_idx,
        test_idx,
        fractions,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> Dataset {
        let features = (0..n).map(|i| i as f64).collect();
        let group = (0..n).map(|i| i % 2).collect();
        let label = (0..n).map(|i| ((i / 2) % 2) as u8).collect();
        Dataset::new(features, 1, group, label).unwrap()
    }

    #[test]
    fn lopsided_fractions() {
        let s = split(&dataset(300), [0.98, 0.01, 0.01], 7).unwrap();
        assert_eq!(s.train_idx.len(), 294);
        assert_eq!(s.valid_idx.len(), 3);
        assert_eq!(s.test_idx.len(), 3);
    }

    #[test]
    fn covers_and_is_deterministic() {
        let ds = dataset(101);
        let a = split(&ds, [0.6, 0.2, 0.2], 1).unwrap();
        assert_eq!(a, split(&ds, [0.6, 0.2, 0.2], 1).unwrap());
        let mut all: Vec<usize> = [a.train_idx, a.valid_idx, a.test_idx].concat();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
    }

    #[test]
    fn every_cell_reaches_train() {
        // One row per cell in group 1 except a 3-row positive cell.
        let group = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let label = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 1, 1, 1];
        let ds = Dataset::new((0..14).map(f64::from).collect(), 1, group, label).unwrap();
        let s = split(&ds, [0.5, 0.25, 0.25], 3).unwrap();
        assert!(s.train_idx.iter().any(|&i| i >= 11));
        assert!(s.train_idx.contains(&10));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            split(&dataset(2), [0.5, 0.25, 0.25], 0),
            Err(Error::TooSmall(_))
        ));
        assert!(split(&dataset(10), [0.5, 0.5, 0.0], 0).is_err());
        assert!(split(&dataset(10), [0.5, 0.3, 0.3], 0).is_err());
    }
}
