use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness;
use crate::models::Scorer;
use crate::multiplicity::predict;
use crate::rng;

/// Largest allowed gap in expected TPR and FPR between the two groups.
pub const EO_TOLERANCE: f64 = 0.005;

/// Flip probabilities of one group: `up` is `P(0 -> 1)`, `down` is `P(1 -> 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupFlips {
    pub up: f64,
    pub down: f64,
}

/// Randomized relabelling that equalizes expected TPR and FPR across two
/// groups at minimum expected error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqOddsMixRule {
    pub flips: Vec<GroupFlips>,
    pub seed: u64,
    /// Expected rates on the fitting rows after mixing, per group.
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub expected_error: f64,
    pub dataset_fingerprint: String,
}

/// Expected `(TPR, FPR)` after applying `flips` to a classifier with rates
/// `(tpr, fpr)`: `r' = r (1 - down) + (1 - r) up`.
pub fn mixed_rates(tpr: f64, fpr: f64, flips: GroupFlips) -> (f64, f64) {
    let mix = |r: f64| r * (1.0 - flips.down) + (1.0 - r) * flips.up;
    (mix(tpr), mix(fpr))
}

/// Base rates and cell sizes `(tpr, fpr, positives, negatives)` per group.
type Base = [(f64, f64, f64, f64); 2];

fn expected_error(base: &Base, x: &[f64; 4], total: f64) -> f64 {
    let mut err = 0.0;
    for g in 0..2 {
        let (t, f, p, n) = base[g];
        let (t2, f2) = mixed_rates(
            t,
            f,
            GroupFlips {
                up: x[2 * g],
                down: x[2 * g + 1],
            },
        );
        err += p * (1.0 - t2) + n * f2;
    }
    err / total
}

/// Solves `a x = b` for a 4 by 4 system by Gaussian elimination with partial
/// pivoting; `None` when (numerically) singular.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for k in col..4 {
                a[row][k] -= factor * pivot_row[k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Minimizes expected error over the four flip probabilities subject to
/// `|dTPR|, |dFPR| <= tol`. The problem is a bounded linear program in
/// `(up_0, down_0, up_1, down_1)`, so an optimum sits on a vertex of the
/// feasible polytope; all vertices are enumerated. Ties go to the smaller
/// total flip probability.
fn solve(base: &Base, tol: f64) -> [f64; 4] {
    let total: f64 = base.iter().map(|b| b.2 + b.3).sum();
    // each rate is affine in x: r_g' = r_g + up_g (1 - r_g) - down_g r_g
    let gap_row = |sel: fn(&(f64, f64, f64, f64)) -> f64| -> ([f64; 4], f64) {
        let (r0, r1) = (sel(&base[0]), sel(&base[1]));
        ([1.0 - r0, -r0, -(1.0 - r1), r1], r0 - r1)
    };
    let (ct, dt) = gap_row(|b| b.0);
    let (cf, df) = gap_row(|b| b.1);
    let mut rows: Vec<([f64; 4], f64)> = Vec::with_capacity(12);
    for i in 0..4 {
        let mut e = [0.0; 4];
        e[i] = 1.0;
        rows.push((e, 1.0));
        e[i] = -1.0;
        rows.push((e, 0.0));
    }
    for (c, d) in [(ct, dt), (cf, df)] {
        rows.push((c, tol - d));
        rows.push((c.map(|v| -v), tol + d));
    }
    let feasible = |x: &[f64; 4]| {
        rows.iter()
            .all(|(c, h)| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() <= h + 1e-12)
    };

    let mut best: Option<([f64; 4], f64, f64)> = None;
    let n = rows.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let pick = [i, j, k, l];
                    let a = pick.map(|r| rows[r].0);
                    let b = pick.map(|r| rows[r].1);
                    let Some(mut x) = solve4(a, b) else { continue };
                    if !feasible(&x) {
                        continue;
                    }
                    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                    let obj = expected_error(base, &x, total);
                    let l1: f64 = x.iter().sum();
                    let better = match best {
                        None => true,
                        Some((_, bo, bl)) => obj < bo - 1e-12 || (obj <= bo + 1e-12 && l1 < bl - 1e-12),
                    };
                    if better {
                        best = Some((x, obj, l1));
                    }
                }
            }
        }
    }
    // Flipping everything with probability 1/2 is always feasible, so the
    // polytope is nonempty and has a vertex.
    best.map_or([0.5; 4], |b| b.0)
}

/// Fits flip probabilities for `scorer` on rows `idx`.
pub fn fit_eqodds_mix(scorer: &Scorer, ds: &Dataset, idx: &[usize], seed: u64) -> Result<EqOddsMixRule> {
    if ds.k() != 2 {
        return Err(Error::UnsupportedGroupCount(ds.k()));
    }
    let preds: Vec<u8> = scorer.scores(ds, idx)?.into_iter().map(predict).collect();
    let rates = fairness::group_rates(&preds, ds, idx)?;
    let mut base: Base = [(0.0, 0.0, 0.0, 0.0); 2];
    for (g, r) in rates.groups.iter().enumerate() {
        let tpr = r.tpr.ok_or(Error::UndefinedRate { group: g, label: 1 })?;
        let fpr = r.fpr.ok_or(Error::UndefinedRate { group: g, label: 0 })?;
        base[g] = (tpr, fpr, r.counts.positives() as f64, r.counts.negatives() as f64);
    }
    let x = solve(&base, EO_TOLERANCE);
    let flips: Vec<GroupFlips> = (0..2)
        .map(|g| GroupFlips {
            up: x[2 * g],
            down: x[2 * g + 1],
        })
        .collect();
    let mixed: Vec<(f64, f64)> = (0..2).map(|g| mixed_rates(base[g].0, base[g].1, flips[g])).collect();
    let total: f64 = base.iter().map(|b| b.2 + b.3).sum();
    Ok(EqOddsMixRule {
        flips,
        seed,
        tpr: mixed.iter().map(|r| r.0).collect(),
        fpr: mixed.iter().map(|r| r.1).collect(),
        expected_error: expected_error(&base, &x, total),
        dataset_fingerprint: ds.fingerprint().to_string(),
    })
}

/// Applies the flips; row `i` draws its uniform from its own stream, so
/// the outcome of a row does not depend on which other rows are present.
pub(crate) fn mix(rule: &EqOddsMixRule, scores: &[f64], ds: &Dataset, idx: &[usize]) -> Vec<u8> {
    scores
        .iter()
        .zip(idx)
        .map(|(&s, &i)| {
            let p = predict(s);
            let f = rule.flips[ds.group(i)];
            let u: f64 = rng::indexed(rule.seed, rng::purpose::MIX, i as u64).random();
            let flip = if p == 1 { f.down } else { f.up };
            if u < flip {
                1 - p
            } else {
                p
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_algebra() {
        let (t, f) = mixed_rates(1.0, 0.0, GroupFlips { up: 0.5, down: 0.5 });
        assert_eq!((t, f), (0.5, 0.5));
        let (t, f) = mixed_rates(0.5, 0.5, GroupFlips { up: 0.3, down: 0.9 });
        assert!((t - 0.2).abs() < 1e-15 && (f - 0.2).abs() < 1e-15);
    }

    #[test]
    fn solve4_identity() {
        let mut a = [[0.0; 4]; 4];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 2.0;
        }
        assert_eq!(solve4(a, [2.0, 4.0, 6.0, 8.0]), Some([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(solve4([[0.0; 4]; 4], [0.0; 4]), None);
    }

    #[test]
    fn equal_rates_need_no_flips() {
        let base = [(0.8, 0.2, 50.0, 50.0), (0.8, 0.2, 30.0, 70.0)];
        assert_eq!(solve(&base, EO_TOLERANCE), [0.0; 4]);
    }

    /// Coarse grid over all four flips as an independent oracle.
    fn grid_oracle(base: &Base) -> f64 {
        let total: f64 = base.iter().map(|b| b.2 + b.3).sum();
        let steps: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
        let mut best = f64::INFINITY;
        for &a0 in &steps {
            for &b0 in &steps {
                for &a1 in &steps {
                    for &b1 in &steps {
                        let x = [a0, b0, a1, b1];
                        let r0 = mixed_rates(base[0].0, base[0].1, GroupFlips { up: a0, down: b0 });
                        let r1 = mixed_rates(base[1].0, base[1].1, GroupFlips { up: a1, down: b1 });
                        if (r0.0 - r1.0).abs() <= EO_TOLERANCE && (r0.1 - r1.1).abs() <= EO_TOLERANCE {
                            best = best.min(expected_error(base, &x, total));
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn lp_beats_grid_and_is_feasible() {
        for base in [
            [(1.0, 0.0, 40.0, 60.0), (0.5, 0.5, 50.0, 50.0)],
            [(0.9, 0.3, 100.0, 80.0), (0.6, 0.1, 70.0, 120.0)],
            [(0.75, 0.25, 4.0, 4.0), (0.5, 0.5, 4.0, 4.0)],
        ] {
            let x = solve(&base, EO_TOLERANCE);
            let r0 = mixed_rates(base[0].0, base[0].1, GroupFlips { up: x[0], down: x[1] });
            let r1 = mixed_rates(base[1].0, base[1].1, GroupFlips { up: x[2], down: x[3] });
            assert!((r0.0 - r1.0).abs() <= EO_TOLERANCE + 1e-9);
            assert!((r0.1 - r1.1).abs() <= EO_TOLERANCE + 1e-9);
            let total: f64 = base.iter().map(|b| b.2 + b.3).sum();
            assert!(expected_error(&base, &x, total) <= grid_oracle(&base) + 1e-12);
        }
    }
}
