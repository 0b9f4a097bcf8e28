//! Post-processing interventions that trade accuracy for group fairness,
//! and the exhaustive search over fairness-constrained 1-D thresholds.

mod eqodds;
mod frontier;
mod reject;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Scorer;
use crate::multiplicity::predict;

pub use eqodds::{fit_eqodds_mix, mixed_rates, EqOddsMixRule, GroupFlips, EO_TOLERANCE};
pub use frontier::{frontier_grid, threshold_frontier, Frontier, FrontierPoint, TIE_TOLERANCE};
pub use reject::{fit_reject_option, RejectOptionParams, RejectOptionRule, BAND_STEP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FairnessRule {
    /// Leaves predictions untouched.
    Identity {
        dataset_fingerprint: String,
    },
    RejectOption(RejectOptionRule),
    EqoddsMix(EqOddsMixRule),
}

impl FairnessRule {
    pub fn dataset_fingerprint(&self) -> &str {
        match self {
            FairnessRule::Identity { dataset_fingerprint } => dataset_fingerprint,
            FairnessRule::RejectOption(r) => &r.dataset_fingerprint,
            FairnessRule::EqoddsMix(r) => &r.dataset_fingerprint,
        }
    }
}

/// Output of a corrected scorer on a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub predictions: Vec<u8>,
    /// Reject-option keeps the scorer output outside the band and snaps
    /// relabelled rows to 0 or 1; mixing emits hard labels.
    pub scores: Vec<f64>,
}

/// Runs `scorer` on rows `idx` and post-processes with `rule`.
pub fn apply(rule: &FairnessRule, scorer: &Scorer, ds: &Dataset, idx: &[usize]) -> Result<Corrected> {
    if rule.dataset_fingerprint() != ds.fingerprint() {
        return Err(Error::StaleRule {
            expected: rule.dataset_fingerprint().to_string(),
            actual: ds.fingerprint().to_string(),
        });
    }
    let scores = scorer.scores(ds, idx)?;
    Ok(match rule {
        FairnessRule::Identity { .. } => Corrected {
            predictions: scores.iter().map(|&s| predict(s)).collect(),
            scores,
        },
        FairnessRule::RejectOption(r) => {
            let (predictions, scores) = reject::correct(
                r.band,
                r.privileged_group,
                r.favorable_label,
                &scores,
                idx.iter().map(|&i| ds.group(i)),
            );
            Corrected { predictions, scores }
        }
        FairnessRule::EqoddsMix(r) => {
            let predictions = eqodds::mix(r, &scores, ds, idx);
            Corrected {
                scores: predictions.iter().map(|&p| f64::from(p)).collect(),
                predictions,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{discretize_mixture, sample_mixture, split, GaussianMixtureSpec};
    use crate::fairness::FairnessReport;
    use crate::models::{train, TrainConfig};

    fn fitted() -> (Dataset, Vec<usize>, Scorer) {
        let ds = sample_mixture(&GaussianMixtureSpec::asymmetric(), 4000, 8).unwrap();
        let sp = split(&ds, [0.6, 0.2, 0.2], 8).unwrap();
        let s = train(&ds, &sp, &TrainConfig::default()).unwrap();
        (ds, sp.valid_idx, s)
    }

    #[test]
    fn identity_rules_match_thresholding() {
        let (ds, idx, s) = fitted();
        let base: Vec<u8> = s.scores(&ds, &idx).unwrap().into_iter().map(predict).collect();
        let fp = ds.fingerprint().to_string();
        let id = FairnessRule::Identity {
            dataset_fingerprint: fp.clone(),
        };
        assert_eq!(apply(&id, &s, &ds, &idx).unwrap().predictions, base);
        let band0 = FairnessRule::RejectOption(RejectOptionRule {
            band: 0.0,
            privileged_group: 0,
            favorable_label: 1,
            target_meo: 1.0,
            achieved_meo: 0.0,
            feasible: true,
            dataset_fingerprint: fp.clone(),
        });
        assert_eq!(apply(&band0, &s, &ds, &idx).unwrap().predictions, base);
        let zero = FairnessRule::EqoddsMix(EqOddsMixRule {
            flips: vec![GroupFlips { up: 0.0, down: 0.0 }; 2],
            seed: 1,
            tpr: vec![],
            fpr: vec![],
            expected_error: 0.0,
            dataset_fingerprint: fp,
        });
        assert_eq!(apply(&zero, &s, &ds, &idx).unwrap().predictions, base);
    }

    #[test]
    fn stale_rule_is_rejected() {
        let (ds, idx, s) = fitted();
        let rule = FairnessRule::Identity {
            dataset_fingerprint: "0".repeat(64),
        };
        assert!(matches!(apply(&rule, &s, &ds, &idx), Err(Error::StaleRule { .. })));
    }

    #[test]
    fn reject_option_meets_target_minimally() {
        let (ds, idx, s) = fitted();
        let params = RejectOptionParams::new(0.05, 0, 1);
        let rule = fit_reject_option(&s, &ds, &idx, &params).unwrap();
        let out = apply(&FairnessRule::RejectOption(rule.clone()), &s, &ds, &idx).unwrap();
        let after = FairnessReport::evaluate(&out.predictions, &ds, &idx).unwrap().mean_eo;
        assert_eq!(after, rule.achieved_meo);
        if rule.feasible {
            assert!(after <= 0.05);
            // every smaller grid band misses the target
            let k = (rule.band / BAND_STEP).round() as usize;
            for j in 0..k {
                let r = RejectOptionRule {
                    band: j as f64 * BAND_STEP,
                    ..rule.clone()
                };
                let p = apply(&FairnessRule::RejectOption(r), &s, &ds, &idx).unwrap();
                assert!(FairnessReport::evaluate(&p.predictions, &ds, &idx).unwrap().mean_eo > 0.05);
            }
        }
        for (&v, &i) in out.scores.iter().zip(&idx) {
            let raw = s.score(ds.row(i));
            assert!(v == 0.0 || v == 1.0 || ((raw - 0.5).abs() >= rule.band && v == raw));
        }
    }

    #[test]
    fn reject_option_needs_two_groups() {
        let ds = Dataset::new(vec![0.0, 1.0, 2.0], 1, vec![0, 1, 2], vec![0, 1, 0]).unwrap();
        let r = fit_reject_option(
            &Scorer::constant(0.5),
            &ds,
            &[0, 1, 2],
            &RejectOptionParams::new(0.1, 0, 1),
        );
        assert!(matches!(r, Err(Error::UnsupportedGroupCount(3))));
    }

    #[test]
    fn eqodds_mix_is_reproducible_and_fair_in_expectation() {
        let (ds, idx, s) = fitted();
        let rule = fit_eqodds_mix(&s, &ds, &idx, 77).unwrap();
        assert!((rule.tpr[0] - rule.tpr[1]).abs() <= EO_TOLERANCE + 1e-9);
        assert!((rule.fpr[0] - rule.fpr[1]).abs() <= EO_TOLERANCE + 1e-9);
        let r = FairnessRule::EqoddsMix(rule);
        let a = apply(&r, &s, &ds, &idx).unwrap();
        let b = apply(&r, &s, &ds, &idx).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frontier_vacuous_cap_is_unconstrained() {
        let ds = discretize_mixture(&GaussianMixtureSpec::asymmetric(), 2000).unwrap();
        let idx = ds.all_indices();
        let grid = frontier_grid(&ds, &idx, 513).unwrap();
        let f = threshold_frontier(&ds, &idx, &grid, 1.0).unwrap();
        let best = f.points.iter().map(|p| p.error).fold(f64::INFINITY, f64::min);
        let expected: Vec<usize> = (0..grid.len()).filter(|&k| f.points[k].error <= best + 1e-12).collect();
        assert_eq!(f.argmin, expected);
        assert!(f.diagnostic.is_none());
    }

    #[test]
    fn frontier_symmetric_groups_are_fair() {
        let ds = discretize_mixture(&GaussianMixtureSpec::symmetric(), 4000).unwrap();
        let idx = ds.all_indices();
        let grid = frontier_grid(&ds, &idx, 257).unwrap();
        let f = threshold_frontier(&ds, &idx, &grid, 1.0).unwrap();
        assert!(f.points.iter().all(|p| p.mean_eo < 1e-12));
    }

    #[test]
    fn frontier_reports_infeasible_cap() {
        let ds = discretize_mixture(&GaussianMixtureSpec::asymmetric(), 400).unwrap();
        let idx = ds.all_indices();
        let f = threshold_frontier(&ds, &idx, &[-0.25], 0.0).unwrap();
        assert!(f.argmin.is_empty());
        assert!(f.diagnostic.is_some());
    }
}
