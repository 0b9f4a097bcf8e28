use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness;
use crate::models::Scorer;
use crate::multiplicity::predict;

/// Band sweep resolution.
pub const BAND_STEP: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectOptionParams {
    pub target_meo: f64,
    pub privileged_group: usize,
    pub favorable_label: u8,
    pub band_step: f64,
}

impl RejectOptionParams {
    pub fn new(target_meo: f64, privileged_group: usize, favorable_label: u8) -> Self {
        RejectOptionParams {
            target_meo,
            privileged_group,
            favorable_label,
            band_step: BAND_STEP,
        }
    }
}

/// Samples with `|score - 0.5| < band` are relabelled: the privileged group
/// gets the unfavorable label, every other group the favorable one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectOptionRule {
    pub band: f64,
    pub privileged_group: usize,
    pub favorable_label: u8,
    pub target_meo: f64,
    /// Mean EO on the fitting rows after correction.
    pub achieved_meo: f64,
    /// False when no band on the grid met the target.
    pub feasible: bool,
    pub dataset_fingerprint: String,
}

/// Corrected labels and scores; relabelled samples get their label as score.
pub(crate) fn correct(
    band: f64,
    privileged_group: usize,
    favorable_label: u8,
    scores: &[f64],
    groups: impl Iterator<Item = usize>,
) -> (Vec<u8>, Vec<f64>) {
    let mut preds = Vec::with_capacity(scores.len());
    let mut out = Vec::with_capacity(scores.len());
    for (&s, g) in scores.iter().zip(groups) {
        if (s - 0.5).abs() < band {
            let y = if g == privileged_group {
                1 - favorable_label
            } else {
                favorable_label
            };
            preds.push(y);
            out.push(f64::from(y));
        } else {
            preds.push(predict(s));
            out.push(s);
        }
    }
    (preds, out)
}

/// Smallest grid band whose corrected Mean EO on `idx` is at most the
/// target; otherwise the band with the lowest Mean EO, flagged infeasible.
pub fn fit_reject_option(
    scorer: &Scorer,
    ds: &Dataset,
    idx: &[usize],
    params: &RejectOptionParams,
) -> Result<RejectOptionRule> {
    if ds.k() != 2 {
        return Err(Error::UnsupportedGroupCount(ds.k()));
    }
    if !(0.0..=1.0).contains(&params.target_meo) {
        return Err(Error::Validation(format!(
            "target_meo {} outside [0, 1]",
            params.target_meo
        )));
    }
    if params.privileged_group >= ds.k() || params.favorable_label > 1 {
        return Err(Error::Validation(
            "privileged_group or favorable_label out of range".into(),
        ));
    }
    if !(params.band_step > 0.0 && params.band_step < 0.5) {
        return Err(Error::Validation(format!(
            "band_step {} outside (0, 0.5)",
            params.band_step
        )));
    }
    let scores = scorer.scores(ds, idx)?;
    let steps = (0.5 / params.band_step).ceil() as usize;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..steps {
        let band = k as f64 * params.band_step;
        if band >= 0.5 {
            break;
        }
        let (preds, _) = correct(
            band,
            params.privileged_group,
            params.favorable_label,
            &scores,
            idx.iter().map(|&i| ds.group(i)),
        );
        let meo = fairness::mean_eo(&fairness::group_rates(&preds, ds, idx)?)?;
        let rule = |feasible| RejectOptionRule {
            band,
            privileged_group: params.privileged_group,
            favorable_label: params.favorable_label,
            target_meo: params.target_meo,
            achieved_meo: meo,
            feasible,
            dataset_fingerprint: ds.fingerprint().to_string(),
        };
        if meo <= params.target_meo {
            return Ok(rule(true));
        }
        if best.is_none_or(|(m, _)| meo < m) {
            best = Some((meo, band));
        }
    }
    let (meo, band) = best.expect("band grid is nonempty");
    Ok(RejectOptionRule {
        band,
        privileged_group: params.privileged_group,
        favorable_label: params.favorable_label,
        target_meo: params.target_meo,
        achieved_meo: meo,
        feasible: false,
        dataset_fingerprint: ds.fingerprint().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_flip() {
        let (preds, scores) = correct(0.12, 1, 1, &[0.45, 0.55, 0.40, 0.60], [0, 0, 1, 1].into_iter());
        assert_eq!(preds, vec![1, 1, 0, 0]);
        assert_eq!(scores, vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn band_zero_is_identity() {
        let s = [0.5, 0.49, 0.51, 0.0, 1.0];
        let (preds, scores) = correct(0.0, 0, 1, &s, [0, 1, 0, 1, 0].into_iter());
        assert_eq!(preds, vec![1, 0, 1, 0, 1]);
        assert_eq!(scores, s.to_vec());
    }
}
