use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{confidence_check, mean_rows, ConfidenceParams, PoolSampler};
use crate::error::{Error, Result};
use crate::multiplicity::{predict, ScoreMatrix};
use crate::rng;

/// Fewest trials accepted by the certification routines.
pub const MIN_TRIALS: usize = 100;

/// `4 exp(-nu^2 m / (2c))`: bound on the probability that two independent
/// ensembles of `m` models differ by at least `nu` at a fixed input.
pub fn concentration_bound(nu: f64, m: usize, c: f64) -> f64 {
    4.0 * (-nu * nu * m as f64 / (2.0 * c)).exp()
}

/// `1 - (4 exp(-2 delta^2 m / c) + 2 theta) n0`: lower bound on the
/// probability that two confident ensembles agree on all `n0` inputs.
pub fn agreement_lower_bound(delta: f64, theta: f64, m: usize, c: f64, n0: usize) -> f64 {
    1.0 - (4.0 * (-2.0 * delta * delta * m as f64 / c).exp() + 2.0 * theta) * n0 as f64
}

/// Three binomial standard errors around `bound` (clamped to `[0, 1]`).
pub fn statistical_slack(bound: f64, trials: usize) -> f64 {
    let b = bound.clamp(0.0, 1.0);
    3.0 * (b * (1.0 - b) / trials as f64).sqrt()
}

/// Empirical tail against its theoretical bound at one `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub nu: f64,
    pub m: usize,
    pub c: f64,
    /// Largest tail frequency over the evaluated inputs.
    pub empirical_tail: f64,
    pub theoretical_bound: f64,
    pub slack: f64,
    pub trials: usize,
    /// Column of the input attaining `empirical_tail`.
    pub worst_sample: usize,
    pub violated: bool,
}

fn draw_pair(sampler: &dyn PoolSampler, m: usize, seed: u64, trial: usize) -> Result<ScoreMatrix> {
    let mut rng = rng::indexed(seed, rng::purpose::TRIAL, trial as u64);
    let sm = sampler.draw(2 * m, &mut rng)?;
    if sm.m() != 2 * m {
        return Err(Error::Contract(format!(
            "sampler returned {} models, expected {}",
            sm.m(),
            2 * m
        )));
    }
    Ok(sm)
}

/// Per trial, draws `2m` models, forms two uniform ensembles of `m` and
/// records `|h(x) - h'(x)|` for every column `x` in `x_set`. For each `nu`
/// the reported tail is the worst input's frequency of a gap `>= nu`.
pub fn certify_score_concentration(
    sampler: &dyn PoolSampler,
    x_set: &[usize],
    m: usize,
    nus: &[f64],
    c: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<BoundCheck>> {
    if trials < MIN_TRIALS {
        return Err(Error::Validation(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    if m == 0 || x_set.is_empty() {
        return Err(Error::Validation("need m >= 1 and a nonempty input set".into()));
    }
    let k = nus.len();
    // hits[v * |x_set| + x]: trials whose gap at input x reached nus[v]
    let hits: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<u64>> {
            let sm = draw_pair(sampler, m, seed, t)?;
            let a = mean_rows(&sm, 0..m);
            let b = mean_rows(&sm, m..2 * m);
            let mut out = vec![0u64; k * x_set.len()];
            for (xi, &x) in x_set.iter().enumerate() {
                if x >= sm.n() {
                    return Err(Error::IndexOutOfBounds { index: x, len: sm.n() });
                }
                let gap = (a[x] - b[x]).abs();
                for (v, &nu) in nus.iter().enumerate() {
                    out[v * x_set.len() + xi] += u64::from(gap >= nu);
                }
            }
            Ok(out)
        })
        .try_reduce(
            || vec![0u64; k * x_set.len()],
            |mut acc, h| {
                acc.iter_mut().zip(h).for_each(|(a, v)| *a += v);
                Ok(acc)
            },
        )?;
    Ok(nus
        .iter()
        .enumerate()
        .map(|(v, &nu)| {
            let row = &hits[v * x_set.len()..(v + 1) * x_set.len()];
            let (worst, count) = row
                .iter()
                .enumerate()
                .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
            let empirical_tail = count as f64 / trials as f64;
            let theoretical_bound = concentration_bound(nu, m, c);
            let slack = statistical_slack(theoretical_bound, trials);
            BoundCheck {
                nu,
                m,
                c,
                empirical_tail,
                theoretical_bound,
                slack,
                trials,
                worst_sample: x_set[worst],
                violated: empirical_tail > theoretical_bound + slack,
            }
        })
        .collect())
}

/// Which inputs the confidence precondition is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceScope {
    /// The agreement set itself.
    D0,
    /// Every column the sampler returns.
    AllSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n0: usize,
    pub m: usize,
    pub delta: f64,
    pub theta: f64,
    pub c: f64,
    pub scope: ConfidenceScope,
    pub trials: usize,
    /// Trials in which both ensembles passed the confidence check.
    pub confident_trials: usize,
    pub agreeing_trials: usize,
    /// Fraction of checked scores within `delta` of 0.5, over all trials.
    pub mean_mass_in_band: f64,
    pub empirical_agreement: f64,
    pub lower_bound: f64,
    pub slack: f64,
    pub violated: bool,
}

/// Per trial, draws two uniform ensembles of `m` models and checks whether
/// their thresholded predictions agree on every column of `d0`. Trials in
/// which either ensemble fails the confidence check are excluded.
#[allow(clippy::too_many_arguments)]
pub fn certify_prediction_agreement(
    sampler: &dyn PoolSampler,
    d0: &[usize],
    m: usize,
    params: ConfidenceParams,
    c: f64,
    trials: usize,
    scope: ConfidenceScope,
    seed: u64,
) -> Result<AgreementReport> {
    params.validate()?;
    if trials < MIN_TRIALS {
        return Err(Error::Validation(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    if m == 0 {
        return Err(Error::Validation("need m >= 1".into()));
    }
    let report =
        |confident: usize, agreeing: usize, empirical: f64, bound: f64, slack: f64, violated: bool| AgreementReport {
            n0: d0.len(),
            m,
            delta: params.delta,
            theta: params.theta,
            c,
            scope,
            trials,
            confident_trials: confident,
            agreeing_trials: agreeing,
            empirical_agreement: empirical,
            lower_bound: bound,
            slack,
            violated,
            mean_mass_in_band: 0.0,
        };
    if d0.is_empty() {
        return Ok(report(trials, trials, 1.0, 1.0, 0.0, false));
    }
    // (confident and agreeing, summed mass in band of both ensembles)
    let outcomes: Vec<(Option<bool>, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sm = draw_pair(sampler, m, seed, t)?;
            if let Some(&x) = d0.iter().find(|&&x| x >= sm.n()) {
                return Err(Error::IndexOutOfBounds { index: x, len: sm.n() });
            }
            let a = mean_rows(&sm, 0..m);
            let b = mean_rows(&sm, m..2 * m);
            let on = |s: &[f64]| -> Vec<f64> {
                match scope {
                    ConfidenceScope::D0 => d0.iter().map(|&x| s[x]).collect(),
                    ConfidenceScope::AllSamples => s.to_vec(),
                }
            };
            let (ca, cb) = (confidence_check(&on(&a), params), confidence_check(&on(&b), params));
            let mass = ca.mass_in_band + cb.mass_in_band;
            if !(ca.is_confident && cb.is_confident) {
                return Ok((None, mass));
            }
            Ok((Some(d0.iter().all(|&x| predict(a[x]) == predict(b[x]))), mass))
        })
        .collect::<Result<_>>()?;
    let confident = outcomes.iter().filter(|o| o.0.is_some()).count();
    let mean_mass_in_band = outcomes.iter().map(|o| o.1).sum::<f64>() / (2 * trials) as f64;
    if confident == 0 {
        return Err(Error::Inconclusive {
            trials,
            mean_mass_in_band,
        });
    }
    let agreeing = outcomes.iter().filter(|o| o.0 == Some(true)).count();
    let empirical = agreeing as f64 / confident as f64;
    let bound = agreement_lower_bound(params.delta, params.theta, m, c, d0.len());
    let slack = statistical_slack(bound, confident);
    Ok(AgreementReport {
        mean_mass_in_band,
        ..report(confident, agreeing, empirical, bound, slack, empirical < bound - slack)
    })
}
