//! Convex combinations of competing models, the confidence property of a
//! classifier, Monte-Carlo certification of the ensemble concentration
//! bounds, and ensemble weight optimization.

mod certify;
mod weights;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiplicity::ScoreMatrix;
use crate::rng::{self, Rng};

pub use certify::{
    agreement_lower_bound, certify_prediction_agreement, certify_score_concentration, concentration_bound,
    statistical_slack, AgreementReport, BoundCheck, ConfidenceScope, MIN_TRIALS,
};
pub use weights::{ensemble_objective, optimize_weights, EnsembleLoss, WeightOptConfig, WeightOptResult};

/// Simplex weights `lambda` with `||lambda||^2 <= c / m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub lambda: Vec<f64>,
    pub c: f64,
}

impl EnsembleSpec {
    /// Equal weights; `||lambda||^2 = 1/m`, so `c = 1`.
    pub fn uniform(m: usize) -> Self {
        EnsembleSpec {
            lambda: vec![1.0 / m as f64; m],
            c: 1.0,
        }
    }

    pub fn new(lambda: Vec<f64>, c: f64) -> Result<Self> {
        let spec = EnsembleSpec { lambda, c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn m(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if m == 0 {
            return Err(Error::Validation("ensemble needs at least one weight".into()));
        }
        if self.lambda.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::Validation("ensemble weights must be nonnegative".into()));
        }
        let sum: f64 = self.lambda.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("ensemble weights sum to {sum}, not 1")));
        }
        if !(self.c > 0.0) {
            return Err(Error::Validation(format!("c must be > 0, got {}", self.c)));
        }
        let sq: f64 = self.lambda.iter().map(|l| l * l).sum();
        if sq > self.c / m as f64 + 1e-12 {
            return Err(Error::Validation(format!(
                "||lambda||^2 = {sq} exceeds c/m = {}",
                self.c / m as f64
            )));
        }
        Ok(())
    }
}

/// Column-wise `sum_i lambda_i v_ij`, kept inside the column's range.
pub fn ensemble_score(spec: &EnsembleSpec, sm: &ScoreMatrix) -> Result<Vec<f64>> {
    if spec.m() != sm.m() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} models",
            spec.m(),
            sm.m()
        )));
    }
    let n = sm.n();
    let mut out = vec![0.0; n];
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for (i, &l) in spec.lambda.iter().enumerate() {
        for (j, &v) in sm.row(i).iter().enumerate() {
            out[j] += l * v;
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    // rounding can push a convex combination one ulp past its extremes
    for ((o, l), h) in out.iter_mut().zip(&lo).zip(&hi) {
        *o = o.clamp(*l, *h);
    }
    Ok(out)
}

/// Mean of the rows, i.e. the uniform ensemble.
pub(crate) fn mean_rows(sm: &ScoreMatrix, rows: std::ops::Range<usize>) -> Vec<f64> {
    let k = rows.len() as f64;
    let mut out = vec![0.0; sm.n()];
    for i in rows {
        for (o, v) in out.iter_mut().zip(sm.row(i)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= k);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub delta: f64,
    pub theta: f64,
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.delta) || !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Validation(format!(
                "confidence needs delta in [0, 0.5] and theta in [0, 1], got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCheck {
    pub is_confident: bool,
    pub mass_in_band: f64,
}

/// Fraction of scores with `|s - 0.5| < delta`; confident iff it is
/// strictly below `theta`.
pub fn confidence_check(scores: &[f64], params: ConfidenceParams) -> ConfidenceCheck {
    let inside = scores.iter().filter(|&&s| (s - 0.5).abs() < params.delta).count();
    let mass_in_band = if scores.is_empty() {
        0.0
    } else {
        inside as f64 / scores.len() as f64
    };
    ConfidenceCheck {
        is_confident: mass_in_band < params.theta,
        mass_in_band,
    }
}

/// Source of fresh model draws for Monte-Carlo certification.
pub trait PoolSampler: Sync {
    /// `m` models scored on a fixed sample set.
    fn draw(&self, m: usize, rng: &mut Rng) -> Result<ScoreMatrix>;
}

/// Draws models uniformly with replacement from a pre-trained universe, so
/// draws are iid from the universe's empirical distribution.
#[derive(Debug, Clone)]
pub struct UniverseSampler {
    pub universe: ScoreMatrix,
}

impl PoolSampler for UniverseSampler {
    fn draw(&self, m: usize, rng: &mut Rng) -> Result<ScoreMatrix> {
        let rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..self.universe.m())).collect();
        self.universe.select_models(&rows)
    }
}

/// One uniform ensemble drawn for the variance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEnsemble {
    pub m: usize,
    pub replicate: usize,
    pub members: Vec<usize>,
    pub scores: Vec<f64>,
}

/// For each size `m`, `replicates` uniform ensembles of `m` models drawn
/// with replacement from `universe`. Draw `(m, r)` has its own stream.
pub fn draw_ensembles(
    universe: &ScoreMatrix,
    sizes: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<SweepEnsemble>> {
    let mut out = Vec::with_capacity(sizes.len() * replicates);
    for &m in sizes {
        if m == 0 {
            return Err(Error::Validation("ensemble size must be at least 1".into()));
        }
        for r in 0..replicates {
            let mut rng = rng::indexed(seed, rng::purpose::ENSEMBLE, ((m as u64) << 24) | r as u64);
            let members: Vec<usize> = (0..m).map(|_| rng.random_range(0..universe.m())).collect();
            let sm = universe.select_models(&members)?;
            out.push(SweepEnsemble {
                m,
                replicate: r,
                scores: mean_rows(&sm, 0..m),
                members,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_average() {
        let sm = ScoreMatrix::from_rows(vec![vec![0.2], vec![0.4], vec![0.9]]).unwrap();
        let s = ensemble_score(&EnsembleSpec::uniform(3), &sm).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        let one = ScoreMatrix::from_rows(vec![vec![0.3, 0.7]]).unwrap();
        assert_eq!(ensemble_score(&EnsembleSpec::uniform(1), &one).unwrap(), vec![0.3, 0.7]);
        assert!(ensemble_score(&EnsembleSpec::uniform(2), &one).is_err());
    }

    #[test]
    fn uniform_norm() {
        for m in 1..50 {
            let spec = EnsembleSpec::uniform(m);
            spec.validate().unwrap();
            let sq: f64 = spec.lambda.iter().map(|l| l * l).sum();
            assert!((sq - 1.0 / m as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn confidence_examples() {
        let p = ConfidenceParams { delta: 0.1, theta: 0.6 };
        let c = confidence_check(&[0.45, 0.55, 0.1, 0.9], p);
        assert_eq!(c.mass_in_band, 0.5);
        assert!(c.is_confident);
        let hard = confidence_check(
            &[0.0, 1.0, 1.0],
            ConfidenceParams {
                delta: 0.5,
                theta: 0.01,
            },
        );
        assert_eq!(hard.mass_in_band, 0.0);
        assert!(hard.is_confident);
        let strict = confidence_check(&[0.0, 1.0], ConfidenceParams { delta: 0.5, theta: 0.0 });
        assert!(!strict.is_confident);
    }

    #[test]
    fn spec_validation() {
        assert!(EnsembleSpec::new(vec![0.5, 0.5], 1.0).is_ok());
        assert!(EnsembleSpec::new(vec![0.9, 0.1], 1.0).is_err());
        assert!(EnsembleSpec::new(vec![0.9, 0.1], 2.0).is_ok());
        assert!(EnsembleSpec::new(vec![0.6, 0.6], 2.0).is_err());
    }

    #[test]
    fn sweep_is_deterministic() {
        let u = ScoreMatrix::from_rows((0..20).map(|i| vec![i as f64 / 20.0; 3]).collect()).unwrap();
        let a = draw_ensembles(&u, &[1, 5], 4, 3).unwrap();
        assert_eq!(a, draw_ensembles(&u, &[1, 5], 4, 3).unwrap());
        assert_eq!(a.len(), 8);
        assert_eq!(a[7].members.len(), 5);
    }
}
