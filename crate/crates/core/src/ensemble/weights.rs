use serde::{Deserialize, Serialize};

use super::{ensemble_score, EnsembleSpec};
use crate::error::{Error, Result};
use crate::multiplicity::ScoreMatrix;

const LOG_CLIP: f64 = 1e-15;
const PROJECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleLoss {
    Logloss,
    Squared,
}

impl EnsembleLoss {
    fn value(self, s: f64, y: u8) -> f64 {
        let y = f64::from(y);
        match self {
            EnsembleLoss::Logloss => {
                let s = s.clamp(LOG_CLIP, 1.0 - LOG_CLIP);
                -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
            }
            EnsembleLoss::Squared => (s - y) * (s - y),
        }
    }

    fn derivative(self, s: f64, y: u8) -> f64 {
        let y = f64::from(y);
        match self {
            EnsembleLoss::Logloss => {
                let s = s.clamp(LOG_CLIP, 1.0 - LOG_CLIP);
                (s - y) / (s * (1.0 - s))
            }
            EnsembleLoss::Squared => 2.0 * (s - y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOptConfig {
    /// Cap on `||lambda||_2`.
    pub alpha: f64,
    /// Regularizer scale.
    pub beta: f64,
    pub iterations: usize,
    pub step: f64,
}

impl Default for WeightOptConfig {
    fn default() -> Self {
        WeightOptConfig {
            alpha: 1.0,
            beta: 0.01,
            iterations: 2000,
            step: 0.05,
        }
    }
}

impl WeightOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Validation(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Validation(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Validation(format!("step must be > 0, got {}", self.step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightOptResult {
    pub spec: EnsembleSpec,
    pub objective: f64,
    pub uniform_objective: f64,
}

/// `(1/n) sum_j loss(h_lambda(x_j), y_j) + (beta / sqrt(n)) ||lambda||^2`.
pub fn ensemble_objective(
    lambda: &[f64],
    sm: &ScoreMatrix,
    labels: &[u8],
    beta: f64,
    loss: EnsembleLoss,
) -> Result<f64> {
    if labels.len() != sm.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            sm.n()
        )));
    }
    let spec = EnsembleSpec {
        lambda: lambda.to_vec(),
        c: 1.0,
    };
    let scores = ensemble_score(&spec, sm)?;
    let n = sm.n() as f64;
    let data: f64 = scores.iter().zip(labels).map(|(&s, &y)| loss.value(s, y)).sum::<f64>() / n;
    let sq: f64 = lambda.iter().map(|l| l * l).sum();
    Ok(data + beta / n.sqrt() * sq)
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
fn project_simplex(v: &[f64]) -> Vec<f64> {
    // the projection commutes with shifts along the all-ones direction;
    // anchoring the largest entry at 0 avoids cancellation for huge steps
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = v.iter().map(|x| x - top).collect();
    let mut u = v.clone();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Pulls a simplex point radially toward the uniform point until
/// `||lambda|| <= alpha`; the result stays on the simplex.
fn shrink_to_cap(lambda: &mut [f64], alpha: f64) {
    let m = lambda.len() as f64;
    let norm_sq: f64 = lambda.iter().map(|l| l * l).sum();
    if norm_sq <= alpha * alpha {
        return;
    }
    let u = 1.0 / m;
    // the offset from uniform sums to zero, so ||u + t d||^2 = 1/m + t^2 ||d||^2
    let d_sq = norm_sq - 1.0 / m;
    if d_sq <= 0.0 {
        // already uniform; alpha sits within rounding of 1/sqrt(m)
        return;
    }
    let t = ((alpha * alpha - 1.0 / m).max(0.0) / d_sq).sqrt();
    lambda.iter_mut().for_each(|l| *l = u + t * (*l - u));
}

fn project(v: &[f64], alpha: f64) -> Vec<f64> {
    let mut cur = v.to_vec();
    loop {
        let mut next = project_simplex(&cur);
        shrink_to_cap(&mut next, alpha);
        let moved = next.iter().zip(&cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        cur = next;
        if moved <= PROJECTION_TOL {
            return cur;
        }
    }
}

/// Projected subgradient descent from the uniform weights, with a constant
/// step. Returns the best iterate seen, with `c = m alpha^2`.
pub fn optimize_weights(
    sm: &ScoreMatrix,
    labels: &[u8],
    cfg: &WeightOptConfig,
    loss: EnsembleLoss,
) -> Result<WeightOptResult> {
    cfg.validate()?;
    let m = sm.m();
    let min = 1.0 / (m as f64).sqrt();
    if cfg.alpha < min {
        return Err(Error::InfeasibleCap { alpha: cfg.alpha, min });
    }
    if sm.n() == 0 {
        return Err(Error::Validation(
            "weight optimization needs at least one sample".into(),
        ));
    }
    let c = m as f64 * cfg.alpha * cfg.alpha;
    let mut lambda = vec![1.0 / m as f64; m];
    let uniform_objective = ensemble_objective(&lambda, sm, labels, cfg.beta, loss)?;
    let mut best = (lambda.clone(), uniform_objective);
    if m > 1 {
        let n = sm.n() as f64;
        for _ in 0..cfg.iterations {
            let spec = EnsembleSpec {
                lambda: lambda.clone(),
                c,
            };
            let scores = ensemble_score(&spec, sm)?;
            let dl: Vec<f64> = scores
                .iter()
                .zip(labels)
                .map(|(&s, &y)| loss.derivative(s, y) / n)
                .collect();
            let step: Vec<f64> = (0..m)
                .map(|i| {
                    let g = sm.row(i).iter().zip(&dl).map(|(v, d)| v * d).sum::<f64>()
                        + 2.0 * cfg.beta / n.sqrt() * lambda[i];
                    lambda[i] - cfg.step * g
                })
                .collect();
            lambda = project(&step, cfg.alpha);
            let obj = ensemble_objective(&lambda, sm, labels, cfg.beta, loss)?;
            if obj < best.1 {
                best = (lambda.clone(), obj);
            }
        }
    }
    Ok(WeightOptResult {
        spec: EnsembleSpec { lambda: best.0, c },
        objective: best.1,
        uniform_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        // shift by 2/15 keeps all three coordinates positive
        let p = project_simplex(&[0.3, 0.3, 0.0]);
        for (a, b) in p.iter().zip([13.0 / 30.0, 13.0 / 30.0, 4.0 / 30.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_respected() {
        let p = project(&[1.0, 0.0, 0.0, 0.0], 0.6);
        let norm: f64 = p.iter().map(|l| l * l).sum::<f64>().sqrt();
        assert!(norm <= 0.6 + 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn single_model() {
        let sm = ScoreMatrix::from_rows(vec![vec![0.2, 0.9]]).unwrap();
        let r = optimize_weights(&sm, &[0, 1], &WeightOptConfig::default(), EnsembleLoss::Logloss).unwrap();
        assert_eq!(r.spec.lambda, vec![1.0]);
    }

    #[test]
    fn infeasible_cap() {
        let sm = ScoreMatrix::from_rows(vec![vec![0.2]; 4]).unwrap();
        let cfg = WeightOptConfig {
            alpha: 0.4,
            ..WeightOptConfig::default()
        };
        assert!(matches!(
            optimize_weights(&sm, &[0], &cfg, EnsembleLoss::Squared),
            Err(Error::InfeasibleCap { .. })
        ));
    }
}
