use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, LossKind, ModelKind, Scorer, TrainConfig};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::multiplicity::{predict, ScoreMatrix};

const LOG_CLIP: f64 = 1e-15;

/// An empirical Rashomon set: scorers whose training loss is at most
/// `epsilon`, with the provenance needed to re-check membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPool {
    pub kind: ModelKind,
    pub loss: LossKind,
    /// `None` admits every trained scorer.
    #[serde(with = "crate::decimal::bound")]
    pub epsilon: Option<f64>,
    pub seeds: Vec<u64>,
    pub scorers: Vec<Scorer>,
    #[serde(with = "crate::decimal::vec")]
    pub train_losses: Vec<f64>,
    pub dataset_fingerprint: String,
}

impl ModelPool {
    pub fn m(&self) -> usize {
        self.scorers.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let pool: ModelPool = serde_json::from_str(s)?;
        if pool.scorers.is_empty() || pool.scorers.len() != pool.train_losses.len() {
            return Err(Error::Validation("pool document has inconsistent scorer lists".into()));
        }
        Ok(pool)
    }
}

/// A pool plus the seeds rejected by the membership test and their losses.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolBuild {
    pub pool: ModelPool,
    pub dropped: Vec<(u64, f64)>,
}

/// Mean loss of `scorer` over rows `idx`. Log-loss clips scores to
/// `[1e-15, 1 - 1e-15]`; zero-one loss uses the `>= 0.5` rule.
pub fn empirical_loss(scorer: &Scorer, ds: &Dataset, idx: &[usize], loss: LossKind) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::Validation("loss over an empty index set".into()));
    }
    let scores = scorer.scores(ds, idx)?;
    let total: f64 = scores
        .iter()
        .zip(idx)
        .map(|(&s, &i)| {
            let y = ds.label(i);
            match loss {
                LossKind::Logloss => {
                    let p = s.clamp(LOG_CLIP, 1.0 - LOG_CLIP);
                    if y == 1 {
                        -p.ln()
                    } else {
                        -(1.0 - p).ln()
                    }
                }
                LossKind::ZeroOne => f64::from(u8::from(predict(s) != y)),
            }
        })
        .sum();
    Ok(total / idx.len() as f64)
}

/// Trains one scorer per seed (in parallel, collected in seed order) and
/// keeps those with training loss at most `epsilon`.
pub fn build_pool(
    ds: &Dataset,
    split: &Split,
    base: &TrainConfig,
    seeds: &[u64],
    epsilon: Option<f64>,
) -> Result<PoolBuild> {
    if seeds.is_empty() {
        return Err(Error::Validation("seed list is empty".into()));
    }
    if let Some(e) = epsilon {
        if !(e >= 0.0) {
            return Err(Error::Validation(format!("epsilon must be >= 0, got {e}")));
        }
    }
    base.validate()?;
    let trained: Vec<(Scorer, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..base.clone() };
            let scorer = train(ds, split, &cfg)?;
            let loss = empirical_loss(&scorer, ds, &split.train_idx, base.loss)?;
            Ok((scorer, loss))
        })
        .collect::<Result<_>>()?;

    let mut kept_seeds = Vec::new();
    let mut scorers = Vec::new();
    let mut losses = Vec::new();
    let mut dropped = Vec::new();
    for (scorer, loss) in trained {
        if epsilon.is_none_or(|e| loss <= e) {
            kept_seeds.push(scorer.seed);
            scorers.push(scorer);
            losses.push(loss);
        } else {
            dropped.push((scorer.seed, loss));
        }
    }
    if scorers.is_empty() {
        let best_loss = dropped.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
        return Err(Error::EmptyRashomon {
            dropped: dropped.len(),
            epsilon: epsilon.unwrap_or(f64::INFINITY),
            best_loss,
        });
    }
    Ok(PoolBuild {
        pool: ModelPool {
            kind: base.kind,
            loss: base.loss,
            epsilon,
            seeds: kept_seeds,
            scorers,
            train_losses: losses,
            dataset_fingerprint: ds.fingerprint().to_string(),
        },
        dropped,
    })
}

/// Recomputes every scorer's training loss and checks it against epsilon.
pub fn verify_membership(pool: &ModelPool, ds: &Dataset, split: &Split) -> Result<()> {
    if pool.dataset_fingerprint != ds.fingerprint() {
        return Err(Error::StaleRule {
            expected: pool.dataset_fingerprint.clone(),
            actual: ds.fingerprint().to_string(),
        });
    }
    for s in &pool.scorers {
        let loss = empirical_loss(s, ds, &split.train_idx, pool.loss)?;
        if let Some(e) = pool.epsilon {
            if loss > e {
                return Err(Error::Contract(format!(
                    "scorer with seed {} has train loss {loss} > epsilon {e}",
                    s.seed
                )));
            }
        }
    }
    Ok(())
}

/// Scores of every pool member on rows `idx`; row `i` is scorer `i`.
pub fn score_matrix(pool: &ModelPool, ds: &Dataset, idx: &[usize]) -> Result<ScoreMatrix> {
    let rows = pool
        .scorers
        .par_iter()
        .map(|s| s.scores(ds, idx))
        .collect::<Result<Vec<_>>>()?;
    let ids = pool.scorers.iter().map(|s| s.seed.to_string()).collect();
    ScoreMatrix::new(rows, ids, idx.to_vec())
}
