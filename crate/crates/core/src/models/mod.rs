//! Seeded probabilistic classifiers and the randomized training procedure
//! whose seed-to-seed variation induces an empirical Rashomon set.

mod pool;
mod train;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use pool::{build_pool, empirical_loss, score_matrix, verify_membership, ModelPool, PoolBuild};
pub use train::{threshold_grid, train};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    StumpForest,
    Threshold1d,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Logistic => "logistic",
            ModelKind::StumpForest => "stump_forest",
            ModelKind::Threshold1d => "threshold1d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Logloss,
    ZeroOne,
}

impl LossKind {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Threshold1d => LossKind::ZeroOne,
            _ => LossKind::Logloss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Rows per gradient step for logistic regression; `None` is full batch.
    pub batch_size: Option<usize>,
    pub trees: usize,
    pub subsample: f64,
    pub loss: LossKind,
    /// Cut points tried by `threshold1d`.
    pub grid_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Logistic,
            seed: 0,
            epochs: 2,
            learning_rate: 1.0,
            batch_size: Some(8),
            trees: 25,
            subsample: 0.8,
            loss: LossKind::Logloss,
            grid_size: 513,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be at least 1".into());
        }
        if self.trees == 0 {
            return bad("trees must be at least 1".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must lie in (0, 1], got {}", self.subsample));
        }
        if self.loss == LossKind::ZeroOne && self.kind != ModelKind::Threshold1d {
            return bad("zero_one loss is only available for threshold1d".into());
        }
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2".into());
        }
        Ok(())
    }
}

/// One stump: `x[feature] <= threshold` votes `left`, otherwise `right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    #[serde(with = "crate::decimal")]
    pub threshold: f64,
    pub left: u8,
    pub right: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Model {
    Logistic {
        #[serde(with = "crate::decimal::vec")]
        weights: Vec<f64>,
        #[serde(with = "crate::decimal")]
        bias: f64,
    },
    StumpForest {
        stumps: Vec<Stump>,
    },
    /// Scores `1{x > threshold}`.
    Threshold1d {
        #[serde(with = "crate::decimal")]
        threshold: f64,
    },
    /// Fixed score for every input.
    Constant {
        #[serde(with = "crate::decimal")]
        value: f64,
    },
}

/// A trained model `h: R^d -> [0, 1]` and the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorer {
    pub seed: u64,
    pub model: Model,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Scorer {
    pub fn constant(value: f64) -> Self {
        Scorer {
            seed: 0,
            model: Model::Constant { value },
        }
    }

    /// Feature dimension the scorer expects, if it fixes one.
    pub fn dim(&self) -> Option<usize> {
        match &self.model {
            Model::Logistic { weights, .. } => Some(weights.len()),
            Model::Threshold1d { .. } => Some(1),
            Model::StumpForest { .. } | Model::Constant { .. } => None,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Logistic { weights, bias } => {
                let z: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
                sigmoid(z)
            }
            Model::StumpForest { stumps } => {
                let votes: usize = stumps
                    .iter()
                    .map(|s| {
                        if x[s.feature] <= s.threshold {
                            s.left as usize
                        } else {
                            s.right as usize
                        }
                    })
                    .sum();
                votes as f64 / stumps.len() as f64
            }
            Model::Threshold1d { threshold } => f64::from(u8::from(x[0] > *threshold)),
            Model::Constant { value } => *value,
        }
    }

    /// Scores of rows `idx` of `ds`.
    pub fn scores(&self, ds: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
        ds.check_indices(idx)?;
        self.check_dim(ds)?;
        Ok(idx.iter().map(|&i| self.score(ds.row(i))).collect())
    }

    pub(crate) fn check_dim(&self, ds: &Dataset) -> Result<()> {
        let max_feature = match &self.model {
            Model::StumpForest { stumps } => stumps.iter().map(|s| s.feature + 1).max(),
            _ => self.dim(),
        };
        match max_feature {
            Some(d) if d > ds.d() || (self.dim().is_some() && d != ds.d()) => Err(Error::Dimensionality(format!(
                "scorer expects {d} features, dataset has {}",
                ds.d()
            ))),
            _ => Ok(()),
        }
    }
}
