use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::{sigmoid, Model, ModelKind, Scorer, Stump, TrainConfig};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Fits one scorer on `split.train_idx`. Pure function of its inputs.
pub fn train(ds: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<Scorer> {
    cfg.validate()?;
    let idx = &split.train_idx;
    if idx.is_empty() {
        return Err(Error::Validation("train split is empty".into()));
    }
    ds.check_indices(idx)?;
    let model = match cfg.kind {
        ModelKind::Logistic => logistic(ds, idx, cfg)?,
        ModelKind::StumpForest => stump_forest(ds, idx, cfg),
        ModelKind::Threshold1d => threshold1d(ds, idx, cfg)?,
    };
    Ok(Scorer { seed: cfg.seed, model })
}

/// Gradient descent on mean log-loss. Every epoch visits the rows in a
/// seeded random order, in batches of `batch_size` (one batch when unset).
fn logistic(ds: &Dataset, idx: &[usize], cfg: &TrainConfig) -> Result<Model> {
    let d = ds.d();
    let mut init = rng::stream(cfg.seed, rng::purpose::INIT);
    let mut w: Vec<f64> = (0..d).map(|_| init.random_range(-0.1..0.1)).collect();
    let mut b: f64 = init.random_range(-0.1..0.1);
    let batch = cfg.batch_size.unwrap_or(idx.len()).min(idx.len());
    let mut order = idx.to_vec();
    let mut grad = vec![0.0; d];
    for epoch in 0..cfg.epochs {
        let mut shuffle = rng::indexed(cfg.seed, rng::purpose::SHUFFLE, epoch as u64);
        order.copy_from_slice(idx);
        order.shuffle(&mut shuffle);
        for rows in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for &i in rows {
                let x = ds.row(i);
                let z: f64 = w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
                let r = sigmoid(z) - f64::from(ds.label(i));
                for (g, v) in grad.iter_mut().zip(x) {
                    *g += r * v;
                }
                gb += r;
            }
            let scale = cfg.learning_rate / rows.len() as f64;
            for (wj, g) in w.iter_mut().zip(&grad) {
                *wj -= scale * g;
            }
            b -= scale * gb;
            if !(b.is_finite() && w.iter().all(|v| v.is_finite())) {
                return Err(Error::Divergence { epoch });
            }
        }
    }
    Ok(Model::Logistic { weights: w, bias: b })
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

fn majority(pos: usize, total: usize) -> u8 {
    u8::from(2 * pos > total)
}

/// Depth-1 trees on bootstrap resamples, each restricted to a random
/// subset of `ceil(sqrt(d))` features and split by weighted Gini impurity.
fn stump_forest(ds: &Dataset, idx: &[usize], cfg: &TrainConfig) -> Model {
    let d = ds.d();
    let sample_size = ((cfg.subsample * idx.len() as f64).ceil() as usize).max(1);
    let n_features = ((d as f64).sqrt().ceil() as usize).clamp(1, d);
    let stumps = (0..cfg.trees)
        .map(|t| {
            let mut rng = rng::indexed(cfg.seed, rng::purpose::BOOTSTRAP, t as u64);
            let rows: Vec<usize> = (0..sample_size).map(|_| idx[rng.random_range(0..idx.len())]).collect();
            let mut features = index::sample(&mut rng, d, n_features).into_vec();
            features.sort_unstable();
            fit_stump(ds, &rows, &features)
        })
        .collect();
    Model::StumpForest { stumps }
}

fn fit_stump(ds: &Dataset, rows: &[usize], features: &[usize]) -> Stump {
    let total = rows.len();
    let total_pos = rows.iter().filter(|&&i| ds.label(i) == 1).count();
    let all = majority(total_pos, total);
    let mut best = Stump {
        feature: features[0],
        threshold: f64::MAX,
        left: all,
        right: all,
    };
    let mut best_impurity = gini(total_pos, total);
    for &f in features {
        let mut vals: Vec<(f64, u8)> = rows.iter().map(|&i| (ds.row(i)[f], ds.label(i))).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0;
        for k in 0..total - 1 {
            left_pos += vals[k].1 as usize;
            if vals[k].0 == vals[k + 1].0 {
                continue;
            }
            let nl = k + 1;
            let nr = total - nl;
            let right_pos = total_pos - left_pos;
            let impurity = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(right_pos, nr)) / total as f64;
            if impurity < best_impurity - 1e-12 {
                best_impurity = impurity;
                best = Stump {
                    feature: f,
                    threshold: 0.5 * (vals[k].0 + vals[k + 1].0),
                    left: majority(left_pos, nl),
                    right: majority(right_pos, nr),
                };
            }
        }
    }
    best
}

/// Best `1{x > t}` over `grid_size` evenly spaced cuts spanning the
/// training range; ties go to the smaller cut.
fn threshold1d(ds: &Dataset, idx: &[usize], cfg: &TrainConfig) -> Result<Model> {
    if ds.d() != 1 {
        return Err(Error::Dimensionality(format!(
            "threshold1d needs exactly one feature, dataset has {}",
            ds.d()
        )));
    }
    let mut xs: Vec<(f64, u8)> = idx.iter().map(|&i| (ds.row(i)[0], ds.label(i))).collect();
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lo = xs[0].0;
    let hi = xs[xs.len() - 1].0;
    // prefix[k] = positives among the k smallest values
    let mut prefix = vec![0usize; xs.len() + 1];
    for (k, &(_, y)) in xs.iter().enumerate() {
        prefix[k + 1] = prefix[k] + y as usize;
    }
    let total_pos = prefix[xs.len()];
    let mut best = (usize::MAX, lo);
    for t in threshold_grid(lo, hi, cfg.grid_size) {
        // rows with x <= t are predicted 0
        let below = xs.partition_point(|p| p.0 <= t);
        let errors = prefix[below] + (xs.len() - below) - (total_pos - prefix[below]);
        if errors < best.0 {
            best = (errors, t);
        }
    }
    Ok(Model::Threshold1d { threshold: best.1 })
}

/// `size` evenly spaced points from `lo` to `hi` inclusive.
pub fn threshold_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![lo];
    }
    (0..size)
        .map(|k| {
            if k == size - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (size - 1) as f64
            }
        })
        .collect()
}

/// Train-set accuracy under the shared decision rule.
#[cfg(test)]
fn accuracy(s: &Scorer, ds: &Dataset, idx: &[usize]) -> f64 {
    let hits = idx
        .iter()
        .filter(|&&i| crate::multiplicity::predict(s.score(ds.row(i))) == ds.label(i))
        .count();
    hits as f64 / idx.len() as f64
}
