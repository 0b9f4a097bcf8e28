use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{CsvSchema, GaussianMixtureSpec};
use crate::ensemble::{ConfidenceParams, ConfidenceScope};
use crate::error::{Error, Result};
use crate::models::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Mixture,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixturePreset {
    Asymmetric,
    Symmetric,
}

impl MixturePreset {
    pub fn spec(self) -> GaussianMixtureSpec {
        match self {
            MixturePreset::Asymmetric => GaussianMixtureSpec::asymmetric(),
            MixturePreset::Symmetric => GaussianMixtureSpec::symmetric(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub mixture: MixturePreset,
    /// Replaces the preset when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<GaussianMixtureSpec>,
    pub n: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<CsvSchema>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Mixture,
            mixture: MixturePreset::Asymmetric,
            cells: None,
            n: 20_000,
            seed: 0,
            csv_path: None,
            schema: None,
        }
    }
}

impl DataConfig {
    pub fn mixture_spec(&self) -> GaussianMixtureSpec {
        self.cells.clone().unwrap_or_else(|| self.mixture.spec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fractions: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    None,
    RejectOption,
    EqoddsMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionConfig {
    pub kind: InterventionKind,
    pub target_meo: f64,
    pub privileged_group: usize,
    pub favorable_label: u8,
    /// Seed of the per-row mixing draws.
    pub seed: u64,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        InterventionConfig {
            kind: InterventionKind::RejectOption,
            target_meo: 0.05,
            privileged_group: 0,
            favorable_label: 1,
            seed: 0,
        }
    }
}

/// Named Mean EO interval `[lo, hi)` used to group models for the audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessBin {
    pub name: String,
    pub mean_eo: [f64; 2],
}

impl FairnessBin {
    pub fn contains(&self, v: f64) -> bool {
        self.mean_eo[0] <= v && v < self.mean_eo[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub quantiles: Vec<f64>,
    pub bins: Vec<FairnessBin>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            quantiles: vec![0.5, 0.9, 0.95, 0.99],
            bins: vec![
                FairnessBin {
                    name: "high_fairness".into(),
                    mean_eo: [0.0, 0.05],
                },
                FairnessBin {
                    name: "low_fairness".into(),
                    mean_eo: [0.05, 2.0],
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            sizes: vec![1, 2, 5, 10, 30],
            replicates: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub nus: Vec<f64>,
    pub ms: Vec<usize>,
    pub c: f64,
    pub trials: usize,
    /// Concentration is checked on the first `x_count` test rows.
    pub x_count: usize,
    pub delta: f64,
    pub theta: f64,
    pub agreement_m: usize,
    /// Agreement is checked on the first `n0` test rows.
    pub n0: usize,
    pub scope: ConfidenceScope,
    pub seed: u64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            nus: vec![0.1, 0.2, 0.3, 0.5],
            ms: vec![5, 10, 30],
            c: 1.0,
            trials: 2000,
            x_count: 200,
            delta: 0.2,
            theta: 0.05,
            agreement_m: 50,
            n0: 10,
            scope: ConfidenceScope::D0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorstCaseConfig {
    pub group_sizes: Vec<usize>,
    pub epsilon: f64,
    pub models: usize,
}

impl Default for WorstCaseConfig {
    fn default() -> Self {
        WorstCaseConfig {
            group_sizes: vec![10, 10],
            epsilon: 0.2,
            models: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontierConfig {
    pub mixture: MixturePreset,
    pub n: usize,
    pub grid_size: usize,
    pub meo_cap: f64,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        FrontierConfig {
            mixture: MixturePreset::Asymmetric,
            n: 100_000,
            grid_size: 513,
            meo_cap: 1.0,
        }
    }
}

/// Everything a run depends on. Every field has a default, and the
/// resolved config is written into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Seeds of the audited pool.
    pub seeds: Vec<u64>,
    /// Seeds of the larger pool that ensembles and bound checks draw from.
    pub universe_seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub data: DataConfig,
    pub split: SplitConfig,
    /// `seed` is replaced by each pool seed.
    pub model: TrainConfig,
    pub intervention: InterventionConfig,
    pub audit: AuditConfig,
    pub ensemble: EnsembleConfig,
    pub bounds: BoundsConfig,
    pub worst_case: WorstCaseConfig,
    pub frontier: FrontierConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("out"),
            seeds: (33..=42).collect(),
            universe_seeds: (33..=82).collect(),
            epsilon: None,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            model: TrainConfig::default(),
            intervention: InterventionConfig::default(),
            audit: AuditConfig::default(),
            ensemble: EnsembleConfig::default(),
            bounds: BoundsConfig::default(),
            worst_case: WorstCaseConfig::default(),
            frontier: FrontierConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    /// Applies `key=value` where `key` is a dotted path such as
    /// `bounds.trials`. The value is read as TOML and falls back to a bare
    /// string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(|e| config_err(e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| config_err(format!("`{key}`: `{part}` is not inside a table")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("override `{assignment}`: {e}")))?;
        Ok(())
    }

    /// Checks every sub-config up front so bad input fails before any
    /// stage runs.
    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| config_err(e.to_string()));
        if self.seeds.is_empty() {
            return Err(config_err("seeds is empty"));
        }
        if self.universe_seeds.is_empty() {
            return Err(config_err("universe_seeds is empty"));
        }
        match self.data.source {
            DataSource::Mixture => {
                wrap(self.data.mixture_spec().validate())?;
                if self.data.n < 3 {
                    return Err(config_err("data.n must be at least 3"));
                }
            }
            DataSource::Csv => {
                if self.data.csv_path.is_none() || self.data.schema.is_none() {
                    return Err(config_err("data.source = \"csv\" needs data.csv_path and data.schema"));
                }
            }
        }
        if self.split.fractions.iter().any(|f| !(*f > 0.0)) {
            return Err(config_err("split.fractions must be positive"));
        }
        let total: f64 = self.split.fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(config_err(format!("split.fractions sum to {total}, not 1")));
        }
        wrap(self.model.validate())?;
        if let Some(e) = self.epsilon {
            if !(e >= 0.0) {
                return Err(config_err("epsilon must be >= 0"));
            }
        }
        let iv = &self.intervention;
        if !(0.0..=1.0).contains(&iv.target_meo) || iv.favorable_label > 1 {
            return Err(config_err(
                "intervention needs target_meo in [0, 1] and favorable_label in {0, 1}",
            ));
        }
        if self.audit.quantiles.iter().any(|q| !(*q > 0.0 && *q <= 1.0)) {
            return Err(config_err("audit.quantiles must lie in (0, 1]"));
        }
        for b in &self.audit.bins {
            if b.name.is_empty() || !b.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(config_err(format!("audit bin name `{}` must be [A-Za-z0-9_]+", b.name)));
            }
            if !(b.mean_eo[0] < b.mean_eo[1]) {
                return Err(config_err(format!("audit bin `{}` has an empty interval", b.name)));
            }
        }
        if self.ensemble.sizes.is_empty() || self.ensemble.sizes.contains(&0) {
            return Err(config_err("ensemble.sizes must be nonempty and positive"));
        }
        if self.ensemble.replicates < 2 {
            return Err(config_err("ensemble.replicates must be at least 2"));
        }
        let b = &self.bounds;
        wrap(
            ConfidenceParams {
                delta: b.delta,
                theta: b.theta,
            }
            .validate(),
        )?;
        if b.trials < crate::ensemble::MIN_TRIALS {
            return Err(config_err(format!(
                "bounds.trials must be at least {}",
                crate::ensemble::MIN_TRIALS
            )));
        }
        if b.ms.is_empty() || b.ms.contains(&0) || b.agreement_m == 0 {
            return Err(config_err("bounds.ms and bounds.agreement_m must be positive"));
        }
        if b.nus.iter().any(|v| !(*v >= 0.0)) || !(b.c > 0.0) || b.x_count == 0 {
            return Err(config_err("bounds needs nus >= 0, c > 0 and x_count >= 1"));
        }
        let w = &self.worst_case;
        if w.group_sizes.is_empty() || w.group_sizes.contains(&0) || w.models == 0 {
            return Err(config_err("worst_case needs nonempty groups and at least one model"));
        }
        if !(0.0..=0.5).contains(&w.epsilon) {
            return Err(config_err("worst_case.epsilon must lie in [0, 0.5]"));
        }
        if self.frontier.n < 2 || self.frontier.grid_size < 2 {
            return Err(config_err("frontier needs n >= 2 and grid_size >= 2"));
        }
        Ok(())
    }

    /// SHA-256 of the resolved config, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.seeds, (33..=42).collect::<Vec<_>>());
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = ExperimentConfig::from_toml("[bounds]\ntrails = 5").unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::default();
        c.set("bounds.trials=500").unwrap();
        c.set("intervention.kind=none").unwrap();
        c.set("seeds=[1, 2]").unwrap();
        c.set("epsilon=0.7").unwrap();
        assert_eq!(c.bounds.trials, 500);
        assert_eq!(c.intervention.kind, InterventionKind::None);
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.epsilon, Some(0.7));
        assert!(c.set("bounds.trials=lots").is_err());
        assert!(c.set("nonsense").is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.bounds.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
