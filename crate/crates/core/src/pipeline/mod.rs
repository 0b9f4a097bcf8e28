//! Orchestration of the full audit: generate or load data, split, build
//! seed pools, intervene, audit, ensemble, certify and report. Every stage
//! reads its inputs from and writes its artifacts to the output directory,
//! so a monolithic run and a chain of single stages produce the same files.

mod artifacts;
mod config;
mod stages;

use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};

pub use artifacts::{sha256_hex, write_atomic, ArtifactEntry, RunManifest, StageTiming, MANIFEST};
pub use config::{
    AuditConfig, BoundsConfig, DataConfig, DataSource, EnsembleConfig, ExperimentConfig, FairnessBin, FrontierConfig,
    InterventionConfig, InterventionKind, MixturePreset, SplitConfig, WorstCaseConfig,
};
pub use stages::{worst_case_dataset, AgreementOutcome, AmbiguityEntry, QuantileRow, WorstCaseSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenData,
    TrainPool,
    Intervene,
    Audit,
    EnsembleSweep,
    CertifyBounds,
    WorstCase,
    Frontier1d,
    Report,
}

impl Stage {
    /// Execution order of a full run.
    pub const ALL: [Stage; 9] = [
        Stage::GenData,
        Stage::TrainPool,
        Stage::Intervene,
        Stage::Audit,
        Stage::EnsembleSweep,
        Stage::CertifyBounds,
        Stage::WorstCase,
        Stage::Frontier1d,
        Stage::Report,
    ];

    /// Subcommand name.
    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainPool => "train-pool",
            Stage::Intervene => "intervene",
            Stage::Audit => "audit",
            Stage::EnsembleSweep => "ensemble-sweep",
            Stage::CertifyBounds => "certify-bounds",
            Stage::WorstCase => "worst-case",
            Stage::Frontier1d => "frontier-1d",
            Stage::Report => "report",
        }
    }
}

/// Result of one stage: human-readable summary lines and the updated
/// manifest.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: Stage,
    pub lines: Vec<String>,
    pub manifest: RunManifest,
}

/// Runs one stage against `cfg.output_dir`. On failure every file the stage
/// wrote is removed and the error names the stage.
pub fn run_stage(stage: Stage, cfg: &ExperimentConfig) -> Result<StageReport> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let wrap = |source: Error| Error::Stage {
        stage: stage.name(),
        source: Box::new(source),
    };
    let mut manifest = RunManifest::load(dir)
        .map_err(wrap)?
        .unwrap_or_else(|| RunManifest::new(cfg));
    manifest.config = cfg.clone();
    manifest.config_hash = cfg.hash();
    manifest.version = env!("CARGO_PKG_VERSION").to_string();

    let start = Instant::now();
    let mut w = artifacts::StageWriter::new(dir);
    let result = dispatch(stage, cfg, dir, &mut w);
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            w.discard();
            return Err(wrap(e));
        }
    };
    if let Some(fp) = outcome.fingerprint {
        manifest.dataset_fingerprint = Some(fp);
    }
    let hash = manifest.config_hash.clone();
    manifest.record(stage.name(), &hash, &w.written, start.elapsed().as_secs_f64());
    manifest.save(dir).map_err(wrap)?;
    Ok(StageReport {
        stage,
        lines: outcome.lines,
        manifest,
    })
}

fn dispatch(
    stage: Stage,
    cfg: &ExperimentConfig,
    dir: &Path,
    w: &mut artifacts::StageWriter,
) -> Result<stages::Outcome> {
    match stage {
        Stage::GenData => stages::gen_data(cfg, w),
        Stage::TrainPool => stages::train_pool(cfg, dir, w),
        Stage::Intervene => stages::intervene(cfg, dir, w),
        Stage::Audit => stages::audit(cfg, dir, w),
        Stage::EnsembleSweep => stages::ensemble_sweep(cfg, dir, w),
        Stage::CertifyBounds => stages::certify_bounds(cfg, dir, w),
        Stage::WorstCase => stages::worst_case(cfg, w),
        Stage::Frontier1d => stages::frontier_1d(cfg, w),
        Stage::Report => stages::report(dir, w),
    }
}

/// Runs every stage in order, calling `progress` after each.
pub fn run_with(cfg: &ExperimentConfig, mut progress: impl FnMut(&StageReport)) -> Result<RunManifest> {
    let mut last = None;
    for stage in Stage::ALL {
        let r = run_stage(stage, cfg)?;
        progress(&r);
        last = Some(r.manifest);
    }
    Ok(last.expect("at least one stage"))
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    run_with(cfg, |_| {})
}
