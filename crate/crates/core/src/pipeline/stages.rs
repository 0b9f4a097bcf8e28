use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{cell, require, StageWriter, Table};
use super::config::{DataSource, ExperimentConfig, InterventionKind};
use crate::data::{self, Dataset, Split};
use crate::ensemble::{
    certify_prediction_agreement, certify_score_concentration, draw_ensembles, AgreementReport, ConfidenceParams,
    ConfidenceScope, UniverseSampler,
};
use crate::error::{Error, Result};
use crate::fairness::FairnessReport;
use crate::interventions::{self, fit_eqodds_mix, fit_reject_option, FairnessRule, RejectOptionParams};
use crate::models::{build_pool, score_matrix, ModelPool, Scorer};
use crate::multiplicity::{self, ScoreMatrix};
use crate::worstcase;

pub(crate) struct Outcome {
    pub lines: Vec<String>,
    pub fingerprint: Option<String>,
}

impl Outcome {
    fn new(lines: Vec<String>) -> Self {
        Outcome {
            lines,
            fingerprint: None,
        }
    }
}

const DATASET: &str = "dataset.csv";
const SPLIT: &str = "split.json";
const POOL: &str = "pool.json";
const UNIVERSE: &str = "universe.json";
const RULES: &str = "rules.json";

fn load_data(dir: &Path) -> Result<(Dataset, Split)> {
    require(dir, DATASET, "gen-data")?;
    let ds = data::read_canonical(dir.join(DATASET))?;
    let split: Split = serde_json::from_slice(&require(dir, SPLIT, "gen-data")?)?;
    let covered = split.train_idx.len() + split.valid_idx.len() + split.test_idx.len();
    if covered != ds.n() {
        return Err(Error::Contract(format!(
            "split covers {covered} rows, dataset has {}",
            ds.n()
        )));
    }
    Ok((ds, split))
}

fn load_pool(dir: &Path, name: &str, ds: &Dataset) -> Result<ModelPool> {
    let pool = ModelPool::from_json(&String::from_utf8_lossy(&require(dir, name, "train-pool")?))?;
    if pool.dataset_fingerprint != ds.fingerprint() {
        return Err(Error::Contract(format!(
            "{name} was trained on a different dataset; rerun train-pool"
        )));
    }
    Ok(pool)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SeedRule {
    seed: u64,
    rule: FairnessRule,
}

fn load_rules(dir: &Path) -> Result<BTreeMap<u64, FairnessRule>> {
    let rules: Vec<SeedRule> = serde_json::from_slice(&require(dir, RULES, "intervene")?)?;
    Ok(rules.into_iter().map(|r| (r.seed, r.rule)).collect())
}

fn stages_of(cfg: &ExperimentConfig) -> Vec<&'static str> {
    if cfg.intervention.kind == InterventionKind::None {
        vec!["baseline"]
    } else {
        vec!["baseline", "fair"]
    }
}

/// Per-model outputs on the test rows for one stage.
struct Evaluated {
    scores: ScoreMatrix,
    reports: Vec<FairnessReport>,
}

fn evaluate(
    pool: &ModelPool,
    rules: &BTreeMap<u64, FairnessRule>,
    stage: &str,
    ds: &Dataset,
    idx: &[usize],
) -> Result<Evaluated> {
    let outputs: Vec<(Vec<f64>, FairnessReport)> = pool
        .scorers
        .par_iter()
        .map(|s| {
            let rule = match stage {
                "baseline" => FairnessRule::Identity {
                    dataset_fingerprint: ds.fingerprint().to_string(),
                },
                _ => rules
                    .get(&s.seed)
                    .cloned()
                    .ok_or_else(|| Error::Contract(format!("no rule for seed {}; rerun intervene", s.seed)))?,
            };
            let out = interventions::apply(&rule, s, ds, idx)?;
            let report = FairnessReport::evaluate(&out.predictions, ds, idx)?;
            Ok((out.scores, report))
        })
        .collect::<Result<_>>()?;
    let ids = pool.seeds.iter().map(u64::to_string).collect();
    let (rows, reports): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();
    Ok(Evaluated {
        scores: ScoreMatrix::new(rows, ids, idx.to_vec())?,
        reports,
    })
}

pub(crate) fn gen_data(cfg: &ExperimentConfig, w: &mut StageWriter) -> Result<Outcome> {
    let ds = match cfg.data.source {
        DataSource::Mixture => data::sample_mixture(&cfg.data.mixture_spec(), cfg.data.n, cfg.data.seed)?,
        DataSource::Csv => {
            let (path, schema) = cfg
                .data
                .csv_path
                .as_ref()
                .zip(cfg.data.schema.as_ref())
                .ok_or_else(|| Error::Config("data.source = \"csv\" needs data.csv_path and data.schema".into()))?;
            data::load_csv(path, schema)?
        }
    };
    let split = data::split(&ds, cfg.split.fractions, cfg.split.seed)?;
    w.write(DATASET, &ds.to_canonical_csv())?;
    w.write_json(SPLIT, &split)?;
    Ok(Outcome {
        lines: vec![
            format!("dataset: {} rows, {} features, {} groups", ds.n(), ds.d(), ds.k()),
            format!(
                "split: {} train, {} valid, {} test",
                split.train_idx.len(),
                split.valid_idx.len(),
                split.test_idx.len()
            ),
            format!("fingerprint: {}", ds.fingerprint()),
        ],
        fingerprint: Some(ds.fingerprint().to_string()),
    })
}

pub(crate) fn train_pool(cfg: &ExperimentConfig, dir: &Path, w: &mut StageWriter) -> Result<Outcome> {
    let (ds, split) = load_data(dir)?;
    let mut lines = Vec::new();
    for (name, seeds) in [(POOL, &cfg.seeds), (UNIVERSE, &cfg.universe_seeds)] {
        let built = build_pool(&ds, &split, &cfg.model, seeds, cfg.epsilon)?;
        w.write(name, built.pool.to_json()?.as_bytes())?;
        lines.push(format!("{name}: {} of {} scorers kept", built.pool.m(), seeds.len()));
    }
    Ok(Outcome::new(lines))
}

pub(crate) fn intervene(cfg: &ExperimentConfig, dir: &Path, w: &mut StageWriter) -> Result<Outcome> {
    let (ds, split) = load_data(dir)?;
    let mut scorers: BTreeMap<u64, Scorer> = BTreeMap::new();
    for name in [POOL, UNIVERSE] {
        for s in load_pool(dir, name, &ds)?.scorers {
            scorers.entry(s.seed).or_insert(s);
        }
    }
    let iv = &cfg.intervention;
    let params = RejectOptionParams::new(iv.target_meo, iv.privileged_group, iv.favorable_label);
    let entries: Vec<(&u64, &Scorer)> = scorers.iter().collect();
    let rules: Vec<SeedRule> = entries
        .par_iter()
        .map(|&(&seed, s)| {
            let rule = match iv.kind {
                InterventionKind::None => FairnessRule::Identity {
                    dataset_fingerprint: ds.fingerprint().to_string(),
                },
                InterventionKind::RejectOption => {
                    FairnessRule::RejectOption(fit_reject_option(s, &ds, &split.valid_idx, &params)?)
                }
                InterventionKind::EqoddsMix => {
                    let mix_seed = iv.seed.wrapping_add(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    FairnessRule::EqoddsMix(fit_eqodds_mix(s, &ds, &split.valid_idx, mix_seed)?)
                }
            };
            Ok(SeedRule { seed, rule })
        })
        .collect::<Result<_>>()?;
    w.write_json(RULES, &rules)?;
    let mut lines = vec![format!(
        "{} rules fitted ({:?}) on the validation rows",
        rules.len(),
        iv.kind
    )];
    let infeasible: Vec<u64> = rules
        .iter()
        .filter(|r| matches!(&r.rule, FairnessRule::RejectOption(x) if !x.feasible))
        .map(|r| r.seed)
        .collect();
    if !infeasible.is_empty() {
        lines.push(format!("target Mean EO not reached for seeds {infeasible:?}"));
    }
    Ok(Outcome::new(lines))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub q: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityEntry {
    pub stage: String,
    pub bin: String,
    pub models: Vec<String>,
    pub ambiguity: f64,
    /// Absent for fewer than two models.
    pub std_quantiles: Option<Vec<QuantileRow>>,
}

pub(crate) fn audit(cfg: &ExperimentConfig, dir: &Path, w: &mut StageWriter) -> Result<Outcome> {
    let (ds, split) = load_data(dir)?;
    let pool = load_pool(dir, POOL, &ds)?;
    let rules = load_rules(dir)?;
    let idx = &split.test_idx;

    let mut frontier = Table::new(["model_id", "stage", "accuracy", "mean_eo", "sp_violation", "oae_gap"]);
    let mut points = Vec::new();
    let mut entries = Vec::new();
    let mut lines = Vec::new();
    for stage in stages_of(cfg) {
        let ev = evaluate(&pool, &rules, stage, &ds, idx)?;
        for (id, r) in ev.scores.model_ids().iter().zip(&ev.reports) {
            frontier.push(vec![
                id.clone(),
                stage.into(),
                cell(r.accuracy),
                cell(r.mean_eo),
                cell(r.sp_violation),
                cell(r.oae_gap),
            ]);
            points.push((format!("{stage}:{id}"), r.accuracy, r.mean_eo));
        }
        let mean = |f: fn(&FairnessReport) -> f64| ev.reports.iter().map(f).sum::<f64>() / ev.reports.len() as f64;
        lines.push(format!(
            "{stage}: mean accuracy {:.4}, mean Mean EO {:.4}",
            mean(|r| r.accuracy),
            mean(|r| r.mean_eo)
        ));

        let mut groups: Vec<(String, Vec<usize>)> = vec![("all".into(), (0..ev.reports.len()).collect())];
        for b in &cfg.audit.bins {
            let members = (0..ev.reports.len())
                .filter(|&i| b.contains(ev.reports[i].mean_eo))
                .collect();
            groups.push((b.name.clone(), members));
        }
        for (bin, members) in groups {
            if members.is_empty() {
                continue;
            }
            let sm = ev.scores.select_models(&members)?;
            let mut entry = AmbiguityEntry {
                stage: stage.into(),
                bin: bin.clone(),
                models: sm.model_ids().to_vec(),
                ambiguity: multiplicity::ambiguity(&sm),
                std_quantiles: None,
            };
            if sm.m() >= 2 {
                let report = multiplicity::MultiplicityReport::compute(&sm, &cfg.audit.quantiles)?;
                let mut cdf = Table::new(["std", "cdf"]);
                for (t, f) in &report.cdf {
                    cdf.push(vec![cell(t), cell(f)]);
                }
                w.write(&format!("std_cdf_{stage}_{bin}.csv"), &cdf.to_bytes()?)?;
                entry.std_quantiles = Some(
                    report
                        .quantile_table
                        .iter()
                        .map(|&(q, std)| QuantileRow { q, std })
                        .collect(),
                );
                if bin == "all" {
                    let tail = report.quantile_table.last().map_or(0.0, |r| r.1);
                    lines.push(format!(
                        "{stage}: ambiguity {:.4}, top-quantile std {tail:.4}",
                        entry.ambiguity
                    ));
                }
            }
            entries.push(entry);
        }
    }
    w.write("frontier.csv", &frontier.to_bytes()?)?;

    let mut bins = Table::new([
        "stage",
        "model_id",
        "accuracy_bin",
        "mean_eo_bin",
        "accuracy_lo",
        "accuracy_hi",
        "mean_eo_lo",
        "mean_eo_hi",
    ]);
    for b in multiplicity::bin_frontier(&points)? {
        for m in &b.members {
            let (stage, id) = m.split_once(':').unwrap_or(("", m));
            bins.push(vec![
                stage.into(),
                id.into(),
                cell(b.accuracy_bin),
                cell(b.mean_eo_bin),
                cell(b.accuracy_interval.0),
                cell(b.accuracy_interval.1),
                cell(b.mean_eo_interval.0),
                cell(b.mean_eo_interval.1),
            ]);
        }
    }
    w.write("bins.csv", &bins.to_bytes()?)?;
    w.write_json("ambiguity.json", &entries)?;
    Ok(Outcome::new(lines))
}

/// Tolerance for an ensemble's Mean EO against the mean of its members'.
const FAIRNESS_DRIFT: f64 = 0.02;

pub(crate) fn ensemble_sweep(cfg: &ExperimentConfig, dir: &Path, w: &mut StageWriter) -> Result<Outcome> {
    let (ds, split) = load_data(dir)?;
    let universe = load_pool(dir, UNIVERSE, &ds)?;
    let rules = load_rules(dir)?;
    let idx = &split.test_idx;
    let stage = *stages_of(cfg).last().expect("at least the baseline stage");
    let ev = evaluate(&universe, &rules, stage, &ds, idx)?;
    let ensembles = draw_ensembles(
        &ev.scores,
        &cfg.ensemble.sizes,
        cfg.ensemble.replicates,
        cfg.ensemble.seed,
    )?;

    let levels = &cfg.audit.quantiles;
    let mut header = vec![
        "m".to_string(),
        "replicate".into(),
        "accuracy".into(),
        "mean_eo".into(),
        "constituent_mean_eo".into(),
    ];
    header.extend(levels.iter().map(|q| format!("std_q{q}")));
    let mut table = Table::new(header);
    let mut lines = vec![format!("{stage} universe of {} models", ev.scores.m())];
    // observed, not guaranteed: averaging fair models need not stay fair
    let (mut drift, mut drifted) = (0.0f64, 0);
    for chunk in ensembles.chunks(cfg.ensemble.replicates) {
        let m = chunk[0].m;
        let sm = ScoreMatrix::from_rows(chunk.iter().map(|e| e.scores.clone()).collect())?;
        let stds = multiplicity::score_std(&sm)?;
        let quantiles = multiplicity::quantile_table(&stds, levels)?;
        for e in chunk {
            let preds: Vec<u8> = e.scores.iter().map(|&s| multiplicity::predict(s)).collect();
            let r = FairnessReport::evaluate(&preds, &ds, idx)?;
            let constituent = e.members.iter().map(|&u| ev.reports[u].mean_eo).sum::<f64>() / e.members.len() as f64;
            let gap = (r.mean_eo - constituent).abs();
            drift = drift.max(gap);
            drifted += usize::from(gap > FAIRNESS_DRIFT);
            let mut row = vec![
                cell(m),
                cell(e.replicate),
                cell(r.accuracy),
                cell(r.mean_eo),
                cell(constituent),
            ];
            row.extend(quantiles.iter().map(|(_, t)| cell(t)));
            table.push(row);
        }
        let summary: Vec<String> = quantiles.iter().map(|(q, t)| format!("q{q} {t:.4}")).collect();
        lines.push(format!("m={m}: ensemble-score std {}", summary.join(", ")));
    }
    w.write("ensemble_sweep.csv", &table.to_bytes()?)?;
    lines.push(format!(
        "ensemble Mean EO vs constituent mean: max gap {drift:.4}, {drifted} of {} ensembles beyond {FAIRNESS_DRIFT}",
        ensembles.len()
    ));
    Ok(Outcome::new(lines))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AgreementOutcome {
    Checked(AgreementReport),
    /// No trial met the confidence precondition.
    Inconclusive {
        trials: usize,
        mean_mass_in_band: f64,
        m: usize,
        n0: usize,
        delta: f64,
        theta: f64,
        scope: ConfidenceScope,
    },
}

pub(crate) fn certify_bounds(cfg: &ExperimentConfig, dir: &Path, w: &mut StageWriter) -> Result<Outcome> {
    let (ds, split) = load_data(dir)?;
    let universe = load_pool(dir, UNIVERSE, &ds)?;
    let sm = score_matrix(&universe, &ds, &split.test_idx)?;
    let b = &cfg.bounds;
    let mut lines = Vec::new();

    let xs: Vec<usize> = (0..b.x_count.min(sm.n())).collect();
    let sampler = UniverseSampler {
        universe: sm.select_columns(&xs)?,
    };
    let mut table = Table::new([
        "nu",
        "m",
        "c",
        "empirical",
        "bound",
        "slack",
        "trials",
        "worst_sample",
        "violated",
    ]);
    let mut violations = 0;
    for &m in &b.ms {
        for check in certify_score_concentration(&sampler, &xs, m, &b.nus, b.c, b.trials, b.seed)? {
            violations += usize::from(check.violated);
            table.push(vec![
                cell(check.nu),
                cell(check.m),
                cell(check.c),
                cell(check.empirical_tail),
                cell(check.theoretical_bound),
                cell(check.slack),
                cell(check.trials),
                cell(split.test_idx[check.worst_sample]),
                cell(check.violated),
            ]);
        }
    }
    w.write("bounds.csv", &table.to_bytes()?)?;
    lines.push(format!(
        "concentration: {} checks over {} inputs, {violations} violations",
        b.ms.len() * b.nus.len(),
        xs.len()
    ));

    let n0 = b.n0.min(sm.n());
    let d0: Vec<usize> = (0..n0).collect();
    let agreement_sampler = match b.scope {
        ConfidenceScope::D0 => UniverseSampler {
            universe: sm.select_columns(&d0)?,
        },
        ConfidenceScope::AllSamples => UniverseSampler { universe: sm.clone() },
    };
    let params = ConfidenceParams {
        delta: b.delta,
        theta: b.theta,
    };
    let outcome = match certify_prediction_agreement(
        &agreement_sampler,
        &d0,
        b.agreement_m,
        params,
        b.c,
        b.trials,
        b.scope,
        b.seed,
    ) {
        Ok(r) => {
            lines.push(format!(
                "agreement: {:.4} over {} confident trials, lower bound {:.4}{}",
                r.empirical_agreement,
                r.confident_trials,
                r.lower_bound,
                if r.violated { " (violated)" } else { "" }
            ));
            AgreementOutcome::Checked(r)
        }
        Err(Error::Inconclusive {
            trials,
            mean_mass_in_band,
        }) => {
            lines.push(format!(
                "agreement: inconclusive, no confident trial among {trials} (mean mass in band {mean_mass_in_band:.4})"
            ));
            AgreementOutcome::Inconclusive {
                trials,
                mean_mass_in_band,
                m: b.agreement_m,
                n0,
                delta: b.delta,
                theta: b.theta,
                scope: b.scope,
            }
        }
        Err(e) => return Err(e),
    };
    w.write_json("agreement.json", &outcome)?;
    Ok(Outcome::new(lines))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseSummary {
    pub group_sizes: Vec<usize>,
    pub epsilon: f64,
    pub models: usize,
    pub ambiguity: f64,
    pub oae_gap: f64,
    pub error_counts: Vec<Vec<usize>>,
}

/// Rows of group `j` are labelled alternately starting from 0.
pub fn worst_case_dataset(group_sizes: &[usize]) -> Result<Dataset> {
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for (j, &n) in group_sizes.iter().enumerate() {
        groups.extend(std::iter::repeat_n(j, n));
        labels.extend((0..n).map(|i| (i % 2) as u8));
    }
    Dataset::new(vec![0.0; groups.len()], 1, groups, labels)
}

pub(crate) fn worst_case(cfg: &ExperimentConfig, w: &mut StageWriter) -> Result<Outcome> {
    let wc = &cfg.worst_case;
    let ds = worst_case_dataset(&wc.group_sizes)?;
    let pool = worstcase::construct(&ds, wc.epsilon, wc.models)?;
    let report = worstcase::verify(&pool, &ds)?;
    let summary = WorstCaseSummary {
        group_sizes: wc.group_sizes.clone(),
        epsilon: wc.epsilon,
        models: wc.models,
        ambiguity: report.ambiguity,
        oae_gap: report.oae_gap,
        error_counts: report.error_counts,
    };
    w.write_json("worst_case.json", &summary)?;
    Ok(Outcome::new(vec![
        format!("ambiguity {}", summary.ambiguity),
        format!("oae_gap {}", summary.oae_gap),
    ]))
}

pub(crate) fn frontier_1d(cfg: &ExperimentConfig, w: &mut StageWriter) -> Result<Outcome> {
    let fc = &cfg.frontier;
    let ds = data::discretize_mixture(&fc.mixture.spec(), fc.n)?;
    let idx = ds.all_indices();
    let grid = interventions::frontier_grid(&ds, &idx, fc.grid_size)?;
    let f = interventions::threshold_frontier(&ds, &idx, &grid, fc.meo_cap)?;
    let mut table = Table::new(["threshold", "error", "mean_eo", "feasible", "argmin"]);
    for (k, p) in f.points.iter().enumerate() {
        table.push(vec![
            cell(p.threshold),
            cell(p.error),
            cell(p.mean_eo),
            cell(p.feasible),
            cell(f.argmin.contains(&k)),
        ]);
    }
    w.write("frontier_1d.csv", &table.to_bytes()?)?;
    let mut lines = vec![format!(
        "argmin set size {} at thresholds {:?}",
        f.argmin.len(),
        f.argmin_thresholds()
    )];
    if let Some(d) = f.diagnostic {
        lines.push(d);
    }
    Ok(Outcome::new(lines))
}

fn csv_to_json(bytes: &[u8]) -> Result<serde_json::Value> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let obj: serde_json::Map<String, serde_json::Value> = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| {
                let value = match v {
                    "true" => serde_json::Value::Bool(true),
                    "false" => serde_json::Value::Bool(false),
                    _ => v
                        .parse::<f64>()
                        .ok()
                        .and_then(serde_json::Number::from_f64)
                        .map_or_else(|| serde_json::Value::String(v.into()), serde_json::Value::Number),
                };
                (h.to_string(), value)
            })
            .collect();
        rows.push(serde_json::Value::Object(obj));
    }
    Ok(serde_json::Value::Array(rows))
}

pub(crate) fn report(dir: &Path, w: &mut StageWriter) -> Result<Outcome> {
    let mut out = serde_json::Map::new();
    let csvs = [
        ("frontier.csv", "audit"),
        ("bins.csv", "audit"),
        ("ensemble_sweep.csv", "ensemble-sweep"),
        ("bounds.csv", "certify-bounds"),
        ("frontier_1d.csv", "frontier-1d"),
    ];
    for (name, producer) in csvs {
        let key = name.trim_end_matches(".csv").to_string();
        out.insert(key, csv_to_json(&require(dir, name, producer)?)?);
    }
    let jsons = [
        ("ambiguity.json", "audit"),
        ("agreement.json", "certify-bounds"),
        ("worst_case.json", "worst-case"),
    ];
    for (name, producer) in jsons {
        let key = name.trim_end_matches(".json").to_string();
        out.insert(key, serde_json::from_slice(&require(dir, name, producer)?)?);
    }

    // per-stage means over the audited pool
    let mut summary = serde_json::Map::new();
    if let Some(rows) = out.get("frontier").and_then(|v| v.as_array()) {
        let mut by_stage: BTreeMap<String, Vec<&serde_json::Value>> = BTreeMap::new();
        for r in rows {
            let stage = r["stage"].as_str().unwrap_or_default().to_string();
            by_stage.entry(stage).or_default().push(r);
        }
        for (stage, rows) in by_stage {
            let mean = |k: &str| rows.iter().filter_map(|r| r[k].as_f64()).sum::<f64>() / rows.len() as f64;
            summary.insert(
                stage,
                serde_json::json!({
                    "models": rows.len(),
                    "accuracy": mean("accuracy"),
                    "mean_eo": mean("mean_eo"),
                    "sp_violation": mean("sp_violation"),
                    "oae_gap": mean("oae_gap"),
                }),
            );
        }
    }
    out.insert("summary".into(), serde_json::Value::Object(summary));
    w.write_json("report.json", &out)?;
    Ok(Outcome::new(vec!["report.json written".into()]))
}
