use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rashomon::pipeline::{self, ExperimentConfig, Stage};
use rashomon::Error;

/// Audit predictive multiplicity in pools of group-fair classifiers.
#[derive(Debug, Parser)]
#[command(name = "rashomon", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; missing keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Config override as a dotted key, e.g. `--set bounds.trials=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Every stage in order.
    Run,
    /// Generate or load the dataset and split it.
    GenData,
    /// Train the audited pool and the ensemble universe.
    TrainPool,
    /// Fit one fairness rule per trained model on the validation rows.
    Intervene,
    /// Fairness metrics, frontier bins, ambiguity and score-std CDFs.
    Audit,
    /// Score-std of uniform ensembles across sizes.
    EnsembleSweep,
    /// Monte-Carlo checks of the ensemble concentration and agreement bounds.
    CertifyBounds {
        #[arg(long, value_delimiter = ',')]
        nu: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Perfectly fair, maximally ambiguous label-assignment pool.
    WorstCase {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        models: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        group_sizes: Vec<usize>,
    },
    /// Exhaustive fairness-constrained threshold search on a 1-D mixture.
    #[command(name = "frontier-1d")]
    Frontier1d {
        #[arg(long)]
        meo_cap: Option<f64>,
        #[arg(long)]
        grid_size: Option<usize>,
    },
    /// Collate the artifacts into report.json.
    Report,
    /// Print the resolved config as TOML.
    ShowConfig,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Error::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    for s in &cli.common.sets {
        cfg.set(s)?;
    }
    if let Some(out) = &cli.common.out {
        cfg.output_dir = out.clone();
    }
    match &cli.command {
        Command::CertifyBounds { nu, m, trials } => {
            if !nu.is_empty() {
                cfg.bounds.nus = nu.clone();
            }
            if !m.is_empty() {
                cfg.bounds.ms = m.clone();
            }
            if let Some(t) = trials {
                cfg.bounds.trials = *t;
            }
        }
        Command::WorstCase {
            epsilon,
            models,
            group_sizes,
        } => {
            if let Some(e) = epsilon {
                cfg.worst_case.epsilon = *e;
            }
            if let Some(m) = models {
                cfg.worst_case.models = *m;
            }
            if !group_sizes.is_empty() {
                cfg.worst_case.group_sizes = group_sizes.clone();
            }
        }
        Command::Frontier1d { meo_cap, grid_size } => {
            if let Some(c) = meo_cap {
                cfg.frontier.meo_cap = *c;
            }
            if let Some(g) = grid_size {
                cfg.frontier.grid_size = *g;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stage_of(command: &Command) -> Option<Stage> {
    Some(match command {
        Command::GenData => Stage::GenData,
        Command::TrainPool => Stage::TrainPool,
        Command::Intervene => Stage::Intervene,
        Command::Audit => Stage::Audit,
        Command::EnsembleSweep => Stage::EnsembleSweep,
        Command::CertifyBounds { .. } => Stage::CertifyBounds,
        Command::WorstCase { .. } => Stage::WorstCase,
        Command::Frontier1d { .. } => Stage::Frontier1d,
        Command::Report => Stage::Report,
        Command::Run | Command::ShowConfig => return None,
    })
}

fn print_stage(r: &pipeline::StageReport) {
    println!("[{}]", r.stage.name());
    for line in &r.lines {
        println!("  {line}");
    }
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
        Command::Run => {
            let manifest = pipeline::run_with(&cfg, print_stage)?;
            println!("manifest: {}", cfg.output_dir.join(pipeline::MANIFEST).display());
            println!("config hash: {}", manifest.config_hash);
        }
        other => {
            let stage = stage_of(other).expect("single-stage command");
            print_stage(&pipeline::run_stage(stage, &cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
