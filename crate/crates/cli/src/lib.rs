//! Batch runner: builds an experiment group, runs every configuration for the
//! requested number of seeded runs and writes traces, summaries and a manifest.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use formation_core::metrics::{selected_cycles, summarize, GroupSummary};
use formation_core::scenario::{build_group, build_sweep, run_simulation, Controller, ExperimentConfig, Group, RunTrace};
use formation_core::SimError;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::ConfigFile;

pub const SEED_ENV: &str = "FORMATION_SIM_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Sim(_) => 2,
            CliError::Output(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "formation-sim", version, about = "Run formation navigation experiment groups")]
pub struct Args {
    /// Experiment group: comp1, comp2, rob1, rob2, or custom (needs --config).
    #[arg(long)]
    pub group: Option<String>,
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Base seed (falls back to the config file, then FORMATION_SIM_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Runs per configuration.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Worker threads for the batch.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long, value_parser = ["dem", "baseline"])]
    pub controller: Option<String>,
}

/// Fully resolved batch.
#[derive(Debug, Clone)]
pub struct Plan {
    pub group: String,
    pub configs: Vec<ExperimentConfig>,
    pub parallelism: usize,
    pub out: PathBuf,
}

pub fn resolve(args: &Args) -> Result<Plan, CliError> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut overrides = file.overrides();

    let env_seed = match std::env::var(SEED_ENV) {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}: `{s}` is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    overrides.seed = args.seed.or(overrides.seed).or(env_seed).or(Some(0));
    if let Some(r) = args.runs {
        overrides.runs = Some(r);
    }
    if let Some(c) = &args.controller {
        overrides.controller = Some(c.parse::<Controller>()?);
    }
    if overrides.runs == Some(0) {
        return Err(CliError::Config("runs: must be at least 1".into()));
    }

    let group = args
        .group
        .clone()
        .or_else(|| file.group.clone())
        .ok_or_else(|| CliError::Config("group: no --group given and none in the config file".into()))?;
    let configs = if group == "custom" {
        if file.custom.is_empty() {
            return Err(CliError::Config("custom: group `custom` needs [[custom]] entries".into()));
        }
        build_sweep(file.custom.clone(), &overrides)?
    } else {
        let g: Group = group
            .parse()
            .map_err(|_| CliError::Config(format!("group: unknown group `{group}`")))?;
        build_group(g, &overrides)?
    };

    let parallelism = args.parallelism.or(file.run.parallelism).unwrap_or(1);
    if parallelism == 0 {
        return Err(CliError::Config("parallelism: must be at least 1".into()));
    }
    Ok(Plan {
        group,
        configs,
        parallelism,
        out: args.out.clone(),
    })
}

/// Per-configuration result of a batch.
pub struct ConfigResult {
    pub config: ExperimentConfig,
    pub traces: Vec<RunTrace>,
    pub summary: GroupSummary,
}

/// Runs every (configuration, run) pair; results come back in index order
/// regardless of scheduling.
pub fn execute(plan: &Plan) -> Result<Vec<ConfigResult>, CliError> {
    let jobs: Vec<(usize, usize)> = plan
        .configs
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.runs).map(move |r| (ci, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallelism)
        .build()
        .map_err(|e| CliError::Config(format!("parallelism: {e}")))?;
    let traces: Vec<RunTrace> = pool.install(|| {
        jobs.par_iter()
            .map(|&(ci, r)| run_simulation(&plan.configs[ci], r))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut traces = traces.into_iter();
    plan.configs
        .iter()
        .map(|cfg| {
            let runs: Vec<RunTrace> = traces.by_ref().take(cfg.runs).collect();
            let cycles = selected_cycles(&cfg.path.build()?);
            let summary = summarize(&runs, &cycles)?;
            Ok(ConfigResult {
                config: cfg.clone(),
                traces: runs,
                summary,
            })
        })
        .collect()
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    let plan = resolve(args)?;
    prepare_out_dir(&plan.out)?;
    let results = execute(&plan)?;
    let mut written = Vec::new();
    for r in &results {
        written.push(output::write_trace_csv(&plan.out, &r.config, &r.traces)?);
        println!(
            "{:<16} runs {:>3}  max |pos| {:.4} m  max |ang| {:.3} deg",
            r.config.name, r.config.runs, r.summary.max_abs_pos_err_m, r.summary.max_abs_ang_err_deg
        );
    }
    written.push(output::write_summary(&plan.out, &plan.group, &results)?);
    written.push(output::write_manifest(&plan, args)?);
    Ok(written)
}

fn prepare_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
    let probe = out.join(".write-probe");
    std::fs::write(&probe, b"").map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

/// Parses `argv`, runs the batch and returns the process exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&args) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
