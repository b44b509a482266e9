//! On-disk formats: per-configuration trace CSV, per-group summary JSON and
//! the batch manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use formation_core::metrics::GroupSummary;
use formation_core::scenario::{ExperimentConfig, RunTrace};
use serde::Serialize;

use crate::{Args, CliError, ConfigResult, Plan};

pub const TRACE_HEADER: &str = "run,cycle,slave,ex_m,ey_m,etheta_rad,pos_err_m,ang_err_deg,delivered";

/// Nine significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        // Avoid emitting "-0.00000000e0".
        return "0.00000000e0".to_string();
    }
    format!("{x:.8e}")
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

pub fn trace_file_name(config: &ExperimentConfig) -> String {
    format!("trace_{}.csv", config.name)
}

pub fn write_trace_csv(dir: &Path, config: &ExperimentConfig, traces: &[RunTrace]) -> Result<PathBuf, CliError> {
    let path = dir.join(trace_file_name(config));
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for t in traces {
            for s in &t.samples {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    t.run_index,
                    s.cycle,
                    s.slave,
                    fmt_float(s.error.ex),
                    fmt_float(s.error.ey),
                    fmt_float(s.error.etheta),
                    fmt_float(s.pos_err),
                    fmt_float(s.ang_err),
                    u8::from(s.delivered)
                )?;
            }
        }
        w.flush()
    };
    write().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

#[derive(Serialize)]
struct ConfigSummary<'a> {
    config: &'a ExperimentConfig,
    trace_csv: String,
    #[serde(flatten)]
    summary: &'a GroupSummary,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    group: &'a str,
    configs: Vec<ConfigSummary<'a>>,
}

pub fn summary_file_name(group: &str) -> String {
    format!("summary_{group}.json")
}

pub fn write_summary(dir: &Path, group: &str, results: &[ConfigResult]) -> Result<PathBuf, CliError> {
    let body = SummaryFile {
        group,
        configs: results
            .iter()
            .map(|r| ConfigSummary {
                config: &r.config,
                trace_csv: trace_file_name(&r.config),
                summary: &r.summary,
            })
            .collect(),
    };
    let path = dir.join(summary_file_name(group));
    write_json(&path, &body)?;
    Ok(path)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    group: &'a str,
    seed: Option<u64>,
    runs: Option<usize>,
    parallelism: usize,
    config_file: Option<String>,
    configs: &'a [ExperimentConfig],
    /// Unix seconds; the only field that differs between identical invocations.
    generated_at: u64,
}

pub fn write_manifest(plan: &Plan, args: &Args) -> Result<PathBuf, CliError> {
    let generated_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let body = Manifest {
        tool: "formation-sim",
        version: env!("CARGO_PKG_VERSION"),
        group: &plan.group,
        seed: plan.configs.first().map(|c| c.seed),
        runs: plan.configs.first().map(|c| c.runs),
        parallelism: plan.parallelism,
        config_file: args.config.as_ref().map(|p| p.display().to_string()),
        configs: &plan.configs,
        generated_at,
    };
    let path = plan.out.join("manifest.json");
    write_json(&path, &body)?;
    Ok(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}
