//! Reductions of run traces to the reported statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scenario::{MasterSchedule, RunTrace};

/// Cycles where the master's ω changes most sharply.
///
/// Candidates are cycles whose |Δω| is in the top decile of all non-zero
/// changes. Contiguous candidates form one cluster represented by its middle
/// cycle, and at most one cluster survives per half wave period.
pub fn selected_cycles(schedule: &MasterSchedule) -> Vec<usize> {
    let w: Vec<f64> = schedule.commands.iter().map(|c| c.omega).collect();
    let deltas: Vec<(usize, f64)> = (1..w.len()).map(|k| (k, (w[k] - w[k - 1]).abs())).collect();
    let mut nonzero: Vec<f64> = deltas.iter().map(|d| d.1).filter(|d| *d > 0.0).collect();
    if nonzero.is_empty() {
        return Vec::new();
    }
    nonzero.sort_by(f64::total_cmp);
    let cut = nonzero[((nonzero.len() as f64 * 0.9).floor() as usize).min(nonzero.len() - 1)];
    // Ramps are built from rounded floats; treat near-equal steps as equal.
    let threshold = cut * (1.0 - 1e-9);

    let mut clusters: Vec<Vec<(usize, f64)>> = Vec::new();
    for &(k, d) in deltas.iter().filter(|(_, d)| *d >= threshold) {
        match clusters.last_mut() {
            Some(c) if c.last().is_some_and(|(last, _)| k == last + 1) => c.push((k, d)),
            _ => clusters.push(vec![(k, d)]),
        }
    }

    let half = (schedule.wave_cycles / 2).max(1);
    let mut picked: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for c in clusters {
        let peak = c.iter().map(|x| x.1).fold(0.0, f64::max);
        let top: Vec<usize> = c.iter().filter(|x| x.1 >= peak * (1.0 - 1e-9)).map(|x| x.0).collect();
        let rep = top[(top.len() - 1) / 2];
        let bucket = rep / half;
        match picked.get(&bucket) {
            Some(&(_, best)) if best >= peak => {}
            _ => {
                picked.insert(bucket, (rep, peak));
            }
        }
    }
    picked.into_values().map(|(k, _)| k).collect()
}

/// Cross-run samples for one slave at one cycle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub pos_err_m: Vec<f64>,
    pub ang_err_deg: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMean {
    pub pos_err_m: f64,
    pub ang_err_deg: f64,
}

/// Mean and standard error of a pooled set of absolute errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PooledStat {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

impl PooledStat {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_err, count: n }
    }
}

/// Statistics of one experiment configuration over all of its runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub runs: usize,
    pub max_abs_pos_err_m: f64,
    pub max_abs_ang_err_deg: f64,
    pub selected_cycles: Vec<usize>,
    /// cycle → slave id → samples (one per run, in run order).
    pub samples: BTreeMap<usize, BTreeMap<usize, SampleSet>>,
    /// cycle → slave id → mean of the samples.
    pub means: BTreeMap<usize, BTreeMap<usize, SampleMean>>,
    /// |position error| pooled over selected cycles, slaves and runs.
    pub selected_pos_err_m: PooledStat,
    /// |heading error| pooled the same way.
    pub selected_ang_err_deg: PooledStat,
}

pub fn summarize(traces: &[RunTrace], cycles: &[usize]) -> Result<GroupSummary> {
    let first = traces
        .first()
        .ok_or_else(|| SimError::InvalidConfig("no traces to summarize".into()))?;
    let (n_slaves, n_cycles) = (first.n_slaves, first.cycles());
    for t in traces {
        if t.n_slaves != n_slaves || t.cycles() != n_cycles || t.samples.len() != n_slaves * n_cycles {
            return Err(SimError::SizeMismatch {
                what: "trace samples",
                expected: n_slaves * n_cycles,
                got: t.samples.len(),
            });
        }
    }
    if let Some(&c) = cycles.iter().find(|&&c| c >= n_cycles) {
        return Err(SimError::OutOfRange {
            name: "selected cycle",
            value: c as f64,
        });
    }

    // Run order, not caller order, fixes the sample order.
    let mut ordered: Vec<&RunTrace> = traces.iter().collect();
    ordered.sort_by_key(|t| t.run_index);

    let mut max_pos = 0.0f64;
    let mut max_ang = 0.0f64;
    for s in ordered.iter().flat_map(|t| &t.samples) {
        max_pos = max_pos.max(s.pos_err.abs());
        max_ang = max_ang.max(s.ang_err.abs());
    }

    let mut samples = BTreeMap::new();
    let mut means = BTreeMap::new();
    for &c in cycles {
        let mut per_slave = BTreeMap::new();
        let mut per_slave_mean = BTreeMap::new();
        for i in 0..n_slaves {
            let mut set = SampleSet::default();
            for t in &ordered {
                let s = t.at(c, i);
                set.pos_err_m.push(s.pos_err);
                set.ang_err_deg.push(s.ang_err);
            }
            let n = set.pos_err_m.len() as f64;
            per_slave_mean.insert(
                i + 1,
                SampleMean {
                    pos_err_m: set.pos_err_m.iter().sum::<f64>() / n,
                    ang_err_deg: set.ang_err_deg.iter().sum::<f64>() / n,
                },
            );
            per_slave.insert(i + 1, set);
        }
        samples.insert(c, per_slave);
        means.insert(c, per_slave_mean);
    }

    let pooled = |f: fn(&crate::scenario::ErrorSample) -> f64| {
        PooledStat::from_values(
            cycles
                .iter()
                .flat_map(|&c| ordered.iter().flat_map(move |t| (0..n_slaves).map(move |i| f(t.at(c, i)).abs()))),
        )
    };

    Ok(GroupSummary {
        runs: traces.len(),
        max_abs_pos_err_m: max_pos,
        max_abs_ang_err_deg: max_ang,
        selected_cycles: cycles.to_vec(),
        selected_pos_err_m: pooled(|s| s.pos_err),
        selected_ang_err_deg: pooled(|s| s.ang_err),
        samples,
        means,
    })
}
