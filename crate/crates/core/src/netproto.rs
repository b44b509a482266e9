//! Hold-and-hit command cycle.
//!
//! Commands computed at the start of cycle k only take effect at
//! `t_k + d·T`, for every robot at once. Before the switch each robot keeps
//! running its previous command. A command that misses the deadline is
//! dropped and the robot keeps holding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kinematics::VelocityCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub p_true: f64,
}

impl LinkModel {
    pub const PERFECT: LinkModel = LinkModel { p_true: 1.0 };

    pub fn new(p_true: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_true) {
            return Err(SimError::OutOfRange {
                name: "p_true",
                value: p_true,
            });
        }
        Ok(Self { p_true })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleTiming {
    /// Control cycle length in seconds.
    pub period: f64,
    /// Fraction of the cycle after which delivered commands switch in.
    pub deadline: f64,
}

impl CycleTiming {
    pub fn new(period: f64, deadline: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(SimError::NonPositive {
                name: "T",
                value: period,
            });
        }
        if !(0.0..1.0).contains(&deadline) {
            return Err(SimError::OutOfRange {
                name: "d",
                value: deadline,
            });
        }
        Ok(Self { period, deadline })
    }

    /// Length of the hold segment in seconds.
    pub fn hold_duration(&self) -> f64 {
        self.deadline * self.period
    }

    /// Length of the hit segment in seconds.
    pub fn hit_duration(&self) -> f64 {
        self.period - self.hold_duration()
    }
}

/// One constant-command stretch of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub cmd: VelocityCommand,
    pub duration: f64,
}

/// What one robot executes during a cycle: the held command, then the new one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub hold: Segment,
    pub hit: Segment,
}

impl ExecutionPlan {
    fn new(prev: VelocityCommand, next: VelocityCommand, timing: &CycleTiming) -> Self {
        Self {
            hold: Segment {
                cmd: prev,
                duration: timing.hold_duration(),
            },
            hit: Segment {
                cmd: next,
                duration: timing.hit_duration(),
            },
        }
    }

    /// Segments with non-zero duration, in execution order.
    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        [&self.hold, &self.hit]
            .into_iter()
            .filter(|s| s.duration > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclePlan {
    pub master: ExecutionPlan,
    pub slaves: Vec<ExecutionPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolState {
    master_executing: VelocityCommand,
    executing: Vec<VelocityCommand>,
    pending: Vec<Option<VelocityCommand>>,
    cycle_index: u64,
}

impl ProtocolState {
    /// Every robot starts at rest.
    pub fn new(n_slaves: usize) -> Self {
        Self {
            master_executing: VelocityCommand::ZERO,
            executing: vec![VelocityCommand::ZERO; n_slaves],
            pending: vec![None; n_slaves],
            cycle_index: 0,
        }
    }

    pub fn n_slaves(&self) -> usize {
        self.executing.len()
    }

    pub fn cycle_index(&self) -> u64 {
        self.cycle_index
    }

    pub fn master_executing(&self) -> VelocityCommand {
        self.master_executing
    }

    /// Commands each slave is running right now (the fallback on loss).
    pub fn executing(&self) -> &[VelocityCommand] {
        &self.executing
    }

    /// Commands delivered during the most recent cycle.
    pub fn pending(&self) -> &[Option<VelocityCommand>] {
        &self.pending
    }

    /// Runs one cycle of the protocol and returns every robot's execution plan.
    ///
    /// The master's own command is never lost.
    pub fn advance_cycle(
        &mut self,
        master_cmd: VelocityCommand,
        new_cmds: &[VelocityCommand],
        delivered: &[bool],
        timing: &CycleTiming,
    ) -> Result<CyclePlan> {
        let n = self.n_slaves();
        if new_cmds.len() != n {
            return Err(SimError::SizeMismatch {
                what: "slave commands",
                expected: n,
                got: new_cmds.len(),
            });
        }
        if delivered.len() != n {
            return Err(SimError::SizeMismatch {
                what: "delivery flags",
                expected: n,
                got: delivered.len(),
            });
        }

        let master = ExecutionPlan::new(self.master_executing, master_cmd, timing);
        self.master_executing = master_cmd;

        let mut slaves = Vec::with_capacity(n);
        for i in 0..n {
            let prev = self.executing[i];
            let next = if delivered[i] { new_cmds[i] } else { prev };
            self.pending[i] = delivered[i].then_some(new_cmds[i]);
            self.executing[i] = next;
            slaves.push(ExecutionPlan::new(prev, next, timing));
        }
        self.cycle_index += 1;
        Ok(CyclePlan { master, slaves })
    }
}

/// Independent Bernoulli(p_true) delivery draws, one per slave.
pub fn sample_delivery<R: Rng + ?Sized>(link: &LinkModel, n_slaves: usize, rng: &mut R) -> Vec<bool> {
    (0..n_slaves).map(|_| rng.random_bool(link.p_true)).collect()
}
