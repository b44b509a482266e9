//! Experiment configurations and the closed-loop simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    baseline_pd_command, clamp_command, dem_command, BaselineGains, ControlInputState, DemParams,
    GridSettings, CLAMP_RATIO, DEFAULT_RHO,
};
use crate::error::{Result, SimError};
use crate::formation::{formation_error, square_formation, ErrorVec, FormationSpec, WeightMatrix};
use crate::geometry::Pose;
use crate::kinematics::{apply_actuation_noise, step_unchecked, NoiseModel, VelocityCommand};
use crate::netproto::{sample_delivery, CycleTiming, ExecutionPlan, LinkModel, ProtocolState};

/// Path length at which v = 0.1 m/s, T = 0.1 s gives 900 cycles.
pub const DEFAULT_PATH_LENGTH: f64 = 9.0;
/// The ω wave repeats every 4/9 of the run.
pub const WAVE_PERIOD_FRACTION: f64 = 4.0 / 9.0;
pub const DEFAULT_SIDE: f64 = 0.6;
pub const DEFAULT_DEADLINE: f64 = 0.5;
pub const DEFAULT_RUNS: usize = 50;

/// Shape of the master's angular velocity over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Waveform {
    /// Ramps of `ramp_fraction` of a period between 0 and ±bound, plateaus in between.
    Trapezoid { ramp_fraction: f64 },
    Sine,
    /// ω ≡ 0.
    Straight,
}

impl Default for Waveform {
    fn default() -> Self {
        Waveform::Trapezoid { ramp_fraction: 0.125 }
    }
}

impl Waveform {
    /// Value in [−1, 1] at `phase` ∈ [0, 1).
    fn at(&self, phase: f64) -> f64 {
        match *self {
            Waveform::Straight => 0.0,
            Waveform::Sine => (std::f64::consts::TAU * phase).sin(),
            Waveform::Trapezoid { ramp_fraction } => {
                let (half, sign) = if phase < 0.5 { (phase, 1.0) } else { (phase - 0.5, -1.0) };
                let up = half / ramp_fraction;
                let down = (0.5 - half) / ramp_fraction;
                sign * up.min(down).min(1.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Waveform::Trapezoid { ramp_fraction } = *self {
            if !(ramp_fraction > 0.0 && ramp_fraction <= 0.25) {
                return Err(SimError::OutOfRange {
                    name: "ramp_fraction",
                    value: ramp_fraction,
                });
            }
        }
        Ok(())
    }
}

/// Everything needed to regenerate a master schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// Master linear velocity (m/s).
    pub v_m: f64,
    /// Control cycle (s).
    pub period: f64,
    pub path_length: f64,
    /// ω bound per unit v_m (rad/m); 1.0 pairs 0.1 m/s with ±0.1 rad/s.
    pub omega_ratio: f64,
    pub waveform: Waveform,
}

impl PathSpec {
    pub fn s_path(v_m: f64, period: f64, path_length: f64) -> Self {
        Self {
            v_m,
            period,
            path_length,
            omega_ratio: 1.0,
            waveform: Waveform::default(),
        }
    }

    pub fn build(&self) -> Result<MasterSchedule> {
        for (name, value) in [("v_m", self.v_m), ("T", self.period), ("path_length", self.path_length)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SimError::NonPositive { name, value });
            }
        }
        if !(self.omega_ratio >= 0.0 && self.omega_ratio.is_finite()) {
            return Err(SimError::OutOfRange {
                name: "omega_ratio",
                value: self.omega_ratio,
            });
        }
        self.waveform.validate()?;

        let total = (self.path_length / (self.v_m * self.period)).round() as usize;
        if total == 0 {
            return Err(SimError::InvalidConfig("path shorter than one cycle".into()));
        }
        let wave_cycles = ((WAVE_PERIOD_FRACTION * total as f64).floor() as usize).max(1);
        let bound = self.omega_ratio * self.v_m;
        let commands = (0..total)
            .map(|k| {
                let phase = (k % wave_cycles) as f64 / wave_cycles as f64;
                VelocityCommand::new(self.v_m, bound * self.waveform.at(phase))
            })
            .collect();
        Ok(MasterSchedule {
            commands,
            period: self.period,
            wave_cycles,
        })
    }
}

/// The master's preplanned command for every cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterSchedule {
    pub commands: Vec<VelocityCommand>,
    /// Control cycle (s).
    pub period: f64,
    /// Length of one ω period in cycles.
    pub wave_cycles: usize,
}

impl MasterSchedule {
    pub fn total_cycles(&self) -> usize {
        self.commands.len()
    }

    pub fn distance(&self) -> f64 {
        self.commands.iter().map(|c| c.v.abs() * self.period).sum()
    }

    pub fn max_abs_v(&self) -> f64 {
        self.commands.iter().map(|c| c.v.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_omega(&self) -> f64 {
        self.commands.iter().map(|c| c.omega.abs()).fold(0.0, f64::max)
    }

    /// Slave clamp: 1.5× the largest master command per channel. A schedule
    /// without turning borrows the linear bound for ω.
    pub fn clamp_limits(&self) -> (f64, f64) {
        let v = CLAMP_RATIO * self.max_abs_v();
        let w = CLAMP_RATIO * self.max_abs_omega();
        (v, if w > 0.0 { w } else { v })
    }
}

pub fn s_path_schedule(v_m: f64, period: f64, path_length: f64) -> Result<MasterSchedule> {
    PathSpec::s_path(v_m, period, path_length).build()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Dem,
    Baseline,
}

impl std::str::FromStr for Controller {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dem" => Ok(Controller::Dem),
            "baseline" => Ok(Controller::Baseline),
            other => Err(SimError::InvalidConfig(format!("unknown controller `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub path: PathSpec,
    pub formation: FormationSpec,
    pub link: LinkModel,
    pub dem: DemParams,
    pub timing: CycleTiming,
    pub noise: NoiseModel,
    pub runs: usize,
    pub seed: u64,
    pub controller: Controller,
    pub baseline_gains: BaselineGains,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(SimError::InvalidConfig("runs must be at least 1".into()));
        }
        if (self.timing.period - self.path.period).abs() > 0.0 {
            return Err(SimError::InvalidConfig(
                "timing period and schedule period differ".into(),
            ));
        }
        self.dem.validate()?;
        self.path.build().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// Linear velocity sweep under perfect delivery.
    Comp1,
    /// Control cycle sweep under perfect delivery.
    Comp2,
    /// Lossy delivery, p known to the controller.
    Rob1,
    /// Lossy delivery, controller assumes p = 1.
    Rob2,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Comp1, Group::Comp2, Group::Rob1, Group::Rob2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Comp1 => "comp1",
            Group::Comp2 => "comp2",
            Group::Rob1 => "rob1",
            Group::Rob2 => "rob2",
        }
    }
}

impl std::str::FromStr for Group {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| SimError::UnknownGroup(s.to_string()))
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Optional replacements for the group defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupOverrides {
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub controller: Option<Controller>,
    pub path_length: Option<f64>,
    pub omega_ratio: Option<f64>,
    pub waveform: Option<Waveform>,
    pub side: Option<f64>,
    pub deadline: Option<f64>,
    pub rho: Option<f64>,
    pub noise: Option<bool>,
    pub weights: Option<[f64; 3]>,
    pub v_max: Option<f64>,
    pub omega_max: Option<f64>,
    pub grid_coarse: Option<usize>,
    pub grid_refinements: Option<usize>,
    /// Replaces the swept linear velocities (comp1).
    pub velocities: Option<Vec<f64>>,
    /// Replaces the swept cycle lengths (comp2).
    pub periods: Option<Vec<f64>>,
    /// Replaces the swept delivery probabilities (rob1, rob2).
    pub probabilities: Option<Vec<f64>>,
    pub k_pos: Option<f64>,
    pub k_theta: Option<f64>,
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub name: String,
    pub v_m: f64,
    pub period: f64,
    pub p_true: f64,
    pub p_assumed: f64,
}

type Point = SweepPoint;

/// The four experiment sweeps.
pub fn build_group(group: Group, overrides: &GroupOverrides) -> Result<Vec<ExperimentConfig>> {
    let o = overrides;
    let points: Vec<Point> = match group {
        Group::Comp1 => o
            .velocities
            .clone()
            .unwrap_or_else(|| vec![0.05, 0.1, 0.2])
            .into_iter()
            .map(|v| Point {
                name: format!("comp1_v{v}"),
                v_m: v,
                period: 0.1,
                p_true: 1.0,
                p_assumed: 1.0,
            })
            .collect(),
        Group::Comp2 => o
            .periods
            .clone()
            .unwrap_or_else(|| vec![0.05, 0.1, 0.2])
            .into_iter()
            .map(|t| Point {
                name: format!("comp2_T{t}"),
                v_m: 0.1,
                period: t,
                p_true: 1.0,
                p_assumed: 1.0,
            })
            .collect(),
        Group::Rob1 | Group::Rob2 => o
            .probabilities
            .clone()
            .unwrap_or_else(|| vec![0.9, 0.7, 0.5])
            .into_iter()
            .map(|p| Point {
                name: format!("{group}_p{p}"),
                v_m: 0.1,
                period: 0.1,
                p_true: p,
                p_assumed: if group == Group::Rob1 { p } else { 1.0 },
            })
            .collect(),
    };
    if points.is_empty() {
        return Err(SimError::InvalidConfig(format!("group {group} has an empty sweep")));
    }
    build_sweep(points, o)
}

/// Configurations for arbitrary sweep points, with group-wide settings taken
/// from `overrides` (or the defaults).
pub fn build_sweep(points: Vec<SweepPoint>, overrides: &GroupOverrides) -> Result<Vec<ExperimentConfig>> {
    let o = overrides;
    if points.is_empty() {
        return Err(SimError::InvalidConfig("empty sweep".into()));
    }

    let side = o.side.unwrap_or(DEFAULT_SIDE);
    let formation = square_formation(side)?;
    let weights = match o.weights {
        Some([a, b, c]) => WeightMatrix::diag(a, b, c)?,
        None => WeightMatrix::IDENTITY,
    };
    let rho = o.rho.unwrap_or(DEFAULT_RHO);
    let noise = NoiseModel::new(rho, o.noise.unwrap_or(true))?;
    let solver = GridSettings {
        coarse: o.grid_coarse.unwrap_or(41),
        refinements: o.grid_refinements.unwrap_or(6),
    };
    let gains = BaselineGains {
        k_pos: o.k_pos.unwrap_or(1.0),
        k_theta: o.k_theta.unwrap_or(1.0),
    };
    if !(gains.k_pos > 0.0 && gains.k_theta > 0.0) {
        return Err(SimError::InvalidConfig("baseline gains must be positive".into()));
    }

    points
        .into_iter()
        .map(|pt| {
            let path = PathSpec {
                v_m: pt.v_m,
                period: pt.period,
                path_length: o.path_length.unwrap_or(DEFAULT_PATH_LENGTH),
                omega_ratio: o.omega_ratio.unwrap_or(1.0),
                waveform: o.waveform.unwrap_or_default(),
            };
            let (v_max, omega_max) = path.build()?.clamp_limits();
            let cfg = ExperimentConfig {
                name: pt.name,
                path,
                formation: formation.clone(),
                link: LinkModel::new(pt.p_true)?,
                dem: DemParams {
                    p_assumed: pt.p_assumed,
                    weights,
                    rho,
                    v_max: o.v_max.unwrap_or(v_max),
                    omega_max: o.omega_max.unwrap_or(omega_max),
                    solver,
                },
                timing: CycleTiming::new(pt.period, o.deadline.unwrap_or(DEFAULT_DEADLINE))?,
                noise,
                runs: o.runs.unwrap_or(DEFAULT_RUNS),
                seed: o.seed.unwrap_or(0),
                controller: o.controller.unwrap_or(Controller::Dem),
                baseline_gains: gains,
            };
            if !(0.0..=1.0).contains(&pt.p_assumed) {
                return Err(SimError::OutOfRange {
                    name: "p_assumed",
                    value: pt.p_assumed,
                });
            }
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

/// One slave's formation error at the start of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub cycle: usize,
    /// 1-based slave id.
    pub slave: usize,
    pub error: ErrorVec,
    /// √(ex² + ey²) in meters.
    pub pos_err: f64,
    /// Signed heading error in degrees.
    pub ang_err: f64,
    /// Whether the command computed this cycle arrived before the deadline.
    pub delivered: bool,
}

impl ErrorSample {
    pub fn new(cycle: usize, slave: usize, error: ErrorVec, delivered: bool) -> Self {
        Self {
            cycle,
            slave,
            error,
            pos_err: error.position_norm(),
            ang_err: error.heading_deg(),
            delivered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub run_index: usize,
    /// Seed of this run's random streams.
    pub seed: u64,
    pub n_slaves: usize,
    /// Cycle-major, slave-minor.
    pub samples: Vec<ErrorSample>,
    /// Commands the controller produced, per cycle and slave (after clamping).
    pub computed: Vec<Vec<VelocityCommand>>,
    /// Commands each slave ran after the switch, per cycle and slave.
    pub executed: Vec<Vec<VelocityCommand>>,
}

impl RunTrace {
    pub fn cycles(&self) -> usize {
        self.computed.len()
    }

    pub fn at(&self, cycle: usize, slave_index: usize) -> &ErrorSample {
        &self.samples[cycle * self.n_slaves + slave_index]
    }

    pub fn delivered(&self, cycle: usize) -> impl Iterator<Item = bool> + '_ {
        self.samples[cycle * self.n_slaves..(cycle + 1) * self.n_slaves]
            .iter()
            .map(|s| s.delivered)
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-run seed: `mix64(seed ^ mix64(run_index))`.
pub fn run_seed(seed: u64, run_index: usize) -> u64 {
    mix64(seed ^ mix64(run_index as u64))
}

/// Independent delivery and actuation-noise streams for one run.
pub fn run_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut delivery = ChaCha8Rng::seed_from_u64(seed);
    delivery.set_stream(0);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    (delivery, noise)
}

fn execute<R: Rng + ?Sized>(pose: &Pose, plan: &ExecutionPlan, noise: &NoiseModel, rng: &mut R) -> Pose {
    plan.segments().fold(*pose, |p, seg| {
        let cmd = apply_actuation_noise(&seg.cmd, noise, rng);
        step_unchecked(&p, &cmd, seg.duration)
    })
}

/// One seeded closed-loop run.
pub fn run_simulation(config: &ExperimentConfig, run_index: usize) -> Result<RunTrace> {
    if run_index >= config.runs {
        return Err(SimError::InvalidConfig(format!(
            "run index {run_index} out of range for {} runs",
            config.runs
        )));
    }
    config.validate()?;
    let schedule = config.path.build()?;
    let seed = run_seed(config.seed, run_index);
    let (mut delivery_rng, mut noise_rng) = run_streams(seed);

    let desired = config.formation.desired();
    let n = desired.len();
    let mut master = Pose::IDENTITY;
    let mut slaves: Vec<Pose> = desired.iter().map(|d| master.compose(d)).collect();
    let mut proto = ProtocolState::new(n);

    let cycles = schedule.total_cycles();
    let mut trace = RunTrace {
        run_index,
        seed,
        n_slaves: n,
        samples: Vec::with_capacity(cycles * n),
        computed: Vec::with_capacity(cycles),
        executed: Vec::with_capacity(cycles),
    };

    for (cycle, master_cmd) in schedule.commands.iter().enumerate() {
        let errors: Vec<ErrorVec> = slaves
            .iter()
            .zip(desired)
            .map(|(s, d)| formation_error(&master, s, d))
            .collect();

        let cmds: Vec<VelocityCommand> = errors
            .iter()
            .zip(desired)
            .zip(proto.executing())
            .map(|((e, d), prev)| {
                let state = ControlInputState {
                    error_now: *e,
                    master_cmd: *master_cmd,
                    master_prev_cmd: proto.master_executing(),
                    slave_prev_cmd: *prev,
                };
                let u = match config.controller {
                    Controller::Dem => dem_command(&state, d, &config.dem, &config.timing),
                    Controller::Baseline => baseline_pd_command(&state, &config.baseline_gains, &config.dem),
                };
                clamp_command(&u, config.dem.v_max, config.dem.omega_max)
            })
            .collect();

        let delivered = sample_delivery(&config.link, n, &mut delivery_rng);
        let plan = proto.advance_cycle(*master_cmd, &cmds, &delivered, &config.timing)?;

        master = execute(&master, &plan.master, &config.noise, &mut noise_rng);
        for (pose, p) in slaves.iter_mut().zip(&plan.slaves) {
            *pose = execute(pose, p, &config.noise, &mut noise_rng);
        }

        trace.samples.extend(
            errors
                .iter()
                .zip(&delivered)
                .enumerate()
                .map(|(i, (e, d))| ErrorSample::new(cycle, i + 1, *e, *d)),
        );
        trace.executed.push(proto.executing().to_vec());
        trace.computed.push(cmds);
    }
    Ok(trace)
}
