#![allow(dead_code)]

pub mod dense;

use formation_core::control::{ControlInputState, DemParams, GridSettings};
use formation_core::formation::{ErrorVec, WeightMatrix};
use formation_core::geometry::Pose;
use formation_core::kinematics::VelocityCommand;
use formation_core::netproto::CycleTiming;
use rand::Rng;

pub const SLOTS: [(f64, f64); 3] = [(0.6, 0.0), (0.0, 0.6), (0.6, 0.6)];

/// A control situation drawn from the ranges seen in closed-loop runs.
pub struct Case {
    pub state: ControlInputState,
    pub desired: Pose,
    pub timing: CycleTiming,
}

pub fn random_case<R: Rng>(rng: &mut R) -> Case {
    let cmd = |rng: &mut R, lo: f64, hi: f64, w: f64| {
        VelocityCommand::new(rng.random_range(lo..hi), rng.random_range(-w..w))
    };
    let master = cmd(rng, 0.05, 0.2, 0.2);
    let state = ControlInputState {
        error_now: ErrorVec::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.3..0.3),
        ),
        master_cmd: master,
        master_prev_cmd: cmd(rng, 0.05, 0.2, 0.2),
        slave_prev_cmd: cmd(rng, -0.1, 0.3, 0.3),
    };
    let (x, y) = SLOTS[rng.random_range(0..3)];
    let period = [0.05, 0.1, 0.2][rng.random_range(0..3)];
    Case {
        state,
        desired: Pose::new(x, y, 0.0),
        timing: CycleTiming::new(period, 0.5).unwrap(),
    }
}

pub fn params(p: f64, rho: f64) -> DemParams {
    DemParams {
        p_assumed: p,
        weights: WeightMatrix::IDENTITY,
        rho,
        v_max: 0.3,
        omega_max: 0.3,
        solver: GridSettings::default(),
    }
}
