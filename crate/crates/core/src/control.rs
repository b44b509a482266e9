//! Per-slave command selection.
//!
//! The DEM law picks the command minimizing the expected weighted formation
//! error one cycle ahead. Delivery is Bernoulli(p): with probability p the new
//! command runs for the hit segment, otherwise the slave keeps holding its
//! previous command. A small effort term `ρ·T·(v² + ω²)` accounts for the
//! actuation noise that larger commands admit.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::formation::{formation_error, weighted_error_norm, ErrorVec, WeightMatrix};
use crate::geometry::{wrap, Pose};
use crate::kinematics::{step_unchecked, VelocityCommand};
use crate::netproto::CycleTiming;

/// Measured noise power coefficient.
pub const DEFAULT_RHO: f64 = 1.4153e-5;
/// Ratio of the slave clamp to the largest master command.
pub const CLAMP_RATIO: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemParams {
    pub p_assumed: f64,
    pub weights: WeightMatrix,
    pub rho: f64,
    pub v_max: f64,
    pub omega_max: f64,
    #[serde(default)]
    pub solver: GridSettings,
}

impl DemParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_assumed) {
            return Err(SimError::OutOfRange {
                name: "p_assumed",
                value: self.p_assumed,
            });
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(SimError::OutOfRange {
                name: "rho",
                value: self.rho,
            });
        }
        for (name, value) in [("v_max", self.v_max), ("omega_max", self.omega_max)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SimError::NonPositive { name, value });
            }
        }
        self.solver.validate()
    }

    pub fn bounds(&self) -> CommandBox {
        CommandBox::symmetric(self.v_max, self.omega_max)
    }
}

/// Resolution of the multi-level grid search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSettings {
    pub coarse: usize,
    pub refinements: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            coarse: 41,
            refinements: 6,
        }
    }
}

impl GridSettings {
    pub fn validate(&self) -> Result<()> {
        if self.coarse < 3 {
            return Err(SimError::InvalidConfig(format!(
                "grid needs at least 3 points per axis, got {}",
                self.coarse
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandBox {
    pub v: (f64, f64),
    pub omega: (f64, f64),
}

impl CommandBox {
    pub fn symmetric(v_max: f64, omega_max: f64) -> Self {
        Self {
            v: (-v_max, v_max),
            omega: (-omega_max, omega_max),
        }
    }

    pub fn contains(&self, cmd: &VelocityCommand) -> bool {
        (self.v.0..=self.v.1).contains(&cmd.v) && (self.omega.0..=self.omega.1).contains(&cmd.omega)
    }
}

/// What the master knows about one slave at the start of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInputState {
    pub error_now: ErrorVec,
    /// Master command for this cycle (runs after the switch).
    pub master_cmd: VelocityCommand,
    /// Master command still running until the switch.
    pub master_prev_cmd: VelocityCommand,
    /// Slave command still running; also its fallback on loss.
    pub slave_prev_cmd: VelocityCommand,
}

pub fn clamp_command(cmd: &VelocityCommand, v_max: f64, omega_max: f64) -> VelocityCommand {
    VelocityCommand {
        v: cmd.v.clamp(-v_max, v_max),
        omega: cmd.omega.clamp(-omega_max, omega_max),
    }
}

/// Noise-free look-ahead of one slave's formation error to the end of the cycle.
///
/// The master sits at the origin at cycle start; both robots run their held
/// command until the switch and the given commands afterwards.
pub fn predict_error_next(
    state: &ControlInputState,
    desired: &Pose,
    slave_cmd: &VelocityCommand,
    timing: &CycleTiming,
) -> ErrorVec {
    let slave_start = state.error_now.apply_to(desired);
    let master_end = run_plan(&Pose::IDENTITY, &state.master_prev_cmd, &state.master_cmd, timing);
    let slave_end = run_plan(&slave_start, &state.slave_prev_cmd, slave_cmd, timing);
    formation_error(&master_end, &slave_end, desired)
}

fn run_plan(start: &Pose, held: &VelocityCommand, next: &VelocityCommand, timing: &CycleTiming) -> Pose {
    let mut pose = *start;
    if timing.hold_duration() > 0.0 {
        pose = step_unchecked(&pose, held, timing.hold_duration());
    }
    step_unchecked(&pose, next, timing.hit_duration())
}

/// The expected-error objective of one slave for one cycle, with the parts
/// that do not depend on the candidate command evaluated once.
#[derive(Debug, Clone)]
pub struct DemObjective {
    master_end: Pose,
    slave_mid: Pose,
    desired: Pose,
    hit: f64,
    period: f64,
    p: f64,
    rho: f64,
    weights: WeightMatrix,
    loss_term: f64,
}

impl DemObjective {
    pub fn new(state: &ControlInputState, desired: &Pose, params: &DemParams, timing: &CycleTiming) -> Self {
        let master_end = run_plan(&Pose::IDENTITY, &state.master_prev_cmd, &state.master_cmd, timing);
        let slave_start = state.error_now.apply_to(desired);
        let slave_mid = if timing.hold_duration() > 0.0 {
            step_unchecked(&slave_start, &state.slave_prev_cmd, timing.hold_duration())
        } else {
            slave_start
        };
        let mut obj = Self {
            master_end,
            slave_mid,
            desired: *desired,
            hit: timing.hit_duration(),
            period: timing.period,
            p: params.p_assumed,
            rho: params.rho,
            weights: params.weights,
            loss_term: 0.0,
        };
        let hold_err = obj.error_after(&state.slave_prev_cmd);
        obj.loss_term = (1.0 - obj.p) * weighted_error_norm(&hold_err, &obj.weights);
        obj
    }

    /// Predicted error at the end of the cycle if `cmd` runs after the switch.
    pub fn error_after(&self, cmd: &VelocityCommand) -> ErrorVec {
        let end = step_unchecked(&self.slave_mid, cmd, self.hit);
        formation_error(&self.master_end, &end, &self.desired)
    }

    pub fn value(&self, cmd: &VelocityCommand) -> f64 {
        let delivered = weighted_error_norm(&self.error_after(cmd), &self.weights);
        self.p * delivered + self.loss_term + self.effort(cmd.v, cmd.omega)
    }

    fn effort(&self, v: f64, omega: f64) -> f64 {
        self.rho * self.period * (v * v + omega * omega)
    }

    /// Exact minimizer over `v ∈ [lo, hi]` for a fixed `omega`.
    ///
    /// With ω fixed the end position is affine in v and the heading does not
    /// depend on v, so the objective is a convex quadratic in v.
    pub fn best_v(&self, omega: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
        let turn = omega * self.hit;
        let half = 0.5 * turn;
        let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
        let (s, c) = (self.slave_mid.theta + half).sin_cos();
        let dir = (self.hit * sinc * c, self.hit * sinc * s);

        // Error components as a + v·b in the predicted master frame.
        let (ms, mc) = self.master_end.theta.sin_cos();
        let dx = self.slave_mid.x - self.master_end.x;
        let dy = self.slave_mid.y - self.master_end.y;
        let ax = mc * dx + ms * dy - self.desired.x;
        let ay = -ms * dx + mc * dy - self.desired.y;
        let bx = mc * dir.0 + ms * dir.1;
        let by = -ms * dir.0 + mc * dir.1;
        let eth = wrap(self.slave_mid.theta + turn - self.master_end.theta - self.desired.theta);

        let [wx, wy, wt] = self.weights.entries();
        let quad = self.p * (wx * bx * bx + wy * by * by) + self.rho * self.period;
        let lin = 2.0 * self.p * (wx * ax * bx + wy * ay * by);
        let v = if quad > 0.0 { (-lin / (2.0 * quad)).clamp(lo, hi) } else if lin > 0.0 { lo } else if lin < 0.0 { hi } else { lo };

        let ex = ax + v * bx;
        let ey = ay + v * by;
        let value = self.p * (wx * ex * ex + wy * ey * ey + wt * eth * eth) + self.loss_term + self.effort(v, omega);
        (v, value)
    }
}

/// Multi-resolution grid search over a 2-D box.
///
/// Evaluates a `coarse × coarse` grid, then re-grids a window around the
/// incumbent whose width shrinks by 4× per refinement. Ties go to the lowest
/// v, then the lowest ω.
pub fn grid_oracle_minimize<F>(objective: F, bounds: &CommandBox, settings: GridSettings) -> VelocityCommand
where
    F: Fn(&VelocityCommand) -> f64,
{
    let n = settings.coarse.max(3);
    let mut best = VelocityCommand::new(bounds.v.0, bounds.omega.0);
    let mut best_val = f64::INFINITY;
    let mut window = *bounds;
    for level in 0..=settings.refinements {
        let dv = (window.v.1 - window.v.0) / (n - 1) as f64;
        let dw = (window.omega.1 - window.omega.0) / (n - 1) as f64;
        for i in 0..n {
            let v = window.v.0 + dv * i as f64;
            for j in 0..n {
                let cand = VelocityCommand::new(v, window.omega.0 + dw * j as f64);
                let val = objective(&cand);
                if improves(val, &cand, best_val, &best) {
                    best = cand;
                    best_val = val;
                }
            }
        }
        let shrink = 0.25f64.powi(level as i32 + 1);
        window = shrink_window(bounds, &best, shrink);
    }
    best
}

fn improves(val: f64, cand: &VelocityCommand, best_val: f64, best: &VelocityCommand) -> bool {
    val < best_val
        || (val == best_val && (cand.v < best.v || (cand.v == best.v && cand.omega < best.omega)))
}

fn shrink_window(bounds: &CommandBox, center: &VelocityCommand, fraction: f64) -> CommandBox {
    let span = |(lo, hi): (f64, f64), c: f64| {
        let half = 0.5 * fraction * (hi - lo);
        ((c - half).max(lo), (c + half).min(hi))
    };
    CommandBox {
        v: span(bounds.v, center.v),
        omega: span(bounds.omega, center.omega),
    }
}

/// The DEM control law for one slave.
///
/// For each candidate ω the optimal v is solved in closed form; ω itself is
/// found with the same coarse-to-fine refinement as [`grid_oracle_minimize`].
/// The slave's held command is always among the candidates, so the result is
/// never worse than holding.
pub fn dem_command(
    state: &ControlInputState,
    desired: &Pose,
    params: &DemParams,
    timing: &CycleTiming,
) -> VelocityCommand {
    let objective = DemObjective::new(state, desired, params, timing);
    let bounds = params.bounds();
    let n = params.solver.coarse.max(3);

    let mut best = VelocityCommand::new(bounds.v.0, bounds.omega.0);
    let mut best_val = f64::INFINITY;
    let consider = |omega: f64, best: &mut VelocityCommand, best_val: &mut f64| {
        let (v, val) = objective.best_v(omega, bounds.v);
        let cand = VelocityCommand::new(v, omega);
        if improves(val, &cand, *best_val, best) {
            *best = cand;
            *best_val = val;
        }
    };

    let hold = clamp_command(&state.slave_prev_cmd, params.v_max, params.omega_max);
    consider(hold.omega, &mut best, &mut best_val);

    let mut window = bounds.omega;
    for level in 0..=params.solver.refinements {
        let dw = (window.1 - window.0) / (n - 1) as f64;
        for j in 0..n {
            consider(window.0 + dw * j as f64, &mut best, &mut best_val);
        }
        let half = 0.5 * 0.25f64.powi(level as i32 + 1) * (bounds.omega.1 - bounds.omega.0);
        window = ((best.omega - half).max(bounds.omega.0), (best.omega + half).min(bounds.omega.1));
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineGains {
    pub k_pos: f64,
    pub k_theta: f64,
}

impl Default for BaselineGains {
    fn default() -> Self {
        Self {
            k_pos: 1.0,
            k_theta: 1.0,
        }
    }
}

/// Master feed-forward plus proportional correction, then clamped.
///
/// `v = v_m − k_pos·ex`, `ω = ω_m − k_pos·ey·sgn(v_m) − k_θ·eθ`: a slave
/// ahead of its slot slows down, one left of its slot steers right.
pub fn baseline_pd_command(
    state: &ControlInputState,
    gains: &BaselineGains,
    params: &DemParams,
) -> VelocityCommand {
    let e = &state.error_now;
    let m = &state.master_cmd;
    let steer = if m.v < 0.0 { -1.0 } else { 1.0 };
    let raw = VelocityCommand::new(
        m.v - gains.k_pos * e.ex,
        m.omega - gains.k_pos * steer * e.ey - gains.k_theta * e.etheta,
    );
    clamp_command(&raw, params.v_max, params.omega_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn timing() -> CycleTiming {
        CycleTiming::new(0.1, 0.5).unwrap()
    }

    fn params(p: f64, rho: f64) -> DemParams {
        DemParams {
            p_assumed: p,
            weights: WeightMatrix::IDENTITY,
            rho,
            v_max: 0.15,
            omega_max: 0.15,
            solver: GridSettings::default(),
        }
    }

    fn straight_state(err: ErrorVec) -> ControlInputState {
        let m = VelocityCommand::new(0.1, 0.0);
        ControlInputState {
            error_now: err,
            master_cmd: m,
            master_prev_cmd: m,
            slave_prev_cmd: m,
        }
    }

    #[test]
    fn clamp_examples() {
        let v_max = CLAMP_RATIO * 0.2;
        assert_abs_diff_eq!(v_max, 0.3, epsilon = 1e-15);
        let c = clamp_command(&VelocityCommand::new(0.5, -2.0), v_max, 0.15);
        assert_eq!(c, VelocityCommand::new(v_max, -0.15));
        let inside = VelocityCommand::new(0.1, 0.05);
        assert_eq!(clamp_command(&inside, 0.3, 0.15), inside);
        assert_eq!(clamp_command(&c, v_max, 0.15), c);
    }

    #[test]
    fn prediction_with_matched_motion_is_zero() {
        let st = straight_state(ErrorVec::ZERO);
        let d = Pose::new(0.6, 0.6, 0.0);
        let e = predict_error_next(&st, &d, &st.master_cmd, &timing());
        assert!(e.position_norm() < 1e-15 && e.etheta.abs() < 1e-15);
    }

    #[test]
    fn prediction_when_slave_stops() {
        // Both hold 0.1 m/s for d·T, then only the master moves.
        for (t, d) in [(0.1, 0.5), (0.2, 0.25), (0.05, 0.0)] {
            let timing = CycleTiming::new(t, d).unwrap();
            let st = straight_state(ErrorVec::ZERO);
            let e = predict_error_next(&st, &Pose::new(0.6, 0.0, 0.0), &VelocityCommand::ZERO, &timing);
            assert_abs_diff_eq!(e.ex, -0.1 * t * (1.0 - d), epsilon = 1e-15);
            assert_abs_diff_eq!(e.ey, 0.0);
            assert_abs_diff_eq!(e.etheta, 0.0);
        }
    }

    #[test]
    fn objective_pieces_agree_with_prediction() {
        let st = ControlInputState {
            error_now: ErrorVec::new(0.03, -0.02, 0.1),
            master_cmd: VelocityCommand::new(0.1, 0.08),
            master_prev_cmd: VelocityCommand::new(0.1, 0.05),
            slave_prev_cmd: VelocityCommand::new(0.12, 0.0),
        };
        let d = Pose::new(0.6, 0.6, 0.0);
        let p = params(0.7, DEFAULT_RHO);
        let obj = DemObjective::new(&st, &d, &p, &timing());
        for (v, w) in [(0.0, 0.0), (0.13, -0.1), (-0.05, 0.15)] {
            let u = VelocityCommand::new(v, w);
            let e = predict_error_next(&st, &d, &u, &timing());
            let hold = predict_error_next(&st, &d, &st.slave_prev_cmd, &timing());
            let expect = 0.7 * weighted_error_norm(&e, &p.weights)
                + 0.3 * weighted_error_norm(&hold, &p.weights)
                + DEFAULT_RHO * 0.1 * (v * v + w * w);
            assert_abs_diff_eq!(obj.value(&u), expect, epsilon = 1e-15);
            let (_, at_best) = obj.best_v(w, (v, v));
            assert_abs_diff_eq!(at_best, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn dem_keeps_rigid_motion() {
        let st = straight_state(ErrorVec::ZERO);
        let u = dem_command(&st, &Pose::new(0.6, 0.0, 0.0), &params(1.0, 0.0), &timing());
        assert_abs_diff_eq!(u.v, 0.1, epsilon = 1e-9);
        assert_abs_diff_eq!(u.omega, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn dem_saturates_when_clamp_is_tight() {
        let st = straight_state(ErrorVec::ZERO);
        let mut p = params(1.0, 0.0);
        p.v_max = 0.05;
        let u = dem_command(&st, &Pose::new(0.6, 0.0, 0.0), &p, &timing());
        assert_eq!(u.v, 0.05);
    }

    #[test]
    fn dem_with_p_zero_picks_least_effort() {
        let st = straight_state(ErrorVec::new(0.05, -0.02, 0.1));
        let u = dem_command(&st, &Pose::new(0.6, 0.0, 0.0), &params(0.0, DEFAULT_RHO), &timing());
        assert_abs_diff_eq!(u.v, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.omega, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn grid_finds_separable_quadratic() {
        let b = CommandBox::symmetric(1.0, 1.0);
        let settings = GridSettings { coarse: 41, refinements: 6 };
        let u = grid_oracle_minimize(|c| (c.v - 0.1).powi(2) + c.omega.powi(2), &b, settings);
        assert_abs_diff_eq!(u.v, 0.1, epsilon = 1e-6);
        assert_abs_diff_eq!(u.omega, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn grid_breaks_ties_at_lower_corner() {
        let b = CommandBox::symmetric(0.3, 0.2);
        let u = grid_oracle_minimize(|_| 1.0, &b, GridSettings::default());
        assert_eq!(u, VelocityCommand::new(-0.3, -0.2));
    }

    #[test]
    fn baseline_examples() {
        let p = params(1.0, 0.0);
        let gains = BaselineGains::default();
        let st = straight_state(ErrorVec::ZERO);
        assert_eq!(baseline_pd_command(&st, &gains, &p), st.master_cmd);

        let ahead = straight_state(ErrorVec::new(0.02, 0.0, 0.0));
        assert!(baseline_pd_command(&ahead, &gains, &p).v < 0.1);
        let left = straight_state(ErrorVec::new(0.0, 0.02, 0.0));
        assert!(baseline_pd_command(&left, &gains, &p).omega < 0.0);

        let far = straight_state(ErrorVec::new(-5.0, 3.0, -2.0));
        let u = baseline_pd_command(&far, &gains, &p);
        assert!(p.bounds().contains(&u));
    }

    #[test]
    fn params_validation() {
        assert!(params(1.0, 0.0).validate().is_ok());
        assert!(params(1.2, 0.0).validate().is_err());
        assert!(params(0.5, -1.0).validate().is_err());
        let mut p = params(0.5, 0.0);
        p.omega_max = 0.0;
        assert!(p.validate().is_err());
        p.omega_max = 0.1;
        p.solver.coarse = 2;
        assert!(p.validate().is_err());
    }

    fn cmd() -> impl Strategy<Value = VelocityCommand> {
        (-0.2..0.2f64, -0.2..0.2f64).prop_map(|(v, w)| VelocityCommand::new(v, w))
    }

    fn state() -> impl Strategy<Value = ControlInputState> {
        (-0.1..0.1f64, -0.1..0.1f64, -0.4..0.4f64, cmd(), cmd(), cmd()).prop_map(
            |(ex, ey, et, m, mp, sp)| ControlInputState {
                error_now: ErrorVec::new(ex, ey, et),
                master_cmd: m,
                master_prev_cmd: mp,
                slave_prev_cmd: sp,
            },
        )
    }

    proptest! {
        #[test]
        fn dem_output_is_finite_and_boxed(st in state(), p in 0.0..=1.0f64, slot in 0usize..3) {
            let d = [Pose::new(0.6, 0.0, 0.0), Pose::new(0.0, 0.6, 0.0), Pose::new(0.6, 0.6, 0.0)][slot];
            let prm = params(p, DEFAULT_RHO);
            let u = dem_command(&st, &d, &prm, &timing());
            prop_assert!(u.is_finite());
            prop_assert!(prm.bounds().contains(&u));
        }

        #[test]
        fn dem_is_never_worse_than_holding(st in state(), p in 0.0..=1.0f64) {
            let d = Pose::new(0.6, 0.6, 0.0);
            let prm = params(p, DEFAULT_RHO);
            let obj = DemObjective::new(&st, &d, &prm, &timing());
            let u = dem_command(&st, &d, &prm, &timing());
            let hold = clamp_command(&st.slave_prev_cmd, prm.v_max, prm.omega_max);
            prop_assert!(obj.value(&u) <= obj.value(&hold) + 1e-12);
        }

        #[test]
        fn baseline_stays_in_box(st in state()) {
            let prm = params(1.0, 0.0);
            let u = baseline_pd_command(&st, &BaselineGains::default(), &prm);
            prop_assert!(prm.bounds().contains(&u));
        }
    }
}
