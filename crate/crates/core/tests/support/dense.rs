//! Brute-force reference for the DEM objective.
//!
//! Re-derives the one-cycle prediction from the textbook arc equations and
//! enumerates a single-pass dense grid, sharing no code with the solver.

#![allow(dead_code)]

use formation_core::control::{ControlInputState, DemParams};
use formation_core::geometry::Pose;
use formation_core::kinematics::VelocityCommand;
use formation_core::netproto::CycleTiming;

fn wrap(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}

/// Displacement per unit linear velocity along an arc of turn rate `w`.
fn unit_arc(th: f64, w: f64, t: f64) -> (f64, f64) {
    let a = w * t;
    if a.abs() < 1e-6 {
        let (s, c) = th.sin_cos();
        (
            t * (c - 0.5 * a * s - a * a / 6.0 * c),
            t * (s + 0.5 * a * c - a * a / 6.0 * s),
        )
    } else {
        (
            ((th + a).sin() - th.sin()) / w,
            (th.cos() - (th + a).cos()) / w,
        )
    }
}

fn arc(p: (f64, f64, f64), cmd: &VelocityCommand, t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return p;
    }
    let (ux, uy) = unit_arc(p.2, cmd.omega, t);
    (p.0 + cmd.v * ux, p.1 + cmd.v * uy, p.2 + cmd.omega * t)
}

pub struct Reference {
    master: (f64, f64, f64),
    slave_mid: (f64, f64, f64),
    desired: Pose,
    hit: f64,
    period: f64,
    w: [f64; 3],
    p: f64,
    rho: f64,
    loss: f64,
}

impl Reference {
    pub fn new(st: &ControlInputState, desired: &Pose, params: &DemParams, timing: &CycleTiming) -> Self {
        let hold = timing.deadline * timing.period;
        let hit = timing.period - hold;
        let m = arc((0.0, 0.0, 0.0), &st.master_prev_cmd, hold);
        let master = arc(m, &st.master_cmd, hit);
        let start = (
            desired.x + st.error_now.ex,
            desired.y + st.error_now.ey,
            desired.theta + st.error_now.etheta,
        );
        let slave_mid = arc(start, &st.slave_prev_cmd, hold);
        let mut r = Self {
            master,
            slave_mid,
            desired: *desired,
            hit,
            period: timing.period,
            w: params.weights.entries(),
            p: params.p_assumed,
            rho: params.rho,
            loss: 0.0,
        };
        r.loss = (1.0 - r.p) * r.error_norm(&st.slave_prev_cmd);
        r
    }

    fn error_norm(&self, u: &VelocityCommand) -> f64 {
        let end = arc(self.slave_mid, u, self.hit);
        let (s, c) = self.master.2.sin_cos();
        let dx = end.0 - self.master.0;
        let dy = end.1 - self.master.1;
        let ex = c * dx + s * dy - self.desired.x;
        let ey = -s * dx + c * dy - self.desired.y;
        let et = wrap(end.2 - self.master.2 - self.desired.theta);
        self.w[0] * ex * ex + self.w[1] * ey * ey + self.w[2] * et * et
    }

    pub fn value(&self, u: &VelocityCommand) -> f64 {
        self.p * self.error_norm(u) + self.loss + self.rho * self.period * (u.v * u.v + u.omega * u.omega)
    }

    /// Minimum over an `n × n` grid on the symmetric box; ties keep the
    /// earliest point (lowest v, then lowest ω).
    pub fn dense_min(&self, v_max: f64, omega_max: f64, n: usize) -> (VelocityCommand, f64) {
        let (s, c) = self.master.2.sin_cos();
        let [wx, wy, wt] = self.w;
        let step_v = 2.0 * v_max / (n - 1) as f64;
        let step_w = 2.0 * omega_max / (n - 1) as f64;
        let mut best = (VelocityCommand::new(-v_max, -omega_max), f64::INFINITY);
        for j in 0..n {
            let w = -omega_max + step_w * j as f64;
            let (ux, uy) = unit_arc(self.slave_mid.2, w, self.hit);
            let et = wrap(self.slave_mid.2 + w * self.hit - self.master.2 - self.desired.theta);
            let head = self.p * wt * et * et + self.loss + self.rho * self.period * w * w;
            for i in 0..n {
                let v = -v_max + step_v * i as f64;
                let dx = self.slave_mid.0 + v * ux - self.master.0;
                let dy = self.slave_mid.1 + v * uy - self.master.1;
                let ex = c * dx + s * dy - self.desired.x;
                let ey = -s * dx + c * dy - self.desired.y;
                let val = head + self.p * (wx * ex * ex + wy * ey * ey) + self.rho * self.period * v * v;
                let better = val < best.1
                    || (val == best.1 && (v < best.0.v || (v == best.0.v && w < best.0.omega)));
                if better {
                    best = (VelocityCommand::new(v, w), val);
                }
            }
        }
        best
    }
}
