//! Unicycle propagation under constant velocity commands, plus actuation noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::Pose;

/// Below this |ω·Δt| the arc displacement uses its Taylor expansion.
pub const STRAIGHT_LINE_THRESHOLD: f64 = 1e-8;

/// Linear floor (m/s) for the noise variance.
pub const V_NOISE_FLOOR: f64 = 0.01;
/// Angular floor (rad/s) for the noise variance.
pub const OMEGA_NOISE_FLOOR: f64 = 0.01;

/// Target linear and angular velocity pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { v: 0.0, omega: 0.0 };

    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.omega.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub rho: f64,
    pub enabled: bool,
}

impl NoiseModel {
    pub const OFF: NoiseModel = NoiseModel {
        rho: 0.0,
        enabled: false,
    };

    pub fn new(rho: f64, enabled: bool) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(SimError::OutOfRange { name: "rho", value: rho });
        }
        Ok(Self { rho, enabled })
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.rho > 0.0
    }
}

/// sin(x)/x, with the series form near zero.
#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < STRAIGHT_LINE_THRESHOLD {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Exact constant-twist integration over `duration` seconds.
///
/// The chord of the arc has length `v·Δt·sinc(ω·Δt/2)` and points along the
/// mid-arc heading, which stays well conditioned as ω → 0.
pub fn unicycle_step(start: &Pose, cmd: &VelocityCommand, duration: f64) -> Result<Pose> {
    if !(duration > 0.0) {
        return Err(SimError::NonPositiveDuration(duration));
    }
    Ok(step_unchecked(start, cmd, duration))
}

#[inline]
pub(crate) fn step_unchecked(start: &Pose, cmd: &VelocityCommand, duration: f64) -> Pose {
    let turn = cmd.omega * duration;
    let chord = cmd.v * duration * sinc(0.5 * turn);
    let (s, c) = (start.theta + 0.5 * turn).sin_cos();
    Pose::new(start.x + chord * c, start.y + chord * s, start.theta + turn)
}

/// Perturbs each channel with N(0, ρ·max(|u|, floor)) (variance form).
pub fn apply_actuation_noise<R: Rng + ?Sized>(
    cmd: &VelocityCommand,
    model: &NoiseModel,
    rng: &mut R,
) -> VelocityCommand {
    if !model.is_active() {
        return *cmd;
    }
    let sd_v = (model.rho * cmd.v.abs().max(V_NOISE_FLOOR)).sqrt();
    let sd_w = (model.rho * cmd.omega.abs().max(OMEGA_NOISE_FLOOR)).sqrt();
    // Both standard deviations are finite and positive here.
    let nv = Normal::new(0.0, sd_v).expect("finite sd");
    let nw = Normal::new(0.0, sd_w).expect("finite sd");
    VelocityCommand {
        v: cmd.v + nv.sample(rng),
        omega: cmd.omega + nw.sample(rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Classical RK4 on the unicycle ODE, independent of the closed form.
    fn rk4(start: &Pose, cmd: &VelocityCommand, duration: f64, steps: usize) -> (f64, f64, f64) {
        let f = |th: f64| (cmd.v * th.cos(), cmd.v * th.sin(), cmd.omega);
        let h = duration / steps as f64;
        let (mut x, mut y, mut th) = (start.x, start.y, start.theta);
        for _ in 0..steps {
            let k1 = f(th);
            let k2 = f(th + 0.5 * h * k1.2);
            let k3 = f(th + 0.5 * h * k2.2);
            let k4 = f(th + h * k3.2);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            y += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            th += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        }
        (x, y, th)
    }

    #[test]
    fn straight_and_spin_examples() {
        let p = unicycle_step(&Pose::IDENTITY, &VelocityCommand::new(0.1, 0.0), 0.1).unwrap();
        assert_abs_diff_eq!(p.x, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.0);
        assert_abs_diff_eq!(p.theta, 0.0);

        let p = unicycle_step(&Pose::IDENTITY, &VelocityCommand::new(0.0, 0.1), 0.1).unwrap();
        assert_abs_diff_eq!(p.x, 0.0);
        assert_abs_diff_eq!(p.y, 0.0);
        assert_abs_diff_eq!(p.theta, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn arc_matches_rk4() {
        let cmd = VelocityCommand::new(0.1, 0.1);
        let p = unicycle_step(&Pose::IDENTITY, &cmd, 0.1).unwrap();
        let (x, y, th) = rk4(&Pose::IDENTITY, &cmd, 0.1, 1000);
        assert_abs_diff_eq!(p.x, x, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, y, epsilon = 1e-9);
        assert_abs_diff_eq!(p.theta, th, epsilon = 1e-9);

        let start = Pose::new(1.0, -2.0, 2.5);
        let cmd = VelocityCommand::new(-0.3, 1.7);
        let p = unicycle_step(&start, &cmd, 0.2).unwrap();
        let (x, y, th) = rk4(&start, &cmd, 0.2, 1000);
        assert_abs_diff_eq!(p.x, x, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, y, epsilon = 1e-9);
        assert_abs_diff_eq!(p.theta, crate::geometry::wrap(th), epsilon = 1e-9);
    }

    #[test]
    fn rejects_non_positive_duration() {
        let cmd = VelocityCommand::new(0.1, 0.0);
        assert!(unicycle_step(&Pose::IDENTITY, &cmd, 0.0).is_err());
        assert!(unicycle_step(&Pose::IDENTITY, &cmd, -0.1).is_err());
    }

    #[test]
    fn continuous_at_zero_omega() {
        for v in [0.05, 0.1, 0.2] {
            for t in [0.05, 0.1, 0.2] {
                let arc = unicycle_step(&Pose::IDENTITY, &VelocityCommand::new(v, 1e-9), t).unwrap();
                let line = unicycle_step(&Pose::IDENTITY, &VelocityCommand::new(v, 0.0), t).unwrap();
                assert!((arc.x - line.x).abs() < 1e-10);
                assert!((arc.y - line.y).abs() < 1e-10);
                // Heading legitimately advances by ω·T.
                assert!((arc.theta - line.theta - 1e-9 * t).abs() < 1e-18);
            }
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cmd = VelocityCommand::new(0.1, -0.05);
        let off = NoiseModel::new(0.0, true).unwrap();
        assert_eq!(apply_actuation_noise(&cmd, &off, &mut rng), cmd);
        let disabled = NoiseModel::new(1.0, false).unwrap();
        assert_eq!(apply_actuation_noise(&cmd, &disabled, &mut rng), cmd);
        assert!(NoiseModel::new(-1e-3, true).is_err());
    }

    #[test]
    fn noise_sample_mean_is_unbiased() {
        let model = NoiseModel::new(1.4153e-5, true).unwrap();
        let cmd = VelocityCommand::new(0.1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let (mut sum, mut sum_w) = (0.0, 0.0);
        for _ in 0..n {
            let noisy = apply_actuation_noise(&cmd, &model, &mut rng);
            sum += noisy.v;
            sum_w += noisy.omega;
        }
        let sigma_v = (1.4153e-5f64 * 0.1).sqrt();
        let sigma_w = (1.4153e-5f64 * OMEGA_NOISE_FLOOR).sqrt();
        let n = n as f64;
        assert!((sum / n - 0.1).abs() < 3.0 * sigma_v / n.sqrt());
        assert!((sum_w / n).abs() < 3.0 * sigma_w / n.sqrt());
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let model = NoiseModel::new(1.4153e-5, true).unwrap();
        let cmd = VelocityCommand::new(0.1, 0.1);
        let a = apply_actuation_noise(&cmd, &model, &mut ChaCha8Rng::seed_from_u64(3));
        let b = apply_actuation_noise(&cmd, &model, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_ne!(a, cmd);
    }

    proptest! {
        #[test]
        fn halves_compose_to_whole(
            x in -5.0..5.0f64, y in -5.0..5.0f64, th in -3.1..3.1f64,
            v in -0.5..0.5f64, w in -2.0..2.0f64, t in 0.01..0.5f64,
        ) {
            let start = Pose::new(x, y, th);
            let cmd = VelocityCommand::new(v, w);
            let whole = unicycle_step(&start, &cmd, t).unwrap();
            let half = unicycle_step(&start, &cmd, t / 2.0).unwrap();
            let twice = unicycle_step(&half, &cmd, t / 2.0).unwrap();
            prop_assert!((whole.x - twice.x).abs() < 1e-12);
            prop_assert!((whole.y - twice.y).abs() < 1e-12);
            prop_assert!(crate::geometry::wrap(whole.theta - twice.theta).abs() < 1e-12);
            prop_assert!(whole.theta > -std::f64::consts::PI && whole.theta <= std::f64::consts::PI);
        }
    }
}
