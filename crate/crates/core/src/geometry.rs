//! Planar rigid-body poses.
//!
//! Headings are kept in the half-open interval (−π, π]; every constructor and
//! operation re-normalizes.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Normalizes an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(SimError::NonFiniteAngle(theta));
    }
    Ok(wrap(theta))
}

// Infallible variant for values already known to be finite.
#[inline]
pub(crate) fn wrap(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Position in meters plus heading in radians (SE(2) element).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap(theta),
        }
    }

    /// `self ∘ other`: `other` expressed in `self`'s frame, mapped to the parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        let (s, c) = self.theta.sin_cos();
        Pose::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    /// Pose of `target` expressed in this pose's body frame.
    pub fn relative(&self, target: &Pose) -> Pose {
        let (s, c) = self.theta.sin_cos();
        let dx = target.x - self.x;
        let dy = target.y - self.y;
        Pose::new(c * dx + s * dy, -s * dx + c * dy, target.theta - self.theta)
    }

    pub fn inverse(&self) -> Pose {
        self.relative(&Pose::IDENTITY)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn relative_pose(reference: &Pose, target: &Pose) -> Pose {
    reference.relative(target)
}
