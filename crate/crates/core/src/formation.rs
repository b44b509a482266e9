//! Rigid formation shapes and formation error in the master's body frame.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{wrap, Pose};

/// Desired relative pose of each slave in the master's body frame.
///
/// Index 0 holds slave 1; the master itself is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    desired: Vec<Pose>,
}

impl FormationSpec {
    pub fn new(desired: Vec<Pose>) -> Result<Self> {
        if desired.is_empty() {
            return Err(SimError::InvalidConfig(
                "formation needs at least one slave".into(),
            ));
        }
        if desired.iter().any(|p| !p.is_finite()) {
            return Err(SimError::InvalidConfig(
                "formation poses must be finite".into(),
            ));
        }
        Ok(Self { desired })
    }

    pub fn desired(&self) -> &[Pose] {
        &self.desired
    }

    pub fn n_slaves(&self) -> usize {
        self.desired.len()
    }
}

/// Square with the master on one corner, master-forward = +x, master-left = +y.
///
/// Slaves 1, 2, 3 sit ahead, to the left, and diagonally ahead-left.
pub fn square_formation(side: f64) -> Result<FormationSpec> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(SimError::NonPositive {
            name: "side",
            value: side,
        });
    }
    FormationSpec::new(vec![
        Pose::new(side, 0.0, 0.0),
        Pose::new(0.0, side, 0.0),
        Pose::new(side, side, 0.0),
    ])
}

/// Relative position and heading error of one slave.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorVec {
    pub ex: f64,
    pub ey: f64,
    pub etheta: f64,
}

impl ErrorVec {
    pub const ZERO: ErrorVec = ErrorVec {
        ex: 0.0,
        ey: 0.0,
        etheta: 0.0,
    };

    pub fn new(ex: f64, ey: f64, etheta: f64) -> Self {
        Self {
            ex,
            ey,
            etheta: wrap(etheta),
        }
    }

    pub fn position_norm(&self) -> f64 {
        self.ex.hypot(self.ey)
    }

    pub fn heading_deg(&self) -> f64 {
        self.etheta.to_degrees()
    }

    /// Actual relative pose implied by this error around `desired`.
    pub fn apply_to(&self, desired: &Pose) -> Pose {
        Pose::new(
            desired.x + self.ex,
            desired.y + self.ey,
            desired.theta + self.etheta,
        )
    }
}

/// Diagonal weights on (ex, ey, eθ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct WeightMatrix {
    w: [f64; 3],
}

impl WeightMatrix {
    pub const IDENTITY: WeightMatrix = WeightMatrix { w: [1.0, 1.0, 1.0] };

    pub fn diag(wx: f64, wy: f64, wtheta: f64) -> Result<Self> {
        let w = [wx, wy, wtheta];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().all(|v| *v == 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "weights must be non-negative with at least one positive entry, got {w:?}"
            )));
        }
        Ok(Self { w })
    }

    pub fn entries(&self) -> [f64; 3] {
        self.w
    }
}

impl TryFrom<[f64; 3]> for WeightMatrix {
    type Error = SimError;

    fn try_from([a, b, c]: [f64; 3]) -> Result<Self> {
        Self::diag(a, b, c)
    }
}

impl From<WeightMatrix> for [f64; 3] {
    fn from(w: WeightMatrix) -> Self {
        w.w
    }
}

impl Default for WeightMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

pub fn formation_error(master: &Pose, slave: &Pose, desired: &Pose) -> ErrorVec {
    let r = master.relative(slave);
    ErrorVec::new(r.x - desired.x, r.y - desired.y, r.theta - desired.theta)
}

/// Squared W-norm; the angular term is in radians.
pub fn weighted_error_norm(e: &ErrorVec, w: &WeightMatrix) -> f64 {
    let [a, b, c] = w.w;
    a * e.ex * e.ex + b * e.ey * e.ey + c * e.etheta * e.etheta
}
