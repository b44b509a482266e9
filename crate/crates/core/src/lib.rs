//! Leader-follower rigid formation navigation over a lossy, synchronized
//! command cycle.
//!
//! A master robot runs a preplanned command schedule, measures each slave's
//! pose relative to itself at the start of every control cycle, and sends
//! each slave a velocity command. Commands switch in for every robot at the
//! same instant inside the cycle; a command that misses that deadline is
//! dropped and the slave keeps its previous one.

pub mod control;
pub mod error;
pub mod formation;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod netproto;
pub mod scenario;

pub use error::{Result, SimError};
