//! Quasi-static simulation of articulated mechanisms.
//!
//! A mechanism is a serial chain of prismatic/revolute joints with limits and
//! narrow-passage gates. The end-effector is rigidly attached to the handle;
//! commanded velocities are projected onto what the kinematics admit and the
//! unrealized part shows up as a reaction wrench.

mod contact;
mod fixtures;
mod model;
mod sim;

pub use contact::{
    detect_contact_change, ContactChange, ContactDebouncer, ContactEvent, ContactReport,
    BLOCKED_AXES, DEFAULT_DEBOUNCE,
};
pub use fixtures::{fixture_document, load_fixture, FIXTURE_IDS};
pub use model::{
    load_mechanism, Appearance, GateSpec, GoalSpec, JointKind, JointSpec, Kinematics,
    MechanismModel,
};
pub use sim::{step_constrained, EeCommand, Episode, MechanismState, SimParams};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("mechanism document does not match the schema: {0}")]
    Schema(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("joint {joint} coordinate {value} outside {range:?}")]
    OutOfRange {
        joint: usize,
        value: f64,
        range: [f64; 2],
    },
    #[error("expected {expected} joint coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("end-effector is not attached to the handle")]
    NotAttached,
    #[error("time step must be positive, got {0}")]
    InvalidTimestep(f64),
    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),
}
