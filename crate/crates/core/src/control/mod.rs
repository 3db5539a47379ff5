//! Controller templates: position-based visual servoing for reaching a grasp,
//! adaptive compliant control sequenced by contact events for opening.

mod compliant;
mod pbvs;
mod sequencer;
mod termination;

pub use compliant::{update_motion_estimate, AdaptiveCompliantController, CompliantControllerSpec};
pub use pbvs::{pbvs_step, ServoGoal, ServoStatus};
pub use sequencer::{
    event_ends_phase, run_sequencer, PhaseSpec, PhaseSwitch, SequencerOutcome, SequencerSpec,
    TraceFrame,
};
pub use termination::{
    detect_termination, FailureReason, Termination, TerminationInput, TerminationSpec,
};

use thiserror::Error;

use crate::mechanism::MechanismError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("{0} is not a unit vector")]
    NotUnit(&'static str),
    #[error("gain {0} out of range")]
    InvalidGain(&'static str),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}
