//! From one demonstration to executable controllers and vision datasets:
//! segmentation, force augmentation by hypothesis testing, and funnel view
//! collection.

mod augment;
mod dataset;
mod funnel;
mod segment;
mod trajectory;

pub use augment::{
    augment_contact, demo_force_plan, evaluate_force_hypothesis, hypothesize_forces,
    AugmentOutcome, AugmentParams, AugmentedPlan, ForceCandidate, ForceHypothesisResult,
    Hypothesis, PlanStep, Verdict, DEMO_FORCE_FLOOR, GRAVITY,
};
pub use dataset::{generate_grasp_labels, Dataset, LabeledView};
pub use funnel::{generate_funnel_poses, FunnelPlan};
pub use segment::{moving_average, segment_path, Segment, SegmentationParams};
pub use trajectory::{
    scripted_demo, scripted_leg_spans, scripted_legs, synthesize_wrench, tilt, DemoLeg, DemoSample,
    DemoSource, DemoTrajectory, ScriptedDemoParams, WrenchNoise, GRIPPER_CLOSED, GRIPPER_OPEN,
};

use thiserror::Error;

use crate::control::ControlError;
use crate::mechanism::MechanismError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemoError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("trajectory is too short to segment")]
    DegenerateTrajectory,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("end-effector is not attached to the handle")]
    NotAttached,
    #[error("could not reach the start of segment {segment} after it")]
    TransitFailure { segment: usize },
    #[error("could not return to the evaluation start, residual {residual} m")]
    RestoreFailure { residual: f64 },
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Segments the manipulation part of a demonstration. Sample spans index
/// into [`DemoTrajectory::manipulation`].
pub fn segment_trajectory(
    traj: &DemoTrajectory,
    params: &SegmentationParams,
) -> Result<Vec<Segment>, DemoError> {
    let positions: Vec<_> = traj
        .manipulation()
        .iter()
        .map(|s| s.ee_pose.translation)
        .collect();
    segment_path(&positions, params)
}
