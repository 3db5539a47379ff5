//! Rigid-body pose algebra and pinhole camera geometry.
//!
//! Everything here is generic over [`Real`](crate::scalar::Real) and free of
//! side effects.

mod camera;
mod pose;

pub use camera::{
    grasp_square_to_bbox, CameraModel, GraspLabel, PixelBox, SquareProjection, MIN_DEPTH,
};
pub use pose::{relative_pose, wrap_angle, yaw_of_grasp, yaw_of_grasp_with_tolerance, Pose};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point depth {depth} is not in front of the camera")]
    NonPositiveDepth { depth: f64 },
    #[error("rotation has an off-axis component of {off_axis} rad")]
    NotYawOnly { off_axis: f64 },
    #[error("degenerate pixel box")]
    DegenerateBox,
    #[error("camera intrinsics out of range")]
    InvalidCamera,
}

/// Default ratio between the grasp square side and the object width.
pub const SQUARE_MARGIN: f64 = 1.2;
