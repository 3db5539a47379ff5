//! Synthetic eye-in-hand views, a hue-blob target detector, a nearest
//! neighbour yaw estimator and the search behavior used when the target is
//! not in view.

mod detect;
mod grasp;
mod scene;
mod search;
mod yaw;

pub use detect::{detect_target, fit_hue_model, hue_distance, Detection, HueModel};
pub use grasp::{estimate_grasp_pose, GraspEstimate};
pub use scene::{
    handle_yaw, render_scene, rgb_to_hsv, Hsv, Primitive, RenderedImage, SceneSpec, FAR_DEPTH,
};
pub use search::{search_behavior, spiral_waypoints, SearchOutcome, SearchParams, N_SCAN};
pub use yaw::{
    crop_features, fit_yaw_estimator, YawEstimator, YawPrediction, CROP_MARGIN, CROP_SIZE,
    NEIGHBORS,
};

use thiserror::Error;

use crate::{CameraModel, Pose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("no target detected")]
    NoDetection,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("search ended without finding the target")]
    SearchExhausted,
    #[error("cannot build scene: {0}")]
    Scene(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("bad file: {0}")]
    Format(String),
}

/// 160x120 camera, 120 px focal length, mounted 0.1 m behind the gripper
/// along its approach axis.
pub fn default_camera() -> CameraModel {
    CameraModel::new(
        120.0,
        120.0,
        80.0,
        60.0,
        160,
        120,
        Pose::from_translation(0.0, 0.0, -0.1),
    )
    .expect("valid camera")
}
