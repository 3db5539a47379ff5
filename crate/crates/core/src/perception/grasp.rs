use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::detect::{median, Detection};
use super::scene::RenderedImage;
use super::yaw::{crop_features, YawEstimator};
use super::PerceptionError;
use crate::{CameraModel, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspEstimate {
    /// Grasp position in the camera frame, m.
    pub position: Vector3<f64>,
    /// Grasp yaw relative to the current end-effector, rad.
    pub yaw: f64,
    pub confidence: f64,
}

impl GraspEstimate {
    /// Grasp pose in the base frame, given the end-effector pose the image
    /// was taken from.
    pub fn to_base(&self, cam: &CameraModel, ee_pose: &Pose) -> Pose {
        let p = cam.camera_pose(ee_pose).transform_point(&self.position);
        let rot = ee_pose.rotation * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw);
        Pose::new(rot, p)
    }
}

/// Back-projects the detection center at the target's median depth and
/// predicts the yaw from the crop.
pub fn estimate_grasp_pose(
    det: &Detection,
    img: &RenderedImage,
    cam: &CameraModel,
    estimator: &YawEstimator,
) -> Result<GraspEstimate, PerceptionError> {
    let bbox = det.bbox.ok_or(PerceptionError::NoDetection)?;
    let depth = match det.depth {
        Some(d) => d,
        None => box_depth(img, &bbox).ok_or(PerceptionError::NoDetection)?,
    };
    let position = cam
        .pixel_to_point(&bbox.center(), depth)
        .map_err(|_| PerceptionError::NoDetection)?;
    let pred = estimator.predict(&crop_features(img, &bbox));
    Ok(GraspEstimate {
        position,
        yaw: pred.yaw,
        confidence: det.score * pred.agreement,
    })
}

fn box_depth(img: &RenderedImage, bbox: &crate::PixelBox) -> Option<f64> {
    let depth = img.depth.as_ref()?;
    let mut v = Vec::new();
    for y in bbox.v1.max(0.0) as u32..(bbox.v2 as u32).min(img.height) {
        for x in bbox.u1.max(0.0) as u32..(bbox.u2 as u32).min(img.width) {
            v.push(depth[(y * img.width + x) as usize]);
        }
    }
    median(&mut v)
}
