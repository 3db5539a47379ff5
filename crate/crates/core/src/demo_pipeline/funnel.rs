use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::Pose;

/// Stacked rings of camera viewpoints above a grasp, crossed with yaw offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelPlan {
    /// Ring radii, outermost first, m.
    pub radii: Vec<f64>,
    /// End-effector height above the grasp for each ring, m.
    pub heights: Vec<f64>,
    pub positions_per_ring: usize,
    /// Rotations about the vertical added to every viewpoint, rad.
    pub yaw_offsets: Vec<f64>,
}

impl FunnelPlan {
    /// 5 rings from (0.12 m, 0.35 m) down to (0.02 m, 0.15 m), 25 positions
    /// each, 20 yaw offsets evenly covering [-90°, 90°].
    pub fn default_funnel() -> Self {
        let rings = 5;
        let lerp = |a: f64, b: f64, k: usize| a + (b - a) * k as f64 / (rings - 1) as f64;
        Self {
            radii: (0..rings).map(|k| lerp(0.12, 0.02, k)).collect(),
            heights: (0..rings).map(|k| lerp(0.35, 0.15, k)).collect(),
            positions_per_ring: 25,
            yaw_offsets: (0..20)
                .map(|k| (-90.0 + 180.0 * k as f64 / 19.0).to_radians())
                .collect(),
        }
    }

    /// Views along a straight descent onto the grasp without any yaw change.
    pub fn approach_only(count: usize, top: f64, bottom: f64) -> Self {
        let lerp = |k: usize| {
            if count <= 1 {
                bottom
            } else {
                top + (bottom - top) * k as f64 / (count - 1) as f64
            }
        };
        Self {
            radii: vec![0.0; count],
            heights: (0..count).map(lerp).collect(),
            positions_per_ring: 1,
            yaw_offsets: vec![0.0],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.radii.len() != self.heights.len() {
            return Err("radii and heights differ in length".into());
        }
        if self.radii.iter().any(|r| !(*r >= 0.0)) || self.heights.iter().any(|h| !(*h > 0.0)) {
            return Err("radii must be >= 0 and heights > 0".into());
        }
        if self.positions_per_ring == 0 || self.yaw_offsets.is_empty() {
            return Err("empty ring or yaw set".into());
        }
        Ok(())
    }

    pub fn pose_count(&self) -> usize {
        self.radii.len() * self.positions_per_ring * self.yaw_offsets.len()
    }
}

/// End-effector poses on the funnel around `grasp`. Every pose keeps the
/// grasp's orientation up to a rotation about the vertical, so the camera
/// stays perpendicular to the surface; ring positions are offsets in the
/// horizontal plane.
pub fn generate_funnel_poses(grasp: &Pose, plan: &FunnelPlan) -> Vec<Pose> {
    let mut out = Vec::with_capacity(plan.pose_count());
    for (r, h) in plan.radii.iter().zip(&plan.heights) {
        for k in 0..plan.positions_per_ring {
            let phi = TAU * k as f64 / plan.positions_per_ring as f64;
            let offset = Vector3::new(r * phi.cos(), r * phi.sin(), *h);
            for yaw in &plan.yaw_offsets {
                let rot =
                    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), *yaw) * grasp.rotation;
                out.push(Pose::new(rot, grasp.translation + offset));
            }
        }
    }
    out
}
