use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct ServoGoal<T: Real> {
    pub grasp_pose: Pose<T>,
    /// Proportional gain, 1/s.
    pub gain: T,
    pub position_tolerance: T,
    pub angle_tolerance: T,
    /// External force magnitude that counts as a collision, N.
    pub collision_threshold: T,
}

impl<T: Real> ServoGoal<T> {
    pub fn new(grasp_pose: Pose<T>) -> Self {
        Self {
            grasp_pose,
            gain: T::one(),
            position_tolerance: T::lit(0.002),
            angle_tolerance: T::lit(1f64.to_radians()),
            collision_threshold: T::lit(10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServoStatus {
    Running,
    Reached,
    Collided,
}

/// Position-based visual servoing law.
///
/// Returns a base-frame twist `[v; w]` with `v = gain * (t_goal - t)` and
/// `w = gain * log(R_goal R^T)`, so that integrating it with
/// [`Pose::integrate`] shrinks both errors by `(1 - gain * dt)` per step.
/// `external_force` is the magnitude of unexpected contact force sensed at
/// the end-effector.
pub fn pbvs_step<T: Real>(
    goal: &ServoGoal<T>,
    current: &Pose<T>,
    external_force: T,
) -> (Vector6<T>, ServoStatus) {
    let dt = goal.grasp_pose.translation - current.translation;
    let dr = (goal.grasp_pose.rotation * current.rotation.inverse()).scaled_axis();
    if dt.norm() <= goal.position_tolerance && dr.norm() <= goal.angle_tolerance {
        return (Vector6::zeros(), ServoStatus::Reached);
    }
    if external_force > goal.collision_threshold {
        return (Vector6::zeros(), ServoStatus::Collided);
    }
    let v: Vector3<T> = dt * goal.gain;
    let w: Vector3<T> = dr * goal.gain;
    (
        Vector6::new(v.x, v.y, v.z, w.x, w.y, w.z),
        ServoStatus::Running,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn at_goal_is_reached() {
        let g = ServoGoal::new(Pose::<f64>::from_translation(0.1, 0.2, 0.3));
        let (tw, st) = pbvs_step(&g, &g.grasp_pose, 0.0);
        assert_eq!(st, ServoStatus::Reached);
        assert_eq!(tw, Vector6::zeros());
    }

    #[test]
    fn proportional_translation() {
        let g = ServoGoal::new(Pose::<f64>::from_translation(0.1, 0.0, 0.0));
        let (tw, st) = pbvs_step(&g, &Pose::identity(), 0.0);
        assert_eq!(st, ServoStatus::Running);
        assert_abs_diff_eq!(
            tw,
            Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn collision_stops() {
        let g = ServoGoal::new(Pose::<f64>::from_translation(0.1, 0.0, 0.0));
        let (tw, st) = pbvs_step(&g, &Pose::identity(), 12.0);
        assert_eq!(st, ServoStatus::Collided);
        assert_eq!(tw, Vector6::zeros());
    }

    #[test]
    fn works_in_f32() {
        let g = ServoGoal::new(Pose::<f32>::from_yaw(0.5));
        let (tw, _) = pbvs_step(&g, &Pose::identity(), 0.0);
        assert!((tw[5] - 0.5).abs() < 1e-6);
    }
}
