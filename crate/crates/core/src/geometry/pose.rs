use std::ops::Mul;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::scalar::Real;

/// Rigid transform: rotation as a unit quaternion, translation in meters.
///
/// `a * b` composes transforms so that `(a * b).transform_point(p) ==
/// a.transform_point(b.transform_point(p))`. The quaternion is renormalized
/// after every composition and inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "PoseRepr<T>",
    from = "PoseRepr<T>",
    bound(
        serialize = "T: Real + Serialize",
        deserialize = "T: Real + Deserialize<'de>"
    )
)]
pub struct Pose<T: Real> {
    pub rotation: UnitQuaternion<T>,
    pub translation: Vector3<T>,
}

/// Wire form: `{"translation": [x, y, z], "rotation": [qx, qy, qz, qw]}`.
#[derive(Serialize, Deserialize)]
struct PoseRepr<T> {
    translation: [T; 3],
    rotation: [T; 4],
}

impl<T: Real> From<Pose<T>> for PoseRepr<T> {
    fn from(p: Pose<T>) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr {
            translation: [p.translation.x, p.translation.y, p.translation.z],
            rotation: [q.i, q.j, q.k, q.w],
        }
    }
}

impl<T: Real> From<PoseRepr<T>> for Pose<T> {
    fn from(r: PoseRepr<T>) -> Self {
        let [x, y, z, w] = r.rotation;
        Pose {
            rotation: UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)),
            translation: Vector3::new(r.translation[0], r.translation[1], r.translation[2]),
        }
    }
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(x: T, y: T, z: T) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    /// Rotation by `angle` about `axis` (normalized here), no translation.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle),
            Vector3::zeros(),
        )
    }

    pub fn from_yaw(yaw: T) -> Self {
        Self::from_axis_angle(&Vector3::z(), yaw)
    }

    pub fn with_translation(mut self, t: Vector3<T>) -> Self {
        self.translation = t;
        self
    }

    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        let rotation = renormalize(self.rotation * other.rotation);
        let translation = self.rotation * other.translation + self.translation;
        Pose::new(rotation, translation)
    }

    pub fn inverse(&self) -> Pose<T> {
        let rotation = renormalize(self.rotation.inverse());
        let translation = -(rotation * self.translation);
        Pose::new(rotation, translation)
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn rotate(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    /// Rotation angle in `[0, pi]`.
    pub fn rotation_angle(&self) -> T {
        self.rotation.angle()
    }

    /// Rotation as a scaled axis (axis * angle), angle in `[0, pi]`.
    pub fn rotation_vector(&self) -> Vector3<T> {
        self.rotation.scaled_axis()
    }

    /// Translation and scaled-axis rotation stacked as `[v; w]`.
    ///
    /// This is the decoupled (translation, rotation) error used by position
    /// based servoing, not the screw logarithm.
    pub fn log(&self) -> Vector6<T> {
        let w = self.rotation_vector();
        Vector6::new(
            self.translation.x,
            self.translation.y,
            self.translation.z,
            w.x,
            w.y,
            w.z,
        )
    }

    /// Applies a base-frame twist `[v; w]` for `dt` seconds: the translation
    /// moves by `v * dt` and the orientation is pre-multiplied by `exp(w * dt)`.
    pub fn integrate(&self, twist: &Vector6<T>, dt: T) -> Pose<T> {
        let v = Vector3::new(twist[0], twist[1], twist[2]) * dt;
        let w = Vector3::new(twist[3], twist[4], twist[5]) * dt;
        let dq = UnitQuaternion::from_scaled_axis(w);
        Pose::new(renormalize(dq * self.rotation), self.translation + v)
    }

    /// Angle of the rotation about z, assuming the rotation is (nearly) a pure
    /// z rotation. Range `(-pi, pi]`.
    pub fn yaw(&self) -> T {
        let q = self.rotation.quaternion();
        let two = T::lit(2.0);
        let yaw = (two * (q.w * q.k + q.i * q.j)).atan2(T::one() - two * (q.j * q.j + q.k * q.k));
        wrap_angle(yaw)
    }

    /// Translation distance and rotation angle to `other`.
    pub fn distance_to(&self, other: &Pose<T>) -> (T, T) {
        let rel = relative_pose(self, other);
        (rel.translation.norm(), rel.rotation_angle())
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        let q = self.rotation.quaternion();
        let c = |x: T| U::lit(x.to_f64_lossy());
        Pose::new(
            UnitQuaternion::new_normalize(Quaternion::new(c(q.w), c(q.i), c(q.j), c(q.k))),
            Vector3::new(
                c(self.translation.x),
                c(self.translation.y),
                c(self.translation.z),
            ),
        )
    }
}

impl<T: Real> Mul for Pose<T> {
    type Output = Pose<T>;
    fn mul(self, rhs: Pose<T>) -> Pose<T> {
        self.compose(&rhs)
    }
}

impl<'a, T: Real> Mul<&'a Pose<T>> for &'a Pose<T> {
    type Output = Pose<T>;
    fn mul(self, rhs: &Pose<T>) -> Pose<T> {
        self.compose(rhs)
    }
}

fn renormalize<T: Real>(q: UnitQuaternion<T>) -> UnitQuaternion<T> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut r = a % two_pi;
    if r > T::pi() {
        r -= two_pi;
    } else if r <= -T::pi() {
        r += two_pi;
    }
    r
}

/// Pose of `b` expressed in the frame of `a`: `a^-1 * b`.
pub fn relative_pose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    a.inverse().compose(b)
}

/// Yaw of a relative grasp pose whose rotation must be a pure z rotation.
///
/// Fails with [`GeometryError::NotYawOnly`] when the rotation axis tilts away
/// from z by more than `1e-3` rad of rotation.
pub fn yaw_of_grasp<T: Real>(rel: &Pose<T>) -> Result<T, GeometryError> {
    yaw_of_grasp_with_tolerance(rel, T::lit(1e-3))
}

pub fn yaw_of_grasp_with_tolerance<T: Real>(rel: &Pose<T>, tol: T) -> Result<T, GeometryError> {
    let yaw = rel.yaw();
    // Whatever is left after removing the yaw is the off-axis part.
    let residual = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -yaw) * rel.rotation;
    let off_axis = residual.angle();
    if off_axis > tol {
        return Err(GeometryError::NotYawOnly {
            off_axis: off_axis.to_f64_lossy(),
        });
    }
    Ok(yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn self_relative_is_identity() {
        let p = Pose::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.7)
            .with_translation(Vector3::new(0.3, -0.2, 1.0));
        let r = relative_pose(&p, &p);
        assert!(r.translation.norm() < 1e-12);
        assert!(r.rotation_angle() < 1e-9);
    }

    #[test]
    fn relative_of_pure_translation() {
        let r = relative_pose(&Pose::identity(), &Pose::from_translation(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(r.translation, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn relative_pose_with_rotated_reference() {
        // R_z(90)^T * (1,0,0) = (0,-1,0)
        let a = Pose::from_yaw(FRAC_PI_2);
        let b = Pose::from_translation(1.0, 0.0, 0.0);
        let r = relative_pose(&a, &b);
        assert_abs_diff_eq!(r.translation, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(a.compose(&r).translation, b.translation, epsilon = 1e-12);
    }

    #[test]
    fn yaw_extraction() {
        assert_eq!(yaw_of_grasp(&Pose::<f64>::identity()).unwrap(), 0.0);
        assert_abs_diff_eq!(
            yaw_of_grasp(&Pose::from_yaw(FRAC_PI_2)).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            yaw_of_grasp(&Pose::from_yaw(PI)).unwrap(),
            PI,
            epsilon = 1e-12
        );
        let tilted = Pose::from_axis_angle(&Vector3::x(), 10f64.to_radians());
        assert!(matches!(
            yaw_of_grasp(&tilted),
            Err(GeometryError::NotYawOnly { .. })
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.5), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn serde_wire_form() {
        let p = Pose::from_translation(1.0, 2.0, 3.0);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"translation":[1.0,2.0,3.0],"rotation":[0.0,0.0,0.0,1.0]}"#
        );
        let back: Pose<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn integrate_twist() {
        let p = Pose::<f64>::identity();
        let t = Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 1.0);
        let q = p.integrate(&t, 0.5);
        assert_abs_diff_eq!(q.translation.x, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(q.yaw(), 0.5, epsilon = 1e-12);
    }
}
