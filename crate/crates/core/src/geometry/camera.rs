use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Pose};
use crate::scalar::Real;

/// Depth below which a point counts as behind (or on) the image plane.
pub const MIN_DEPTH: f64 = 1e-6;

/// Eye-in-hand pinhole camera without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct CameraModel<T: Real> {
    pub fx: T,
    pub fy: T,
    pub u0: T,
    pub v0: T,
    pub width: u32,
    pub height: u32,
    /// End-effector to camera transform.
    pub hand_eye: Pose<T>,
}

impl<T: Real> CameraModel<T> {
    pub fn new(
        fx: T,
        fy: T,
        u0: T,
        v0: T,
        width: u32,
        height: u32,
        hand_eye: Pose<T>,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            fx,
            fy,
            u0,
            v0,
            width,
            height,
            hand_eye,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let w = T::lit(self.width as f64);
        let h = T::lit(self.height as f64);
        let ok = self.fx > T::zero()
            && self.fy > T::zero()
            && self.u0 >= T::zero()
            && self.u0 < w
            && self.v0 >= T::zero()
            && self.v0 < h;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidCamera)
        }
    }

    /// Camera pose in the base frame for a given end-effector pose.
    pub fn camera_pose(&self, ee_pose: &Pose<T>) -> Pose<T> {
        ee_pose.compose(&self.hand_eye)
    }

    pub fn project_point(&self, p_cam: &Vector3<T>) -> Result<Vector2<T>, GeometryError> {
        if p_cam.z <= T::lit(MIN_DEPTH) {
            return Err(GeometryError::NonPositiveDepth {
                depth: p_cam.z.to_f64_lossy(),
            });
        }
        Ok(Vector2::new(
            self.fx * p_cam.x / p_cam.z + self.u0,
            self.fy * p_cam.y / p_cam.z + self.v0,
        ))
    }

    pub fn pixel_to_point(&self, c: &Vector2<T>, depth: T) -> Result<Vector3<T>, GeometryError> {
        if depth <= T::lit(MIN_DEPTH) {
            return Err(GeometryError::NonPositiveDepth {
                depth: depth.to_f64_lossy(),
            });
        }
        Ok(Vector3::new(
            (c.x - self.u0) * depth / self.fx,
            (c.y - self.v0) * depth / self.fy,
            depth,
        ))
    }

    /// Ray direction (unnormalized, z = 1) through a pixel, camera frame.
    pub fn pixel_ray(&self, u: T, v: T) -> Vector3<T> {
        Vector3::new((u - self.u0) / self.fx, (v - self.v0) / self.fy, T::one())
    }

    pub fn contains(&self, b: &PixelBox<T>) -> bool {
        b.u1 >= T::zero()
            && b.v1 >= T::zero()
            && b.u2 <= T::lit(self.width as f64)
            && b.v2 <= T::lit(self.height as f64)
    }
}

/// Axis-aligned pixel rectangle, `(u1, v1)` the min corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox<T> {
    pub u1: T,
    pub v1: T,
    pub u2: T,
    pub v2: T,
}

impl<T: Real> PixelBox<T> {
    pub fn new(u1: T, v1: T, u2: T, v2: T) -> Result<Self, GeometryError> {
        if u1 < u2 && v1 < v2 {
            Ok(Self { u1, v1, u2, v2 })
        } else {
            Err(GeometryError::DegenerateBox)
        }
    }

    /// Axis-aligned hull of a set of points.
    pub fn hull(points: &[Vector2<T>]) -> Result<Self, GeometryError> {
        let mut it = points.iter();
        let first = it.next().ok_or(GeometryError::DegenerateBox)?;
        let (mut u1, mut v1, mut u2, mut v2) = (first.x, first.y, first.x, first.y);
        for p in it {
            u1 = u1.min(p.x);
            v1 = v1.min(p.y);
            u2 = u2.max(p.x);
            v2 = v2.max(p.y);
        }
        Self::new(u1, v1, u2, v2)
    }

    pub fn center(&self) -> Vector2<T> {
        let half = T::lit(0.5);
        Vector2::new((self.u1 + self.u2) * half, (self.v1 + self.v2) * half)
    }

    pub fn width(&self) -> T {
        self.u2 - self.u1
    }

    pub fn height(&self) -> T {
        self.v2 - self.v1
    }
}

/// Training label for one image: where the grasp is and how it is turned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct GraspLabel<T: Real> {
    #[serde(rename = "box")]
    pub bbox: PixelBox<T>,
    /// Yaw of the grasp in the end-effector frame, `(-pi, pi]`.
    pub yaw: T,
    /// Grasp pose relative to the end-effector at capture time.
    pub relative_pose: Pose<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareProjection<T> {
    pub bbox: PixelBox<T>,
    /// Set when the box leaves the image; callers decide whether to drop it.
    pub out_of_view: bool,
}

/// Projects a square of side `side` lying in the grasp frame's x-y plane and
/// returns the axis-aligned hull of its four projected corners.
pub fn grasp_square_to_bbox<T: Real>(
    cam: &CameraModel<T>,
    ee_pose: &Pose<T>,
    grasp_pose: &Pose<T>,
    side: T,
) -> Result<SquareProjection<T>, GeometryError> {
    if side <= T::zero() {
        return Err(GeometryError::DegenerateBox);
    }
    let half = side * T::lit(0.5);
    let cam_from_grasp = cam.camera_pose(ee_pose).inverse().compose(grasp_pose);
    let mut corners = [Vector2::zeros(); 4];
    for (i, (sx, sy)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .into_iter()
        .enumerate()
    {
        let v = Vector3::new(half * T::lit(sx), half * T::lit(sy), T::zero());
        corners[i] = cam.project_point(&cam_from_grasp.transform_point(&v))?;
    }
    let bbox = PixelBox::hull(&corners)?;
    Ok(SquareProjection {
        bbox,
        out_of_view: !cam.contains(&bbox),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cam() -> CameraModel<f64> {
        CameraModel::new(400.0, 400.0, 320.0, 240.0, 640, 480, Pose::identity()).unwrap()
    }

    /// End-effector 0.4 m above the origin, optical axis pointing down.
    fn looking_down(yaw: f64) -> Pose<f64> {
        Pose::from_yaw(yaw)
            .compose(&Pose::from_axis_angle(&Vector3::x(), PI))
            .with_translation(Vector3::new(0.0, 0.0, 0.4))
    }

    #[test]
    fn projection_examples() {
        let c = cam();
        let p = c.project_point(&Vector3::new(0.0, 0.0, 0.5)).unwrap();
        assert_abs_diff_eq!(p, Vector2::new(320.0, 240.0), epsilon = 1e-12);
        let p = c.project_point(&Vector3::new(0.1, 0.0, 0.5)).unwrap();
        assert_abs_diff_eq!(p, Vector2::new(400.0, 240.0), epsilon = 1e-12);
        assert!(matches!(
            c.project_point(&Vector3::new(0.0, 0.0, -0.1)),
            Err(GeometryError::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn back_projection_examples() {
        let c = cam();
        let p = c.pixel_to_point(&Vector2::new(320.0, 240.0), 0.4).unwrap();
        assert_abs_diff_eq!(p, Vector3::new(0.0, 0.0, 0.4), epsilon = 1e-12);
        let p = c.pixel_to_point(&Vector2::new(400.0, 240.0), 0.5).unwrap();
        assert_abs_diff_eq!(p, Vector3::new(0.1, 0.0, 0.5), epsilon = 1e-12);
        assert!(c.pixel_to_point(&Vector2::new(1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn fronto_parallel_square() {
        let sq = grasp_square_to_bbox(&cam(), &looking_down(0.0), &Pose::identity(), 0.04).unwrap();
        assert!(!sq.out_of_view);
        assert_abs_diff_eq!(sq.bbox.width(), 40.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sq.bbox.height(), 40.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sq.bbox.center(), Vector2::new(320.0, 240.0), epsilon = 1e-9);
    }

    #[test]
    fn yawed_camera_square_is_rehulled() {
        let sq =
            grasp_square_to_bbox(&cam(), &looking_down(PI / 4.0), &Pose::identity(), 0.04).unwrap();
        let expected = 40.0 * 2f64.sqrt();
        assert!((sq.bbox.width() - expected).abs() < 1.0);
        assert!((sq.bbox.height() - expected).abs() < 1.0);
    }

    #[test]
    fn zero_side_rejected() {
        assert!(matches!(
            grasp_square_to_bbox(&cam(), &looking_down(0.0), &Pose::identity(), 0.0),
            Err(GeometryError::DegenerateBox)
        ));
    }

    #[test]
    fn square_behind_camera() {
        let ee = looking_down(0.0).with_translation(Vector3::new(0.0, 0.0, -0.4));
        assert!(matches!(
            grasp_square_to_bbox(&cam(), &ee, &Pose::identity(), 0.04),
            Err(GeometryError::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn out_of_view_is_flagged() {
        let ee = looking_down(0.0).with_translation(Vector3::new(0.5, 0.0, 0.4));
        let sq = grasp_square_to_bbox(&cam(), &ee, &Pose::identity(), 0.04).unwrap();
        assert!(sq.out_of_view);
    }

    #[test]
    fn invalid_camera() {
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 10, 10, Pose::<f64>::identity()).is_err());
        assert!(CameraModel::new(1.0, 1.0, 10.0, 1.0, 10, 10, Pose::<f64>::identity()).is_err());
    }
}
