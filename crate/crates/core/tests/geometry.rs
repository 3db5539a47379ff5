use std::f64::consts::PI;

use lfd_core::geometry::{grasp_square_to_bbox, relative_pose, wrap_angle, yaw_of_grasp};
use lfd_core::perception::default_camera;
use lfd_core::Pose;
use nalgebra::{UnitQuaternion, Vector2, Vector3};
use proptest::prelude::*;

fn pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-1.0..1.0f64),
        prop::array::uniform3(-1.0..1.0f64),
        -PI..PI,
    )
        .prop_filter_map("degenerate axis", |(t, a, angle)| {
            let axis = Vector3::from(a);
            (axis.norm() > 1e-3).then(|| {
                Pose::from_axis_angle(&axis.normalize(), angle).with_translation(Vector3::from(t))
            })
        })
}

fn gap(a: &Pose, b: &Pose) -> f64 {
    let (t, r) = a.distance_to(b);
    t.max(r)
}

proptest! {
    #[test]
    fn inverse_cancels(a in pose()) {
        prop_assert!(gap(&a.compose(&a.inverse()), &Pose::identity()) < 1e-9);
        prop_assert!(gap(&a.inverse().compose(&a), &Pose::identity()) < 1e-9);
        prop_assert!(gap(&a.inverse().inverse(), &a) < 1e-9);
    }

    #[test]
    fn compose_is_associative(a in pose(), b in pose(), c in pose()) {
        prop_assert!(gap(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c))) < 1e-9);
    }

    #[test]
    fn relative_pose_recovers_offset(a in pose(), b in pose()) {
        prop_assert!(gap(&relative_pose(&a, &a.compose(&b)), &b) < 1e-9);
    }

    #[test]
    fn point_transform_round_trip(a in pose(), p in prop::array::uniform3(-2.0..2.0f64)) {
        let p = Vector3::from(p);
        prop_assert!((a.inverse_transform_point(&a.transform_point(&p)) - p).norm() < 1e-9);
    }

    #[test]
    fn json_round_trip(a in pose()) {
        let back: Pose = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        prop_assert!(gap(&back, &a) < 1e-9);
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval(a in -50.0..50.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        let turns = (a - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn grasp_yaw_round_trip(ee in pose(), yaw in -3.0..3.0f64) {
        let grasp = ee.compose(&Pose::from_yaw(yaw));
        let got = yaw_of_grasp(&relative_pose(&ee, &grasp)).unwrap();
        prop_assert!(wrap_angle(got - yaw).abs() < 1e-9);
    }

    #[test]
    fn pixel_round_trip(u in 0.0..160.0f64, v in 0.0..120.0f64, depth in 0.05..3.0f64) {
        let cam = default_camera();
        let c = Vector2::new(u, v);
        let p = cam.pixel_to_point(&c, depth).unwrap();
        prop_assert!((p.z - depth).abs() < 1e-12);
        prop_assert!((cam.project_point(&p).unwrap() - c).norm() < 1e-6);
    }

    #[test]
    fn fronto_parallel_square_has_pinhole_size(
        depth in 0.12..0.6f64,
        side in 0.01..0.08f64,
        x in -0.02..0.02f64,
        y in -0.02..0.02f64,
    ) {
        let cam = default_camera();
        let down = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI);
        let ee = Pose::new(down, Vector3::new(0.0, 0.0, depth + cam.hand_eye.translation.z));
        let grasp = Pose::new(down, Vector3::new(x, y, 0.0));
        let sq = grasp_square_to_bbox(&cam, &ee, &grasp, side).unwrap();
        let center = cam
            .project_point(&cam.camera_pose(&ee).inverse_transform_point(&grasp.translation))
            .unwrap();
        prop_assert!((sq.bbox.width() - cam.fx * side / depth).abs() < 1.0);
        prop_assert!((sq.bbox.height() - cam.fy * side / depth).abs() < 1.0);
        prop_assert!((sq.bbox.center() - center).norm() < 1.0);
    }
}

#[test]
fn quarter_turn_grasp_yaw() {
    let ee = Pose::from_translation(0.3, 0.0, 0.4);
    let g = ee.compose(&Pose::from_yaw(PI / 2.0));
    assert!((yaw_of_grasp(&relative_pose(&ee, &g)).unwrap() - PI / 2.0).abs() < 1e-12);
}

#[test]
fn tilted_grasp_has_no_yaw() {
    let ee = Pose::identity();
    let g = Pose::from_axis_angle(&Vector3::x(), 1.0);
    assert!(yaw_of_grasp(&relative_pose(&ee, &g)).is_err());
}
