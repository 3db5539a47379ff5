use std::sync::Arc;

use lfd_core::control::{
    pbvs_step, run_sequencer, update_motion_estimate, AdaptiveCompliantController,
    CompliantControllerSpec, PhaseSpec, SequencerSpec, ServoGoal, ServoStatus,
};
use lfd_core::mechanism::{load_fixture, ContactChange, EeCommand, Episode, SimParams};
use lfd_core::Pose;
use nalgebra::Vector3;
use proptest::prelude::*;

fn pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-0.5..0.5f64),
        prop::array::uniform3(-1.0..1.0f64),
        -3.0..3.0f64,
    )
        .prop_filter_map("degenerate axis", |(t, a, angle)| {
            let axis = Vector3::from(a);
            (axis.norm() > 1e-3).then(|| {
                Pose::from_axis_angle(&axis.normalize(), angle).with_translation(Vector3::from(t))
            })
        })
}

fn unit() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-1.0..1.0f64).prop_filter_map("zero", |a| {
        let v = Vector3::from(a);
        (v.norm() > 1e-2).then(|| v.normalize())
    })
}

fn phase(m: [f64; 3], f: [f64; 3], on: Option<ContactChange>) -> PhaseSpec {
    let f = Vector3::from(f);
    PhaseSpec {
        controller: CompliantControllerSpec::new(Vector3::from(m).normalize(), f),
        on_contact: on,
    }
}

proptest! {
    #[test]
    fn pbvs_errors_shrink_every_step(start in pose(), goal in pose(), gain in 0.5..5.0f64) {
        let mut g = ServoGoal::new(goal);
        g.gain = gain;
        let mut cur = start;
        let (mut et, mut er) = cur.distance_to(&goal);
        let mut reached = false;
        for _ in 0..5000 {
            let (tw, st) = pbvs_step(&g, &cur, 0.0);
            if st == ServoStatus::Reached {
                reached = true;
                break;
            }
            cur = cur.integrate(&tw, 0.05);
            let (t, r) = cur.distance_to(&goal);
            prop_assert!(t < et || et == 0.0);
            prop_assert!(r < er || er == 0.0);
            (et, er) = (t, r);
        }
        prop_assert!(reached);
    }

    #[test]
    fn collision_stops_the_servo(start in pose(), goal in pose(), f in 10.5..100.0f64) {
        let g = ServoGoal::new(goal);
        prop_assume!(start.distance_to(&goal).0 > g.position_tolerance);
        let (tw, st) = pbvs_step(&g, &start, f);
        prop_assert_eq!(st, ServoStatus::Collided);
        prop_assert_eq!(tw.norm(), 0.0);
    }

    #[test]
    fn motion_estimate_stays_unit(m in unit(), dx in prop::array::uniform3(-0.01..0.01f64), alpha in 0.0..1.0f64) {
        let next = update_motion_estimate(&m, &Vector3::from(dx), alpha, 1e-6);
        prop_assert!((next.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tiny_displacements_are_ignored(m in unit(), dx in prop::array::uniform3(-1e-7..1e-7f64)) {
        prop_assert_eq!(update_motion_estimate(&m, &Vector3::from(dx), 0.3, 1e-6), m);
    }

    #[test]
    fn force_settles_near_target_against_a_stop(target in 2.0..10.0f64, fixture in 0usize..3) {
        let id = ["lock1", "lock2", "lock3"][fixture];
        let model = Arc::new(load_fixture(id).unwrap());
        let mut ep = Episode::new(model, SimParams::default()).unwrap();
        // +z is blocked at the start.
        let dir = Vector3::z();
        let mut ctrl = AdaptiveCompliantController::new(CompliantControllerSpec::force_only(dir, target)).unwrap();
        let mut f = Vector3::zeros();
        let mut tail = Vec::new();
        for k in 0..500 {
            let cmd = ctrl.command(&f);
            f = ep.step(&EeCommand::compliant(cmd), 0.01).unwrap().force();
            if k >= 400 {
                tail.push(f.dot(&dir));
            }
        }
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        prop_assert!((mean - target).abs() <= 0.1 * target, "mean {mean} target {target}");
    }
}

#[test]
fn motion_estimate_converges_to_observed_direction() {
    let m = Vector3::x();
    let mut est = m;
    for _ in 0..50 {
        est = update_motion_estimate(&est, &Vector3::new(0.7, 0.7, 0.0).scale(1e-3), 0.2, 1e-6);
    }
    assert!((est - Vector3::new(1.0, 1.0, 0.0).normalize()).norm() < 1e-3);
}

#[test]
fn lock1_opens_with_contact_forces_and_not_without() {
    let model = Arc::new(load_fixture("lock1").unwrap());
    let with = SequencerSpec::new(vec![
        phase(
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            Some(ContactChange::Gained),
        ),
        phase(
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            Some(ContactChange::Gained),
        ),
        phase([-0.458, 0.889, 0.0], [0.0, 0.0, 1.0], None),
    ]);
    let mut ep = Episode::new(model.clone(), SimParams::default()).unwrap();
    let out = run_sequencer(&with, &mut ep).unwrap();
    assert!(out.success, "{:?}", out.reason);
    assert_eq!(out.switches.len(), 2);
    assert!(ep.goal_reached());
    assert!(out
        .trace
        .windows(2)
        .all(|w| w[0].phase <= w[1].phase && w[0].t < w[1].t));

    let without = SequencerSpec::new(
        with.phases
            .iter()
            .map(|p| PhaseSpec {
                controller: CompliantControllerSpec::new(p.controller.motion, Vector3::zeros()),
                on_contact: p.on_contact,
            })
            .collect(),
    );
    let mut ep = Episode::new(model, SimParams::default()).unwrap();
    let out = run_sequencer(&without, &mut ep).unwrap();
    assert!(!out.success);
    assert!(!ep.goal_reached());
}
