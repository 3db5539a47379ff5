use std::sync::Arc;

use lfd_core::mechanism::{
    load_fixture, EeCommand, Episode, MechanismModel, SimParams, FIXTURE_IDS,
};
use lfd_core::Pose;
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

fn fixture() -> impl Strategy<Value = MechanismModel> {
    (0..FIXTURE_IDS.len()).prop_map(|i| load_fixture(FIXTURE_IDS[i]).unwrap())
}

fn command() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-0.08..0.08f64).prop_map(Vector3::from)
}

fn forbidden(model: &MechanismModel, q: &[f64]) -> bool {
    model
        .gates
        .iter()
        .any(|g| g.forbids(q[g.gated_joint], q[g.enabling_joint]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_pushes_respect_ranges_and_gates(
        model in fixture(),
        cmds in prop::collection::vec((command(), 1usize..30), 1..12),
    ) {
        let mut ep = Episode::new(Arc::new(model.clone()), SimParams::default()).unwrap();
        for (v, reps) in cmds {
            for _ in 0..reps {
                ep.step(&EeCommand::compliant(v), 0.01).unwrap();
                let q = &ep.state.q;
                for (j, &qi) in model.joints.iter().zip(q) {
                    prop_assert!(qi >= j.range[0] - 1e-9 && qi <= j.range[1] + 1e-9);
                }
                prop_assert!(!forbidden(&model, q), "q {q:?} in a forbidden region");
                let fk = model.forward_kinematics(q).unwrap();
                prop_assert!((fk.translation - ep.state.ee_pose.translation).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(model in fixture(), u in prop::collection::vec(0.05..0.95f64, 3)) {
        let q: Vec<f64> = model.joints.iter().zip(&u).map(|(j, t)| j.range[0] + t * (j.range[1] - j.range[0])).collect();
        let k = model.kinematics(&q).unwrap();
        let jac = k.jacobian(&model.joints);
        let h = 1e-6;
        for i in 0..q.len() {
            let mut qp = q.clone();
            qp[i] += h;
            let dp = (model.forward_kinematics(&qp).unwrap().translation - k.handle.translation) / h;
            let col = jac.fixed_view::<3, 1>(0, i).into_owned();
            prop_assert!((dp - col).norm() < 1e-4, "joint {i}: {dp:?} vs {col:?}");
        }
        let zero = DVector::zeros(q.len());
        prop_assert_eq!((&jac * zero).norm(), 0.0);
    }

    #[test]
    fn placement_moves_the_handle_rigidly(
        model in fixture(),
        t in prop::array::uniform3(-0.1..0.1f64),
        yaw in -1.0..1.0f64,
    ) {
        let offset = Pose::from_yaw(yaw).with_translation(Vector3::from(t));
        let placed = model.placed(&offset);
        let q = model.initial_q();
        let a = offset.compose(&model.forward_kinematics(&q).unwrap());
        let b = placed.forward_kinematics(&q).unwrap();
        let (dt, dr) = a.distance_to(&b);
        prop_assert!(dt < 1e-12 && dr < 1e-12);
    }
}

#[test]
fn bundled_fixtures_validate_and_start_closed() {
    for id in FIXTURE_IDS {
        let m = load_fixture(id).unwrap();
        m.validate().unwrap();
        assert!(!m.goal_reached(&m.initial_q()), "{id}");
        assert!(!m.gates.is_empty(), "{id}");
    }
}

#[test]
fn snapshot_restore_is_exact() {
    let model = Arc::new(load_fixture("lock2").unwrap());
    let mut ep = Episode::new(model, SimParams::default()).unwrap();
    for _ in 0..20 {
        ep.step(&EeCommand::compliant(Vector3::new(0.03, 0.0, 0.0)), 0.01)
            .unwrap();
    }
    let snap = ep.snapshot();
    let before = ep.state.clone();
    for _ in 0..50 {
        ep.step(&EeCommand::compliant(Vector3::new(-0.05, 0.02, 0.04)), 0.01)
            .unwrap();
    }
    ep.restore(snap);
    assert_eq!(ep.state, before);
}
