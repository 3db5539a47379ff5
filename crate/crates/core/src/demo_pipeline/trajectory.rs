use nalgebra::{Vector3, Vector6};
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::DemoError;
use crate::mechanism::MechanismModel;
use crate::Pose;

/// Gripper opening at or below which the gripper counts as closed, m.
pub const GRIPPER_CLOSED: f64 = 0.005;
pub const GRIPPER_OPEN: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoSource {
    HumanUi,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSample {
    pub t: f64,
    pub ee_pose: Pose,
    /// Sensed wrench `[f; tau]` in the base frame.
    #[serde(default = "Vector6::zeros")]
    pub wrench: Vector6<f64>,
    /// Gripper opening, m.
    #[serde(default)]
    pub gripper: f64,
}

/// A recorded demonstration: the approach while the gripper is open, then
/// the manipulation once it closes on the handle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTrajectory {
    pub source: DemoSource,
    pub samples: Vec<DemoSample>,
}

impl DemoTrajectory {
    pub fn new(source: DemoSource, samples: Vec<DemoSample>) -> Result<Self, DemoError> {
        let traj = Self { source, samples };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<(), DemoError> {
        if self.samples.len() < 2 {
            return Err(DemoError::InvalidTrajectory("fewer than 2 samples".into()));
        }
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(DemoError::InvalidTrajectory(format!(
                    "timestamps not strictly increasing at t = {}",
                    w[1].t
                )));
            }
        }
        if self
            .samples
            .iter()
            .any(|s| !s.t.is_finite() || !s.ee_pose.translation.iter().all(|x| x.is_finite()))
        {
            return Err(DemoError::InvalidTrajectory("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn from_json(doc: &str) -> Result<Self, DemoError> {
        let traj: Self =
            serde_json::from_str(doc).map_err(|e| DemoError::InvalidTrajectory(e.to_string()))?;
        traj.validate()?;
        Ok(traj)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    /// Index of the first closed-gripper sample, if the gripper closes.
    pub fn grasp_index(&self) -> Option<usize> {
        let first_open = self
            .samples
            .iter()
            .position(|s| s.gripper > GRIPPER_CLOSED)?;
        self.samples[first_open..]
            .iter()
            .position(|s| s.gripper <= GRIPPER_CLOSED)
            .map(|k| k + first_open)
    }

    /// Samples up to and including the grasp. Without a closing event the
    /// whole trajectory is the approach.
    pub fn approach(&self) -> &[DemoSample] {
        match self.grasp_index() {
            Some(g) => &self.samples[..=g],
            None => &self.samples,
        }
    }

    /// Samples from the grasp on. Without a closing event the whole
    /// trajectory is treated as manipulation.
    pub fn manipulation(&self) -> &[DemoSample] {
        match self.grasp_index() {
            Some(g) => &self.samples[g..],
            None => &self.samples,
        }
    }

    /// The last approach sample's end-effector pose.
    pub fn grasp_pose(&self) -> Pose {
        self.approach().last().expect("validated").ee_pose
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.ee_pose.translation).collect()
    }
}

/// How the scripted demonstrator's wrench channel is synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrenchNoise {
    /// Magnitude of the intended contact force, N.
    pub force: f64,
    /// Angle between the intended and the demonstrated force direction, rad.
    pub angular_error: f64,
    /// Probability that a leg carries no deliberate contact force.
    pub drop_probability: f64,
    /// Per-sample, per-axis force noise, N.
    pub sample_sigma: f64,
}

impl Default for WrenchNoise {
    fn default() -> Self {
        Self {
            force: 5.0,
            angular_error: 60f64.to_radians(),
            drop_probability: 0.5,
            sample_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedDemoParams {
    /// Height of the approach start above the grasp pose, m.
    pub approach_height: f64,
    pub approach_speed: f64,
    pub manipulation_speed: f64,
    pub dt: f64,
}

impl Default for ScriptedDemoParams {
    fn default() -> Self {
        Self {
            approach_height: 0.25,
            approach_speed: 0.1,
            manipulation_speed: 0.03,
            dt: 0.02,
        }
    }
}

/// One straight joint-space move of the scripted demonstrator.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoLeg {
    pub joint: usize,
    pub target: f64,
    /// Direction the demonstrator pushes along while moving, unit or zero.
    pub contact: Vector3<f64>,
}

/// Joint-space legs that open `model`: for every gate, move the enabling
/// joint into its interval and then the gated joint through the band; then
/// bring remaining goal joints into their intervals.
pub fn scripted_legs(model: &MechanismModel) -> Result<Vec<DemoLeg>, DemoError> {
    let mut q = model.initial_q();
    let mut legs: Vec<(usize, f64)> = Vec::new();
    let goal_target = |j: usize| {
        model
            .goal
            .iter()
            .find(|g| g.joint == j)
            .map(|g| 0.5 * (g.interval[0] + g.interval[1]))
    };
    for gate in &model.gates {
        let e = gate.enabling_joint;
        let target = 0.5 * (gate.enabling[0] + gate.enabling[1]);
        if (q[e] - target).abs() > 1e-9 {
            legs.push((e, target));
            q[e] = target;
        }
        let g = gate.gated_joint;
        let range = model.joints[g].range;
        let target = goal_target(g).unwrap_or(if q[g] <= gate.blocking[0] {
            range[1]
        } else {
            range[0]
        });
        legs.push((g, target));
        q[g] = target;
    }
    for goal in &model.goal {
        if q[goal.joint] < goal.interval[0] || q[goal.joint] > goal.interval[1] {
            let target = 0.5 * (goal.interval[0] + goal.interval[1]);
            legs.push((goal.joint, target));
            q[goal.joint] = target;
        }
    }
    if legs.is_empty() {
        return Err(DemoError::DegenerateTrajectory);
    }

    // Leg directions in task space, for the synthesized contact intent.
    let mut dirs = Vec::with_capacity(legs.len());
    let mut q = model.initial_q();
    for &(j, target) in &legs {
        let a = model.forward_kinematics(&q)?.translation;
        q[j] = target;
        let b = model.forward_kinematics(&q)?.translation;
        dirs.push((b - a).try_normalize(1e-12).unwrap_or_else(Vector3::zeros));
    }
    let mut out = Vec::with_capacity(legs.len());
    for (k, &(joint, target)) in legs.iter().enumerate() {
        let mut contact = Vector3::zeros();
        for gate in &model.gates {
            if joint == gate.enabling_joint {
                // Press toward the passage while lining up with it.
                if let Some(n) = legs[k + 1..].iter().position(|l| l.0 == gate.gated_joint) {
                    contact = dirs[k + 1 + n];
                }
            } else if joint == gate.gated_joint {
                // Keep the enabling joint seated in its slot.
                if let Some(p) = legs[..k].iter().rposition(|l| l.0 == gate.enabling_joint) {
                    contact = dirs[p];
                }
            }
        }
        out.push(DemoLeg {
            joint,
            target,
            contact,
        });
    }
    Ok(out)
}

/// A scripted demonstration of grasping and opening `model`, with the
/// wrench channel left at zero.
pub fn scripted_demo(
    model: &MechanismModel,
    params: &ScriptedDemoParams,
) -> Result<DemoTrajectory, DemoError> {
    let legs = scripted_legs(model)?;
    let grasp = model.forward_kinematics(&model.initial_q())?;
    let mut samples = Vec::new();
    let mut t = 0.0;

    let start = grasp.translation + Vector3::new(0.0, 0.0, params.approach_height);
    let n = (params.approach_height / (params.approach_speed * params.dt))
        .ceil()
        .max(1.0) as usize;
    for k in 0..=n {
        let s = k as f64 / n as f64;
        samples.push(DemoSample {
            t,
            ee_pose: grasp.with_translation(start.lerp(&grasp.translation, s)),
            wrench: Vector6::zeros(),
            gripper: GRIPPER_OPEN,
        });
        t += params.dt;
    }
    samples.push(DemoSample {
        t,
        ee_pose: grasp,
        wrench: Vector6::zeros(),
        gripper: 0.0,
    });
    t += params.dt;

    let mut q = model.initial_q();
    for leg in &legs {
        let q0 = q[leg.joint];
        let mut probe = q.clone();
        let mut length = 0.0;
        let mut prev = model.forward_kinematics(&probe)?.translation;
        for k in 1..=20 {
            probe[leg.joint] = q0 + (leg.target - q0) * k as f64 / 20.0;
            let p = model.forward_kinematics(&probe)?.translation;
            length += (p - prev).norm();
            prev = p;
        }
        let n = (length / (params.manipulation_speed * params.dt))
            .ceil()
            .max(1.0) as usize;
        for k in 1..=n {
            q[leg.joint] = q0 + (leg.target - q0) * k as f64 / n as f64;
            samples.push(DemoSample {
                t,
                ee_pose: model.forward_kinematics(&q)?,
                wrench: Vector6::zeros(),
                gripper: 0.0,
            });
            t += params.dt;
        }
    }
    DemoTrajectory::new(DemoSource::Scripted, samples)
}

/// Fills the manipulation part of a scripted demonstration's wrench channel
/// the way a human demonstrator would: the intended contact force per leg,
/// tilted by `noise.angular_error` about a random axis or dropped entirely,
/// plus per-sample noise. `leg_spans` gives each leg's sample range.
pub fn synthesize_wrench<R: Rng>(
    traj: &mut DemoTrajectory,
    legs: &[DemoLeg],
    leg_spans: &[(usize, usize)],
    noise: &WrenchNoise,
    rng: &mut R,
) {
    let sample_noise = Normal::new(0.0, noise.sample_sigma.max(0.0)).expect("finite sigma");
    for (leg, &(a, b)) in legs.iter().zip(leg_spans) {
        let intended = if leg.contact.norm() < 0.5 || rng.random::<f64>() < noise.drop_probability {
            Vector3::zeros()
        } else {
            tilt(&leg.contact, noise.angular_error, rng) * noise.force
        };
        let n = traj.samples.len();
        for s in &mut traj.samples[a.min(n)..b.min(n)] {
            let f = intended
                + Vector3::new(
                    sample_noise.sample(rng),
                    sample_noise.sample(rng),
                    sample_noise.sample(rng),
                );
            s.wrench = Vector6::new(f.x, f.y, f.z, 0.0, 0.0, 0.0);
        }
    }
}

/// Sample index ranges `[start, end)` of each leg in a trajectory produced by
/// [`scripted_demo`].
pub fn scripted_leg_spans(
    model: &MechanismModel,
    traj: &DemoTrajectory,
    legs: &[DemoLeg],
) -> Vec<(usize, usize)> {
    let g = traj.grasp_index().unwrap_or(0);
    let mut q = model.initial_q();
    let mut spans = Vec::with_capacity(legs.len());
    let mut cursor = g + 1;
    for leg in legs {
        q[leg.joint] = leg.target;
        let end_pose = model.forward_kinematics(&q).map(|p| p.translation);
        let mut end = cursor;
        if let Ok(end_p) = end_pose {
            while end < traj.samples.len()
                && (traj.samples[end].ee_pose.translation - end_p).norm() > 1e-9
            {
                end += 1;
            }
        }
        let end = (end + 1).min(traj.samples.len());
        spans.push((cursor, end));
        cursor = end;
    }
    spans
}

/// `v` rotated by `angle` about a uniformly random axis perpendicular to it.
pub fn tilt<R: Rng>(v: &Vector3<f64>, angle: f64, rng: &mut R) -> Vector3<f64> {
    let n = v.normalize();
    let axis = loop {
        let r: [f64; 3] = UnitSphere.sample(rng);
        let a = Vector3::from(r);
        let perp = a - n * n.dot(&a);
        if let Some(p) = perp.try_normalize(1e-6) {
            break p;
        }
    };
    let rot =
        nalgebra::UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(axis), angle);
    rot * n
}
