use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::MechanismError;
use crate::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Prismatic,
    Revolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub kind: JointKind,
    /// Unit axis in the parent link frame.
    pub axis: Vector3<f64>,
    /// Point on the rotation axis, parent link frame. Ignored for prismatic joints.
    #[serde(default = "Vector3::zeros")]
    pub pivot: Vector3<f64>,
    pub range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl JointSpec {
    pub fn prismatic(axis: Vector3<f64>, range: [f64; 2]) -> Self {
        Self {
            kind: JointKind::Prismatic,
            axis,
            pivot: Vector3::zeros(),
            range,
            name: None,
        }
    }

    pub fn revolute(axis: Vector3<f64>, pivot: Vector3<f64>, range: [f64; 2]) -> Self {
        Self {
            kind: JointKind::Revolute,
            axis,
            pivot,
            range,
            name: None,
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.range[0] && q <= self.range[1]
    }

    /// Transform contributed by this joint at coordinate `q`.
    pub fn transform(&self, q: f64) -> Pose {
        match self.kind {
            JointKind::Prismatic => Pose::identity().with_translation(self.axis * q),
            JointKind::Revolute => {
                let rot = Pose::from_axis_angle(&self.axis, q);
                // pivot * R * pivot^-1
                let t = self.pivot - rot.rotate(&self.pivot);
                rot.with_translation(t)
            }
        }
    }
}

/// Narrow passage: the gated joint may only be strictly inside `blocking`
/// while the enabling joint lies in `enabling`.
///
/// The forbidden set is `gated in (a, b)` and `enabling not in [c, d]`, so the
/// same rule confines the enabling joint to the slot once the gated joint is
/// through the entrance. Within `lead_in` of the band edge the entrance is
/// chamfered: moving the enabling joint out of the slot cams the gated joint
/// back to the edge instead of being blocked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub gated_joint: usize,
    pub blocking: [f64; 2],
    pub enabling_joint: usize,
    pub enabling: [f64; 2],
    #[serde(default)]
    pub lead_in: f64,
}

impl GateSpec {
    pub fn in_band(&self, g: f64) -> bool {
        g > self.blocking[0] && g < self.blocking[1]
    }

    pub fn enabled(&self, e: f64) -> bool {
        e >= self.enabling[0] && e <= self.enabling[1]
    }

    /// Whether `(gated, enabling)` lies in the forbidden region.
    pub fn forbids(&self, g: f64, e: f64) -> bool {
        self.in_band(g) && !self.enabled(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub joint: usize,
    pub interval: [f64; 2],
}

/// Visual appearance of the handle target and the mechanism body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    /// Hue of the graspable target in degrees.
    pub target_hue: f64,
    #[serde(default = "default_saturation")]
    pub target_saturation: f64,
    /// Target bar length along the grasp x axis (the object width), meters.
    pub object_width: f64,
    pub body_hue: f64,
    /// Body footprint (x, y) in meters, centered under the handle at q = 0.
    pub body_size: [f64; 2],
}

fn default_saturation() -> f64 {
    0.85
}

impl Default for Appearance {
    fn default() -> Self {
        Self {
            target_hue: 0.0,
            target_saturation: default_saturation(),
            object_width: 0.04,
            body_hue: 215.0,
            body_size: [0.12, 0.08],
        }
    }
}

/// Serial chain of joints ending in a graspable handle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismModel {
    #[serde(default)]
    pub name: String,
    pub base_pose: Pose,
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub gates: Vec<GateSpec>,
    pub handle_offset: Pose,
    pub goal: Vec<GoalSpec>,
    /// Joint coordinates when the episode starts; defaults to the lower limits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_q: Option<Vec<f64>>,
    /// Plane of the 2D sketch view used by the companion UI: "xz" or "xy".
    #[serde(default = "default_sketch_plane")]
    pub sketch_plane: String,
    #[serde(default)]
    pub appearance: Appearance,
}

fn default_sketch_plane() -> String {
    "xz".to_string()
}

/// Handle pose plus per-joint axis data at one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub handle: Pose,
    /// World-frame joint axes.
    pub axes: Vec<Vector3<f64>>,
    /// World-frame pivots (revolute) or frame origins (prismatic).
    pub origins: Vec<Vector3<f64>>,
}

impl Kinematics {
    /// 6 x n geometric Jacobian of the handle, rows `[v; w]`.
    pub fn jacobian(&self, joints: &[JointSpec]) -> DMatrix<f64> {
        let n = joints.len();
        let p = self.handle.translation;
        let mut j = DMatrix::zeros(6, n);
        for (i, spec) in joints.iter().enumerate() {
            let a = self.axes[i];
            let (lin, ang) = match spec.kind {
                JointKind::Prismatic => (a, Vector3::zeros()),
                JointKind::Revolute => (a.cross(&(p - self.origins[i])), a),
            };
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&ang);
        }
        j
    }
}

impl MechanismModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        let bad = |msg: String| Err(MechanismError::InvariantViolation(msg));
        if self.joints.is_empty() {
            return bad("mechanism has no joints".into());
        }
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return bad(format!("joint {i} axis has norm {}", j.axis.norm()));
            }
            if !(j.range[0] < j.range[1]) {
                return bad(format!("joint {i} range {:?} is empty", j.range));
            }
        }
        let n = self.dof();
        for (k, g) in self.gates.iter().enumerate() {
            if g.gated_joint >= n || g.enabling_joint >= n {
                return bad(format!("gate {k} references a missing joint"));
            }
            if g.gated_joint == g.enabling_joint {
                return bad(format!("gate {k} gates a joint on itself"));
            }
            if !(g.blocking[0] < g.blocking[1]) || !(g.enabling[0] < g.enabling[1]) {
                return bad(format!("gate {k} has an empty interval"));
            }
            if g.lead_in < 0.0 {
                return bad(format!("gate {k} has a negative lead-in"));
            }
        }
        for (k, goal) in self.goal.iter().enumerate() {
            if goal.joint >= n || !(goal.interval[0] <= goal.interval[1]) {
                return bad(format!("goal {k} is malformed"));
            }
        }
        if let Some(q) = &self.initial_q {
            if q.len() != n {
                return bad("initial_q has the wrong length".into());
            }
            self.check_range(q)
                .map_err(|_| MechanismError::InvariantViolation("initial_q out of range".into()))?;
            if self
                .gates
                .iter()
                .any(|g| g.forbids(q[g.gated_joint], q[g.enabling_joint]))
            {
                return bad("initial_q lies inside a gate's forbidden region".into());
            }
        }
        Ok(())
    }

    pub fn initial_q(&self) -> Vec<f64> {
        self.initial_q
            .clone()
            .unwrap_or_else(|| self.joints.iter().map(|j| j.range[0]).collect())
    }

    pub fn check_range(&self, q: &[f64]) -> Result<(), MechanismError> {
        if q.len() != self.dof() {
            return Err(MechanismError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        for (i, (j, &qi)) in self.joints.iter().zip(q).enumerate() {
            if !j.contains(qi) {
                return Err(MechanismError::OutOfRange {
                    joint: i,
                    value: qi,
                    range: j.range,
                });
            }
        }
        Ok(())
    }

    pub fn kinematics(&self, q: &[f64]) -> Result<Kinematics, MechanismError> {
        self.check_range(q)?;
        let mut frame = self.base_pose;
        let mut axes = Vec::with_capacity(q.len());
        let mut origins = Vec::with_capacity(q.len());
        for (spec, &qi) in self.joints.iter().zip(q) {
            axes.push(frame.rotate(&spec.axis));
            origins.push(match spec.kind {
                JointKind::Prismatic => frame.translation,
                JointKind::Revolute => frame.transform_point(&spec.pivot),
            });
            frame = frame.compose(&spec.transform(qi));
        }
        Ok(Kinematics {
            handle: frame.compose(&self.handle_offset),
            axes,
            origins,
        })
    }

    /// Handle pose in the base (world) frame.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Pose, MechanismError> {
        Ok(self.kinematics(q)?.handle)
    }

    pub fn goal_reached(&self, q: &[f64]) -> bool {
        self.goal
            .iter()
            .all(|g| q[g.joint] >= g.interval[0] && q[g.joint] <= g.interval[1])
    }

    /// Copy of the model moved rigidly by `offset` (applied in the world frame).
    pub fn placed(&self, offset: &Pose) -> MechanismModel {
        let mut m = self.clone();
        m.base_pose = offset.compose(&self.base_pose);
        m
    }
}

/// Parses and validates a mechanism document (JSON).
pub fn load_mechanism(document: &str) -> Result<MechanismModel, MechanismError> {
    let model: MechanismModel =
        serde_json::from_str(document).map_err(|e| MechanismError::Schema(e.to_string()))?;
    model.validate()?;
    Ok(model)
}
