use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::contact::{ContactChange, ContactReport, BLOCKED_AXES};
use super::{MechanismError, MechanismModel};
use crate::Pose;

/// Reaction and bookkeeping constants of the quasi-static simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Reaction force per unit of unrealized translational command, N/(m/s).
    pub k_c: f64,
    /// Reaction torque per unit of unrealized angular command, N·m/(rad/s).
    pub k_c_rot: f64,
    /// Unrealized speed above which a signed axis counts as blocked, m/s.
    pub block_tol: f64,
    /// Length scale weighting angular rows against linear rows, m.
    pub rotation_scale: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            k_c: 500.0,
            k_c_rot: 50.0,
            block_tol: 2e-3,
            rotation_scale: 0.1,
        }
    }
}

/// End-effector velocity command in the base frame.
///
/// `angular: None` leaves the wrist rotationally compliant: only the linear
/// rows are tracked and the grasp follows whatever rotation the mechanism
/// imposes without reaction torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EeCommand {
    pub linear: Vector3<f64>,
    pub angular: Option<Vector3<f64>>,
}

impl EeCommand {
    pub fn compliant(linear: Vector3<f64>) -> Self {
        Self {
            linear,
            angular: None,
        }
    }

    pub fn twist(t: &Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(t[0], t[1], t[2]),
            angular: Some(Vector3::new(t[3], t[4], t[5])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismState {
    pub q: Vec<f64>,
    pub attached: bool,
    pub ee_pose: Pose,
    /// Blocked flags of the previous step, `[+x, -x, +y, -y, +z, -z]`.
    pub blocked: [bool; 6],
}

impl MechanismState {
    /// Start configuration with the end-effector rigidly attached to the handle.
    pub fn attached(model: &MechanismModel) -> Result<Self, MechanismError> {
        Self::attached_at(model, model.initial_q())
    }

    pub fn attached_at(model: &MechanismModel, q: Vec<f64>) -> Result<Self, MechanismError> {
        let ee_pose = model.forward_kinematics(&q)?;
        Ok(Self {
            q,
            attached: true,
            ee_pose,
            blocked: [false; 6],
        })
    }
}

/// Advances the mechanism by one quasi-static step.
///
/// The joint velocity is the least-squares projection of the command onto the
/// handle Jacobian; joints that would leave their range or enter a gate's
/// forbidden region are pinned at the boundary and the remainder is
/// re-projected onto the joints still free.
pub fn step_constrained(
    model: &MechanismModel,
    params: &SimParams,
    state: &MechanismState,
    command: &EeCommand,
    dt: f64,
) -> Result<(MechanismState, ContactReport), MechanismError> {
    if !state.attached {
        return Err(MechanismError::NotAttached);
    }
    if !(dt > 0.0) {
        return Err(MechanismError::InvalidTimestep(dt));
    }
    let kin = model.kinematics(&state.q)?;
    let jac = kin.jacobian(&model.joints);
    let (rows, target) = weighted_rows(&jac, command, params.rotation_scale);
    let q_new = solve_feasible(model, &state.q, &rows, &target, dt);

    let qdot = DVector::from_iterator(
        q_new.len(),
        q_new.iter().zip(&state.q).map(|(a, b)| (a - b) / dt),
    );
    let realized_v = &jac * &qdot;
    let realized = Vector6::from_iterator(realized_v.iter().copied());
    let lin_real = realized.fixed_rows::<3>(0).into_owned();
    let ang_real = realized.fixed_rows::<3>(3).into_owned();

    let deficit = command.linear - lin_real;
    let force = deficit * params.k_c;
    let torque = match command.angular {
        Some(w) => (w - ang_real) * params.k_c_rot,
        None => Vector3::zeros(),
    };
    let wrench = Vector6::new(force.x, force.y, force.z, torque.x, torque.y, torque.z);

    let mut blocked = [false; 6];
    for (k, b) in blocked.iter_mut().enumerate() {
        let d = BLOCKED_AXES[k];
        *b = deficit.dot(&d) > params.block_tol;
    }
    let contact_change = ContactChange::between(&state.blocked, &blocked);

    let ee_pose = model.forward_kinematics(&q_new)?;
    let next = MechanismState {
        q: q_new,
        attached: true,
        ee_pose,
        blocked,
    };
    let report = ContactReport {
        wrench,
        blocked,
        contact_change,
        realized,
    };
    Ok((next, report))
}

fn weighted_rows(
    jac: &DMatrix<f64>,
    command: &EeCommand,
    rotation_scale: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    match command.angular {
        None => (
            jac.rows(0, 3).into_owned(),
            DVector::from_column_slice(command.linear.as_slice()),
        ),
        Some(w) => {
            let mut rows = jac.clone();
            rows.rows_mut(3, 3).scale_mut(rotation_scale);
            let ws = w * rotation_scale;
            let target = DVector::from_column_slice(&[
                command.linear.x,
                command.linear.y,
                command.linear.z,
                ws.x,
                ws.y,
                ws.z,
            ]);
            (rows, target)
        }
    }
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-10)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Active-set projection: returns the new joint coordinates.
fn solve_feasible(
    model: &MechanismModel,
    q: &[f64],
    rows: &DMatrix<f64>,
    target: &DVector<f64>,
    dt: f64,
) -> Vec<f64> {
    let n = q.len();
    // Joints pinned to an exact coordinate for this step.
    let mut pinned: Vec<Option<f64>> = vec![None; n];
    let mut q_new = q.to_vec();
    for _ in 0..(3 * n + 3) {
        let free: Vec<usize> = (0..n).filter(|&i| pinned[i].is_none()).collect();
        let mut residual = target.clone();
        for i in 0..n {
            if let Some(p) = pinned[i] {
                residual -= rows.column(i) * ((p - q[i]) / dt);
            }
        }
        let sub = DMatrix::from_fn(rows.nrows(), free.len(), |r, c| rows[(r, free[c])]);
        let v = least_squares(&sub, &residual);
        for i in 0..n {
            q_new[i] = pinned[i].unwrap_or(q[i]);
        }
        for (c, &i) in free.iter().enumerate() {
            q_new[i] = q[i] + v[c] * dt;
        }

        let mut changed = false;
        for &i in &free {
            let [lo, hi] = model.joints[i].range;
            if q_new[i] > hi {
                pinned[i] = Some(hi);
                changed = true;
            } else if q_new[i] < lo {
                pinned[i] = Some(lo);
                changed = true;
            }
        }
        if changed {
            continue;
        }

        for gate in &model.gates {
            let (gi, ei) = (gate.gated_joint, gate.enabling_joint);
            if !gate.forbids(q_new[gi], q_new[ei]) {
                continue;
            }
            let [a, b] = gate.blocking;
            let g0 = q[gi];
            let edge_of = |g: f64| if g - a <= b - g { a } else { b };
            if !gate.in_band(g0) {
                // Trying to enter the passage while it is closed.
                let edge = if g0 <= a { a } else { b };
                if pinned[gi].is_none() {
                    pinned[gi] = Some(edge);
                } else {
                    pinned[ei] = Some(q[ei]);
                }
            } else {
                let depth = (g0 - a).min(b - g0);
                if depth < gate.lead_in && pinned[gi].is_none() {
                    // Shallow pin is cammed out by the chamfered slot edge.
                    pinned[gi] = Some(edge_of(g0));
                } else {
                    let [c, d] = gate.enabling;
                    pinned[ei] = Some(if q_new[ei] < c { c } else { d });
                }
            }
            changed = true;
        }
        if !changed {
            break;
        }
    }
    for (i, j) in model.joints.iter().enumerate() {
        q_new[i] = q_new[i].clamp(j.range[0], j.range[1]);
    }
    q_new
}

/// A simulation episode: one mechanism, one owned state, simulated time.
#[derive(Debug, Clone)]
pub struct Episode {
    pub model: Arc<MechanismModel>,
    pub params: SimParams,
    pub state: MechanismState,
    pub time: f64,
    pub last_report: ContactReport,
}

impl Episode {
    pub fn new(model: Arc<MechanismModel>, params: SimParams) -> Result<Self, MechanismError> {
        let state = MechanismState::attached(&model)?;
        Ok(Self {
            model,
            params,
            state,
            time: 0.0,
            last_report: ContactReport::default(),
        })
    }

    pub fn with_state(
        model: Arc<MechanismModel>,
        params: SimParams,
        state: MechanismState,
    ) -> Self {
        Self {
            model,
            params,
            state,
            time: 0.0,
            last_report: ContactReport::default(),
        }
    }

    pub fn step(&mut self, command: &EeCommand, dt: f64) -> Result<&ContactReport, MechanismError> {
        let (next, report) = step_constrained(&self.model, &self.params, &self.state, command, dt)?;
        self.state = next;
        self.last_report = report;
        self.time += dt;
        Ok(&self.last_report)
    }

    pub fn ee_position(&self) -> Vector3<f64> {
        self.state.ee_pose.translation
    }

    pub fn goal_reached(&self) -> bool {
        self.model.goal_reached(&self.state.q)
    }

    pub fn snapshot(&self) -> (MechanismState, f64) {
        (self.state.clone(), self.time)
    }

    pub fn restore(&mut self, snap: (MechanismState, f64)) {
        self.state = snap.0;
        self.time = snap.1;
        self.last_report = ContactReport::default();
    }
}
