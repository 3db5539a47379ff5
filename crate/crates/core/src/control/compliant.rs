use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::scalar::Real;

/// Parameters of one adaptive compliant controller instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct CompliantControllerSpec<T: Real> {
    /// Initial admissible motion direction (unit).
    pub motion: Vector3<T>,
    /// Contact maintenance direction: unit, or zero for none.
    pub force: Vector3<T>,
    /// Cruise speed along the motion estimate, m/s.
    pub v_des: T,
    /// Contact force to hold along `force`, N.
    pub f_target: T,
    /// Force compliance gain, (m/s)/N.
    pub k_f: T,
    /// Yielding gain against forces outside span{motion, force}, (m/s)/N.
    pub k_y: T,
    /// Motion estimate adaptation rate in (0, 1].
    pub alpha: T,
    /// Per-step displacement below which no motion is observed, m.
    pub eps_obs: T,
    /// Fraction of the force correction accumulated each step, (0, 1].
    pub force_integration: T,
    /// Saturation of the force regulation speed, m/s.
    pub v_force_max: T,
}

impl<T: Real> CompliantControllerSpec<T> {
    pub fn new(motion: Vector3<T>, force: Vector3<T>) -> Self {
        Self {
            motion,
            force,
            v_des: T::lit(0.03),
            f_target: T::lit(5.0),
            k_f: T::lit(0.002),
            k_y: T::lit(0.001),
            alpha: T::lit(0.2),
            eps_obs: T::lit(5e-5),
            force_integration: T::lit(0.5),
            v_force_max: T::lit(0.03),
        }
    }

    /// Pure force regulation along `force` (no cruise motion).
    pub fn force_only(force: Vector3<T>, f_target: T) -> Self {
        let motion = if force.norm() > T::zero() {
            force
        } else {
            Vector3::z()
        };
        Self {
            v_des: T::zero(),
            f_target,
            ..Self::new(motion, force)
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let tol = T::lit(1e-6);
        if (self.motion.norm() - T::one()).abs() > tol {
            return Err(ControlError::NotUnit("motion direction"));
        }
        let fnorm = self.force.norm();
        if fnorm > tol && (fnorm - T::one()).abs() > tol {
            return Err(ControlError::NotUnit("force direction"));
        }
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return Err(ControlError::InvalidGain("alpha"));
        }
        if !(self.force_integration > T::zero() && self.force_integration <= T::one()) {
            return Err(ControlError::InvalidGain("force_integration"));
        }
        Ok(())
    }

    pub fn has_force(&self) -> bool {
        self.force.norm() > T::lit(0.5)
    }
}

/// Blends an observed displacement into the motion estimate.
///
/// `m <- normalize((1 - alpha) m + alpha dx/|dx|)` when `|dx| > eps`, else `m`.
pub fn update_motion_estimate<T: Real>(
    motion: &Vector3<T>,
    displacement: &Vector3<T>,
    alpha: T,
    eps: T,
) -> Vector3<T> {
    let n = displacement.norm();
    if n <= eps {
        return *motion;
    }
    let blended = *motion * (T::one() - alpha) + displacement * (alpha / n);
    let bn = blended.norm();
    if bn <= T::default_epsilon() {
        // Exact reversal: snap to the observation.
        return displacement / n;
    }
    blended / bn
}

/// Running state of an adaptive compliant controller.
///
/// The translation command is
/// `v_des m + u f - k_y f_perp`, where `u` integrates
/// `k_f (f_target - <f_meas, f>)` with saturation at `v_force_max`, and
/// `f_perp` is the measured force outside span{m, f}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct AdaptiveCompliantController<T: Real> {
    pub spec: CompliantControllerSpec<T>,
    pub motion: Vector3<T>,
    /// Integrated force regulation speed along the force direction, m/s.
    pub force_speed: T,
}

impl<T: Real> AdaptiveCompliantController<T> {
    pub fn new(spec: CompliantControllerSpec<T>) -> Result<Self, ControlError> {
        spec.validate()?;
        Ok(Self {
            motion: spec.motion,
            spec,
            force_speed: T::zero(),
        })
    }

    pub fn force_direction(&self) -> Vector3<T> {
        if self.spec.has_force() {
            self.spec.force
        } else {
            Vector3::zeros()
        }
    }

    /// Translation velocity command for the measured end-effector force.
    pub fn command(&mut self, measured_force: &Vector3<T>) -> Vector3<T> {
        let s = &self.spec;
        let f = self.force_direction();
        let mut cmd = self.motion * s.v_des;
        if s.has_force() {
            let along = measured_force.dot(&f);
            let du = s.force_integration * s.k_f * (s.f_target - along);
            self.force_speed = (self.force_speed + du).clamp(-s.v_force_max, s.v_force_max);
            cmd += f * self.force_speed;
        }
        cmd -= perpendicular_part(measured_force, &self.motion, &f) * s.k_y;
        cmd
    }

    /// Adapts the motion estimate to an observed end-effector displacement.
    ///
    /// Motion along the force direction is produced by force regulation, so
    /// only the displacement orthogonal to it is attributed to the admissible
    /// motion.
    pub fn observe(&mut self, displacement: &Vector3<T>) {
        let f = self.force_direction();
        let d = displacement - f * f.dot(displacement);
        self.motion = update_motion_estimate(&self.motion, &d, self.spec.alpha, self.spec.eps_obs);
    }
}

/// Component of `v` orthogonal to span{a, b} (either may be zero).
fn perpendicular_part<T: Real>(v: &Vector3<T>, a: &Vector3<T>, b: &Vector3<T>) -> Vector3<T> {
    let tiny = T::lit(1e-9);
    let mut out = *v;
    let mut basis: Vec<Vector3<T>> = Vec::with_capacity(2);
    for d in [a, b] {
        let mut e = *d;
        for q in &basis {
            e -= q * q.dot(&e);
        }
        let n = e.norm();
        if n > tiny {
            basis.push(e / n);
        }
    }
    for q in &basis {
        out -= q * q.dot(&out);
    }
    out
}
