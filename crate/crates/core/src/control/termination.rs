use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Collided,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum Termination {
    Running,
    Done,
    Failed(FailureReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationSpec {
    pub position_tolerance: f64,
    pub angle_tolerance: f64,
    pub collision_threshold: f64,
    pub timeout: f64,
}

impl Default for TerminationSpec {
    fn default() -> Self {
        Self {
            position_tolerance: 0.002,
            angle_tolerance: 1f64.to_radians(),
            collision_threshold: 10.0,
            timeout: 60.0,
        }
    }
}

/// Observation the predicate is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationInput {
    pub position_error: f64,
    pub angle_error: f64,
    pub external_force: f64,
    pub elapsed: f64,
}

/// Pure termination predicate: reaching the goal wins, then collision, then timeout.
pub fn detect_termination(spec: &TerminationSpec, obs: &TerminationInput) -> Termination {
    if obs.position_error <= spec.position_tolerance && obs.angle_error <= spec.angle_tolerance {
        Termination::Done
    } else if obs.external_force > spec.collision_threshold {
        Termination::Failed(FailureReason::Collided)
    } else if obs.elapsed > spec.timeout {
        Termination::Failed(FailureReason::Timeout)
    } else {
        Termination::Running
    }
}
