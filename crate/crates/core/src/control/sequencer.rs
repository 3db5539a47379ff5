use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{AdaptiveCompliantController, CompliantControllerSpec, ControlError, FailureReason};
use crate::mechanism::{
    ContactChange, ContactDebouncer, ContactEvent, EeCommand, Episode, BLOCKED_AXES,
    DEFAULT_DEBOUNCE,
};
use crate::Pose;

/// One controller of a sequence and the event that ends it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub controller: CompliantControllerSpec<f64>,
    /// Debounced contact change that advances to the next phase. `None`
    /// keeps the phase active until the goal holds or time runs out.
    pub on_contact: Option<ContactChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencerSpec {
    pub phases: Vec<PhaseSpec>,
    /// Global timeout, simulated seconds.
    pub timeout: f64,
    pub dt: f64,
    pub debounce: usize,
    /// Minimum cosine between a switched axis and the controller's motion
    /// (gained) or force (lost) direction for the event to end a phase.
    pub alignment: f64,
    /// Record every n-th step in the trace; 0 disables tracing.
    pub trace_stride: usize,
}

impl SequencerSpec {
    pub fn new(phases: Vec<PhaseSpec>) -> Self {
        Self {
            phases,
            timeout: 60.0,
            dt: 0.01,
            debounce: DEFAULT_DEBOUNCE,
            alignment: 0.3,
            trace_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub t: f64,
    pub ee_pose: Pose,
    pub wrench: Vector6<f64>,
    pub q: Vec<f64>,
    pub phase: usize,
    pub blocked: [bool; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSwitch {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub change: ContactChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencerOutcome {
    pub success: bool,
    pub reason: Option<FailureReason>,
    /// Phase active when the run ended.
    pub final_phase: usize,
    pub elapsed: f64,
    pub switches: Vec<PhaseSwitch>,
    pub trace: Vec<TraceFrame>,
}

/// Whether a debounced event ends the phase run by `ctrl`.
pub fn event_ends_phase(
    declared: ContactChange,
    event: &ContactEvent,
    ctrl: &AdaptiveCompliantController<f64>,
    alignment: f64,
) -> bool {
    let aligned = |axes: &[usize], dir: &Vector3<f64>| {
        axes.iter().any(|&k| BLOCKED_AXES[k].dot(dir) >= alignment)
    };
    match declared {
        ContactChange::Gained => aligned(&event.gained, &ctrl.motion),
        ContactChange::Lost => {
            let f = ctrl.force_direction();
            let dir = if f.norm() > 0.5 { f } else { ctrl.motion };
            aligned(&event.lost, &dir)
        }
        ContactChange::None => false,
    }
}

/// Runs the phases in order on `episode`, advancing on each phase's declared
/// contact event, until the mechanism goal holds or the timeout expires.
/// Phases never repeat.
pub fn run_sequencer(
    spec: &SequencerSpec,
    episode: &mut Episode,
) -> Result<SequencerOutcome, ControlError> {
    let start = episode.time;
    let mut outcome = SequencerOutcome {
        success: false,
        reason: None,
        final_phase: 0,
        elapsed: 0.0,
        switches: Vec::new(),
        trace: Vec::new(),
    };
    if episode.goal_reached() {
        outcome.success = true;
        return Ok(outcome);
    }
    if spec.phases.is_empty() {
        outcome.reason = Some(FailureReason::Timeout);
        return Ok(outcome);
    }

    let mut phase = 0;
    let mut ctrl = AdaptiveCompliantController::new(spec.phases[0].controller)?;
    let mut debouncer = ContactDebouncer::with_stable(spec.debounce, episode.state.blocked);
    let mut force = episode.last_report.force();
    let mut steps = 0usize;

    while episode.time - start < spec.timeout {
        let before = episode.ee_position();
        let cmd = ctrl.command(&force);
        let report = *episode.step(&EeCommand::compliant(cmd), spec.dt)?;
        ctrl.observe(&(episode.ee_position() - before));
        force = report.force();

        if spec.trace_stride > 0 && steps.is_multiple_of(spec.trace_stride) {
            outcome.trace.push(TraceFrame {
                t: episode.time - start,
                ee_pose: episode.state.ee_pose,
                wrench: report.wrench,
                q: episode.state.q.clone(),
                phase,
                blocked: report.blocked,
            });
        }
        steps += 1;

        if episode.goal_reached() {
            outcome.success = true;
            break;
        }

        let event = debouncer.update(&report);
        if let Some(declared) = spec.phases[phase].on_contact {
            if phase + 1 < spec.phases.len()
                && event.change != ContactChange::None
                && event_ends_phase(declared, &event, &ctrl, spec.alignment)
            {
                outcome.switches.push(PhaseSwitch {
                    t: episode.time - start,
                    from: phase,
                    to: phase + 1,
                    change: declared,
                });
                phase += 1;
                ctrl = AdaptiveCompliantController::new(spec.phases[phase].controller)?;
            }
        }
    }
    if !outcome.success {
        outcome.reason = Some(FailureReason::Timeout);
    }
    outcome.final_phase = phase;
    outcome.elapsed = episode.time - start;
    Ok(outcome)
}
