use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{DemoError, DemoTrajectory, Segment};
use crate::control::{
    AdaptiveCompliantController, CompliantControllerSpec, PhaseSpec, SequencerSpec, TraceFrame,
};
use crate::mechanism::{ContactChange, EeCommand, Episode};

/// Gravity direction in the base frame.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    NextMotion,
    PreviousMotion,
    Gravity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceCandidate {
    pub source: Hypothesis,
    pub direction: Vector3<f64>,
}

/// Force hypotheses for segment `i` (1-based): the next motion, the previous
/// motion, then gravity. Neighbours that do not exist are left out.
pub fn hypothesize_forces(i: usize, segments: &[Segment]) -> Vec<ForceCandidate> {
    let k = segments.len();
    assert!(i >= 1 && i <= k, "segment index {i} outside 1..={k}");
    let mut out = Vec::with_capacity(3);
    if i < k {
        out.push(ForceCandidate {
            source: Hypothesis::NextMotion,
            direction: segments[i].direction,
        });
    }
    if i > 1 {
        out.push(ForceCandidate {
            source: Hypothesis::PreviousMotion,
            direction: segments[i - 2].direction,
        });
    }
    out.push(ForceCandidate {
        source: Hypothesis::Gravity,
        direction: GRAVITY,
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Moved,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceHypothesisResult {
    /// 1-based segment index.
    pub segment: usize,
    pub source: Hypothesis,
    /// Tested direction; `None` when the hypothesis is undefined for this segment.
    pub candidate: Option<Vector3<f64>>,
    /// End-effector displacement during the evaluation, m.
    pub displacement: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Force commanded while testing a hypothesis, N.
    pub k_push: f64,
    /// Evaluation duration, s.
    pub t_eval: f64,
    /// Displacement above which the candidate moved the mechanism, m.
    pub eps_move: f64,
    /// Arrival tolerance at the next segment start, m.
    pub delta_p: f64,
    /// Time allowed for each transit, s.
    pub transit_timeout: f64,
    pub dt: f64,
    /// Cruise and force settings for the instantiated controllers; its
    /// directions are ignored.
    pub controller: CompliantControllerSpec<f64>,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            k_push: 5.0,
            t_eval: 1.0,
            eps_move: 0.005,
            delta_p: 0.005,
            transit_timeout: 20.0,
            dt: 0.01,
            controller: CompliantControllerSpec::new(Vector3::x(), Vector3::zeros()),
        }
    }
}

/// Pushes along `force` with pure force regulation for `t_eval` and reports
/// whether the end-effector moved more than `eps_move`. A moving candidate is
/// driven back to where it started; the episode is left exactly in its
/// pre-evaluation state either way.
pub fn evaluate_force_hypothesis(
    episode: &mut Episode,
    force: &Vector3<f64>,
    params: &AugmentParams,
) -> Result<(f64, Verdict), DemoError> {
    if !episode.state.attached {
        return Err(DemoError::NotAttached);
    }
    let snap = episode.snapshot();
    let p0 = episode.ee_position();
    let spec = CompliantControllerSpec::force_only(force.normalize(), params.k_push);
    let mut ctrl = AdaptiveCompliantController::new(spec)?;
    let mut f = episode.last_report.force();
    let steps = (params.t_eval / params.dt).round() as usize;
    let mut moved = 0.0f64;
    for _ in 0..steps {
        let cmd = ctrl.command(&f);
        f = episode.step(&EeCommand::compliant(cmd), params.dt)?.force();
        moved = moved.max((episode.ee_position() - p0).norm());
    }
    let verdict = if moved > params.eps_move {
        Verdict::Moved
    } else {
        Verdict::Valid
    };
    if verdict == Verdict::Moved {
        for _ in 0..2 * steps {
            let err = p0 - episode.ee_position();
            if err.norm() < 1e-4 {
                break;
            }
            let v = err * 2.0;
            let v = if v.norm() > 0.05 {
                v.normalize() * 0.05
            } else {
                v
            };
            episode.step(&EeCommand::compliant(v), params.dt)?;
        }
        let residual = (episode.ee_position() - p0).norm();
        if residual > 2.0 * params.eps_move {
            return Err(DemoError::RestoreFailure { residual });
        }
    }
    episode.restore(snap);
    Ok((moved, verdict))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub motion: Vector3<f64>,
    /// Unit, or zero when no hypothesis held.
    pub force: Vector3<f64>,
    /// Hypothesis that supplied `force`.
    pub provenance: Option<Hypothesis>,
    /// Contact change that ends this step during execution.
    pub on_contact: Option<ContactChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPlan {
    pub steps: Vec<PlanStep>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl AugmentedPlan {
    /// Plan with every direction rotated by `rotation`.
    pub fn rotated(&self, rotation: &UnitQuaternion<f64>) -> Self {
        let mut out = self.clone();
        for s in &mut out.steps {
            s.motion = rotation * s.motion;
            s.force = rotation * s.force;
        }
        out
    }

    /// Controllers for the sequencer, using `template` for gains and speeds.
    pub fn sequencer_spec(&self, template: &CompliantControllerSpec<f64>) -> SequencerSpec {
        SequencerSpec::new(
            self.steps
                .iter()
                .map(|s| PhaseSpec {
                    controller: CompliantControllerSpec {
                        motion: s.motion,
                        force: s.force,
                        ..*template
                    },
                    on_contact: s.on_contact,
                })
                .collect(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self, DemoError> {
        let plan: Self =
            serde_json::from_str(doc).map_err(|e| DemoError::InvalidPlan(e.to_string()))?;
        if plan.steps.is_empty() {
            return Err(DemoError::InvalidPlan("no steps".into()));
        }
        for s in &plan.steps {
            let n = s.force.norm();
            if (s.motion.norm() - 1.0).abs() > 1e-6 || (n > 1e-9 && (n - 1.0).abs() > 1e-6) {
                return Err(DemoError::InvalidPlan(
                    "directions must be unit (force may be zero)".into(),
                ));
            }
        }
        Ok(plan)
    }
}

/// Mean demonstrated force below which a segment carries no force, N.
pub const DEMO_FORCE_FLOOR: f64 = 1.5;

/// Baseline plan that executes the demonstrated wrench: each segment's force
/// direction is the mean recorded force over its span, or zero when that
/// mean is weaker than [`DEMO_FORCE_FLOOR`].
pub fn demo_force_plan(
    traj: &DemoTrajectory,
    segments: &[Segment],
) -> Result<AugmentedPlan, DemoError> {
    if segments.is_empty() {
        return Err(DemoError::DegenerateTrajectory);
    }
    let manip = traj.manipulation();
    let k = segments.len();
    let steps = segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (a, b) = s.span;
            let span = &manip[a.min(manip.len())..(b + 1).min(manip.len())];
            let sum: Vector3<f64> = span
                .iter()
                .map(|x| x.wrench.fixed_rows::<3>(0).into_owned())
                .sum();
            let mean = if span.is_empty() {
                Vector3::zeros()
            } else {
                sum / span.len() as f64
            };
            let force = if mean.norm() < DEMO_FORCE_FLOOR {
                Vector3::zeros()
            } else {
                mean.normalize()
            };
            PlanStep {
                motion: s.direction,
                force,
                provenance: None,
                on_contact: (i + 1 < k).then_some(ContactChange::Gained),
            }
        })
        .collect();
    Ok(AugmentedPlan {
        steps,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOutcome {
    pub plan: AugmentedPlan,
    pub hypotheses: Vec<ForceHypothesisResult>,
    /// Transit frames; `phase` is the 0-based segment index.
    pub trace: Vec<TraceFrame>,
}

/// Picks a contact force direction for every segment by testing
/// hypotheses in order on the mechanism, then move on to the next segment's
/// start with the adaptive compliant controller.
pub fn augment_contact(
    episode: &mut Episode,
    segments: &[Segment],
    end_position: &Vector3<f64>,
    params: &AugmentParams,
) -> Result<AugmentOutcome, DemoError> {
    if segments.is_empty() {
        return Err(DemoError::DegenerateTrajectory);
    }
    let k = segments.len();
    let mut out = AugmentOutcome {
        plan: AugmentedPlan {
            steps: Vec::with_capacity(k),
            warnings: Vec::new(),
        },
        hypotheses: Vec::new(),
        trace: Vec::new(),
    };
    for i in 1..=k {
        let mut chosen = None;
        for (source, direction) in hypothesis_slots(i, segments) {
            let Some(direction) = direction else {
                out.hypotheses.push(ForceHypothesisResult {
                    segment: i,
                    source,
                    candidate: None,
                    displacement: 0.0,
                    verdict: Verdict::Skipped,
                });
                continue;
            };
            let (displacement, verdict) = evaluate_force_hypothesis(episode, &direction, params)?;
            out.hypotheses.push(ForceHypothesisResult {
                segment: i,
                source,
                candidate: Some(direction),
                displacement,
                verdict,
            });
            if verdict == Verdict::Valid {
                chosen = Some(ForceCandidate { source, direction });
                break;
            }
        }
        let (force, provenance) = match chosen {
            Some(c) => (c.direction, Some(c.source)),
            None => {
                out.plan.warnings.push(format!(
                    "segment {i}: no force hypothesis held, using no contact force"
                ));
                (Vector3::zeros(), None)
            }
        };
        let step = PlanStep {
            motion: segments[i - 1].direction,
            force,
            provenance,
            on_contact: (i < k).then_some(ContactChange::Gained),
        };
        let target = if i < k {
            segments[i].start
        } else {
            *end_position
        };
        transit(
            episode,
            &step,
            &target,
            i < k,
            i - 1,
            params,
            &mut out.trace,
        )
        .map_err(|e| match e {
            DemoError::TransitFailure { .. } => DemoError::TransitFailure { segment: i },
            other => other,
        })?;
        out.plan.steps.push(step);
    }
    Ok(out)
}

/// All three hypotheses in order, `None` where undefined.
fn hypothesis_slots(i: usize, segments: &[Segment]) -> [(Hypothesis, Option<Vector3<f64>>); 3] {
    [
        (Hypothesis::NextMotion, segments.get(i).map(|s| s.direction)),
        (
            Hypothesis::PreviousMotion,
            i.checked_sub(2).map(|p| segments[p].direction),
        ),
        (Hypothesis::Gravity, Some(GRAVITY)),
    ]
}

fn transit(
    episode: &mut Episode,
    step: &PlanStep,
    target: &Vector3<f64>,
    intermediate: bool,
    phase: usize,
    params: &AugmentParams,
    trace: &mut Vec<TraceFrame>,
) -> Result<(), DemoError> {
    let spec = CompliantControllerSpec {
        motion: step.motion,
        force: step.force,
        ..params.controller
    };
    let mut ctrl = AdaptiveCompliantController::new(spec)?;
    let mut f = episode.last_report.force();
    let start = episode.time;
    let mut last = f64::INFINITY;
    loop {
        // Inside the tolerance, arrive once the target is passed along the
        // motion direction or the distance starts growing again.
        let offset = episode.ee_position() - target;
        let dist = offset.norm();
        let passed = offset.dot(&step.motion) >= 0.0;
        let arrived = dist <= params.delta_p && (passed || dist >= last);
        if arrived || (!intermediate && episode.goal_reached()) {
            return Ok(());
        }
        last = dist;
        if episode.time - start > params.transit_timeout {
            return Err(DemoError::TransitFailure { segment: phase + 1 });
        }
        let before = episode.ee_position();
        let cmd = ctrl.command(&f);
        let report = *episode.step(&EeCommand::compliant(cmd), params.dt)?;
        ctrl.observe(&(episode.ee_position() - before));
        f = report.force();
        trace.push(TraceFrame {
            t: episode.time,
            ee_pose: episode.state.ee_pose,
            wrench: report.wrench,
            q: episode.state.q.clone(),
            phase,
            blocked: report.blocked,
        });
    }
}
