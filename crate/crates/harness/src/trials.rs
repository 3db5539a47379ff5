use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lfd_core::control::{pbvs_step, run_sequencer, ServoGoal, ServoStatus};
use lfd_core::demo_pipeline::{
    demo_force_plan, scripted_leg_spans, scripted_legs, synthesize_wrench, AugmentedPlan,
    WrenchNoise,
};
use lfd_core::geometry::{relative_pose, wrap_angle, yaw_of_grasp};
use lfd_core::mechanism::{Episode, MechanismModel, SimParams};
use lfd_core::perception::{
    detect_target, estimate_grasp_pose, handle_yaw, render_scene, search_behavior, Detection, Hsv,
    Primitive, SceneSpec, SearchParams, YawEstimator,
};
use lfd_core::Pose;

use crate::config::{derive_seed, Method, Phase, ScenarioConfig};
use crate::pipeline::FixturePipeline;
use crate::HarnessError;

/// Servo period, s.
pub const SERVO_DT: f64 = 0.05;
pub const SERVO_GAIN: f64 = 1.5;
/// Translational speed limit while servoing or searching, m/s.
pub const MAX_SPEED: f64 = 0.2;
/// Servoing time allowed after the target is found, s.
pub const SERVO_TIMEOUT: f64 = 30.0;
/// Below this height above the estimated grasp the estimate is frozen, m.
pub const FREEZE_HEIGHT: f64 = 0.06;
/// While servoing the gripper stays above a cone around the estimated
/// grasp: height over horizontal offset.
pub const FUNNEL_SLOPE: f64 = 3.0;
/// Grasp holds if the gripper ends within these tolerances of the handle.
pub const GRASP_POSITION_TOL: f64 = 0.006;
pub const GRASP_ANGLE_TOL: f64 = 10.0 * std::f64::consts::PI / 180.0;
/// Horizontal offset of an out-of-view start, m.
pub const OUT_OF_VIEW_OFFSET: f64 = 0.4;
/// Travel into a gate's blocking band that counts as having passed it.
const GATE_PASSED: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    NoDetection,
    SearchExhausted,
    GraspMissed,
    ServoTimeout,
    /// The gated joint never entered its blocking band: stuck at a gate.
    GateBlocked,
    OpenIncomplete,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseDurations {
    /// Simulated seconds.
    pub grasp: Option<f64>,
    pub open: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub fixture: String,
    pub phase: Phase,
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub grasp: Option<bool>,
    pub open: Option<bool>,
    pub failure: Option<FailureKind>,
    pub durations: PhaseDurations,
    /// Search waypoints visited before the target was seen.
    pub search_waypoints: usize,
    /// Contact-change phase transitions during opening.
    pub contact_switches: usize,
    /// Trace file relative to the report directory, when traces were kept.
    pub trace: Option<String>,
}

impl TrialResult {
    fn new(cfg: &ScenarioConfig, phase: Phase, method: Method, trial: usize, seed: u64) -> Self {
        Self {
            fixture: cfg.fixture.clone(),
            phase,
            method,
            trial,
            seed,
            success: false,
            grasp: None,
            open: None,
            failure: None,
            durations: PhaseDurations::default(),
            search_waypoints: 0,
            contact_switches: 0,
            trace: None,
        }
    }
}

/// Rigid motion of the table top that moves the mechanism base by `d` and
/// turns it by `yaw` about its own vertical axis.
pub fn about_base(model: &MechanismModel, d: Vector3<f64>, yaw: f64) -> Pose {
    let b = model.base_pose.translation;
    Pose::from_translation(b.x + d.x, b.y + d.y, 0.0)
        .compose(&Pose::from_yaw(yaw))
        .compose(&Pose::from_translation(-b.x, -b.y, 0.0))
}

/// Placement of the mechanism for one trial.
#[derive(Debug, Clone)]
struct Placement {
    offset: Pose,
    model: Arc<MechanismModel>,
}

impl Placement {
    fn sample(base: &MechanismModel, translation: f64, yaw: f64, rng: &mut ChaCha8Rng) -> Self {
        let d = Vector3::new(sym(rng, translation), sym(rng, translation), 0.0);
        let offset = about_base(base, d, sym(rng, yaw));
        Self {
            offset,
            model: Arc::new(base.placed(&offset)),
        }
    }

    fn moved(
        &self,
        base: &MechanismModel,
        translation: f64,
        yaw: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = Vector3::new(sym(rng, translation), sym(rng, translation), 0.0);
        let offset = about_base(&self.model, d, sym(rng, yaw)).compose(&self.offset);
        Self {
            offset,
            model: Arc::new(base.placed(&offset)),
        }
    }

    fn yaw(&self) -> f64 {
        self.offset.yaw()
    }
}

fn sym(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    if r > 0.0 {
        rng.random_range(-r..=r)
    } else {
        0.0
    }
}

/// Per-trial visual conditions, fixed world-frame clutter included.
#[derive(Debug, Clone)]
struct Look {
    distractors: Vec<Primitive>,
    saturation: Option<f64>,
}

impl Look {
    fn sample(cfg: &ScenarioConfig, base: &MechanismModel, rng: &mut ChaCha8Rng) -> Self {
        let b = base.base_pose.translation;
        let distractors = (0..cfg.distractors)
            .map(|_| {
                let r = rng.random_range(0.15..0.3);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let radius = rng.random_range(0.015..0.025);
                Primitive::Sphere {
                    center: Vector3::new(b.x + r * a.cos(), b.y + r * a.sin(), b.z - 0.01 + radius),
                    radius,
                    color: Hsv::new(rng.random_range(60.0..300.0), 0.8, 0.85),
                }
            })
            .collect();
        let saturation = cfg.degraded_detection.then(|| rng.random_range(0.15..0.45));
        Self {
            distractors,
            saturation,
        }
    }

    fn scene(&self, model: &MechanismModel) -> Result<SceneSpec, HarnessError> {
        let mut scene = SceneSpec::for_mechanism(model, &model.initial_q())?;
        scene.distractors = self.distractors.clone();
        if let Some(s) = self.saturation {
            for p in &mut scene.target {
                match p {
                    Primitive::Sphere { color, .. }
                    | Primitive::Rect { color, .. }
                    | Primitive::Disc { color, .. } => {
                        color.s = s;
                    }
                }
            }
        }
        Ok(scene)
    }
}

#[derive(Debug, Clone)]
struct GraspAttempt {
    success: bool,
    failure: Option<FailureKind>,
    time: f64,
    search_waypoints: usize,
    /// Last grasp estimate in the base frame.
    estimate: Option<Pose>,
    placement: Placement,
}

/// Searches if needed, then servos to the re-estimated grasp pose every
/// period until the estimate is reached.
fn grasp_attempt(
    pipe: &FixturePipeline,
    cfg: &ScenarioConfig,
    estimator: &YawEstimator,
    mut placement: Placement,
    look: &Look,
    rng: &mut ChaCha8Rng,
) -> Result<GraspAttempt, HarnessError> {
    let cam = &pipe.camera;
    let mut scene = look.scene(&placement.model)?;
    let mut ee = pipe
        .demo
        .approach()
        .first()
        .map(|s| s.ee_pose)
        .unwrap_or_else(|| pipe.nominal_grasp());
    if cfg.start_out_of_view {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        ee = ee.with_translation(
            ee.translation + Vector3::new(a.cos(), a.sin(), 0.0) * OUT_OF_VIEW_OFFSET,
        );
    }
    let mut change_pending = cfg.pose_change.enabled;
    let mut time = 0.0;
    let mut out = GraspAttempt {
        success: false,
        failure: None,
        time: 0.0,
        search_waypoints: 0,
        estimate: None,
        placement: placement.clone(),
    };

    let look_at =
        |scene: &SceneSpec, pose: &Pose| -> (Detection, lfd_core::perception::RenderedImage) {
            let img = render_scene(scene, cam, &cam.camera_pose(pose));
            (detect_target(&img, &pipe.hue, cam), img)
        };

    let found = search_behavior(&ee, &SearchParams::default(), |p| look_at(&scene, p).0);
    let found = match found {
        Ok(f) => f,
        Err(_) => {
            out.failure = Some(FailureKind::SearchExhausted);
            return Ok(out);
        }
    };
    out.search_waypoints = found.visited.len();
    for wp in &found.visited {
        time += (wp.translation - ee.translation).norm() / MAX_SPEED;
        ee = *wp;
    }

    let servo_start = time;
    let mut goal: Option<Pose> = None;
    loop {
        let truth = placement
            .model
            .forward_kinematics(&placement.model.initial_q())?;
        if change_pending
            && (ee.translation - truth.translation).norm() < cfg.pose_change.trigger_distance
        {
            change_pending = false;
            let pc = &cfg.pose_change;
            placement = placement.moved(&pipe.model, pc.translation, pc.yaw, rng);
            scene = look.scene(&placement.model)?;
            continue;
        }
        let frozen = goal.is_some_and(|g| ee.translation.z - g.translation.z < FREEZE_HEIGHT);
        if !frozen {
            let (det, img) = look_at(&scene, &ee);
            let usable = goal.is_none() || det.bbox.is_some_and(|b| clear_of_border(cam, &b));
            if usable {
                if let Ok(est) = estimate_grasp_pose(&det, &img, cam, estimator) {
                    goal = Some(est.to_base(cam, &ee));
                }
            }
        }
        let Some(g) = goal else {
            out.failure = Some(FailureKind::NoDetection);
            break;
        };
        let servo = ServoGoal {
            gain: SERVO_GAIN,
            ..ServoGoal::new(g)
        };
        let offset = (ee.translation.xy() - g.translation.xy()).norm();
        let lift = (FUNNEL_SLOPE * offset).min((ee.translation.z - g.translation.z).max(0.0));
        let above = ServoGoal {
            grasp_pose: g.with_translation(g.translation + Vector3::z() * lift),
            ..servo
        };
        let (mut twist, status) = pbvs_step(&above, &ee, 0.0);
        if status == ServoStatus::Reached {
            let rel = relative_pose(&truth, &ee);
            let ok = rel.translation.norm() <= GRASP_POSITION_TOL
                && rel.rotation.angle() <= GRASP_ANGLE_TOL;
            out.success = ok;
            out.failure = (!ok).then_some(FailureKind::GraspMissed);
            break;
        }
        if time - servo_start > SERVO_TIMEOUT {
            out.failure = Some(FailureKind::ServoTimeout);
            break;
        }
        let v = twist.fixed_rows::<3>(0).norm();
        if v > MAX_SPEED {
            let s = MAX_SPEED / v;
            twist.fixed_rows_mut::<3>(0).scale_mut(s);
        }
        ee = ee.integrate(&twist, SERVO_DT);
        time += SERVO_DT;
    }
    out.time = time;
    out.estimate = goal;
    out.placement = placement;
    Ok(out)
}

fn clear_of_border(cam: &lfd_core::CameraModel, b: &lfd_core::PixelBox) -> bool {
    b.u1 >= 1.0 && b.v1 >= 1.0 && b.u2 <= cam.width as f64 - 1.0 && b.v2 <= cam.height as f64 - 1.0
}

/// Baseline plan for one trial: the demonstration's wrench channel is
/// synthesized afresh and read off per segment.
pub fn demo_forces_plan(
    pipe: &FixturePipeline,
    rng: &mut ChaCha8Rng,
) -> Result<AugmentedPlan, HarnessError> {
    let legs = scripted_legs(&pipe.model)?;
    let spans = scripted_leg_spans(&pipe.model, &pipe.demo, &legs);
    let mut demo = pipe.demo.clone();
    synthesize_wrench(&mut demo, &legs, &spans, &WrenchNoise::default(), rng);
    Ok(demo_force_plan(&demo, &pipe.segments)?)
}

struct OpenAttempt {
    success: bool,
    failure: Option<FailureKind>,
    time: f64,
    switches: usize,
}

fn open_attempt(
    pipe: &FixturePipeline,
    model: &Arc<MechanismModel>,
    plan: &AugmentedPlan,
) -> Result<OpenAttempt, HarnessError> {
    let mut ep = Episode::new(model.clone(), SimParams::default())?;
    let spec = plan.sequencer_spec(&pipe.plan_controller());
    let out = run_sequencer(&spec, &mut ep)?;
    let q0 = model.initial_q();
    let blocked = model.gates.iter().any(|g| {
        let (q, start) = (ep.state.q[g.gated_joint], q0[g.gated_joint]);
        let depth = if start <= g.blocking[0] {
            q - g.blocking[0]
        } else if start >= g.blocking[1] {
            g.blocking[1] - q
        } else {
            (q - start).abs()
        };
        depth < GATE_PASSED
    });
    Ok(OpenAttempt {
        success: out.success,
        failure: (!out.success).then_some(if blocked {
            FailureKind::GateBlocked
        } else {
            FailureKind::OpenIncomplete
        }),
        time: out.elapsed,
        switches: out.switches.len(),
    })
}

impl FixturePipeline {
    pub fn plan_controller(&self) -> lfd_core::control::CompliantControllerSpec<f64> {
        lfd_core::demo_pipeline::AugmentParams::default().controller
    }

    fn open_plan(
        &self,
        method: Method,
        rng: &mut ChaCha8Rng,
    ) -> Result<AugmentedPlan, HarnessError> {
        match method {
            Method::Augmented => Ok(self.plan.clone()),
            Method::DemoOnly => demo_forces_plan(self, rng),
        }
    }
}

fn trial_rng(cfg: &ScenarioConfig, k: usize) -> (u64, ChaCha8Rng) {
    let seed = derive_seed(cfg.seed, k as u64);
    (seed, ChaCha8Rng::seed_from_u64(seed))
}

fn run_parallel<F>(cfg: &ScenarioConfig, f: F) -> Result<Vec<TrialResult>, HarnessError>
where
    F: Fn(usize, u64, &mut ChaCha8Rng) -> Result<TrialResult, HarnessError> + Sync,
{
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let (seed, mut rng) = trial_rng(cfg, k);
            f(k, seed, &mut rng)
        })
        .collect()
}

fn check_fixture(pipe: &FixturePipeline, cfg: &ScenarioConfig) -> Result<(), HarnessError> {
    if pipe.fixture != cfg.fixture {
        return Err(HarnessError::Config(format!(
            "scenario is for {} but the pipeline was prepared on {}",
            cfg.fixture, pipe.fixture
        )));
    }
    Ok(())
}

/// Grasp trials: randomized placement, optional clutter and a mid-approach
/// pose change, closed-loop servoing on the chosen estimator.
pub fn run_grasp_trials(
    pipe: &FixturePipeline,
    cfg: &ScenarioConfig,
    method: Method,
) -> Result<Vec<TrialResult>, HarnessError> {
    check_fixture(pipe, cfg)?;
    run_parallel(cfg, |k, seed, rng| {
        let placement = Placement::sample(&pipe.model, cfg.translation_range, cfg.yaw_range, rng);
        let look = Look::sample(cfg, &pipe.model, rng);
        let g = grasp_attempt(pipe, cfg, pipe.estimator(method), placement, &look, rng)?;
        let mut r = TrialResult::new(cfg, Phase::Grasp, method, k, seed);
        r.success = g.success;
        r.grasp = Some(g.success);
        r.failure = g.failure;
        r.durations.grasp = Some(g.time);
        r.search_waypoints = g.search_waypoints;
        Ok(r)
    })
}

/// Opening trials: start attached at the handle of a randomized placement
/// and run the plan rotated by the placement yaw.
pub fn run_open_trials(
    pipe: &FixturePipeline,
    cfg: &ScenarioConfig,
    method: Method,
) -> Result<Vec<TrialResult>, HarnessError> {
    run_open_with(pipe, cfg, method, None)
}

/// [`run_open_trials`] with an explicit plan in place of the pipeline's,
/// e.g. one learned on another fixture.
pub fn run_open_trials_with_plan(
    pipe: &FixturePipeline,
    cfg: &ScenarioConfig,
    plan: &AugmentedPlan,
) -> Result<Vec<TrialResult>, HarnessError> {
    run_open_with(pipe, cfg, Method::Augmented, Some(plan))
}

fn run_open_with(
    pipe: &FixturePipeline,
    cfg: &ScenarioConfig,
    method: Method,
    plan: Option<&AugmentedPlan>,
) -> Result<Vec<TrialResult>, HarnessError> {
    check_fixture(pipe, cfg)?;
    run_parallel(cfg, |k, seed, rng| {
        let placement = Placement::sample(&pipe.model, cfg.translation_range, cfg.yaw_range, rng);
        let plan = match plan {
            Some(p) => p.clone(),
            None => pipe.open_plan(method, rng)?,
        };
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), placement.yaw());
        let o = open_attempt(pipe, &placement.model, &plan.rotated(&rot))?;
        let mut r = TrialResult::new(cfg, Phase::Open, method, k, seed);
        r.success = o.success;
        r.open = Some(o.success);
        r.failure = o.failure;
        r.durations.open = Some(o.time);
        r.contact_switches = o.switches;
        Ok(r)
    })
}

/// Grasp then open in one run. The opening plan is turned by the yaw of the
/// estimated grasp relative to the demonstrated one.
pub fn run_full_task(
    pipe: &FixturePipeline,
    cfg: &ScenarioConfig,
    method: Method,
) -> Result<Vec<TrialResult>, HarnessError> {
    check_fixture(pipe, cfg)?;
    let nominal_yaw = handle_yaw(&pipe.nominal_grasp());
    run_parallel(cfg, |k, seed, rng| {
        let placement = Placement::sample(&pipe.model, cfg.translation_range, cfg.yaw_range, rng);
        let look = Look::sample(cfg, &pipe.model, rng);
        let plan = pipe.open_plan(method, rng)?;
        let g = grasp_attempt(pipe, cfg, pipe.estimator(method), placement, &look, rng)?;
        let mut r = TrialResult::new(cfg, Phase::FullTask, method, k, seed);
        r.grasp = Some(g.success);
        r.failure = g.failure;
        r.durations.grasp = Some(g.time);
        r.search_waypoints = g.search_waypoints;
        if let (true, Some(est)) = (g.success, g.estimate) {
            let yaw = wrap_angle(handle_yaw(&est) - nominal_yaw);
            let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
            let o = open_attempt(pipe, &g.placement.model, &plan.rotated(&rot))?;
            r.open = Some(o.success);
            r.success = o.success;
            r.failure = o.failure;
            r.durations.open = Some(o.time);
            r.contact_switches = o.switches;
        }
        Ok(r)
    })
}

/// Absolute yaw errors (degrees) of `method`'s estimator on `count` views
/// around the demonstrated grasp with the gripper turned by up to 90 degrees.
/// Views where the target is not detected are skipped.
pub fn yaw_error_study(
    pipe: &FixturePipeline,
    method: Method,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let grasp = pipe.nominal_grasp();
    let scene = SceneSpec::for_mechanism(&pipe.model, &pipe.model.initial_q())?;
    let cam = &pipe.camera;
    let est = pipe.estimator(method);
    let errs: Vec<Option<f64>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            let yaw = rng.random_range(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2);
            let r = rng.random_range(0.0..0.08);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let h = rng.random_range(0.15..0.35);
            let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * grasp.rotation;
            let ee = Pose::new(
                rot,
                grasp.translation + Vector3::new(r * phi.cos(), r * phi.sin(), h),
            );
            let truth = yaw_of_grasp(&relative_pose(&ee, &grasp)).ok()?;
            let img = render_scene(&scene, cam, &cam.camera_pose(&ee));
            let det = detect_target(&img, &pipe.hue, cam);
            let g = estimate_grasp_pose(&det, &img, cam, est).ok()?;
            Some(wrap_angle(g.yaw - truth).abs().to_degrees())
        })
        .collect();
    Ok(errs.into_iter().flatten().collect())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
