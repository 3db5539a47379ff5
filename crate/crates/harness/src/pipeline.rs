use std::sync::Arc;

use serde::{Deserialize, Serialize};

use lfd_core::demo_pipeline::{
    augment_contact, generate_funnel_poses, generate_grasp_labels, scripted_demo,
    segment_trajectory, AugmentParams, AugmentedPlan, Dataset, DemoTrajectory,
    ForceHypothesisResult, FunnelPlan, ScriptedDemoParams, Segment, SegmentationParams,
};
use lfd_core::mechanism::{load_fixture, Episode, MechanismModel, SimParams};
use lfd_core::perception::{
    default_camera, fit_hue_model, fit_yaw_estimator, HueModel, SceneSpec, YawEstimator,
};
use lfd_core::{CameraModel, Pose};

use crate::config::Method;
use crate::HarnessError;

/// Everything learned from one fixture's single demonstration.
#[derive(Debug, Clone)]
pub struct FixturePipeline {
    pub fixture: String,
    pub model: Arc<MechanismModel>,
    pub camera: CameraModel,
    pub demo: DemoTrajectory,
    pub segments: Vec<Segment>,
    pub plan: AugmentedPlan,
    pub hypotheses: Vec<ForceHypothesisResult>,
    pub hue: HueModel,
    pub augmented: YawEstimator,
    pub demo_only: YawEstimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub funnel: FunnelPlan,
    pub segmentation: SegmentationParams,
    pub augment: AugmentParams,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            funnel: FunnelPlan::default_funnel(),
            segmentation: SegmentationParams::default(),
            augment: AugmentParams::default(),
        }
    }
}

impl FixturePipeline {
    pub fn prepare(fixture: &str, opts: &PipelineOptions) -> Result<Self, HarnessError> {
        let model = Arc::new(load_fixture(fixture)?);
        let demo = scripted_demo(&model, &ScriptedDemoParams::default())?;
        let segments = segment_trajectory(&demo, &opts.segmentation)?;
        let mut ep = Episode::new(model.clone(), SimParams::default())?;
        let end = demo.positions().last().copied().unwrap_or_default();
        let out = augment_contact(&mut ep, &segments, &end, &opts.augment)?;

        let camera = default_camera();
        let grasp = demo.grasp_pose();
        let scene = SceneSpec::for_mechanism(&model, &model.initial_q())?;
        let width = model.appearance.object_width;
        let demo_poses: Vec<Pose> = demo.approach().iter().map(|s| s.ee_pose).collect();
        let demo_views = generate_grasp_labels(&demo_poses, &grasp, &camera, width, &scene);
        let hue = fit_target_hue(&demo_views, &grasp, &camera)?;
        let funnel_views = generate_grasp_labels(
            &generate_funnel_poses(&grasp, &opts.funnel),
            &grasp,
            &camera,
            width,
            &scene,
        );
        let augmented = fit_yaw_estimator(&funnel_views, &hue, &camera)?;
        let demo_only = fit_yaw_estimator(&demo_views, &hue, &camera)?;
        Ok(Self {
            fixture: fixture.to_string(),
            model,
            camera,
            demo,
            segments,
            plan: out.plan,
            hypotheses: out.hypotheses,
            hue,
            augmented,
            demo_only,
        })
    }

    pub fn estimator(&self, method: Method) -> &YawEstimator {
        match method {
            Method::Augmented => &self.augmented,
            Method::DemoOnly => &self.demo_only,
        }
    }

    pub fn nominal_grasp(&self) -> Pose {
        self.demo.grasp_pose()
    }
}

/// Hue model from the first demonstration view, where the whole grasp
/// square is visible.
pub fn fit_target_hue(
    views: &Dataset,
    grasp: &Pose,
    cam: &CameraModel,
) -> Result<HueModel, HarnessError> {
    let v = views
        .views
        .first()
        .ok_or(lfd_core::perception::PerceptionError::EmptyDataset)?;
    let depth = cam
        .camera_pose(&v.ee_pose)
        .inverse()
        .transform_point(&grasp.translation)
        .z;
    Ok(fit_hue_model(&v.image, &v.label.bbox, depth, cam)?)
}
