use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    grasp_square_to_bbox, relative_pose, yaw_of_grasp, GraspLabel, SQUARE_MARGIN,
};
use crate::perception::{render_scene, PerceptionError, RenderedImage, SceneSpec};
use crate::{CameraModel, Pose};

/// One rendered view with its grasp label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledView {
    pub ee_pose: Pose,
    pub image: RenderedImage,
    pub label: GraspLabel<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub views: Vec<LabeledView>,
    /// Views dropped because the grasp square left the image.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexRecord {
    image: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    yaw: f64,
    relative_pose: Pose,
    ee_pose: Pose,
}

/// Renders `scene` from every end-effector pose and labels each view with
/// the grasp square's pixel box and the grasp yaw relative to the view.
pub fn generate_grasp_labels(
    poses: &[Pose],
    grasp: &Pose,
    cam: &CameraModel,
    object_width: f64,
    scene: &SceneSpec,
) -> Dataset {
    let side = object_width * SQUARE_MARGIN;
    let views: Vec<Option<LabeledView>> = poses
        .par_iter()
        .map(|ee| {
            let proj = grasp_square_to_bbox(cam, ee, grasp, side).ok()?;
            if proj.out_of_view {
                return None;
            }
            let rel = relative_pose(ee, grasp);
            let yaw = yaw_of_grasp(&rel).ok()?;
            let image = render_scene(scene, cam, &cam.camera_pose(ee));
            Some(LabeledView {
                ee_pose: *ee,
                image,
                label: GraspLabel {
                    bbox: proj.bbox,
                    yaw,
                    relative_pose: rel,
                },
            })
        })
        .collect();
    let dropped = views.iter().filter(|v| v.is_none()).count();
    Dataset {
        views: views.into_iter().flatten().collect(),
        dropped,
    }
}

impl Dataset {
    /// Writes `index.jsonl` plus one PNG (and depth PNG) per view.
    pub fn save(&self, dir: &Path) -> Result<(), PerceptionError> {
        let io = |e: std::io::Error| PerceptionError::Io(e.to_string());
        std::fs::create_dir_all(dir.join("images")).map_err(io)?;
        let mut index =
            std::io::BufWriter::new(std::fs::File::create(dir.join("index.jsonl")).map_err(io)?);
        for (k, v) in self.views.iter().enumerate() {
            let name = format!("images/{k:05}.png");
            v.image.save(&dir.join(&name))?;
            let b = v.label.bbox;
            let rec = IndexRecord {
                image: name,
                bbox: [b.u1, b.v1, b.u2, b.v2],
                yaw: v.label.yaw,
                relative_pose: v.label.relative_pose,
                ee_pose: v.ee_pose,
            };
            serde_json::to_writer(&mut index, &rec)
                .map_err(|e| PerceptionError::Format(e.to_string()))?;
            index.write_all(b"\n").map_err(io)?;
        }
        index.flush().map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, PerceptionError> {
        let io = |e: std::io::Error| PerceptionError::Io(e.to_string());
        let f = std::fs::File::open(dir.join("index.jsonl")).map_err(io)?;
        let mut views = Vec::new();
        for line in std::io::BufReader::new(f).lines() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: IndexRecord =
                serde_json::from_str(&line).map_err(|e| PerceptionError::Format(e.to_string()))?;
            let bbox = crate::PixelBox::new(rec.bbox[0], rec.bbox[1], rec.bbox[2], rec.bbox[3])
                .map_err(|e| PerceptionError::Format(e.to_string()))?;
            views.push(LabeledView {
                ee_pose: rec.ee_pose,
                image: RenderedImage::load(&dir.join(&rec.image))?,
                label: GraspLabel {
                    bbox,
                    yaw: rec.yaw,
                    relative_pose: rec.relative_pose,
                },
            });
        }
        Ok(Self { views, dropped: 0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo_pipeline::{generate_funnel_poses, FunnelPlan};
    use crate::mechanism::load_fixture;
    use crate::perception::default_camera;

    #[test]
    fn looking_away_is_dropped() {
        let m = load_fixture("lock1").unwrap();
        let grasp = m.forward_kinematics(&m.initial_q()).unwrap();
        let scene = SceneSpec::for_mechanism(&m, &m.initial_q()).unwrap();
        let cam = default_camera();
        let above =
            grasp.with_translation(grasp.translation + nalgebra::Vector3::new(0.0, 0.0, 0.2));
        let away =
            above.with_translation(above.translation + nalgebra::Vector3::new(0.5, 0.0, 0.0));
        let ds = generate_grasp_labels(&[above, away], &grasp, &cam, 0.04, &scene);
        assert_eq!(ds.views.len(), 1);
        assert_eq!(ds.dropped, 1);
        assert!(ds.views[0].label.yaw.abs() < 1e-9);
    }

    #[test]
    fn save_load_round_trip() {
        let m = load_fixture("lock2").unwrap();
        let grasp = m.forward_kinematics(&m.initial_q()).unwrap();
        let scene = SceneSpec::for_mechanism(&m, &m.initial_q()).unwrap();
        let plan = FunnelPlan {
            radii: vec![0.03],
            heights: vec![0.2],
            positions_per_ring: 3,
            yaw_offsets: vec![-0.5, 0.5],
        };
        let ds = generate_grasp_labels(
            &generate_funnel_poses(&grasp, &plan),
            &grasp,
            &default_camera(),
            0.036,
            &scene,
        );
        assert_eq!(ds.views.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.views.len(), 6);
        for (a, b) in ds.views.iter().zip(&back.views) {
            assert_eq!(a.image.rgb, b.image.rgb);
            assert!((a.label.yaw - b.label.yaw).abs() < 1e-12);
        }
    }
}
