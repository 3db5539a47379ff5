use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::mechanism::MechanismModel;
use crate::{CameraModel, Pose};

/// Depth reported where a ray hits nothing, m.
pub const FAR_DEPTH: f64 = 10.0;

/// Flat color in HSV: hue in degrees, saturation and value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl Hsv {
    pub fn new(h: f64, s: f64, v: f64) -> Self {
        Self { h, s, v }
    }

    pub fn to_rgb(&self) -> [f64; 3] {
        let h = self.h.rem_euclid(360.0) / 60.0;
        let c = self.v * self.s;
        let x = c * (1.0 - (h % 2.0 - 1.0).abs());
        let m = self.v - c;
        let (r, g, b) = match h as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        [r + m, g + m, b + m]
    }
}

/// HSV of an 8-bit RGB pixel; hue in degrees.
pub fn rgb_to_hsv(p: [u8; 3]) -> Hsv {
    let r = p[0] as f64 / 255.0;
    let g = p[1] as f64 / 255.0;
    let b = p[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d <= 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max <= 0.0 { 0.0 } else { d / max };
    Hsv { h, s, v: max }
}

/// Flat-shaded scene element. Rectangles and discs are horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
        color: Hsv,
    },
    Rect {
        center: Vector3<f64>,
        yaw: f64,
        half: [f64; 2],
        color: Hsv,
    },
    Disc {
        center: Vector3<f64>,
        radius: f64,
        color: Hsv,
    },
}

impl Primitive {
    pub fn color(&self) -> Hsv {
        match self {
            Primitive::Sphere { color, .. }
            | Primitive::Rect { color, .. }
            | Primitive::Disc { color, .. } => *color,
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        match self {
            Primitive::Sphere { center, .. }
            | Primitive::Rect { center, .. }
            | Primitive::Disc { center, .. } => *center,
        }
    }

    /// Ray parameter of the first hit along `o + s d`, if any.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Sphere { center, radius, .. } => {
                let oc = o - center;
                let a = d.dot(d);
                let b = 2.0 * d.dot(&oc);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = (-b - disc.sqrt()) / (2.0 * a);
                (s > 0.0).then_some(s)
            }
            Primitive::Rect {
                center, yaw, half, ..
            } => {
                let s = plane_hit(o, d, center.z)?;
                let p = o + d * s - center;
                let (sn, cs) = yaw.sin_cos();
                let lx = cs * p.x + sn * p.y;
                let ly = -sn * p.x + cs * p.y;
                (lx.abs() <= half[0] && ly.abs() <= half[1]).then_some(s)
            }
            Primitive::Disc { center, radius, .. } => {
                let s = plane_hit(o, d, center.z)?;
                let p = o + d * s - center;
                (p.x * p.x + p.y * p.y <= radius * radius).then_some(s)
            }
        }
    }
}

fn plane_hit(o: &Vector3<f64>, d: &Vector3<f64>, z: f64) -> Option<f64> {
    if d.z.abs() < 1e-12 {
        return None;
    }
    let s = (z - o.z) / d.z;
    (s > 0.0).then_some(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Primitives making up the graspable target.
    pub target: Vec<Primitive>,
    /// Mechanism body and other scene furniture that is not the target.
    #[serde(default)]
    pub body: Vec<Primitive>,
    #[serde(default)]
    pub distractors: Vec<Primitive>,
    pub background: Hsv,
    /// Brightness multiplier.
    pub light: f64,
    /// Additive illumination color, per RGB channel.
    #[serde(default)]
    pub cast: [f64; 3],
}

impl SceneSpec {
    pub fn empty() -> Self {
        Self {
            target: Vec::new(),
            body: Vec::new(),
            distractors: Vec::new(),
            background: Hsv::new(30.0, 0.1, 0.55),
            light: 1.0,
            cast: [0.0; 3],
        }
    }

    /// Scene of `model` at joint coordinates `q`: a colored bar with a darker
    /// end marker at the handle, aligned with the handle's x axis, above the
    /// mechanism body.
    pub fn for_mechanism(model: &MechanismModel, q: &[f64]) -> Result<Self, PerceptionError> {
        let handle = model
            .forward_kinematics(q)
            .map_err(|e| PerceptionError::Scene(e.to_string()))?;
        let a = &model.appearance;
        let yaw = handle_yaw(&handle);
        let w = a.object_width;
        let color = Hsv::new(a.target_hue, a.target_saturation, 0.9);
        let marker = Hsv::new(a.target_hue, a.target_saturation, 0.5);
        let (sn, cs) = yaw.sin_cos();
        let along = Vector3::new(cs, sn, 0.0);
        let mut scene = Self::empty();
        scene.target.push(Primitive::Rect {
            center: handle.translation,
            yaw,
            half: [0.5 * w, 0.2 * w],
            color,
        });
        scene.target.push(Primitive::Rect {
            center: handle.translation + along * (0.375 * w) + Vector3::new(0.0, 0.0, 1e-4),
            yaw,
            half: [0.125 * w, 0.2 * w],
            color: marker,
        });
        let base = model.base_pose;
        let body_yaw = handle_yaw(&base);
        scene.body.push(Primitive::Rect {
            center: Vector3::new(
                handle.translation.x,
                handle.translation.y,
                base.translation.z - 0.01,
            ),
            yaw: body_yaw,
            half: [0.5 * a.body_size[0], 0.5 * a.body_size[1]],
            color: Hsv::new(a.body_hue, 0.5, 0.6),
        });
        Ok(scene)
    }
}

/// Heading of a pose's x axis in the horizontal plane.
pub fn handle_yaw(p: &Pose) -> f64 {
    let x = p.rotate(&Vector3::x());
    x.y.atan2(x.x)
}

/// 8-bit RGB raster with an optional depth channel (camera z, m).
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
    pub depth: Option<Vec<f32>>,
}

impl RenderedImage {
    pub fn pixel(&self, u: u32, v: u32) -> [u8; 3] {
        let i = 3 * (v * self.width + u) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn depth_at(&self, u: u32, v: u32) -> Option<f64> {
        self.depth
            .as_ref()
            .map(|d| d[(v * self.width + u) as usize] as f64)
    }

    pub fn gray(&self) -> Vec<f32> {
        self.rgb
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
            .collect()
    }

    /// Writes the color raster as PNG and, if present, depth as a 16-bit PNG
    /// in millimeters next to it (`<stem>_depth.png`).
    pub fn save(&self, path: &Path) -> Result<(), PerceptionError> {
        let img: ImageBuffer<Rgb<u8>, _> =
            ImageBuffer::from_raw(self.width, self.height, self.rgb.clone())
                .ok_or_else(|| PerceptionError::Format("raster size mismatch".into()))?;
        img.save(path)
            .map_err(|e| PerceptionError::Io(e.to_string()))?;
        if let Some(depth) = &self.depth {
            let mm: Vec<u16> = depth
                .iter()
                .map(|d| (d * 1000.0).round().clamp(0.0, u16::MAX as f32) as u16)
                .collect();
            let img: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(self.width, self.height, mm)
                .ok_or_else(|| PerceptionError::Format("depth size mismatch".into()))?;
            img.save(depth_path(path))
                .map_err(|e| PerceptionError::Io(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let img = image::open(path)
            .map_err(|e| PerceptionError::Io(e.to_string()))?
            .to_rgb8();
        let (width, height) = img.dimensions();
        let dp = depth_path(path);
        let depth = if dp.exists() {
            let d = image::open(&dp)
                .map_err(|e| PerceptionError::Io(e.to_string()))?
                .to_luma16();
            Some(
                d.into_raw()
                    .into_iter()
                    .map(|mm| mm as f32 / 1000.0)
                    .collect(),
            )
        } else {
            None
        };
        Ok(Self {
            width,
            height,
            rgb: img.into_raw(),
            depth,
        })
    }
}

fn depth_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    path.with_file_name(format!("{stem}_depth.png"))
}

/// Ray casts `scene` from a camera at `cam_pose` (base frame), one ray per
/// pixel center.
pub fn render_scene(scene: &SceneSpec, cam: &CameraModel, cam_pose: &Pose) -> RenderedImage {
    let (w, h) = (cam.width, cam.height);
    let mut rgb = Vec::with_capacity((w * h * 3) as usize);
    let mut depth = Vec::with_capacity((w * h) as usize);
    let o = cam_pose.translation;
    let prims: Vec<&Primitive> = scene
        .target
        .iter()
        .chain(&scene.body)
        .chain(&scene.distractors)
        .collect();
    let shade = |c: [f64; 3]| -> [u8; 3] {
        let mut out = [0u8; 3];
        for k in 0..3 {
            out[k] = ((c[k] * scene.light + scene.cast[k]).clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        out
    };
    let bg = shade(scene.background.to_rgb());
    for v in 0..h {
        for u in 0..w {
            let ray = cam.pixel_ray(u as f64 + 0.5, v as f64 + 0.5);
            let d = cam_pose.rotate(&ray);
            let mut best: Option<(f64, &Primitive)> = None;
            for p in &prims {
                if let Some(s) = p.intersect(&o, &d) {
                    if best.is_none_or(|(b, _)| s < b) {
                        best = Some((s, p));
                    }
                }
            }
            match best {
                Some((s, p)) => {
                    rgb.extend_from_slice(&shade(p.color().to_rgb()));
                    depth.push(s as f32);
                }
                None => {
                    rgb.extend_from_slice(&bg);
                    depth.push(FAR_DEPTH as f32);
                }
            }
        }
    }
    RenderedImage {
        width: w,
        height: h,
        rgb,
        depth: Some(depth),
    }
}
