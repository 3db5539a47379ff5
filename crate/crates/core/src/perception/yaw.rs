use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detect::{detect_target, HueModel};
use super::scene::RenderedImage;
use super::PerceptionError;
use crate::demo_pipeline::Dataset;
use crate::{CameraModel, PixelBox};

/// Side of the square crop fed to the yaw estimator, pixels.
pub const CROP_SIZE: usize = 32;
/// Crop side relative to the larger box side.
pub const CROP_MARGIN: f64 = 1.2;
pub const NEIGHBORS: usize = 3;

/// Normalized grayscale crop: a square around the box center with side
/// `CROP_MARGIN` times the larger box side, bilinearly resampled to
/// `CROP_SIZE`², mean-subtracted and scaled to unit norm.
pub fn crop_features(img: &RenderedImage, bbox: &PixelBox) -> Vec<f32> {
    let gray = img.gray();
    let (w, h) = (img.width as usize, img.height as usize);
    let c = bbox.center();
    let side = CROP_MARGIN * bbox.width().max(bbox.height());
    let at = |x: f64, y: f64| -> f32 {
        let x = (x - 0.5).clamp(0.0, (w - 1) as f64);
        let y = (y - 0.5).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
        let g = |u: usize, v: usize| gray[v * w + u];
        (g(x0, y0) * (1.0 - fx) + g(x1, y0) * fx) * (1.0 - fy)
            + (g(x0, y1) * (1.0 - fx) + g(x1, y1) * fx) * fy
    };
    let mut out = Vec::with_capacity(CROP_SIZE * CROP_SIZE);
    for j in 0..CROP_SIZE {
        for i in 0..CROP_SIZE {
            let x = c.x + side * ((i as f64 + 0.5) / CROP_SIZE as f64 - 0.5);
            let y = c.y + side * ((j as f64 + 0.5) / CROP_SIZE as f64 - 0.5);
            out.push(at(x, y));
        }
    }
    let mean = out.iter().sum::<f32>() / out.len() as f32;
    out.iter_mut().for_each(|v| *v -= mean);
    let norm = out.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 1e-6 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YawPrediction {
    /// Estimated yaw, rad.
    pub yaw: f64,
    /// Mean resultant length of the neighbours' yaws, in [0, 1].
    pub agreement: f64,
}

/// Nearest-neighbour yaw regressor over crop features.
#[derive(Debug, Clone, PartialEq)]
pub struct YawEstimator {
    features: Vec<Vec<f32>>,
    yaws: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    crop: usize,
    count: usize,
    yaws: Vec<f64>,
}

const FORMAT: &str = "lfd-yaw-knn-v1";

impl YawEstimator {
    pub fn fit(samples: Vec<(Vec<f32>, f64)>) -> Result<Self, PerceptionError> {
        if samples.is_empty() {
            return Err(PerceptionError::EmptyDataset);
        }
        if samples
            .iter()
            .any(|(f, _)| f.len() != CROP_SIZE * CROP_SIZE)
        {
            return Err(PerceptionError::Format("feature length".into()));
        }
        let (features, yaws) = samples.into_iter().unzip();
        Ok(Self { features, yaws })
    }

    pub fn len(&self) -> usize {
        self.yaws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.yaws.is_empty()
    }

    /// Circular mean of the `NEIGHBORS` nearest training yaws.
    pub fn predict(&self, feature: &[f32]) -> YawPrediction {
        let mut best: Vec<(f32, usize)> = Vec::with_capacity(NEIGHBORS + 1);
        for (i, f) in self.features.iter().enumerate() {
            let d: f32 = f.iter().zip(feature).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.len() < NEIGHBORS || d < best[best.len() - 1].0 {
                let pos = best.partition_point(|&(bd, bi)| (bd, bi) < (d, i));
                best.insert(pos, (d, i));
                best.truncate(NEIGHBORS);
            }
        }
        // An exact match answers by itself.
        if best.first().is_some_and(|b| b.0 <= 1e-9) {
            best.retain(|b| b.0 <= 1e-9);
        }
        let (s, c) = best.iter().fold((0.0, 0.0), |(s, c), &(_, i)| {
            (s + self.yaws[i].sin(), c + self.yaws[i].cos())
        });
        let n = best.len() as f64;
        YawPrediction {
            yaw: s.atan2(c),
            agreement: (s * s + c * c).sqrt() / n,
        }
    }

    /// One JSON header line followed by the features as little-endian f32.
    pub fn save(&self, path: &Path) -> Result<(), PerceptionError> {
        let io = |e: std::io::Error| PerceptionError::Io(e.to_string());
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let header = Header {
            format: FORMAT.into(),
            crop: CROP_SIZE,
            count: self.len(),
            yaws: self.yaws.clone(),
        };
        serde_json::to_writer(&mut f, &header)
            .map_err(|e| PerceptionError::Format(e.to_string()))?;
        f.write_all(b"\n").map_err(io)?;
        for feat in &self.features {
            for v in feat {
                f.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        f.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let io = |e: std::io::Error| PerceptionError::Io(e.to_string());
        let mut r = BufReader::new(std::fs::File::open(path).map_err(io)?);
        let mut line = String::new();
        r.read_line(&mut line).map_err(io)?;
        let header: Header =
            serde_json::from_str(&line).map_err(|e| PerceptionError::Format(e.to_string()))?;
        if header.format != FORMAT || header.crop != CROP_SIZE || header.yaws.len() != header.count
        {
            return Err(PerceptionError::Format("unsupported estimator file".into()));
        }
        let dim = CROP_SIZE * CROP_SIZE;
        let mut buf = vec![0u8; header.count * dim * 4];
        r.read_exact(&mut buf).map_err(io)?;
        let features = buf
            .chunks_exact(dim * 4)
            .map(|c| {
                c.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect()
            })
            .collect();
        Self::fit_raw(features, header.yaws)
    }

    fn fit_raw(features: Vec<Vec<f32>>, yaws: Vec<f64>) -> Result<Self, PerceptionError> {
        if yaws.is_empty() {
            return Err(PerceptionError::EmptyDataset);
        }
        Ok(Self { features, yaws })
    }
}

/// Indexes every view of `dataset` by the crop around its detected target
/// (the label box when detection fails), labeled with the grasp yaw.
pub fn fit_yaw_estimator(
    dataset: &Dataset,
    model: &HueModel,
    cam: &CameraModel,
) -> Result<YawEstimator, PerceptionError> {
    let samples = dataset
        .views
        .par_iter()
        .map(|v| {
            let bbox = detect_target(&v.image, model, cam)
                .bbox
                .unwrap_or(v.label.bbox);
            (crop_features(&v.image, &bbox), v.label.yaw)
        })
        .collect();
    YawEstimator::fit(samples)
}
