use serde::{Deserialize, Serialize};

use super::scene::{rgb_to_hsv, RenderedImage};
use super::PerceptionError;
use crate::{CameraModel, PixelBox};

/// Color statistics of the target, fitted from one labeled view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HueModel {
    /// Target hue, degrees.
    pub hue: f64,
    /// Accepted deviation from `hue`, degrees.
    pub tolerance: f64,
    pub min_saturation: f64,
    pub min_value: f64,
    /// Target area seen face-on, m², for the detection score.
    pub expected_area: f64,
    /// Components smaller than this fraction of the image are ignored.
    pub min_fraction: f64,
}

impl HueModel {
    pub fn accepts(&self, p: [u8; 3]) -> bool {
        let c = rgb_to_hsv(p);
        c.s >= self.min_saturation
            && c.v >= self.min_value
            && hue_distance(c.h, self.hue) <= self.tolerance
    }
}

/// Angular distance between two hues in degrees, in [0, 180].
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

const DEPTH_BAND: f64 = 0.01;

/// Fits a hue model to the saturated pixels inside `bbox` of a view whose
/// target lies at `depth`.
pub fn fit_hue_model(
    img: &RenderedImage,
    bbox: &PixelBox,
    depth: f64,
    cam: &CameraModel,
) -> Result<HueModel, PerceptionError> {
    let u1 = bbox.u1.floor().max(0.0) as u32;
    let v1 = bbox.v1.floor().max(0.0) as u32;
    let u2 = (bbox.u2.ceil() as u32).min(img.width);
    let v2 = (bbox.v2.ceil() as u32).min(img.height);
    let mut hsv = Vec::new();
    for v in v1..v2 {
        for u in u1..u2 {
            let c = rgb_to_hsv(img.pixel(u, v));
            let near = img
                .depth_at(u, v)
                .is_none_or(|d| (d - depth).abs() <= DEPTH_BAND);
            if near && c.s >= 0.25 && c.v >= 0.2 {
                hsv.push(c);
            }
        }
    }
    if hsv.is_empty() {
        return Err(PerceptionError::NoDetection);
    }
    // Dominant hue: the fullest 10 degree bin, refined by the circular mean
    // of the pixels near it.
    let mut bins = [0usize; 36];
    for p in &hsv {
        bins[(p.h.rem_euclid(360.0) / 10.0) as usize % 36] += 1;
    }
    let mode = (0..36)
        .max_by_key(|&k| (bins[k], std::cmp::Reverse(k)))
        .unwrap_or(0) as f64
        * 10.0
        + 5.0;
    let (s, c) =
        hsv.iter()
            .filter(|p| hue_distance(p.h, mode) <= 15.0)
            .fold((0.0, 0.0), |(s, c), p| {
                let r = p.h.to_radians();
                (s + r.sin(), c + r.cos())
            });
    let hue = s.atan2(c).to_degrees().rem_euclid(360.0);
    let mut model = HueModel {
        hue,
        tolerance: 15.0,
        min_saturation: 0.25,
        min_value: 0.2,
        expected_area: 0.0,
        min_fraction: 0.001,
    };
    let count = (v1..v2)
        .flat_map(|v| (u1..u2).map(move |u| (u, v)))
        .filter(|&(u, v)| model.accepts(img.pixel(u, v)))
        .count();
    model.expected_area = count as f64 * depth * depth / (cam.fx * cam.fy);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: Option<PixelBox>,
    pub score: f64,
    /// Pixels in the detected component.
    pub pixels: usize,
    /// Median depth over the component's pixels, m.
    pub depth: Option<f64>,
}

impl Detection {
    pub fn none() -> Self {
        Self {
            bbox: None,
            score: 0.0,
            pixels: 0,
            depth: None,
        }
    }

    pub fn is_none(&self) -> bool {
        self.bbox.is_none()
    }
}

/// Largest 4-connected component of target-colored pixels.
pub fn detect_target(img: &RenderedImage, model: &HueModel, cam: &CameraModel) -> Detection {
    let (w, h) = (img.width as usize, img.height as usize);
    let mask: Vec<bool> = img
        .rgb
        .chunks_exact(3)
        .map(|p| model.accepts([p[0], p[1], p[2]]))
        .collect();
    let mut label = vec![0u32; w * h];
    let mut best: Option<(usize, [usize; 4], f64)> = None;
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut size = 0usize;
        let mut bounds = [usize::MAX, usize::MAX, 0, 0];
        let mut depths = Vec::new();
        while let Some(i) = stack.pop() {
            size += 1;
            let (u, v) = (i % w, i / w);
            bounds = [
                bounds[0].min(u),
                bounds[1].min(v),
                bounds[2].max(u),
                bounds[3].max(v),
            ];
            if let Some(d) = &img.depth {
                depths.push(d[i]);
            }
            let mut visit = |j: usize| {
                if mask[j] && label[j] == 0 {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        if best.as_ref().is_none_or(|b| size > b.0) {
            best = Some((size, bounds, median(&mut depths).unwrap_or(0.0)));
        }
    }
    let Some((size, b, depth)) = best else {
        return Detection::none();
    };
    if (size as f64) < model.min_fraction * (w * h) as f64 {
        return Detection::none();
    }
    let bbox = PixelBox::new(
        b[0] as f64,
        b[1] as f64,
        (b[2] + 1) as f64,
        (b[3] + 1) as f64,
    )
    .expect("non-empty component");
    let score = if model.expected_area > 0.0 && depth > 0.0 {
        let expected = model.expected_area * cam.fx * cam.fy / (depth * depth);
        (size as f64 / expected).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Detection {
        bbox: Some(bbox),
        score,
        pixels: size,
        depth: (depth > 0.0).then_some(depth),
    }
}

pub(crate) fn median(v: &mut [f32]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Some(*m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hue_distance_wraps() {
        assert_eq!(hue_distance(350.0, 10.0), 20.0);
        assert_eq!(hue_distance(10.0, 350.0), 20.0);
        assert_eq!(hue_distance(0.0, 180.0), 180.0);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut []), None);
    }
}
