use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::DemoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// 1-based position in the segmentation.
    pub index: usize,
    /// Start position p_i, m.
    pub start: Vector3<f64>,
    /// Unit motion direction.
    pub direction: Vector3<f64>,
    /// Inclusive sample range; consecutive segments share a boundary sample.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    /// Turn angle that opens a new segment, rad.
    pub theta: f64,
    /// Moving-average window, samples.
    pub window: usize,
    /// Minimum segment length, m.
    pub min_length: f64,
    /// Path length over which the incoming direction is measured, m.
    pub stride: f64,
    /// Consecutive over-threshold samples needed to split.
    pub sustain: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            theta: 30f64.to_radians(),
            window: 5,
            min_length: 0.005,
            stride: 0.01,
            sustain: 3,
        }
    }
}

pub fn moving_average(points: &[Vector3<f64>], window: usize) -> Vec<Vector3<f64>> {
    let half = window / 2;
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(n);
            points[a..b].iter().sum::<Vector3<f64>>() / (b - a) as f64
        })
        .collect()
}

fn angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.angle(b)
}

/// Splits a position path into straight-ish segments.
///
/// Positions are smoothed with a centered moving average. Walking the path,
/// the incoming direction at each sample is measured from the sample at least
/// `stride` behind it and compared to the net direction of the open segment;
/// `sustain` consecutive turns beyond `theta` close the segment at the sample
/// farthest from the chord. Short segments and nearly collinear neighbours
/// are merged afterwards.
pub fn segment_path(
    positions: &[Vector3<f64>],
    params: &SegmentationParams,
) -> Result<Vec<Segment>, DemoError> {
    let n = positions.len();
    let length: f64 = positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if n < 2 || length < params.min_length {
        return Err(DemoError::DegenerateTrajectory);
    }
    let smooth = moving_average(positions, params.window.max(1));

    let mut cuts = vec![0usize];
    let mut start = 0usize;
    let mut back = 0usize;
    let mut over = 0usize;
    let mut j = 1usize;
    while j < n {
        while back + 1 < j && (smooth[j] - smooth[back + 1]).norm() >= params.stride {
            back += 1;
        }
        let incoming = smooth[j] - smooth[back];
        let ready = back >= start
            && incoming.norm() >= params.stride
            && (smooth[back] - smooth[start]).norm() >= params.stride;
        if ready && angle(&incoming, &(smooth[back] - smooth[start])) > params.theta {
            over += 1;
        } else {
            over = 0;
        }
        if over >= params.sustain {
            let corner = farthest_from_chord(&smooth, start, j);
            cuts.push(corner);
            start = corner;
            back = corner;
            over = 0;
            j = corner + 1;
            continue;
        }
        j += 1;
    }
    cuts.push(n - 1);
    cuts.dedup();

    let spans: Vec<(usize, usize)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
    let spans = merge_spans(&smooth, spans, params);
    let spans = prune_unexplained(positions, &smooth, spans);
    let mut spans = merge_spans(&smooth, spans, params);
    for k in 1..spans.len() {
        let (a, b) = (spans[k - 1].0, spans[k].1);
        let lo = spans[k].0.saturating_sub(params.window).max(a + 1);
        let hi = (spans[k].0 + params.window).min(b - 1);
        if lo <= hi {
            if let Some(c) = refine_corner(positions, a, b, lo, hi) {
                spans[k - 1].1 = c;
                spans[k].0 = c;
            }
        }
    }
    Ok(spans
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| Segment {
            index: i + 1,
            start: positions[a],
            direction: net_direction(positions, a, b).unwrap_or_else(Vector3::x),
            span: (a, b),
        })
        .collect())
}

fn farthest_from_chord(p: &[Vector3<f64>], a: usize, b: usize) -> usize {
    let chord = p[b] - p[a];
    let Some(u) = chord.try_normalize(1e-12) else {
        return (a + b) / 2;
    };
    let mut best = (a + b) / 2;
    let mut best_d = -1.0;
    for (k, x) in p.iter().enumerate().take(b).skip(a + 1) {
        let r = x - p[a];
        let d = (r - u * u.dot(&r)).norm();
        if d > best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Index in `lo..=hi` farthest from the raw chord `a -> b`.
fn refine_corner(p: &[Vector3<f64>], a: usize, b: usize, lo: usize, hi: usize) -> Option<usize> {
    let u = (p[b] - p[a]).try_normalize(1e-12)?;
    (lo..=hi).max_by(|&i, &j| {
        let d = |k: usize| {
            let r = p[k] - p[a];
            (r - u * u.dot(&r)).norm()
        };
        d(i).total_cmp(&d(j))
    })
}

/// A segment's samples may sit within this multiple of the path noise of a
/// fit without it before it is dropped.
const PRUNE_RATIO: f64 = 1.5;

fn segment_distance(x: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 {
        ((x - a).dot(&d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x - (a + d * t)).norm()
}

/// Drops segments that a fit without them explains to within the noise of
/// the raw path, measured as the RMS gap between raw and smoothed samples.
fn prune_unexplained(
    raw: &[Vector3<f64>],
    smooth: &[Vector3<f64>],
    mut spans: Vec<(usize, usize)>,
) -> Vec<(usize, usize)> {
    let noise = (raw
        .iter()
        .zip(smooth)
        .map(|(r, s)| (r - s).norm_squared())
        .sum::<f64>()
        / raw.len() as f64)
        .sqrt();
    while spans.len() >= 2 {
        let mut best: Option<(f64, usize, usize)> = None;
        for k in 0..spans.len() {
            let (lo, hi) = spans[k];
            let (a, c) = (
                spans[k.saturating_sub(1)].0,
                spans[(k + 1).min(spans.len() - 1)].1,
            );
            let corner = if k == 0 || k + 1 == spans.len() {
                if k == 0 {
                    lo
                } else {
                    hi
                }
            } else {
                match refine_corner(smooth, a, c, lo, hi) {
                    Some(c) => c,
                    None => continue,
                }
            };
            let fit = |x: &Vector3<f64>| {
                segment_distance(x, &smooth[a], &smooth[corner]).min(segment_distance(
                    x,
                    &smooth[corner],
                    &smooth[c],
                ))
            };
            let rms = (raw[lo..=hi].iter().map(|x| fit(x).powi(2)).sum::<f64>()
                / (hi - lo + 1) as f64)
                .sqrt();
            if rms <= PRUNE_RATIO * noise && best.is_none_or(|b| rms < b.0) {
                best = Some((rms, k, corner));
            }
        }
        let Some((_, k, corner)) = best else { break };
        if k == 0 {
            spans[1].0 = spans[0].0;
        } else if k + 1 == spans.len() {
            spans[k - 1].1 = spans[k].1;
        } else {
            spans[k - 1].1 = corner;
            spans[k + 1].0 = corner;
        }
        spans.remove(k);
    }
    spans
}

fn net_direction(p: &[Vector3<f64>], a: usize, b: usize) -> Option<Vector3<f64>> {
    (p[b] - p[a]).try_normalize(1e-12)
}

fn merge_spans(
    p: &[Vector3<f64>],
    mut spans: Vec<(usize, usize)>,
    params: &SegmentationParams,
) -> Vec<(usize, usize)> {
    // Short pieces join the neighbour whose direction they match best.
    loop {
        if spans.len() < 2 {
            break;
        }
        let Some(k) = spans
            .iter()
            .position(|&(a, b)| (p[b] - p[a]).norm() < params.min_length)
        else {
            break;
        };
        let target = if k == 0 {
            1
        } else if k + 1 == spans.len() {
            k - 1
        } else {
            let d = net_direction(p, spans[k].0, spans[k].1);
            let score = |o: usize| match (d, net_direction(p, spans[o].0, spans[o].1)) {
                (Some(x), Some(y)) => x.dot(&y),
                _ => 0.0,
            };
            if score(k - 1) >= score(k + 1) {
                k - 1
            } else {
                k + 1
            }
        };
        let (lo, hi) = if target < k { (target, k) } else { (k, target) };
        spans[lo] = (spans[lo].0, spans[hi].1);
        spans.remove(hi);
    }
    // Neighbours that turned out collinear are one segment.
    let mut k = 0;
    while k + 1 < spans.len() {
        let a = net_direction(p, spans[k].0, spans[k].1);
        let b = net_direction(p, spans[k + 1].0, spans[k + 1].1);
        match (a, b) {
            (Some(a), Some(b)) if angle(&a, &b) <= params.theta => {
                spans[k] = (spans[k].0, spans[k + 1].1);
                spans.remove(k + 1);
            }
            _ => k += 1,
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(from: Vector3<f64>, to: Vector3<f64>, n: usize) -> Vec<Vector3<f64>> {
        (0..=n)
            .map(|k| from.lerp(&to, k as f64 / n as f64))
            .collect()
    }

    #[test]
    fn straight_line_is_one_segment() {
        let p = line(Vector3::zeros(), Vector3::new(0.06, 0.0, 0.08), 100);
        let s = segment_path(&p, &SegmentationParams::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].direction - Vector3::new(0.6, 0.0, 0.8)).norm() < 1e-9);
        assert_eq!(s[0].span, (0, 100));
    }

    #[test]
    fn l_path_has_two_segments() {
        let mut p = line(Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0), 100);
        p.extend(
            line(
                Vector3::new(0.1, 0.0, 0.0),
                Vector3::new(0.1, 0.0, 0.1),
                100,
            )
            .into_iter()
            .skip(1),
        );
        let s = segment_path(&p, &SegmentationParams::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].direction.angle(&Vector3::x()) < 1f64.to_radians());
        assert!(s[1].direction.angle(&Vector3::z()) < 1f64.to_radians());
        assert_eq!(s[0].span.1, s[1].span.0);
        assert!((s[1].start - Vector3::new(0.1, 0.0, 0.0)).norm() < 2e-3);
    }

    #[test]
    fn too_short_is_degenerate() {
        let p = line(Vector3::zeros(), Vector3::new(0.003, 0.0, 0.0), 10);
        assert!(matches!(
            segment_path(&p, &SegmentationParams::default()),
            Err(DemoError::DegenerateTrajectory)
        ));
    }

    #[test]
    fn short_hook_merges() {
        let mut p = line(Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0), 100);
        p.extend(
            line(
                Vector3::new(0.1, 0.0, 0.0),
                Vector3::new(0.1, 0.0, 0.003),
                3,
            )
            .into_iter()
            .skip(1),
        );
        let s = segment_path(&p, &SegmentationParams::default()).unwrap();
        assert_eq!(s.len(), 1);
    }
}
