use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::detect::Detection;
use super::PerceptionError;
use crate::Pose;

pub const N_SCAN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub waypoints: usize,
    /// Radial growth: waypoint k sits `spacing * sqrt(k)` from the start, m.
    pub spacing: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            waypoints: N_SCAN,
            spacing: 0.06,
        }
    }
}

/// Expanding spiral of end-effector poses at the start pose's height and
/// orientation (golden-angle spacing).
pub fn spiral_waypoints(start: &Pose, params: &SearchParams) -> Vec<Pose> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (1..=params.waypoints)
        .map(|k| {
            let r = params.spacing * (k as f64).sqrt();
            let a = golden * k as f64;
            start.with_translation(start.translation + Vector3::new(r * a.cos(), r * a.sin(), 0.0))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Waypoints visited, the last one being where the target was found.
    pub visited: Vec<Pose>,
    pub detection: Detection,
}

/// Visits spiral waypoints until `look` reports a detection. A target that
/// is already visible yields no waypoints.
pub fn search_behavior<F: FnMut(&Pose) -> Detection>(
    start: &Pose,
    params: &SearchParams,
    mut look: F,
) -> Result<SearchOutcome, PerceptionError> {
    let det = look(start);
    if !det.is_none() {
        return Ok(SearchOutcome {
            visited: Vec::new(),
            detection: det,
        });
    }
    let mut visited = Vec::new();
    for wp in spiral_waypoints(start, params) {
        visited.push(wp);
        let det = look(&wp);
        if !det.is_none() {
            return Ok(SearchOutcome {
                visited,
                detection: det,
            });
        }
    }
    Err(PerceptionError::SearchExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spiral_expands() {
        let wps = spiral_waypoints(
            &Pose::from_translation(0.0, 0.0, 0.3),
            &SearchParams::default(),
        );
        assert_eq!(wps.len(), N_SCAN);
        let r: Vec<f64> = wps.iter().map(|p| p.translation.xy().norm()).collect();
        assert!(r.windows(2).all(|w| w[1] > w[0]));
        assert!(wps.iter().all(|p| (p.translation.z - 0.3).abs() < 1e-12));
    }

    #[test]
    fn exhausted_when_nothing_found() {
        let out = search_behavior(&Pose::identity(), &SearchParams::default(), |_| {
            Detection::none()
        });
        assert!(matches!(out, Err(PerceptionError::SearchExhausted)));
    }
}
