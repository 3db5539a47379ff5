use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Signed base-frame directions tracked by the blocked flags.
pub const BLOCKED_AXES: [Vector3<f64>; 6] = [
    Vector3::new(1.0, 0.0, 0.0),
    Vector3::new(-1.0, 0.0, 0.0),
    Vector3::new(0.0, 1.0, 0.0),
    Vector3::new(0.0, -1.0, 0.0),
    Vector3::new(0.0, 0.0, 1.0),
    Vector3::new(0.0, 0.0, -1.0),
];

/// Default number of consecutive steps before a contact change is accepted.
pub const DEFAULT_DEBOUNCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactChange {
    Gained,
    Lost,
    #[default]
    None,
}

impl ContactChange {
    /// Raw change between two flag sets; a newly blocked axis wins over a freed one.
    pub fn between(prev: &[bool; 6], cur: &[bool; 6]) -> Self {
        let gained = prev.iter().zip(cur).any(|(p, c)| !p && *c);
        let lost = prev.iter().zip(cur).any(|(p, c)| *p && !c);
        if gained {
            ContactChange::Gained
        } else if lost {
            ContactChange::Lost
        } else {
            ContactChange::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactReport {
    /// Force and torque the end-effector exerts on the mechanism, `[f; tau]`.
    pub wrench: Vector6<f64>,
    /// `[+x, -x, +y, -y, +z, -z]`: the command along that axis was not realized.
    pub blocked: [bool; 6],
    /// Undebounced change relative to the previous step.
    pub contact_change: ContactChange,
    /// Realized handle twist `[v; w]`.
    pub realized: Vector6<f64>,
}

impl ContactReport {
    pub fn force(&self) -> Vector3<f64> {
        self.wrench.fixed_rows::<3>(0).into_owned()
    }
}

/// Debounced contact event with the axes that switched.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactEvent {
    pub change: ContactChange,
    pub gained: Vec<usize>,
    pub lost: Vec<usize>,
}

/// Accepts a flag flip only after it persisted for `h_c` consecutive reports.
#[derive(Debug, Clone)]
pub struct ContactDebouncer {
    h_c: usize,
    stable: [bool; 6],
    streak: [usize; 6],
}

impl ContactDebouncer {
    pub fn new(h_c: usize) -> Self {
        Self::with_stable(h_c, [false; 6])
    }

    pub fn with_stable(h_c: usize, stable: [bool; 6]) -> Self {
        Self {
            h_c: h_c.max(1),
            stable,
            streak: [0; 6],
        }
    }

    pub fn stable(&self) -> &[bool; 6] {
        &self.stable
    }

    pub fn update(&mut self, report: &ContactReport) -> ContactEvent {
        let mut ev = ContactEvent::default();
        for k in 0..6 {
            if report.blocked[k] != self.stable[k] {
                self.streak[k] += 1;
                if self.streak[k] >= self.h_c {
                    self.stable[k] = report.blocked[k];
                    self.streak[k] = 0;
                    if report.blocked[k] {
                        ev.gained.push(k);
                    } else {
                        ev.lost.push(k);
                    }
                }
            } else {
                self.streak[k] = 0;
            }
        }
        ev.change = if !ev.gained.is_empty() {
            ContactChange::Gained
        } else if !ev.lost.is_empty() {
            ContactChange::Lost
        } else {
            ContactChange::None
        };
        ev
    }
}

/// Debounced change of the flags in `window` relative to the accepted set `prev`.
///
/// `Gained` when some axis free in `prev` is blocked in each of the last `h_c`
/// reports, `Lost` symmetrically, `None` otherwise (including windows shorter
/// than `h_c`).
pub fn detect_contact_change(
    prev: &ContactReport,
    window: &[ContactReport],
    h_c: usize,
) -> ContactChange {
    let h_c = h_c.max(1);
    if window.len() < h_c {
        return ContactChange::None;
    }
    let tail = &window[window.len() - h_c..];
    let persistent = |k: usize, value: bool| tail.iter().all(|r| r.blocked[k] == value);
    let gained = (0..6).any(|k| !prev.blocked[k] && persistent(k, true));
    let lost = (0..6).any(|k| prev.blocked[k] && persistent(k, false));
    if gained {
        ContactChange::Gained
    } else if lost {
        ContactChange::Lost
    } else {
        ContactChange::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(blocked: [bool; 6]) -> ContactReport {
        ContactReport {
            blocked,
            ..Default::default()
        }
    }

    const FREE: [bool; 6] = [false; 6];
    const PX: [bool; 6] = [true, false, false, false, false, false];

    #[test]
    fn identical_sets_no_change() {
        let w = vec![rep(PX); 5];
        assert_eq!(detect_contact_change(&rep(PX), &w, 3), ContactChange::None);
    }

    #[test]
    fn sustained_block_is_gained() {
        let w = vec![rep(FREE), rep(PX), rep(PX), rep(PX)];
        assert_eq!(
            detect_contact_change(&rep(FREE), &w, 3),
            ContactChange::Gained
        );
        let w = vec![rep(FREE), rep(FREE), rep(FREE)];
        assert_eq!(detect_contact_change(&rep(PX), &w, 3), ContactChange::Lost);
    }

    #[test]
    fn flicker_is_ignored() {
        let w = vec![rep(FREE), rep(PX), rep(FREE)];
        assert_eq!(
            detect_contact_change(&rep(FREE), &w, 3),
            ContactChange::None
        );
        let mut d = ContactDebouncer::new(3);
        for r in [FREE, PX, FREE, PX, PX, FREE] {
            assert_eq!(d.update(&rep(r)).change, ContactChange::None);
        }
    }

    #[test]
    fn debouncer_reports_axes_once() {
        let mut d = ContactDebouncer::new(3);
        assert_eq!(d.update(&rep(PX)).change, ContactChange::None);
        assert_eq!(d.update(&rep(PX)).change, ContactChange::None);
        let ev = d.update(&rep(PX));
        assert_eq!(ev.change, ContactChange::Gained);
        assert_eq!(ev.gained, vec![0]);
        assert_eq!(d.update(&rep(PX)).change, ContactChange::None);
    }
}
