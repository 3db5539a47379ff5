use serde::{Deserialize, Serialize};

use lfd_core::mechanism::FIXTURE_IDS;

use crate::HarnessError;

/// Which half of a trial pair a result belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Funnel-augmented estimator, hypothesis-tested contact forces.
    Augmented,
    /// Estimator from the demonstration views only, forces read off the
    /// demonstration's wrench channel.
    DemoOnly,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Augmented => "w/ augmentation",
            Method::DemoOnly => "w/o augmentation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Grasp,
    Open,
    FullTask,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Grasp, Phase::Open, Phase::FullTask];

    pub fn label(&self) -> &'static str {
        match self {
            Phase::Grasp => "Grasp",
            Phase::Open => "Open",
            Phase::FullTask => "Full-Task",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseChange {
    pub enabled: bool,
    /// Gripper-to-grasp distance that triggers the change, m.
    pub trigger_distance: f64,
    /// Maximum displacement per horizontal axis, m.
    pub translation: f64,
    /// Maximum yaw change, rad.
    pub yaw: f64,
}

impl Default for PoseChange {
    fn default() -> Self {
        Self {
            enabled: true,
            trigger_distance: 0.15,
            translation: 0.03,
            yaw: 30f64.to_radians(),
        }
    }
}

impl PoseChange {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

/// One trial setup: fixture, randomization and disturbances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub fixture: String,
    /// Maximum initial displacement per horizontal axis, m.
    pub translation_range: f64,
    /// Maximum initial yaw about the mechanism base, rad.
    pub yaw_range: f64,
    #[serde(default = "PoseChange::disabled")]
    pub pose_change: PoseChange,
    #[serde(default)]
    pub distractors: usize,
    /// Start the approach far enough away that the target is out of view.
    #[serde(default)]
    pub start_out_of_view: bool,
    /// Render the target with a low, per-trial random saturation.
    #[serde(default)]
    pub degraded_detection: bool,
    pub trials: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(fixture: &str, trials: usize, seed: u64) -> Self {
        Self {
            fixture: fixture.to_string(),
            translation_range: 0.05,
            yaw_range: 0.5,
            pose_change: PoseChange::disabled(),
            distractors: 0,
            start_out_of_view: false,
            degraded_detection: false,
            trials,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(format!("{}: {m}", self.fixture)));
        if !FIXTURE_IDS.contains(&self.fixture.as_str()) {
            return bad("unknown fixture");
        }
        if !(self.translation_range >= 0.0 && self.translation_range <= 0.2) {
            return bad("translation_range must be in [0, 0.2] m");
        }
        if !(self.yaw_range >= 0.0 && self.yaw_range <= std::f64::consts::FRAC_PI_2) {
            return bad("yaw_range must be in [0, pi/2] rad");
        }
        let pc = &self.pose_change;
        if pc.enabled && !(pc.trigger_distance > 0.0 && pc.translation >= 0.0 && pc.yaw >= 0.0) {
            return bad("pose_change needs a positive trigger distance and non-negative ranges");
        }
        if self.distractors > 8 {
            return bad("at most 8 distractors");
        }
        Ok(())
    }
}

/// Experiment suite file: a seed plus the scenarios of each phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub grasp: Vec<ScenarioConfig>,
    #[serde(default)]
    pub open: Vec<ScenarioConfig>,
    #[serde(default)]
    pub full_task: Vec<ScenarioConfig>,
}

impl SuiteConfig {
    /// Three locks, ten trials per cell, both methods, across the grasp,
    /// open and full-task phases.
    pub fn table1(seed: u64) -> Self {
        let locks = ["lock1", "lock2", "lock3"];
        let per = |phase: u64, k: usize, f: &dyn Fn(&mut ScenarioConfig)| -> ScenarioConfig {
            let mut c = ScenarioConfig::new(locks[k], 10, derive_seed(seed, phase * 16 + k as u64));
            f(&mut c);
            c
        };
        Self {
            name: "table1".into(),
            seed,
            grasp: (0..3)
                .map(|k| {
                    per(0, k, &|c| {
                        c.yaw_range = std::f64::consts::FRAC_PI_2;
                        c.pose_change = PoseChange::default();
                        c.distractors = 2;
                    })
                })
                .collect(),
            open: (0..3).map(|k| per(1, k, &|_| {})).collect(),
            full_task: (0..3)
                .map(|k| {
                    per(2, k, &|c| {
                        c.yaw_range = std::f64::consts::FRAC_PI_2;
                        c.pose_change = PoseChange::default();
                        c.distractors = 2;
                        c.degraded_detection = k == 2;
                    })
                })
                .collect(),
        }
    }

    pub fn from_json(doc: &str) -> Result<Self, HarnessError> {
        let suite: Self =
            serde_json::from_str(doc).map_err(|e| HarnessError::Config(e.to_string()))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.grasp
            .iter()
            .chain(&self.open)
            .chain(&self.full_task)
            .try_for_each(|c| c.validate())
    }
}

/// Independent seed for stream `k` of a master seed (splitmix64).
pub fn derive_seed(master: u64, k: u64) -> u64 {
    let mut z = master.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
