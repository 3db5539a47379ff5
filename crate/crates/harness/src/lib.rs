//! Experiment suites, success tables, the `mechanism-lfd` command line and
//! the local HTTP service used by the demonstration studio.

pub mod api;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod trials;

use std::collections::BTreeMap;

use thiserror::Error;

use lfd_core::control::ControlError;
use lfd_core::demo_pipeline::DemoError;
use lfd_core::mechanism::MechanismError;
use lfd_core::perception::PerceptionError;

pub use config::{derive_seed, Method, Phase, PoseChange, ScenarioConfig, SuiteConfig};
pub use pipeline::{FixturePipeline, PipelineOptions};
pub use report::{report_table, ExperimentReport};
pub use trials::{
    run_full_task, run_grasp_trials, run_open_trials, run_open_trials_with_plan, yaw_error_study,
    FailureKind, TrialResult,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Prepares every fixture the suite mentions, then runs each scenario with
/// both methods. Results come back in suite order.
pub fn run_suite(
    suite: &SuiteConfig,
    opts: &PipelineOptions,
) -> Result<Vec<TrialResult>, HarnessError> {
    suite.validate()?;
    let mut pipes: BTreeMap<String, FixturePipeline> = BTreeMap::new();
    for c in suite
        .grasp
        .iter()
        .chain(&suite.open)
        .chain(&suite.full_task)
    {
        if !pipes.contains_key(&c.fixture) {
            pipes.insert(
                c.fixture.clone(),
                FixturePipeline::prepare(&c.fixture, opts)?,
            );
        }
    }
    let mut results = Vec::new();
    for method in [Method::Augmented, Method::DemoOnly] {
        for c in &suite.grasp {
            results.extend(run_grasp_trials(&pipes[&c.fixture], c, method)?);
        }
        for c in &suite.open {
            results.extend(run_open_trials(&pipes[&c.fixture], c, method)?);
        }
        for c in &suite.full_task {
            results.extend(run_full_task(&pipes[&c.fixture], c, method)?);
        }
    }
    Ok(results)
}
