use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::config::{Method, Phase, SuiteConfig};
use crate::trials::TrialResult;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub fixture: String,
    pub trials: usize,
    pub successes: usize,
    /// `successes / trials * 100`.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCells {
    pub phase: Phase,
    pub cells: Vec<Cell>,
    /// Mean of the fixture percentages.
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub label: String,
    pub phases: Vec<PhaseCells>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub suite: Option<String>,
    pub seed: Option<u64>,
    pub fixtures: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub config: Option<SuiteConfig>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn cell(&self, method: Method, phase: Phase, fixture: &str) -> Option<&Cell> {
        self.rows
            .iter()
            .find(|r| r.method == method)?
            .phases
            .iter()
            .find(|p| p.phase == phase)?
            .cells
            .iter()
            .find(|c| c.fixture == fixture)
    }
}

/// Success grid: one row per method, one column group per phase with a cell
/// per fixture and the average.
pub fn report_table(
    results: &[TrialResult],
    config: Option<&SuiteConfig>,
) -> Result<(ExperimentReport, String), HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::Config("no trial results to report".into()));
    }
    let mut fixtures: Vec<String> = Vec::new();
    for r in results {
        if !fixtures.contains(&r.fixture) {
            fixtures.push(r.fixture.clone());
        }
    }
    let phases: Vec<Phase> = Phase::ALL
        .into_iter()
        .filter(|p| results.iter().any(|r| r.phase == *p))
        .collect();
    let rows = [Method::Augmented, Method::DemoOnly]
        .into_iter()
        .filter(|m| results.iter().any(|r| r.method == *m))
        .map(|method| ReportRow {
            method,
            label: method.label().to_string(),
            phases: phases
                .iter()
                .map(|&phase| {
                    let cells: Vec<Cell> = fixtures
                        .iter()
                        .filter_map(|f| {
                            let mine: Vec<&TrialResult> = results
                                .iter()
                                .filter(|r| {
                                    r.method == method && r.phase == phase && &r.fixture == f
                                })
                                .collect();
                            (!mine.is_empty()).then(|| {
                                let successes = mine.iter().filter(|r| r.success).count();
                                Cell {
                                    fixture: f.clone(),
                                    trials: mine.len(),
                                    successes,
                                    percent: successes as f64 * 100.0 / mine.len() as f64,
                                }
                            })
                        })
                        .collect();
                    let average = if cells.is_empty() {
                        0.0
                    } else {
                        cells.iter().map(|c| c.percent).sum::<f64>() / cells.len() as f64
                    };
                    PhaseCells {
                        phase,
                        cells,
                        average,
                    }
                })
                .collect(),
        })
        .collect();
    let report = ExperimentReport {
        suite: config.map(|c| c.name.clone()),
        seed: config.map(|c| c.seed),
        fixtures,
        rows,
        config: config.cloned(),
    };
    let text = render_table(&report);
    Ok((report, text))
}

pub fn render_table(report: &ExperimentReport) -> String {
    const W: usize = 8;
    let label_w = report
        .rows
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(6)
        .max(6)
        + 2;
    let phases: Vec<Phase> = report
        .rows
        .first()
        .map(|r| r.phases.iter().map(|p| p.phase).collect())
        .unwrap_or_default();
    let group_w = (report.fixtures.len() + 1) * W;
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for p in &phases {
        let _ = write!(out, " | {:group_w$}", p.label());
    }
    out.push('\n');
    let _ = write!(out, "{:label_w$}", "Method");
    for _ in &phases {
        out.push_str(" | ");
        for f in &report.fixtures {
            let _ = write!(out, "{f:>W$}");
        }
        let _ = write!(out, "{:>W$}", "Avg");
    }
    out.push('\n');
    for row in &report.rows {
        let _ = write!(out, "{:label_w$}", row.label);
        for pc in &row.phases {
            out.push_str(" | ");
            for f in &report.fixtures {
                match pc.cells.iter().find(|c| &c.fixture == f) {
                    Some(c) => {
                        let _ = write!(out, "{:>W$}", format!("{:.0}%", c.percent));
                    }
                    None => {
                        let _ = write!(out, "{:>W$}", "-");
                    }
                }
            }
            let _ = write!(out, "{:>W$}", format!("{:.0}%", pc.average));
        }
        out.push('\n');
    }
    out
}
