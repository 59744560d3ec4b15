//! Files written by `simulate` and `compare`.

use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use tdma_sync::protocol::{action_log_row, ACTION_LOG_HEADER};
use tdma_sync::sim::{Comparison, NodeSummary, Trace};

use crate::HarnessError;

pub const SUMMARY_FORMAT: &str = "tdma-sync-summary/1";
pub const COMPARISON_FORMAT: &str = "tdma-sync-comparison/1";
pub const ACTION_LOG_VERSION: &str = "# tdma-sync actions v1";

#[derive(Serialize)]
struct SummaryFile<'a> {
    format: &'a str,
    scenario: &'a str,
    policy: &'a str,
    nodes: &'a [NodeSummary],
}

#[derive(Serialize)]
struct ComparisonFile<'a> {
    format: &'a str,
    #[serde(flatten)]
    comparison: &'a Comparison,
}

/// Paths written for one simulation.
#[derive(Debug, Clone)]
pub struct SimulationFiles {
    pub trace_csv: PathBuf,
    pub summary_json: PathBuf,
    pub action_logs: Vec<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Action log of one node: one row per received sync message.
pub fn action_log(trace: &Trace, node_id: u32) -> Option<String> {
    let node = trace.node(node_id)?;
    let mut out = format!("{ACTION_LOG_VERSION}\n{ACTION_LOG_HEADER}\n");
    for r in &node.records {
        if let Some(action) = &r.action {
            out.push_str(&action_log_row(r.period, action, r.calib_steps));
            out.push('\n');
        }
    }
    Some(out)
}

pub fn summary_json(trace: &Trace, summaries: &[NodeSummary]) -> Result<String, HarnessError> {
    let file = SummaryFile {
        format: SUMMARY_FORMAT,
        scenario: &trace.scenario,
        policy: &trace.policy,
        nodes: summaries,
    };
    serde_json::to_string_pretty(&file).map_err(|e| HarnessError::Runtime(e.to_string()))
}

pub fn comparison_json(cmp: &Comparison) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(&ComparisonFile { format: COMPARISON_FORMAT, comparison: cmp })
        .map_err(|e| HarnessError::Runtime(e.to_string()))
}

pub fn write_simulation(
    dir: &Path,
    trace: &Trace,
    summaries: &[NodeSummary],
) -> Result<SimulationFiles, HarnessError> {
    fs::create_dir_all(dir)
        .map_err(|e| HarnessError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let stem = &trace.scenario;
    let trace_csv = dir.join(format!("{stem}.trace.csv"));
    write(&trace_csv, &trace.to_csv())?;
    let summary_path = dir.join(format!("{stem}.summary.json"));
    write(&summary_path, &summary_json(trace, summaries)?)?;
    let mut action_logs = Vec::new();
    for node in &trace.nodes {
        let path = dir.join(format!("{stem}.node{}.actions.csv", node.node_id));
        write(&path, &action_log(trace, node.node_id).unwrap_or_default())?;
        action_logs.push(path);
    }
    Ok(SimulationFiles { trace_csv, summary_json: summary_path, action_logs })
}

pub fn write_comparison(dir: &Path, name: &str, cmp: &Comparison) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir)
        .map_err(|e| HarnessError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{name}.comparison.json"));
    write(&path, &comparison_json(cmp)?)?;
    Ok(path)
}
