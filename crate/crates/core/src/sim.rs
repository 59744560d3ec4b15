//! Deterministic period-stepped simulation of one master and N nodes.
//!
//! The master is the time reference: at true time `i * T` it stamps `i * T`
//! (in ticks) and the message reaches every node `t_x` later. Each node
//! advances its own [`SimClock`], may lose the message (independent
//! Bernoulli draw per node per period), and otherwise feeds the protocol and
//! applies the resulting calibration and RTC write.

use crate::airtime::{AirtimeError, FrameConfig, RadioParams};
use crate::clock::{
    ticks_to_millis, ClockError, DriftProfile, SimClock, Ticks, UpdateStrategy, TICKS_PER_SECOND,
};
use crate::protocol::{
    on_sync_message, ActionKind, CorrectionPolicy, ProtocolError, SyncAction, SyncConfig, SyncState,
};
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::io;
use thiserror::Error;

/// Consecutive periods required to declare steady state.
pub const DEFAULT_STEADY_WINDOW: usize = 20;

/// First line of every trace CSV.
pub const TRACE_CSV_VERSION: &str = "# tdma-sync trace v1";

pub const TRACE_CSV_HEADER: &str = "node_id,period,true_time_s,received,action,e_s_ticks,delta_t_ticks,cycles,correction_ppm,direction,calib_steps,effective_ppm,node_ticks_rx,node_ticks_after,true_offset_ms";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("cannot compare scenarios: {0}")]
    Compare(String),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Airtime(#[from] AirtimeError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Protocol settings of a scenario. The period comes from the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSettings {
    pub margin_ticks: Ticks,
    pub t_x_ticks: Ticks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_cycles: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u32,
    pub drift: DriftProfile,
    #[serde(default)]
    pub update_strategy: UpdateStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration_periods: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub loss_probability: f64,
    #[serde(default = "default_window")]
    pub steady_window: usize,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(default)]
    pub frame: FrameConfig,
    pub sync: SyncSettings,
    pub policy: CorrectionPolicy,
    pub nodes: Vec<NodeSpec>,
}

fn default_window() -> usize {
    DEFAULT_STEADY_WINDOW
}

impl Scenario {
    pub fn sync_config(&self) -> SyncConfig {
        SyncConfig {
            margin_ticks: self.sync.margin_ticks,
            t_x_ticks: self.sync.t_x_ticks,
            period_s: self.frame.period_s,
            freeze_cycles: self.sync.freeze_cycles,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Scenario(msg));
        if self.duration_periods == 0 {
            return bad("duration_periods must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return bad(format!("loss_probability must lie in [0, 1), got {}", self.loss_probability));
        }
        if self.steady_window == 0 {
            return bad("steady_window must be positive".into());
        }
        if self.nodes.is_empty() {
            return bad("at least one node is required".into());
        }
        let mut ids = HashSet::new();
        for node in &self.nodes {
            if !ids.insert(node.id) {
                return bad(format!("duplicate node id {}", node.id));
            }
            node.drift.validate()?;
            node.update_strategy.validate()?;
        }
        if self.nodes.len() > self.frame.node_count as usize {
            return bad(format!(
                "{} nodes exceed the {} slots of the frame",
                self.nodes.len(),
                self.frame.node_count
            ));
        }
        self.radio.validate()?;
        self.frame.validate()?;
        self.policy.validate()?;
        self.sync_config().validate(Some(self.frame.guard_per_side_ms()))?;
        Ok(())
    }
}

/// One period of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub period: u64,
    /// True time at which the sync message arrives.
    pub true_time_s: f64,
    pub received: bool,
    /// `None` when the message was lost.
    pub action: Option<SyncAction>,
    pub calib_steps: i32,
    pub effective_ppm: f64,
    /// Reported node time at reception, before any write.
    pub node_ticks_rx: u64,
    /// Reported node time right after the RTC update.
    pub node_ticks_after: u64,
    /// Ground-truth offset of the node clock from the master reference, before any write.
    pub true_offset_ms: f64,
}

impl Record {
    pub fn e_s(&self) -> Option<i64> {
        self.action.and_then(|a| a.e_s())
    }

    pub fn kind(&self) -> Option<ActionKind> {
        self.action.map(|a| a.kind())
    }

    /// The RTC was rewritten after the first synchronization.
    pub fn is_update(&self) -> bool {
        matches!(self.kind(), Some(ActionKind::Calibrate | ActionKind::Frozen))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    pub node_id: u32,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: String,
    pub policy: String,
    pub margin_ticks: u64,
    pub period_s: f64,
    pub steady_window: usize,
    pub nodes: Vec<NodeTrace>,
}

struct NodeRun {
    clock: SimClock,
    state: SyncState,
    trace: NodeTrace,
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<Trace, SimError> {
    scenario.validate()?;
    let config = scenario.sync_config();
    let period_s = scenario.frame.period_s;
    let t_x_s = config.t_x_ticks.0 as f64 / TICKS_PER_SECOND as f64;
    let mut rng = SplitMix64::new(scenario.rng_seed);

    let mut nodes = scenario
        .nodes
        .iter()
        .map(|spec| {
            let clock = SimClock::new(spec.drift.clone(), spec.update_strategy)?;
            let state = SyncState::new(*clock.calibration());
            Ok(NodeRun {
                clock,
                state,
                trace: NodeTrace {
                    node_id: spec.id,
                    records: Vec::with_capacity(scenario.duration_periods as usize),
                },
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    for period in 0..scenario.duration_periods {
        let rx_time = period as f64 * period_s + t_x_s;
        let t_master = Ticks::from_secs_round(period as f64 * period_s);
        for node in nodes.iter_mut() {
            let dt = rx_time - node.clock.true_time_s();
            node.clock.advance(dt.max(0.0))?;
            let received = rng.next_f64() >= scenario.loss_probability;

            let node_ticks_rx = node.clock.now().0;
            let true_offset_ms =
                (node.clock.continuous_ticks() - rx_time * TICKS_PER_SECOND as f64) * 1000.0
                    / TICKS_PER_SECOND as f64;

            let action = if received {
                let (next, action) =
                    on_sync_message(&node.state, &config, &scenario.policy, t_master, Ticks(node_ticks_rx))?;
                node.state = next;
                node.clock.set_calibration(next.calib);
                if let Some(t_set) = action.t_set() {
                    node.clock.write_timestamp(t_set);
                }
                Some(action)
            } else {
                None
            };

            let calib = node.clock.calibration();
            node.trace.records.push(Record {
                period,
                true_time_s: rx_time,
                received,
                action,
                calib_steps: calib.steps(),
                effective_ppm: calib.effective_ppm().value(),
                node_ticks_rx,
                node_ticks_after: node.clock.now().0,
                true_offset_ms,
            });
        }
    }

    Ok(Trace {
        scenario: scenario.name.clone(),
        policy: scenario.policy.label(),
        margin_ticks: config.margin_ticks.0,
        period_s,
        steady_window: scenario.steady_window,
        nodes: nodes.into_iter().map(|n| n.trace).collect(),
    })
}

fn push_opt<T: fmt::Display>(out: &mut String, v: Option<T>) {
    out.push(',');
    if let Some(v) = v {
        let _ = write!(out, "{v}");
    }
}

impl Trace {
    /// Serializes the trace as CSV, one row per (node, period).
    pub fn to_csv(&self) -> String {
        let rows: usize = self.nodes.iter().map(|n| n.records.len()).sum();
        let mut out = String::with_capacity(64 * (rows + 2));
        out.push_str(TRACE_CSV_VERSION);
        out.push('\n');
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for node in &self.nodes {
            for r in &node.records {
                let a = r.action.as_ref();
                let _ = write!(out, "{},{},{},{}", node.node_id, r.period, r.true_time_s, r.received as u8);
                push_opt(&mut out, a.map(|a| a.kind()));
                push_opt(&mut out, r.e_s());
                push_opt(&mut out, a.and_then(|a| a.delta_t()));
                push_opt(&mut out, a.and_then(|a| a.cycles()));
                let corr = a.and_then(|a| a.correction());
                push_opt(&mut out, corr.map(|(c, _)| c.value()));
                push_opt(&mut out, corr.map(|(_, d)| d.sign()));
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{}",
                    r.calib_steps, r.effective_ppm, r.node_ticks_rx, r.node_ticks_after, r.true_offset_ms
                );
            }
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn node(&self, id: u32) -> Option<&NodeTrace> {
        self.nodes.iter().find(|n| n.node_id == id)
    }
}

/// Statistics of one node's trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Periods with a measured error (received, after the first sync).
    pub samples: usize,
    pub mean_abs_e_s_ms: f64,
    /// Population standard deviation of |e_s|.
    pub std_e_s_ms: f64,
    pub max_abs_e_s_ms: f64,
    pub calibrate_events: usize,
    pub rtc_updates: usize,
    pub periods_to_steady: Option<u64>,
    pub steady_delta_t_cycles: Option<f64>,
    pub calib_oscillation_ppm: Option<f64>,
    pub max_abs_e_s_after_steady_ms: Option<f64>,
    pub final_effective_ppm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: u32,
    /// `None` when the node never measured an error.
    pub summary: Option<Summary>,
}

/// Index of the first received record that opens `window` consecutive
/// measured periods with `|e_s| <= limit`.
pub fn steady_start(records: &[Record], limit: u64, window: usize) -> Option<usize> {
    let measured: Vec<(usize, i64)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.e_s().map(|e| (i, e)))
        .collect();
    let mut run = 0usize;
    for (k, &(_, e)) in measured.iter().enumerate() {
        if e.unsigned_abs() <= limit {
            run += 1;
            if run == window {
                return Some(measured[k + 1 - window].0);
            }
        } else {
            run = 0;
        }
    }
    None
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

/// Summarizes a single node trace.
pub fn summarize_node(records: &[Record], margin_ticks: u64, window: usize) -> Option<Summary> {
    let abs_ms: Vec<f64> = records
        .iter()
        .filter_map(|r| r.e_s())
        .map(|e| ticks_to_millis(e.abs()))
        .collect();
    if abs_ms.is_empty() {
        return None;
    }
    let n = abs_ms.len() as f64;
    let mean = abs_ms.iter().sum::<f64>() / n;
    let var = abs_ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;

    let start = steady_start(records, margin_ticks + 1, window);
    let after = start.map(|s| &records[s..]);
    let steady_cycles = after.and_then(|rs| {
        median(rs.iter().filter_map(|r| r.action.and_then(|a| a.cycles())).map(f64::from).collect())
    });
    let oscillation = after.map(|rs| {
        let (lo, hi) = rs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.effective_ppm), hi.max(r.effective_ppm))
        });
        hi - lo
    });
    let max_after = after.map(|rs| {
        rs.iter().filter_map(|r| r.e_s()).map(|e| ticks_to_millis(e.abs())).fold(0.0, f64::max)
    });

    Some(Summary {
        samples: abs_ms.len(),
        mean_abs_e_s_ms: mean,
        std_e_s_ms: var.sqrt(),
        max_abs_e_s_ms: abs_ms.iter().copied().fold(0.0, f64::max),
        calibrate_events: records.iter().filter(|r| r.kind() == Some(ActionKind::Calibrate)).count(),
        rtc_updates: records.iter().filter(|r| r.is_update()).count(),
        periods_to_steady: start.map(|s| records[s].period),
        steady_delta_t_cycles: steady_cycles,
        calib_oscillation_ppm: oscillation,
        max_abs_e_s_after_steady_ms: max_after,
        final_effective_ppm: records.last().map_or(0.0, |r| r.effective_ppm),
    })
}

/// Summarizes every node of a trace.
pub fn summarize(trace: &Trace) -> Vec<NodeSummary> {
    trace
        .nodes
        .iter()
        .map(|n| NodeSummary {
            node_id: n.node_id,
            summary: summarize_node(&n.records, trace.margin_ticks, trace.steady_window),
        })
        .collect()
}

/// Renders summaries as `key = value` lines.
pub fn summary_text(trace: &Trace, summaries: &[NodeSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario = {}", trace.scenario);
    let _ = writeln!(out, "policy = {}", trace.policy);
    for ns in summaries {
        let p = format!("node.{}", ns.node_id);
        let Some(s) = &ns.summary else {
            let _ = writeln!(out, "{p}.summary = empty");
            continue;
        };
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let _ = writeln!(out, "{p}.samples = {}", s.samples);
        let _ = writeln!(out, "{p}.mean_abs_e_s_ms = {:.4}", s.mean_abs_e_s_ms);
        let _ = writeln!(out, "{p}.std_e_s_ms = {:.4}", s.std_e_s_ms);
        let _ = writeln!(out, "{p}.max_abs_e_s_ms = {:.4}", s.max_abs_e_s_ms);
        let _ = writeln!(out, "{p}.calibrate_events = {}", s.calibrate_events);
        let _ = writeln!(out, "{p}.rtc_updates = {}", s.rtc_updates);
        let _ = writeln!(out, "{p}.periods_to_steady = {}", opt(s.periods_to_steady.map(|v| v.to_string())));
        let _ = writeln!(out, "{p}.steady_delta_t_cycles = {}", opt(s.steady_delta_t_cycles.map(|v| v.to_string())));
        let _ = writeln!(out, "{p}.calib_oscillation_ppm = {}", opt(s.calib_oscillation_ppm.map(|v| format!("{v:.3}"))));
        let _ = writeln!(out, "{p}.final_effective_ppm = {:.3}", s.final_effective_ppm);
    }
    out
}

/// One line of a policy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub policy: String,
    pub node_id: u32,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub duration_periods: u64,
    pub rows: Vec<ComparisonRow>,
}

/// Runs scenarios that share duration and node drift, in parallel, and aligns
/// their summaries.
pub fn compare(scenarios: &[Scenario]) -> Result<Comparison, SimError> {
    let Some(first) = scenarios.first() else {
        return Err(SimError::Compare("no scenarios given".into()));
    };
    for s in &scenarios[1..] {
        if s.duration_periods != first.duration_periods {
            return Err(SimError::Compare(format!(
                "'{}' runs {} periods but '{}' runs {}",
                s.name, s.duration_periods, first.name, first.duration_periods
            )));
        }
        let drifts = |sc: &Scenario| sc.nodes.iter().map(|n| n.drift.clone()).collect::<Vec<_>>();
        if drifts(s) != drifts(first) {
            return Err(SimError::Compare(format!(
                "'{}' and '{}' have different node drift",
                s.name, first.name
            )));
        }
    }

    let traces: Vec<Result<Trace, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
    });

    let mut rows = Vec::new();
    for trace in traces {
        let trace = trace?;
        for ns in summarize(&trace) {
            rows.push(ComparisonRow {
                scenario: trace.scenario.clone(),
                policy: trace.policy.clone(),
                node_id: ns.node_id,
                summary: ns.summary,
            });
        }
    }
    Ok(Comparison { duration_periods: first.duration_periods, rows })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header = [
            "scenario", "policy", "node", "mean|e_s|ms", "std_ms", "to_steady", "steady_cycles",
            "osc_ppm", "calib_events",
        ];
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let s = r.summary.as_ref();
                let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
                vec![
                    r.scenario.clone(),
                    r.policy.clone(),
                    r.node_id.to_string(),
                    opt(s.map(|s| format!("{:.3}", s.mean_abs_e_s_ms))),
                    opt(s.map(|s| format!("{:.3}", s.std_e_s_ms))),
                    opt(s.and_then(|s| s.periods_to_steady).map(|v| v.to_string())),
                    opt(s.and_then(|s| s.steady_delta_t_cycles).map(|v| format!("{v:.1}"))),
                    opt(s.and_then(|s| s.calib_oscillation_ppm).map(|v| format!("{v:.3}"))),
                    opt(s.map(|s| s.calibrate_events.to_string())),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| cells.iter().map(|c| c[i].len()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |f: &mut fmt::Formatter<'_>, row: &[&str]| -> fmt::Result {
            let parts: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            writeln!(f, "{}", parts.join("  ").trim_end())
        };
        line(f, &header)?;
        for c in &cells {
            let refs: Vec<&str> = c.iter().map(String::as_str).collect();
            line(f, &refs)?;
        }
        Ok(())
    }
}
