//! Node-side synchronization and online self-calibration.
//!
//! Every period the master broadcasts its timestamp. A node compares the
//! timestamp (advanced by the constant `t_x`) with its own clock. Errors
//! inside the margin are ignored. Larger errors trigger a calibration change
//! whose size depends on how many periods have passed since the clock was
//! last rewritten, and whose sign follows the error. The clock is then
//! rewritten with the master's time.

use crate::airtime::{time_on_air_ceil_ms, AirtimeError, RadioParams};
use crate::clock::{CalibrationRegister, ClockError, Direction, Ppm, Ticks, TICKS_PER_SECOND};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Payload length of the master's synchronization frame.
pub const DEFAULT_SYNC_PAYLOAD_BYTES: usize = 255;

/// Default dead-band, 2 ms rounded to ticks.
pub const DEFAULT_MARGIN_TICKS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("sync message out of order: local time {t_new} precedes last update {t_old}")]
    OutOfOrder { t_new: u64, t_old: u64 },
    #[error("elapsed time since last update must be positive, got {0} ticks")]
    NonPositiveDelta(i64),
    #[error("invalid correction policy: {0}")]
    Policy(String),
    #[error("invalid sync configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Airtime(#[from] AirtimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncConfig {
    /// Dead-band s_m.
    pub margin_ticks: Ticks,
    /// Lumped preparation + airtime + elaboration delay.
    pub t_x_ticks: Ticks,
    pub period_s: f64,
    /// Leave the calibration untouched once this many cycles pass between updates.
    pub freeze_cycles: Option<u32>,
}

impl SyncConfig {
    pub fn new(period_s: f64, t_x_ticks: Ticks) -> Self {
        SyncConfig {
            margin_ticks: Ticks(DEFAULT_MARGIN_TICKS),
            t_x_ticks,
            period_s,
            freeze_cycles: None,
        }
    }

    /// Checks the margin against the per-side guard band.
    pub fn validate(&self, guard_per_side_ms: Option<f64>) -> Result<(), ProtocolError> {
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return Err(ProtocolError::Config(format!("period must be positive, got {}", self.period_s)));
        }
        if let Some(guard) = guard_per_side_ms {
            if self.margin_ticks.as_millis() >= guard {
                return Err(ProtocolError::Config(format!(
                    "margin {} ms must be smaller than the per-side guard band {} ms",
                    self.margin_ticks.as_millis(),
                    guard
                )));
            }
        }
        if self.freeze_cycles == Some(0) {
            return Err(ProtocolError::Config("freeze_cycles must be positive".into()));
        }
        Ok(())
    }
}

/// `t_x` in ticks: the ceil-ms airtime of the sync frame plus local offsets.
pub fn default_t_x(
    radio: &RadioParams,
    sync_payload_bytes: usize,
    prepare_ms: u64,
    elaborate_ms: u64,
) -> Result<Ticks, AirtimeError> {
    let airtime = time_on_air_ceil_ms(radio, sync_payload_bytes)?;
    Ok(Ticks::from_millis_ceil(airtime + prepare_ms + elaborate_ms))
}

/// One row of a gradual correction table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionStep {
    /// Inclusive upper bound on cycles; `None` covers everything above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cycles: Option<u32>,
    pub ppm: Ppm,
}

/// Rule that maps the cycles since the last update to a correction magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrectionPolicy {
    /// Re-synchronize only; the calibration register is never touched.
    Disabled,
    Fixed { ppm: Ppm },
    Gradual { table: Vec<CorrectionStep> },
}

impl Default for CorrectionPolicy {
    fn default() -> Self {
        CorrectionPolicy::gradual_default()
    }
}

impl CorrectionPolicy {
    /// 1-2 cycles: 10 ppm, 3-5: 5 ppm, 6-10: 2 ppm, above: 1 ppm.
    pub fn gradual_default() -> Self {
        let row = |max: Option<u32>, ppm: f64| CorrectionStep { max_cycles: max, ppm: Ppm::from_const(ppm) };
        CorrectionPolicy::Gradual {
            table: vec![
                row(Some(2), 10.0),
                row(Some(5), 5.0),
                row(Some(10), 2.0),
                row(None, 1.0),
            ],
        }
    }

    pub fn fixed(ppm: f64) -> Result<Self, ProtocolError> {
        let p = CorrectionPolicy::Fixed { ppm: Ppm::new(ppm)? };
        p.validate()?;
        Ok(p)
    }

    pub fn fixed_15() -> Self {
        CorrectionPolicy::Fixed { ppm: Ppm::from_const(15.0) }
    }

    pub fn fixed_10() -> Self {
        CorrectionPolicy::Fixed { ppm: Ppm::from_const(10.0) }
    }

    pub fn fixed_1() -> Self {
        CorrectionPolicy::Fixed { ppm: Ppm::from_const(1.0) }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match self {
            CorrectionPolicy::Disabled => Ok(()),
            CorrectionPolicy::Fixed { ppm } => {
                if ppm.value() <= 0.0 {
                    return Err(ProtocolError::Policy("fixed correction must be positive".into()));
                }
                Ok(())
            }
            CorrectionPolicy::Gradual { table } => {
                let Some((last, body)) = table.split_last() else {
                    return Err(ProtocolError::Policy("gradual table is empty".into()));
                };
                if last.max_cycles.is_some() {
                    return Err(ProtocolError::Policy(
                        "last gradual row must be open-ended (no max_cycles)".into(),
                    ));
                }
                let mut prev_max = 0;
                for row in body {
                    let Some(max) = row.max_cycles else {
                        return Err(ProtocolError::Policy("only the last row may be open-ended".into()));
                    };
                    if max <= prev_max {
                        return Err(ProtocolError::Policy("max_cycles must be strictly increasing from 1".into()));
                    }
                    prev_max = max;
                }
                if table.iter().any(|r| r.ppm.value() <= 0.0) {
                    return Err(ProtocolError::Policy("corrections must be positive".into()));
                }
                if table.windows(2).any(|w| w[1].ppm.value() >= w[0].ppm.value()) {
                    return Err(ProtocolError::Policy(
                        "corrections must strictly decrease as cycles grow".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Short label used in tables, e.g. `gradual`, `fixed-15ppm`.
    pub fn label(&self) -> String {
        match self {
            CorrectionPolicy::Disabled => "disabled".into(),
            CorrectionPolicy::Fixed { ppm } => format!("fixed-{}ppm", ppm.value()),
            CorrectionPolicy::Gradual { .. } => "gradual".into(),
        }
    }
}

/// Correction magnitude for the given cycle count.
pub fn lookup_correction(policy: &CorrectionPolicy, cycles: u32) -> Ppm {
    match policy {
        CorrectionPolicy::Disabled => Ppm::ZERO,
        CorrectionPolicy::Fixed { ppm } => *ppm,
        CorrectionPolicy::Gradual { table } => table
            .iter()
            .find(|row| row.max_cycles.is_none_or(|max| cycles <= max))
            .or(table.last())
            .map_or(Ppm::ZERO, |row| row.ppm),
    }
}

/// `e_s = t_sync - t_new`. Negative when the node runs ahead of the master.
pub fn compute_error(t_sync: Ticks, t_new: Ticks) -> i64 {
    t_sync.signed_sub(t_new)
}

/// Number of synchronization periods spanned by `delta_t`, rounded, at least 1.
pub fn cycles_since_update(delta_t: i64, period_s: f64) -> Result<u32, ProtocolError> {
    if delta_t <= 0 {
        return Err(ProtocolError::NonPositiveDelta(delta_t));
    }
    let secs = delta_t as f64 / TICKS_PER_SECOND as f64;
    Ok(((secs / period_s).round() as u32).max(1))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncState {
    /// Local time at the last RTC update; `None` before the first sync.
    pub t_old: Option<Ticks>,
    pub calib: CalibrationRegister,
}

impl SyncState {
    pub fn new(calib: CalibrationRegister) -> Self {
        SyncState { t_old: None, calib }
    }

    pub fn synced_once(&self) -> bool {
        self.t_old.is_some()
    }
}

/// What a node does in response to one sync message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncAction {
    NoOp {
        e_s: i64,
    },
    FirstSync {
        t_set: Ticks,
    },
    Calibrate {
        e_s: i64,
        delta_t: i64,
        cycles: u32,
        correction: Ppm,
        direction: Direction,
        clamped: bool,
        t_set: Ticks,
    },
    /// Out of margin, but the calibration is left as it is.
    Frozen {
        e_s: i64,
        delta_t: i64,
        cycles: u32,
        t_set: Ticks,
    },
}

impl SyncAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            SyncAction::NoOp { .. } => ActionKind::NoOp,
            SyncAction::FirstSync { .. } => ActionKind::FirstSync,
            SyncAction::Calibrate { .. } => ActionKind::Calibrate,
            SyncAction::Frozen { .. } => ActionKind::Frozen,
        }
    }

    pub fn e_s(&self) -> Option<i64> {
        match *self {
            SyncAction::NoOp { e_s }
            | SyncAction::Calibrate { e_s, .. }
            | SyncAction::Frozen { e_s, .. } => Some(e_s),
            SyncAction::FirstSync { .. } => None,
        }
    }

    pub fn delta_t(&self) -> Option<i64> {
        match *self {
            SyncAction::Calibrate { delta_t, .. } | SyncAction::Frozen { delta_t, .. } => Some(delta_t),
            _ => None,
        }
    }

    pub fn cycles(&self) -> Option<u32> {
        match *self {
            SyncAction::Calibrate { cycles, .. } | SyncAction::Frozen { cycles, .. } => Some(cycles),
            _ => None,
        }
    }

    /// Timestamp to write into the RTC, if any.
    pub fn t_set(&self) -> Option<Ticks> {
        match *self {
            SyncAction::FirstSync { t_set }
            | SyncAction::Calibrate { t_set, .. }
            | SyncAction::Frozen { t_set, .. } => Some(t_set),
            SyncAction::NoOp { .. } => None,
        }
    }

    pub fn correction(&self) -> Option<(Ppm, Direction)> {
        match *self {
            SyncAction::Calibrate { correction, direction, .. } => Some((correction, direction)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    NoOp,
    FirstSync,
    Calibrate,
    Frozen,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::NoOp => "noop",
            ActionKind::FirstSync => "first_sync",
            ActionKind::Calibrate => "calibrate",
            ActionKind::Frozen => "frozen",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Processes one sync message.
///
/// `t_master` is the master's period-start timestamp and `t_local_at_rx` the
/// node's clock reading at reception.
pub fn on_sync_message(
    state: &SyncState,
    config: &SyncConfig,
    policy: &CorrectionPolicy,
    t_master: Ticks,
    t_local_at_rx: Ticks,
) -> Result<(SyncState, SyncAction), ProtocolError> {
    let t_sync = Ticks(t_master.0 + config.t_x_ticks.0);
    let t_new = t_local_at_rx;

    let Some(t_old) = state.t_old else {
        let next = SyncState { t_old: Some(t_sync), ..*state };
        return Ok((next, SyncAction::FirstSync { t_set: t_sync }));
    };
    if t_new < t_old {
        return Err(ProtocolError::OutOfOrder { t_new: t_new.0, t_old: t_old.0 });
    }

    let e_s = compute_error(t_sync, t_new);
    if e_s.unsigned_abs() <= config.margin_ticks.0 {
        return Ok((*state, SyncAction::NoOp { e_s }));
    }

    let delta_t = t_new.signed_sub(t_old);
    let cycles = cycles_since_update(delta_t, config.period_s)?;
    let next_old = Some(t_new);

    let frozen = matches!(policy, CorrectionPolicy::Disabled)
        || config.freeze_cycles.is_some_and(|limit| cycles > limit);
    if frozen {
        let next = SyncState { t_old: next_old, ..*state };
        return Ok((next, SyncAction::Frozen { e_s, delta_t, cycles, t_set: t_sync }));
    }

    let correction = lookup_correction(policy, cycles);
    let direction = Direction::of(e_s).expect("e_s outside a non-negative margin is non-zero");
    let update = state.calib.apply(correction, direction)?;
    let next = SyncState { t_old: next_old, calib: update.register };
    Ok((
        next,
        SyncAction::Calibrate {
            e_s,
            delta_t,
            cycles,
            correction,
            direction,
            clamped: update.clamped,
            t_set: t_sync,
        },
    ))
}

/// Column header of the per-message action log.
pub const ACTION_LOG_HEADER: &str =
    "period_index,e_s_ticks,delta_t_ticks,cycles,correction_ppm,direction,calib_steps,action_kind";

/// Formats one action-log row. Fields that do not apply are left empty.
pub fn action_log_row(period_index: u64, action: &SyncAction, calib_steps: i32) -> String {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let (correction, direction) = match action.correction() {
        Some((c, d)) => (Some(c.value().to_string()), Some(d.sign().to_string())),
        None => (None, None),
    };
    format!(
        "{},{},{},{},{},{},{},{}",
        period_index,
        opt(action.e_s().map(|v| v.to_string())),
        opt(action.delta_t().map(|v| v.to_string())),
        opt(action.cycles().map(|v| v.to_string())),
        opt(correction),
        opt(direction),
        calib_steps,
        action.kind()
    )
}
