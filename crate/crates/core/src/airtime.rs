//! LoRa time-on-air and TDMA frame planning.
//!
//! Airtime follows the SX1276 datasheet symbol count:
//!
//! ```text
//! T_sym     = 2^SF / BW
//! n_payload = 8 + max(ceil((8 PL - 4 SF + 28 + 16 CRC - 20 IH) / (4 (SF - 2 DE))) (CR + 4), 0)
//! T_packet  = (n_preamble + 4.25 + n_payload) T_sym
//! ```
//!
//! Everything is computed in quarter symbols with integer arithmetic so the
//! millisecond rounding used for slot sizing is exact.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Largest LoRa PHY payload.
pub const MAX_PAYLOAD_BYTES: usize = 255;

/// EU sub-GHz duty cycle.
pub const DEFAULT_DUTY_CYCLE: f64 = 0.01;

const STANDARD_BANDWIDTHS: [u32; 3] = [125_000, 250_000, 500_000];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AirtimeError {
    #[error("payload of {0} bytes exceeds the LoRa maximum of 255 bytes")]
    PayloadTooLarge(usize),
    #[error("spreading factor must be 6..=12, got {0}")]
    SpreadingFactor(u8),
    #[error("bandwidth must be positive")]
    Bandwidth,
    #[error("coding rate index must be 1..=4 (4/5..4/8), got {0}")]
    CodingRate(u8),
    #[error("preamble must have at least one symbol")]
    Preamble,
    #[error("unrecognised coding rate {0:?}, expected 4/5, 4/6, 4/7 or 4/8")]
    CodingRateSyntax(String),
    #[error("duty cycle must lie in (0, 1], got {0}")]
    DutyCycle(f64),
    #[error("guard band would be negative ({0} ms)")]
    NegativeGuard(i64),
    #[error("invalid frame: {0}")]
    Frame(String),
}

/// LoRa modulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    pub spreading_factor: u8,
    pub bandwidth_hz: u32,
    /// CR = 4 / (4 + index).
    pub coding_rate_index: u8,
    #[serde(default = "default_preamble")]
    pub preamble_symbols: u16,
    #[serde(default = "default_true")]
    pub crc_on: bool,
    #[serde(default = "default_true")]
    pub explicit_header: bool,
    #[serde(default)]
    pub low_data_rate_optimize: bool,
}

fn default_preamble() -> u16 {
    8
}

fn default_true() -> bool {
    true
}

impl Default for RadioParams {
    /// SF7, 500 kHz, CR 4/5, 8 preamble symbols, CRC on, explicit header.
    fn default() -> Self {
        RadioParams {
            spreading_factor: 7,
            bandwidth_hz: 500_000,
            coding_rate_index: 1,
            preamble_symbols: 8,
            crc_on: true,
            explicit_header: true,
            low_data_rate_optimize: false,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), AirtimeError> {
        if !(6..=12).contains(&self.spreading_factor) {
            return Err(AirtimeError::SpreadingFactor(self.spreading_factor));
        }
        if self.bandwidth_hz == 0 {
            return Err(AirtimeError::Bandwidth);
        }
        if !(1..=4).contains(&self.coding_rate_index) {
            return Err(AirtimeError::CodingRate(self.coding_rate_index));
        }
        if self.preamble_symbols == 0 {
            return Err(AirtimeError::Preamble);
        }
        Ok(())
    }

    /// Non-fatal remarks about unusual settings.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !STANDARD_BANDWIDTHS.contains(&self.bandwidth_hz) {
            out.push(format!(
                "bandwidth {} Hz is not one of 125/250/500 kHz",
                self.bandwidth_hz
            ));
        }
        out
    }

    /// Coding rate in "4/x" notation.
    pub fn coding_rate_label(&self) -> String {
        format!("4/{}", 4 + self.coding_rate_index)
    }

    /// Symbol duration in milliseconds.
    pub fn symbol_ms(&self) -> f64 {
        (1u64 << self.spreading_factor) as f64 * 1000.0 / self.bandwidth_hz as f64
    }
}

/// Parses "4/5" .. "4/8" (or a bare index 1..4) into a coding-rate index.
pub fn parse_coding_rate(s: &str) -> Result<u8, AirtimeError> {
    let trimmed = s.trim();
    let index = match trimmed.split_once('/') {
        Some(("4", den)) => den.parse::<u8>().ok().and_then(|d| d.checked_sub(4)),
        Some(_) => None,
        None => trimmed.parse::<u8>().ok(),
    };
    match index {
        Some(i @ 1..=4) => Ok(i),
        _ => Err(AirtimeError::CodingRateSyntax(s.to_string())),
    }
}

/// Number of payload symbols (including the 8 fixed header symbols).
pub fn payload_symbols(params: &RadioParams, payload_bytes: usize) -> Result<u64, AirtimeError> {
    params.validate()?;
    if payload_bytes > MAX_PAYLOAD_BYTES {
        return Err(AirtimeError::PayloadTooLarge(payload_bytes));
    }
    let sf = params.spreading_factor as i64;
    let de = params.low_data_rate_optimize as i64;
    let numer = 8 * payload_bytes as i64 - 4 * sf + 28 + 16 * params.crc_on as i64
        - 20 * (!params.explicit_header) as i64;
    let denom = 4 * (sf - 2 * de);
    let blocks = if numer <= 0 { 0 } else { (numer + denom - 1) / denom };
    Ok(8 + (blocks * (params.coding_rate_index as i64 + 4)) as u64)
}

// Packet length in quarter symbols: 4 * (preamble + n_payload) + 17.
fn quarter_symbols(params: &RadioParams, payload_bytes: usize) -> Result<u64, AirtimeError> {
    let n_payload = payload_symbols(params, payload_bytes)?;
    Ok(4 * (params.preamble_symbols as u64 + n_payload) + 17)
}

/// Time on air in milliseconds.
pub fn time_on_air(params: &RadioParams, payload_bytes: usize) -> Result<f64, AirtimeError> {
    let q = quarter_symbols(params, payload_bytes)?;
    let numer = q as u128 * (1u128 << params.spreading_factor) * 1000;
    let denom = 4 * params.bandwidth_hz as u128;
    Ok(numer as f64 / denom as f64)
}

/// Time on air rounded up to the next whole millisecond.
pub fn time_on_air_ceil_ms(params: &RadioParams, payload_bytes: usize) -> Result<u64, AirtimeError> {
    let q = quarter_symbols(params, payload_bytes)?;
    let numer = q as u128 * (1u128 << params.spreading_factor) * 1000;
    let denom = 4 * params.bandwidth_hz as u128;
    Ok(numer.div_ceil(denom) as u64)
}

/// TDMA frame geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Synchronization period T.
    pub period_s: f64,
    pub slot_ms: u64,
    /// Total idle time inside a slot.
    pub guard_band_ms: u64,
    pub node_count: u32,
    #[serde(default = "default_duty")]
    pub duty_cycle_limit: f64,
}

fn default_duty() -> f64 {
    DEFAULT_DUTY_CYCLE
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            period_s: 10.0,
            slot_ms: 100,
            guard_band_ms: 9,
            node_count: 100,
            duty_cycle_limit: DEFAULT_DUTY_CYCLE,
        }
    }
}

impl FrameConfig {
    pub fn period_ms(&self) -> f64 {
        self.period_s * 1000.0
    }

    /// Tolerated error on either side of the slot.
    pub fn guard_per_side_ms(&self) -> f64 {
        self.guard_band_ms as f64 / 2.0
    }

    pub fn validate(&self) -> Result<(), AirtimeError> {
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return Err(AirtimeError::Frame(format!("period must be positive, got {} s", self.period_s)));
        }
        if self.slot_ms == 0 || self.node_count == 0 {
            return Err(AirtimeError::Frame("slot length and node count must be positive".into()));
        }
        if !(self.duty_cycle_limit > 0.0 && self.duty_cycle_limit <= 1.0) {
            return Err(AirtimeError::DutyCycle(self.duty_cycle_limit));
        }
        if self.guard_band_ms > self.slot_ms {
            return Err(AirtimeError::Frame("guard band longer than the slot".into()));
        }
        let tol = 1e-9 * self.period_ms();
        if (self.node_count as u64 * self.slot_ms) as f64 > self.period_ms() + tol {
            return Err(AirtimeError::Frame(format!(
                "{} slots of {} ms do not fit in {} s",
                self.node_count, self.slot_ms, self.period_s
            )));
        }
        if self.slot_ms as f64 > self.duty_cycle_limit * self.period_ms() + tol {
            return Err(AirtimeError::Frame(format!(
                "slot of {} ms exceeds the {} duty cycle of a {} s period",
                self.slot_ms, self.duty_cycle_limit, self.period_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanWarning {
    /// The payload fills the slot; no room is left for synchronization error.
    NoGuardBand,
    Radio(String),
}

impl fmt::Display for PlanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanWarning::NoGuardBand => write!(f, "guard band is 0 ms; synchronization error cannot be absorbed"),
            PlanWarning::Radio(msg) => f.write_str(msg),
        }
    }
}

/// Result of [`plan_frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub frame: FrameConfig,
    /// Exact airtime of the planned payload.
    pub payload_airtime_ms: f64,
    pub warnings: Vec<PlanWarning>,
}

/// Plans a frame whose slot fits a maximum-length packet.
pub fn plan_frame(
    params: &RadioParams,
    payload_bytes: usize,
    duty_cycle: f64,
) -> Result<FramePlan, AirtimeError> {
    if !(duty_cycle > 0.0 && duty_cycle <= 1.0) {
        return Err(AirtimeError::DutyCycle(duty_cycle));
    }
    let slot_ms = time_on_air_ceil_ms(params, MAX_PAYLOAD_BYTES)?;
    let payload_ms = time_on_air_ceil_ms(params, payload_bytes)?;
    let guard = slot_ms as i64 - payload_ms as i64;
    if guard < 0 {
        return Err(AirtimeError::NegativeGuard(guard));
    }
    let period_ms = slot_ms as f64 / duty_cycle;
    let node_count = (period_ms / slot_ms as f64 + 1e-9).floor() as u32;
    let frame = FrameConfig {
        period_s: period_ms / 1000.0,
        slot_ms,
        guard_band_ms: guard as u64,
        node_count,
        duty_cycle_limit: duty_cycle,
    };
    let mut warnings: Vec<PlanWarning> =
        params.warnings().into_iter().map(PlanWarning::Radio).collect();
    if guard == 0 {
        warnings.push(PlanWarning::NoGuardBand);
    }
    Ok(FramePlan {
        frame,
        payload_airtime_ms: time_on_air(params, payload_bytes)?,
        warnings,
    })
}

/// One transmission: start time and duration, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub start_s: f64,
    pub duration_s: f64,
}

impl Transmission {
    pub fn new(start_s: f64, duration_s: f64) -> Self {
        Transmission { start_s, duration_s }
    }

    fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }
}

/// Checks each node's schedule against a sliding-window duty-cycle limit.
///
/// The busiest window either starts at a transmission start or ends at a
/// transmission end, so only those candidates are evaluated.
pub fn duty_cycle_ok(schedule: &[Vec<Transmission>], window_s: f64, limit: f64) -> Vec<bool> {
    schedule
        .iter()
        .map(|txs| {
            let budget = limit * window_s;
            let tol = 1e-9 * window_s.max(1.0);
            max_window_airtime(txs, window_s) <= budget + tol
        })
        .collect()
}

/// Largest total airtime inside any window of `window_s` seconds.
pub fn max_window_airtime(txs: &[Transmission], window_s: f64) -> f64 {
    let mut sorted = txs.to_vec();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let airtime_in = |lo: f64, hi: f64| -> f64 {
        sorted
            .iter()
            .skip_while(|t| t.end_s() <= lo)
            .take_while(|t| t.start_s < hi)
            .map(|t| (t.end_s().min(hi) - t.start_s.max(lo)).max(0.0))
            .sum()
    };
    sorted
        .iter()
        .flat_map(|t| {
            [
                airtime_in(t.start_s, t.start_s + window_s),
                airtime_in(t.end_s() - window_s, t.end_s()),
            ]
        })
        .fold(0.0, f64::max)
}
