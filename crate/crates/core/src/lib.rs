//! Lightweight TDMA synchronization for LoRa star networks.
//!
//! A master broadcasts its timestamp once per period; each node re-synchronizes
//! its real-time clock and tunes the clock's calibration register from the
//! error it observes and the time elapsed since its last update.
//!
//! - [`clock`]: quantized, calibratable RTC model with drift profiles.
//! - [`airtime`]: LoRa time-on-air and TDMA frame planning.
//! - [`protocol`]: the per-message synchronization and calibration step.
//! - [`sim`]: deterministic multi-node simulator, traces and summaries.

pub mod airtime;
pub mod clock;
pub mod protocol;
pub mod rng;
pub mod sim;

pub use airtime::{plan_frame, time_on_air, time_on_air_ceil_ms, FrameConfig, FramePlan, RadioParams};
pub use clock::{CalibrationRegister, Direction, DriftProfile, Ppm, SimClock, Ticks, UpdateStrategy};
pub use protocol::{on_sync_message, CorrectionPolicy, SyncAction, SyncConfig, SyncState};
pub use sim::{compare, run, summarize, Scenario, Summary, Trace};
