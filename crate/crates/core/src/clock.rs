//! Calibratable real-time clock model.
//!
//! The node-visible clock counts ticks of 1/1024 s. Its rate is the nominal
//! rate plus the intrinsic drift of the oscillator plus the correction held in
//! a discrete calibration register. Sub-tick remainders are carried between
//! advances so that long runs do not accumulate quantization bias.
//!
//! Three timestamp update strategies are modelled: the counter can be
//! overwritten (time may jump backwards), stopped, or slowed until the
//! requested value is reached.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Tick frequency of the node clock.
pub const TICKS_PER_SECOND: u64 = 1024;

/// Default calibration granularity, in ppm per register step.
pub const DEFAULT_STEP_PPM: f64 = 0.955;
/// Lower bound of the calibration range.
pub const DEFAULT_MIN_PPM: f64 = -487.1;
/// Upper bound of the calibration range.
pub const DEFAULT_MAX_PPM: f64 = 488.5;
/// Rate fraction used by [`UpdateStrategy::Slow`] when none is given.
pub const DEFAULT_SLOW_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClockError {
    #[error("ppm value must be finite, got {0}")]
    NonFinitePpm(f64),
    #[error("true-time step must be finite and non-negative, got {0} s")]
    NegativeStep(f64),
    #[error("slow factor must lie strictly between 0 and 1, got {0}")]
    SlowFactor(f64),
    #[error("requested correction must be non-negative, got {0} ppm")]
    NegativeCorrection(f64),
    #[error("invalid calibration register: {0}")]
    Register(String),
    #[error("invalid drift profile: {0}")]
    Drift(String),
}

/// Local clock time in units of 1/1024 s.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Ticks(pub u64);

impl Ticks {
    pub const ZERO: Ticks = Ticks(0);

    pub const fn count(self) -> u64 {
        self.0
    }

    /// Milliseconds represented by this tick count.
    ///
    /// 1000/1024 is a dyadic fraction, so the product is exact for any
    /// count below 2^43.
    pub fn as_millis(self) -> f64 {
        self.0 as f64 * 1000.0 / TICKS_PER_SECOND as f64
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }

    /// Smallest tick count covering `ms` milliseconds.
    pub fn from_millis_ceil(ms: u64) -> Ticks {
        Ticks((ms * TICKS_PER_SECOND).div_ceil(1000))
    }

    /// Nearest tick count to `ms` milliseconds (ties away from zero).
    pub fn from_millis_round(ms: u64) -> Ticks {
        Ticks((ms * TICKS_PER_SECOND + 500) / 1000)
    }

    /// Nearest tick count to a duration in seconds.
    pub fn from_secs_round(secs: f64) -> Ticks {
        Ticks((secs * TICKS_PER_SECOND as f64).round() as u64)
    }

    /// `self - other` as a signed tick count.
    pub fn signed_sub(self, other: Ticks) -> i64 {
        self.0 as i64 - other.0 as i64
    }

    pub fn saturating_add_signed(self, delta: i64) -> Ticks {
        Ticks(self.0.saturating_add_signed(delta))
    }
}

impl fmt::Display for Ticks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ticks", self.0)
    }
}

/// Converts a signed tick count to milliseconds.
pub fn ticks_to_millis(ticks: i64) -> f64 {
    ticks as f64 * 1000.0 / TICKS_PER_SECOND as f64
}

/// A rate deviation in parts per million. Always finite.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Ppm(f64);

impl Ppm {
    pub const ZERO: Ppm = Ppm(0.0);

    pub fn new(value: f64) -> Result<Self, ClockError> {
        if value.is_finite() {
            Ok(Ppm(value))
        } else {
            Err(ClockError::NonFinitePpm(value))
        }
    }

    pub const fn value(self) -> f64 {
        self.0
    }

    pub(crate) const fn from_const(value: f64) -> Ppm {
        Ppm(value)
    }
}

impl TryFrom<f64> for Ppm {
    type Error = ClockError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Ppm::new(value)
    }
}

impl From<Ppm> for f64 {
    fn from(p: Ppm) -> f64 {
        p.0
    }
}

impl fmt::Display for Ppm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ppm", self.0)
    }
}

/// Sign of a calibration change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Slow the clock down.
    Decrease,
    /// Speed the clock up.
    Increase,
}

impl Direction {
    pub const fn sign(self) -> i32 {
        match self {
            Direction::Decrease => -1,
            Direction::Increase => 1,
        }
    }

    /// Direction for a signed quantity; zero maps to `None`.
    pub fn of(value: i64) -> Option<Direction> {
        match value.signum() {
            1 => Some(Direction::Increase),
            -1 => Some(Direction::Decrease),
            _ => None,
        }
    }
}

/// Discrete hardware calibration register.
///
/// The register holds a signed step count. Its effective correction is
/// `steps * step_size`, which is kept inside `[min_ppm, max_ppm]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRegister {
    #[serde(default)]
    steps: i32,
    #[serde(default = "default_step")]
    step_size: Ppm,
    #[serde(default = "default_min")]
    min_ppm: Ppm,
    #[serde(default = "default_max")]
    max_ppm: Ppm,
}

fn default_step() -> Ppm {
    Ppm(DEFAULT_STEP_PPM)
}
fn default_min() -> Ppm {
    Ppm(DEFAULT_MIN_PPM)
}
fn default_max() -> Ppm {
    Ppm(DEFAULT_MAX_PPM)
}

impl Default for CalibrationRegister {
    fn default() -> Self {
        CalibrationRegister {
            steps: 0,
            step_size: default_step(),
            min_ppm: default_min(),
            max_ppm: default_max(),
        }
    }
}

/// Outcome of [`CalibrationRegister::apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationUpdate {
    pub register: CalibrationRegister,
    /// Signed step change actually applied.
    pub applied_steps: i32,
    /// The requested change was cut short by the register range.
    pub clamped: bool,
}

impl CalibrationRegister {
    pub fn new(step_size: Ppm, min_ppm: Ppm, max_ppm: Ppm) -> Result<Self, ClockError> {
        let reg = CalibrationRegister { steps: 0, step_size, min_ppm, max_ppm };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), ClockError> {
        if self.step_size.0 <= 0.0 {
            return Err(ClockError::Register(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.min_ppm.0 > 0.0 || self.max_ppm.0 < 0.0 {
            return Err(ClockError::Register(format!(
                "range [{}, {}] must contain zero",
                self.min_ppm, self.max_ppm
            )));
        }
        if self.steps < self.min_steps() || self.steps > self.max_steps() {
            return Err(ClockError::Register(format!(
                "{} steps lies outside [{}, {}]",
                self.steps,
                self.min_steps(),
                self.max_steps()
            )));
        }
        Ok(())
    }

    /// Returns a copy with the step count set, saturated to the valid range.
    pub fn with_steps(mut self, steps: i32) -> Self {
        self.steps = steps.clamp(self.min_steps(), self.max_steps());
        self
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn step_size(&self) -> Ppm {
        self.step_size
    }

    pub fn min_steps(&self) -> i32 {
        (self.min_ppm.0 / self.step_size.0).ceil() as i32
    }

    pub fn max_steps(&self) -> i32 {
        (self.max_ppm.0 / self.step_size.0).floor() as i32
    }

    pub fn effective_ppm(&self) -> Ppm {
        Ppm(self.steps as f64 * self.step_size.0)
    }

    /// Changes the register by `requested` ppm in `direction`.
    ///
    /// The step count moves by `round(requested / step_size)`, at least one
    /// step for any non-zero request, and saturates at the register range.
    pub fn apply(
        &self,
        requested: Ppm,
        direction: Direction,
    ) -> Result<CalibrationUpdate, ClockError> {
        if requested.0 < 0.0 {
            return Err(ClockError::NegativeCorrection(requested.0));
        }
        let magnitude = if requested.0 == 0.0 {
            0
        } else {
            ((requested.0 / self.step_size.0).round() as i64).max(1)
        };
        let wanted = self.steps as i64 + direction.sign() as i64 * magnitude;
        let bounded = wanted.clamp(self.min_steps() as i64, self.max_steps() as i64);
        let register = CalibrationRegister { steps: bounded as i32, ..*self };
        Ok(CalibrationUpdate {
            register,
            applied_steps: register.steps - self.steps,
            clamped: bounded != wanted,
        })
    }
}

/// One segment of a piecewise-constant drift profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftStep {
    /// True time at which this rate takes effect, in seconds.
    pub at_s: f64,
    pub ppm: Ppm,
}

/// Intrinsic oscillator drift as a function of true time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftProfile {
    Constant(Ppm),
    /// Piecewise-constant rate; sorted by time, first segment at 0 s.
    Steps(Vec<DriftStep>),
    /// Linear ageing-style ramp.
    Ramp { start_ppm: Ppm, slope_ppm_per_hour: f64 },
}

impl Default for DriftProfile {
    fn default() -> Self {
        DriftProfile::Constant(Ppm::ZERO)
    }
}

impl DriftProfile {
    pub fn validate(&self) -> Result<(), ClockError> {
        match self {
            DriftProfile::Constant(_) => Ok(()),
            DriftProfile::Steps(steps) => {
                let Some(first) = steps.first() else {
                    return Err(ClockError::Drift("step profile is empty".into()));
                };
                if first.at_s != 0.0 {
                    return Err(ClockError::Drift(format!(
                        "first segment must start at 0 s, got {}",
                        first.at_s
                    )));
                }
                for pair in steps.windows(2) {
                    if !(pair[1].at_s > pair[0].at_s) || !pair[1].at_s.is_finite() {
                        return Err(ClockError::Drift(
                            "segment start times must be strictly increasing".into(),
                        ));
                    }
                }
                Ok(())
            }
            DriftProfile::Ramp { slope_ppm_per_hour, .. } => {
                if slope_ppm_per_hour.is_finite() {
                    Ok(())
                } else {
                    Err(ClockError::Drift("ramp slope must be finite".into()))
                }
            }
        }
    }

    /// Instantaneous drift at true time `t` (seconds).
    pub fn rate_at(&self, t: f64) -> f64 {
        match self {
            DriftProfile::Constant(p) => p.0,
            DriftProfile::Steps(steps) => steps
                .iter()
                .take_while(|s| s.at_s <= t)
                .last()
                .map_or(0.0, |s| s.ppm.0),
            DriftProfile::Ramp { start_ppm, slope_ppm_per_hour } => {
                start_ppm.0 + slope_ppm_per_hour * t / 3600.0
            }
        }
    }

    /// Integral of the drift over `[t0, t1]`, in ppm-seconds.
    pub fn integrate(&self, t0: f64, t1: f64) -> f64 {
        match self {
            DriftProfile::Constant(p) => p.0 * (t1 - t0),
            DriftProfile::Steps(steps) => {
                let mut total = 0.0;
                for (i, seg) in steps.iter().enumerate() {
                    let seg_end = steps.get(i + 1).map_or(f64::INFINITY, |n| n.at_s);
                    let lo = t0.max(seg.at_s);
                    let hi = t1.min(seg_end);
                    if hi > lo {
                        total += seg.ppm.0 * (hi - lo);
                    }
                }
                total
            }
            DriftProfile::Ramp { start_ppm, slope_ppm_per_hour } => {
                start_ppm.0 * (t1 - t0) + slope_ppm_per_hour / 3600.0 * (t1 * t1 - t0 * t0) / 2.0
            }
        }
    }
}

/// How a new timestamp is applied to the counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum UpdateStrategy {
    /// Write the counter directly; time may step backwards.
    #[default]
    Overwrite,
    /// Hold the counter until true time catches up with it.
    Stop,
    /// Run the counter at the given rate fraction until it is caught up.
    Slow(f64),
}

impl UpdateStrategy {
    pub fn validate(&self) -> Result<(), ClockError> {
        match *self {
            UpdateStrategy::Slow(f) if !(f > 0.0 && f < 1.0) => Err(ClockError::SlowFactor(f)),
            _ => Ok(()),
        }
    }

    fn hold_rate(&self) -> f64 {
        match *self {
            UpdateStrategy::Overwrite | UpdateStrategy::Stop => 0.0,
            UpdateStrategy::Slow(f) => f,
        }
    }
}

// A backward write under stop/slow. The reported value is
// max(counter, anchor + floor(rate * accrued)).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Hold {
    anchor: u64,
    accrued: u64,
}

/// Simulated node clock driven by true time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimClock {
    // Counter as overwrite would leave it.
    counter: u64,
    frac: f64,
    true_time_s: f64,
    drift: DriftProfile,
    calib: CalibrationRegister,
    strategy: UpdateStrategy,
    hold: Option<Hold>,
}

impl SimClock {
    pub fn new(drift: DriftProfile, strategy: UpdateStrategy) -> Result<Self, ClockError> {
        drift.validate()?;
        strategy.validate()?;
        Ok(SimClock {
            counter: 0,
            frac: 0.0,
            true_time_s: 0.0,
            drift,
            calib: CalibrationRegister::default(),
            strategy,
            hold: None,
        })
    }

    pub fn with_calibration(mut self, calib: CalibrationRegister) -> Self {
        self.calib = calib;
        self
    }

    /// Reported local time.
    pub fn now(&self) -> Ticks {
        let held = self.hold.map_or(0, |h| {
            h.anchor + (self.strategy.hold_rate() * h.accrued as f64).floor() as u64
        });
        Ticks(self.counter.max(held))
    }

    /// Local time including the sub-tick remainder, as overwrite would report it.
    pub fn continuous_ticks(&self) -> f64 {
        self.counter as f64 + self.frac
    }

    /// Ticks still to be absorbed by a pending stop/slow adjustment.
    pub fn pending_adjust(&self) -> u64 {
        self.now().0 - self.counter
    }

    pub fn true_time_s(&self) -> f64 {
        self.true_time_s
    }

    pub fn calibration(&self) -> &CalibrationRegister {
        &self.calib
    }

    pub fn set_calibration(&mut self, calib: CalibrationRegister) {
        self.calib = calib;
    }

    pub fn strategy(&self) -> UpdateStrategy {
        self.strategy
    }

    pub fn drift(&self) -> &DriftProfile {
        &self.drift
    }

    /// Total rate deviation (drift + calibration) at the current true time.
    pub fn total_ppm(&self) -> f64 {
        self.drift.rate_at(self.true_time_s) + self.calib.effective_ppm().0
    }

    /// Advances true time by `true_dt` seconds.
    pub fn advance(&mut self, true_dt: f64) -> Result<(), ClockError> {
        if !(true_dt >= 0.0) || !true_dt.is_finite() {
            return Err(ClockError::NegativeStep(true_dt));
        }
        let t0 = self.true_time_s;
        let t1 = t0 + true_dt;
        let rate_integral = self.drift.integrate(t0, t1) + self.calib.effective_ppm().0 * true_dt;
        let local_s = true_dt + rate_integral * 1e-6;
        let exact = local_s * TICKS_PER_SECOND as f64 + self.frac;
        let whole = exact.floor().max(0.0);
        self.frac = (exact - whole).max(0.0);
        let accrued = whole as u64;
        self.counter += accrued;
        self.true_time_s = t1;

        if let Some(hold) = self.hold.as_mut() {
            hold.accrued += accrued;
            let held = hold.anchor + (self.strategy.hold_rate() * hold.accrued as f64).floor() as u64;
            if self.counter >= held {
                self.hold = None;
            }
        }
        Ok(())
    }

    /// Writes a new timestamp into the clock according to its update strategy.
    pub fn write_timestamp(&mut self, target: Ticks) {
        let reported = self.now().0;
        self.counter = target.0;
        self.hold = match self.strategy {
            UpdateStrategy::Overwrite => None,
            _ if target.0 >= reported => None,
            _ => Some(Hold { anchor: reported, accrued: 0 }),
        };
    }
}
