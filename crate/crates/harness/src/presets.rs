//! Named scenarios reproducing the drift and calibration experiments.
//!
//! All presets share the default radio (SF7, 500 kHz, CR 4/5), a frame
//! planned for a 230-byte payload at 1 % duty cycle (T = 10 s, 100 ms slots,
//! 9 ms guard band), a 2 ms (2 tick) margin and `t_x` equal to the ceil-ms
//! airtime of a 255-byte sync frame. The two uncalibrated presets use a zero
//! margin so that every period's error is measured from a fresh RTC write.

use tdma_sync::airtime::{plan_frame, RadioParams, DEFAULT_DUTY_CYCLE};
use tdma_sync::clock::{DriftProfile, Ppm, Ticks, UpdateStrategy};
use tdma_sync::protocol::{default_t_x, CorrectionPolicy, DEFAULT_MARGIN_TICKS, DEFAULT_SYNC_PAYLOAD_BYTES};
use tdma_sync::sim::{NodeSpec, Scenario, SyncSettings, DEFAULT_STEADY_WINDOW};

/// Payload used for frame planning.
pub const PROTOCOL_PAYLOAD_BYTES: usize = 230;

/// Forced drift of the large-drift experiments.
pub const LARGE_DRIFT_PPM: f64 = 430.0;
/// Drift of the "few ppm" node.
pub const SMALL_DRIFT_PPM: f64 = 16.0;

pub const PRESET_NAMES: [&str; 6] = [
    "drift430-gradual",
    "drift430-fixed15",
    "drift430-fixed10",
    "drift430-fixed1",
    "uncalibrated-430ppm",
    "uncalibrated-16ppm",
];

/// Builds the default scenario skeleton around one node.
pub fn base_scenario(name: &str, drift_ppm: f64, policy: CorrectionPolicy, periods: u64) -> Scenario {
    let radio = RadioParams::default();
    let plan = plan_frame(&radio, PROTOCOL_PAYLOAD_BYTES, DEFAULT_DUTY_CYCLE)
        .expect("default radio plans a frame");
    let t_x = default_t_x(&radio, DEFAULT_SYNC_PAYLOAD_BYTES, 0, 0).expect("255 B fits");
    Scenario {
        name: name.to_string(),
        duration_periods: periods,
        rng_seed: 1,
        loss_probability: 0.0,
        steady_window: DEFAULT_STEADY_WINDOW,
        radio,
        frame: plan.frame,
        sync: SyncSettings {
            margin_ticks: Ticks(DEFAULT_MARGIN_TICKS),
            t_x_ticks: t_x,
            freeze_cycles: None,
        },
        policy,
        nodes: vec![NodeSpec {
            id: 1,
            drift: DriftProfile::Constant(Ppm::new(drift_ppm).expect("finite")),
            update_strategy: UpdateStrategy::Overwrite,
        }],
    }
}

fn uncalibrated(name: &str, drift_ppm: f64) -> Scenario {
    let mut sc = base_scenario(name, drift_ppm, CorrectionPolicy::Disabled, 500);
    sc.sync.margin_ticks = Ticks(0);
    sc
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Option<Scenario> {
    let sc = match name {
        "drift430-gradual" => base_scenario(name, LARGE_DRIFT_PPM, CorrectionPolicy::gradual_default(), 2000),
        "drift430-fixed15" => base_scenario(name, LARGE_DRIFT_PPM, CorrectionPolicy::fixed_15(), 2000),
        "drift430-fixed10" => base_scenario(name, LARGE_DRIFT_PPM, CorrectionPolicy::fixed_10(), 2000),
        "drift430-fixed1" => base_scenario(name, LARGE_DRIFT_PPM, CorrectionPolicy::fixed_1(), 2000),
        "uncalibrated-430ppm" => uncalibrated(name, LARGE_DRIFT_PPM),
        "uncalibrated-16ppm" => uncalibrated(name, SMALL_DRIFT_PPM),
        _ => return None,
    };
    Some(sc)
}
