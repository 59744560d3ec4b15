//! TOML scenario files.
//!
//! A scenario file maps one-to-one onto [`Scenario`]; unknown keys are
//! rejected. Fields with defaults may be omitted:
//!
//! ```toml
//! name = "my-run"
//! duration_periods = 2000
//! rng_seed = 1
//! loss_probability = 0.0     # default 0
//! steady_window = 20         # default 20
//!
//! [radio]                    # default SF7 / 500 kHz / CR 4/5
//! spreading_factor = 7
//! bandwidth_hz = 500000
//! coding_rate_index = 1
//!
//! [frame]                    # default T = 10 s, 100 ms slots, 9 ms guard
//! period_s = 10.0
//! slot_ms = 100
//! guard_band_ms = 9
//! node_count = 100
//!
//! [sync]
//! margin_ticks = 2
//! t_x_ticks = 103
//! # freeze_cycles = 30
//!
//! [policy]
//! kind = "gradual"           # or "fixed" (with ppm = ...) or "disabled"
//! table = [
//!     { max_cycles = 2, ppm = 10.0 },
//!     { max_cycles = 5, ppm = 5.0 },
//!     { max_cycles = 10, ppm = 2.0 },
//!     { ppm = 1.0 },
//! ]
//!
//! [[nodes]]
//! id = 1
//! drift = { constant = 430.0 }
//! update_strategy = "overwrite"   # or "stop" or { slow = 0.5 }
//! ```

use std::path::Path;
use tdma_sync::sim::Scenario;

use crate::HarnessError;

/// First line written to every serialized scenario.
pub const SCENARIO_FILE_VERSION: &str = "# tdma-sync scenario v1";

pub fn parse(text: &str) -> Result<Scenario, HarnessError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| HarnessError::Validation(e.to_string()))?;
    scenario.validate().map_err(|e| HarnessError::Validation(e.to_string()))?;
    Ok(scenario)
}

pub fn load(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        HarnessError::Validation(msg) => HarnessError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn serialize(scenario: &Scenario) -> Result<String, HarnessError> {
    let body = toml::to_string(scenario).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    Ok(format!("{SCENARIO_FILE_VERSION}\n{body}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{preset, PRESET_NAMES};
    use tdma_sync::clock::UpdateStrategy;
    use tdma_sync::protocol::CorrectionPolicy;

    #[test]
    fn presets_round_trip() {
        for name in PRESET_NAMES {
            let sc = preset(name).unwrap();
            let text = serialize(&sc).unwrap();
            assert!(text.starts_with(SCENARIO_FILE_VERSION));
            let back = parse(&text).unwrap();
            assert_eq!(back, sc, "{name}");
            assert_eq!(serialize(&back).unwrap(), text);
        }
    }

    #[test]
    fn documented_example_parses() {
        let text = r#"
name = "my-run"
duration_periods = 2000
rng_seed = 1

[sync]
margin_ticks = 2
t_x_ticks = 103

[policy]
kind = "gradual"
table = [
    { max_cycles = 2, ppm = 10.0 },
    { max_cycles = 5, ppm = 5.0 },
    { max_cycles = 10, ppm = 2.0 },
    { ppm = 1.0 },
]

[[nodes]]
id = 1
drift = { constant = 430.0 }

[[nodes]]
id = 2
drift = { ramp = { start_ppm = 20.0, slope_ppm_per_hour = -1.5 } }
update_strategy = { slow = 0.5 }

[[nodes]]
id = 3
drift = { steps = [ { at_s = 0.0, ppm = 5.0 }, { at_s = 3600.0, ppm = 40.0 } ] }
update_strategy = "stop"
"#;
        let sc = parse(text).unwrap();
        assert_eq!(sc.policy, CorrectionPolicy::gradual_default());
        assert_eq!(sc.nodes.len(), 3);
        assert_eq!(sc.nodes[1].update_strategy, UpdateStrategy::Slow(0.5));
        assert_eq!(sc.frame.period_s, 10.0);
        assert_eq!(sc.steady_window, 20);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut text = serialize(&preset("uncalibrated-16ppm").unwrap()).unwrap();
        text = text.replacen("rng_seed", "colour = 3\nrng_seed", 1);
        assert!(matches!(parse(&text), Err(HarnessError::Validation(_))));

        let text = serialize(&preset("uncalibrated-16ppm").unwrap()).unwrap().replace("margin_ticks", "margin_tick");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let text = serialize(&preset("uncalibrated-16ppm").unwrap()).unwrap().replace("loss_probability = 0.0", "loss_probability = 1.5");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("loss_probability"), "{err}");

        let fixed = r#"
name = "x"
duration_periods = 10
rng_seed = 1
[sync]
margin_ticks = 2
t_x_ticks = 103
[policy]
kind = "fixed"
ppm = 15.0
extra = 1
[[nodes]]
id = 1
drift = { constant = 1.0 }
"#;
        assert!(parse(fixed).is_err());
        assert!(parse(&fixed.replace("extra = 1\n", "")).is_ok());
    }
}
