//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 on runtime failure.

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use tdma_sync::airtime::{
    parse_coding_rate, plan_frame, time_on_air, time_on_air_ceil_ms, RadioParams, MAX_PAYLOAD_BYTES,
};
use tdma_sync::sim::{self, Scenario};

use crate::{output, presets, scenario_file, HarnessError};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TDMA_SYNC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "tdma-sync", version, about = "LoRa TDMA synchronization and RTC self-calibration simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print LoRa time on air for one or more payload sizes.
    Airtime {
        #[command(flatten)]
        radio: RadioArgs,
        /// Payload length in bytes; repeat for several rows.
        #[arg(long = "payload")]
        payloads: Vec<usize>,
    },
    /// Plan a TDMA frame: slot length, period, node count and guard band.
    Plan {
        #[command(flatten)]
        radio: RadioArgs,
        #[arg(long, default_value_t = presets::PROTOCOL_PAYLOAD_BYTES)]
        payload: usize,
        /// Per-node duty cycle as a fraction (0.01 = 1 %).
        #[arg(long, default_value_t = 0.01)]
        duty: f64,
    },
    /// Run one scenario and write its trace and summary.
    Simulate {
        #[command(flatten)]
        source: ScenarioSource,
        #[command(flatten)]
        out: OutArgs,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of periods.
        #[arg(long)]
        periods: Option<u64>,
    },
    /// Run several scenarios with the same drift and tabulate their summaries.
    Compare {
        /// Scenario files.
        files: Vec<PathBuf>,
        /// Named presets; may be repeated.
        #[arg(long = "preset")]
        presets: Vec<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// List the built-in presets.
    Presets,
    /// Print a preset as a scenario file.
    ShowPreset { name: String },
}

#[derive(Debug, Args)]
pub struct RadioArgs {
    #[arg(long, default_value_t = 7)]
    pub sf: u8,
    /// Bandwidth in Hz.
    #[arg(long, default_value_t = 500_000)]
    pub bw: u32,
    /// Coding rate, 4/5 .. 4/8.
    #[arg(long, default_value = "4/5")]
    pub cr: String,
    #[arg(long, default_value_t = 8)]
    pub preamble: u16,
    #[arg(long)]
    pub no_crc: bool,
    #[arg(long)]
    pub implicit_header: bool,
    /// Low data rate optimization.
    #[arg(long)]
    pub ldro: bool,
}

impl RadioArgs {
    fn params(&self) -> Result<RadioParams, HarnessError> {
        let params = RadioParams {
            spreading_factor: self.sf,
            bandwidth_hz: self.bw,
            coding_rate_index: parse_coding_rate(&self.cr)?,
            preamble_symbols: self.preamble,
            crc_on: !self.no_crc,
            explicit_header: !self.implicit_header,
            low_data_rate_optimize: self.ldro,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ScenarioSource {
    /// Scenario file.
    pub file: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
}

fn load_preset(name: &str) -> Result<Scenario, HarnessError> {
    presets::preset(name).ok_or_else(|| {
        HarnessError::Validation(format!(
            "unknown preset '{name}'; available: {}",
            presets::PRESET_NAMES.join(", ")
        ))
    })
}

fn load_source(src: &ScenarioSource) -> Result<Scenario, HarnessError> {
    match (&src.file, &src.preset) {
        (Some(path), _) => scenario_file::load(path),
        (None, Some(name)) => load_preset(name),
        (None, None) => Err(HarnessError::Validation("a scenario file or --preset is required".into())),
    }
}

/// Formats milliseconds without trailing zeros.
pub fn fmt_ms(ms: f64) -> String {
    let s = format!("{ms:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn radio_line(p: &RadioParams) -> String {
    format!(
        "SF{} BW{} CR{} preamble {} CRC {} {} header{}",
        p.spreading_factor,
        p.bandwidth_hz,
        p.coding_rate_label(),
        p.preamble_symbols,
        if p.crc_on { "on" } else { "off" },
        if p.explicit_header { "explicit" } else { "implicit" },
        if p.low_data_rate_optimize { " LDRO" } else { "" },
    )
}

fn airtime(out: &mut dyn Write, radio: &RadioArgs, payloads: &[usize]) -> Result<(), HarnessError> {
    let params = radio.params()?;
    let default_rows: Vec<usize> = (0..MAX_PAYLOAD_BYTES).step_by(15).chain([MAX_PAYLOAD_BYTES]).collect();
    let rows = if payloads.is_empty() { &default_rows[..] } else { payloads };
    let computed = rows
        .iter()
        .map(|&pl| Ok((pl, time_on_air(&params, pl)?, time_on_air_ceil_ms(&params, pl)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    writeln!(out, "{}", radio_line(&params))?;
    for w in params.warnings() {
        writeln!(out, "warning: {w}")?;
    }
    writeln!(out, "{:>13}  {:>12}  {:>15}", "payload_bytes", "airtime_ms", "airtime_ceil_ms")?;
    for (pl, exact, ceil) in computed {
        writeln!(out, "{:>13}  {:>12}  {:>15}", pl, fmt_ms(exact), ceil)?;
    }
    Ok(())
}

fn plan(out: &mut dyn Write, radio: &RadioArgs, payload: usize, duty: f64) -> Result<(), HarnessError> {
    let params = radio.params()?;
    let plan = plan_frame(&params, payload, duty)?;
    let f = &plan.frame;
    writeln!(out, "{}", radio_line(&params))?;
    writeln!(out, "payload_bytes = {payload}")?;
    writeln!(out, "payload_airtime_ms = {}", fmt_ms(plan.payload_airtime_ms))?;
    writeln!(out, "duty_cycle = {duty}")?;
    writeln!(out, "slot_ms = {}", f.slot_ms)?;
    writeln!(out, "period_s = {}", f.period_s)?;
    writeln!(out, "node_count = {}", f.node_count)?;
    writeln!(out, "guard_band_ms = {}", f.guard_band_ms)?;
    writeln!(out, "guard_per_side_ms = {}", f.guard_per_side_ms())?;
    for w in &plan.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

fn simulate(
    out: &mut dyn Write,
    source: &ScenarioSource,
    dir: &std::path::Path,
    seed: Option<u64>,
    periods: Option<u64>,
) -> Result<(), HarnessError> {
    let mut scenario = load_source(source)?;
    if let Some(seed) = seed {
        scenario.rng_seed = seed;
    }
    if let Some(p) = periods {
        scenario.duration_periods = p;
    }
    scenario.validate().map_err(|e| HarnessError::Validation(e.to_string()))?;
    let trace = sim::run(&scenario)?;
    let summaries = sim::summarize(&trace);
    let files = output::write_simulation(dir, &trace, &summaries)?;
    write!(out, "{}", sim::summary_text(&trace, &summaries))?;
    writeln!(out, "trace = {}", files.trace_csv.display())?;
    writeln!(out, "summary = {}", files.summary_json.display())?;
    Ok(())
}

fn compare(
    out: &mut dyn Write,
    files: &[PathBuf],
    names: &[String],
    dir: &std::path::Path,
) -> Result<(), HarnessError> {
    let mut scenarios = files.iter().map(|p| scenario_file::load(p)).collect::<Result<Vec<_>, _>>()?;
    for name in names {
        scenarios.push(load_preset(name)?);
    }
    if scenarios.is_empty() {
        return Err(HarnessError::Validation("compare needs at least one scenario".into()));
    }
    let cmp = sim::compare(&scenarios)?;
    write!(out, "{cmp}")?;
    let path = output::write_comparison(dir, "compare", &cmp)?;
    writeln!(out, "comparison = {}", path.display())?;
    Ok(())
}

/// Executes a parsed command.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Airtime { radio, payloads } => airtime(out, radio, payloads),
        Command::Plan { radio, payload, duty } => plan(out, radio, *payload, *duty),
        Command::Simulate { source, out: dir, seed, periods } => simulate(out, source, &dir.out, *seed, *periods),
        Command::Compare { files, presets, out: dir } => compare(out, files, presets, &dir.out),
        Command::Presets => {
            for name in presets::PRESET_NAMES {
                writeln!(out, "{name}")?;
            }
            Ok(())
        }
        Command::ShowPreset { name } => {
            let text = scenario_file::serialize(&load_preset(name)?)?;
            write!(out, "{text}")?;
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
