use tdma_sync::airtime::{FrameConfig, RadioParams};
use tdma_sync::clock::{DriftProfile, DriftStep, Ppm, Ticks, UpdateStrategy};
use tdma_sync::protocol::CorrectionPolicy;
use tdma_sync::sim::{compare, run, steady_start, summarize, NodeSpec, Scenario, Summary, SyncSettings};

fn scenario(drift: f64, policy: CorrectionPolicy, periods: u64) -> Scenario {
    Scenario {
        name: policy.label(),
        duration_periods: periods,
        rng_seed: 11,
        loss_probability: 0.0,
        steady_window: 20,
        radio: RadioParams::default(),
        frame: FrameConfig::default(),
        sync: SyncSettings { margin_ticks: Ticks(2), t_x_ticks: Ticks(103), freeze_cycles: None },
        policy,
        nodes: vec![NodeSpec {
            id: 1,
            drift: DriftProfile::Constant(Ppm::new(drift).unwrap()),
            update_strategy: UpdateStrategy::Overwrite,
        }],
    }
}

fn uncalibrated(drift: f64, periods: u64) -> Scenario {
    let mut sc = scenario(drift, CorrectionPolicy::Disabled, periods);
    sc.sync.margin_ticks = Ticks(0);
    sc
}

fn summary(sc: &Scenario) -> Summary {
    summarize(&run(sc).unwrap())[0].summary.clone().unwrap()
}

#[test]
fn uncalibrated_large_drift_error() {
    let s = summary(&uncalibrated(430.0, 100));
    // 430 ppm over 10 s is 4.4032 ticks = 4.30 ms per period.
    assert!((4.2..=4.45).contains(&s.mean_abs_e_s_ms), "{}", s.mean_abs_e_s_ms);
    assert_eq!(s.calibrate_events, 0);
}

#[test]
fn uncalibrated_small_drift_is_quantization_dominated() {
    let s = summary(&uncalibrated(16.0, 500));
    // 16 ppm over 10 s is 0.164 ticks; one tick of error every ~6 periods.
    assert!((s.mean_abs_e_s_ms - 0.16).abs() < 0.02, "{}", s.mean_abs_e_s_ms);
    assert!(s.max_abs_e_s_ms <= 0.9765625);
}

#[test]
fn gradual_policy_lengthens_update_interval() {
    let s = summary(&scenario(430.0, CorrectionPolicy::gradual_default(), 2000));
    assert!(s.steady_delta_t_cycles.unwrap() >= 10.0);
    assert!((s.final_effective_ppm + 430.0).abs() <= 1.0);
}

#[test]
fn identical_runs_are_byte_identical() {
    let mut sc = scenario(430.0, CorrectionPolicy::gradual_default(), 500);
    sc.loss_probability = 0.2;
    assert_eq!(run(&sc).unwrap().to_csv(), run(&sc).unwrap().to_csv());
    let mut other = sc.clone();
    other.rng_seed += 1;
    assert_ne!(run(&sc).unwrap().to_csv(), run(&other).unwrap().to_csv());
}

#[test]
fn reaches_steady_state_under_message_loss() {
    let mut sc = scenario(430.0, CorrectionPolicy::gradual_default(), 2000);
    sc.loss_probability = 0.3;
    let trace = run(&sc).unwrap();
    let lost = trace.nodes[0].records.iter().filter(|r| !r.received).count();
    assert!((450..750).contains(&lost), "{lost}");
    let s = summarize(&trace)[0].summary.clone().unwrap();
    assert!(s.periods_to_steady.is_some());
    assert!(s.max_abs_e_s_after_steady_ms.unwrap() <= 4.5);
}

#[test]
fn error_stays_in_guard_band_after_steady_state() {
    for policy in [CorrectionPolicy::gradual_default(), CorrectionPolicy::fixed_15(), CorrectionPolicy::fixed_1()] {
        let s = summary(&scenario(430.0, policy.clone(), 2000));
        assert!(s.max_abs_e_s_after_steady_ms.unwrap() <= 4.5, "{}", policy.label());
    }
}

#[test]
fn sawtooth_between_updates() {
    let trace = run(&scenario(430.0, CorrectionPolicy::gradual_default(), 2000)).unwrap();
    let recs = &trace.nodes[0].records;
    let start = steady_start(recs, 3, 20).unwrap();
    let mut prev: Option<u64> = None;
    for r in &recs[start..] {
        let e = r.e_s().unwrap().unsigned_abs();
        if let Some(p) = prev {
            assert!(e >= p, "period {}: |e_s| fell from {p} to {e} without an update", r.period);
        }
        prev = if r.is_update() { None } else { Some(e) };
    }
}

#[test]
fn policy_ordering() {
    let cmp = compare(&[
        scenario(430.0, CorrectionPolicy::gradual_default(), 2000),
        scenario(430.0, CorrectionPolicy::fixed_15(), 2000),
        scenario(430.0, CorrectionPolicy::fixed_1(), 2000),
    ])
    .unwrap();
    let steady: Vec<u64> = cmp.rows.iter().map(|r| r.summary.as_ref().unwrap().periods_to_steady.unwrap()).collect();
    let (gradual, fixed15, fixed1) = (steady[0], steady[1], steady[2]);
    assert!(fixed15 <= gradual && gradual < fixed1, "{steady:?}");
    let osc: Vec<f64> = cmp.rows.iter().map(|r| r.summary.as_ref().unwrap().calib_oscillation_ppm.unwrap()).collect();
    assert!(osc[0] <= osc[2] && osc[2] < osc[1], "{osc:?}");
}

#[test]
fn comparison_is_deterministic() {
    let a = scenario(430.0, CorrectionPolicy::gradual_default(), 300);
    let cmp = compare(&[a.clone(), a]).unwrap();
    assert_eq!(cmp.rows[0].summary, cmp.rows[1].summary);
}

#[test]
fn stop_and_slow_match_overwrite_at_the_end() {
    let base = scenario(430.0, CorrectionPolicy::gradual_default(), 600);
    let mut finals = Vec::new();
    for strategy in [UpdateStrategy::Overwrite, UpdateStrategy::Stop, UpdateStrategy::Slow(0.5)] {
        let mut sc = base.clone();
        sc.nodes[0].update_strategy = strategy;
        let trace = run(&sc).unwrap();
        let recs = &trace.nodes[0].records;
        let reads: Vec<u64> = recs.iter().flat_map(|r| [r.node_ticks_rx, r.node_ticks_after]).collect();
        let monotone = reads.windows(2).all(|w| w[1] >= w[0]);
        assert_eq!(monotone, strategy != UpdateStrategy::Overwrite, "{strategy:?}");
        finals.push(recs.last().unwrap().node_ticks_after);
    }
    assert!(finals.iter().all(|f| f.abs_diff(finals[0]) <= 1), "{finals:?}");
}

#[test]
fn tracks_a_temperature_like_step() {
    let mut sc = scenario(0.0, CorrectionPolicy::gradual_default(), 3000);
    sc.nodes[0].drift = DriftProfile::Steps(vec![
        DriftStep { at_s: 0.0, ppm: Ppm::new(120.0).unwrap() },
        DriftStep { at_s: 15_000.0, ppm: Ppm::new(60.0).unwrap() },
    ]);
    let trace = run(&sc).unwrap();
    let last = trace.nodes[0].records.last().unwrap();
    assert!((last.effective_ppm + 60.0).abs() < 3.0, "{}", last.effective_ppm);
}

#[test]
fn several_nodes_share_the_frame() {
    let mut sc = scenario(430.0, CorrectionPolicy::gradual_default(), 400);
    sc.nodes = [(1, -200.0), (2, 35.0), (3, 430.0)]
        .into_iter()
        .map(|(id, d)| NodeSpec {
            id,
            drift: DriftProfile::Constant(Ppm::new(d).unwrap()),
            update_strategy: UpdateStrategy::Overwrite,
        })
        .collect();
    let trace = run(&sc).unwrap();
    assert_eq!(trace.nodes.len(), 3);
    let sums = summarize(&trace);
    assert!(sums.iter().all(|s| s.summary.is_some()));
    let csv = trace.to_csv();
    assert_eq!(csv.lines().count(), 2 + 3 * 400);
}
