use proptest::prelude::*;
use tdma_sync::clock::{CalibrationRegister, Direction, DriftProfile, Ppm, SimClock, Ticks, UpdateStrategy};

// Exact reference: ticks accrued = sum(dt_ms * (1e9 + rate_millippm) * 1024) / 1e12.
const ORACLE_DEN: i128 = 1_000_000_000_000;

fn oracle_numerator(segments: &[(u32, i64)]) -> i128 {
    segments
        .iter()
        .map(|&(dt_ms, rate_mppm)| dt_ms as i128 * (1_000_000_000 + rate_mppm as i128) * 1024)
        .sum()
}

fn clock_with(drift_mppm: i64, strategy: UpdateStrategy) -> SimClock {
    let drift = DriftProfile::Constant(Ppm::new(drift_mppm as f64 / 1000.0).unwrap());
    SimClock::new(drift, strategy).unwrap()
}

#[test]
fn oracle_reproduces_worked_examples() {
    // 10 s at 0 ppm and at +430 ppm.
    assert_eq!(oracle_numerator(&[(10_000, 0)]) / ORACLE_DEN, 10240);
    assert_eq!(oracle_numerator(&[(10_000, 430_000)]) / ORACLE_DEN, 10244);
    // +430 ppm with -450 steps of 0.955 ppm: residual +0.25 ppm.
    assert_eq!(oracle_numerator(&[(10_000, 430_000 - 450 * 955)]) / ORACLE_DEN, 10240);

    let mut c = clock_with(430_000, UpdateStrategy::Overwrite);
    c.advance(10.0).unwrap();
    assert_eq!(c.now(), Ticks(10244));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn advance_tracks_rational_oracle(
        drift_mppm in -480_000i64..480_000,
        ops in prop::collection::vec((1u32..60_000, -500i32..500), 1..40),
    ) {
        let mut clock = clock_with(drift_mppm, UpdateStrategy::Overwrite);
        let mut segments = Vec::new();
        for (dt_ms, steps) in ops {
            let reg = CalibrationRegister::default().with_steps(steps);
            clock.set_calibration(reg);
            clock.advance(dt_ms as f64 / 1000.0).unwrap();
            segments.push((dt_ms, drift_mppm + reg.steps() as i64 * 955));
            let num = oracle_numerator(&segments);
            let diff = clock.now().count() as i128 * ORACLE_DEN - num;
            prop_assert!(diff.abs() < ORACLE_DEN, "deviation {} ticks", diff as f64 / ORACLE_DEN as f64);
        }
    }

    #[test]
    fn calibration_stays_on_lattice(
        start in -510i32..=511,
        requests in prop::collection::vec((0.0f64..60.0, any::<bool>()), 0..50),
    ) {
        let mut reg = CalibrationRegister::default().with_steps(start);
        for (ppm, up) in requests {
            let dir = if up { Direction::Increase } else { Direction::Decrease };
            reg = reg.apply(Ppm::new(ppm).unwrap(), dir).unwrap().register;
            let eff = reg.effective_ppm().value();
            prop_assert!((-487.1..=488.5).contains(&eff), "{eff}");
            let k = eff / 0.955;
            prop_assert!((k - k.round()).abs() < 1e-9);
            prop_assert_eq!(k.round() as i32, reg.steps());
        }
    }

    #[test]
    fn stop_and_slow_never_step_backwards(
        drift_mppm in -480_000i64..480_000,
        slow in prop::option::of(0.05f64..0.95),
        ops in prop::collection::vec((0u32..2_000, -40i64..40), 1..60),
    ) {
        let strategy = slow.map_or(UpdateStrategy::Stop, UpdateStrategy::Slow);
        let mut clock = clock_with(drift_mppm, strategy);
        let mut last = clock.now();
        for (dt_ms, jump) in ops {
            clock.advance(dt_ms as f64 / 1000.0).unwrap();
            prop_assert!(clock.now() >= last);
            last = clock.now();
            let target = clock.now().saturating_add_signed(jump);
            clock.write_timestamp(target);
            prop_assert!(clock.now() >= last);
            last = clock.now();
        }
    }

    #[test]
    fn strategies_agree_once_adjustment_is_absorbed(
        drift_mppm in -480_000i64..480_000,
        back in 1u64..200,
        factor in 0.1f64..0.9,
    ) {
        let mut clocks: Vec<SimClock> = [UpdateStrategy::Overwrite, UpdateStrategy::Stop, UpdateStrategy::Slow(factor)]
            .into_iter()
            .map(|s| clock_with(drift_mppm, s))
            .collect();
        for c in clocks.iter_mut() {
            c.advance(10.0).unwrap();
            let target = Ticks(c.now().count().saturating_sub(back));
            c.write_timestamp(target);
        }
        // The deficit is absorbed well within 10 s even at factor 0.1.
        for c in clocks.iter_mut() {
            c.advance(10.0).unwrap();
            prop_assert_eq!(c.pending_adjust(), 0);
        }
        let reference = clocks[0].now().count();
        for c in &clocks[1..] {
            prop_assert!(c.now().count().abs_diff(reference) <= 1);
        }
    }
}

#[test]
fn overwrite_exposes_backward_step_on_fast_clock() {
    let mut c = clock_with(430_000, UpdateStrategy::Overwrite);
    c.write_timestamp(Ticks(0));
    c.advance(10.0).unwrap();
    let before = c.now();
    c.write_timestamp(Ticks(10240));
    assert!(c.now() < before);
}
