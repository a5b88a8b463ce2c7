use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use uwbtrack_core::evaluation::ErrorStats;
use uwbtrack_core::sim::{classify_los, simulate, ArenaConfig, NoiseMode, NoiseModel, Scenario, Trajectory, TruncatedNormal, Waypoint};
use uwbtrack_core::tdma::{build_schedule, SuperframeConfig};
use uwbtrack_core::{ChannelParams, ClockModel, Point2, Rect};

/// Points sampled along the segment by the brute-force oracle.
const ORACLE_SAMPLES: usize = 10_000;

/// Dense-sampling LoS check: blocked iff some midpoint sample
/// `a + (i + 0.5)/N (b - a)` lies inside an obstacle. Overlaps shorter than
/// |b - a| / N can be missed; that is the oracle's error bound.
fn sampled_los(arena: &ArenaConfig, a: Point2, b: Point2) -> bool {
    !(0..ORACLE_SAMPLES).any(|i| {
        let p = a.lerp(b, (i as f64 + 0.5) / ORACLE_SAMPLES as f64);
        arena.obstacles.iter().any(|r| r.contains(p))
    })
}

fn random_point(rng: &mut ChaCha8Rng, arena: &ArenaConfig) -> Point2 {
    Point2::new(rng.random_range(0.0..arena.width_m), rng.random_range(0.0..arena.height_m))
}

#[test]
fn los_classifier_matches_sampling_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut arena = ArenaConfig::open();
    let mut blocked = 0;
    for _ in 0..10_000 {
        let c = random_point(&mut rng, &arena);
        let (hw, hh) = (rng.random_range(0.005..0.3), rng.random_range(0.005..0.15));
        let r = Rect::new(
            (c.x - hw).max(0.0),
            (c.y - hh).max(0.0),
            (c.x + hw).min(arena.width_m),
            (c.y + hh).min(arena.height_m),
        );
        arena.obstacles = vec![r];
        let tag = random_point(&mut rng, &arena);
        let anchor = random_point(&mut rng, &arena);
        let fast = classify_los(&arena, tag, anchor);
        assert_eq!(fast, sampled_los(&arena, tag, anchor), "{tag:?} -> {anchor:?} through {r:?}");
        blocked += usize::from(!fast);
    }
    // both outcomes are exercised
    assert!(blocked > 1000 && blocked < 9000, "{blocked}");
}

#[test]
fn empty_arena_is_always_los() {
    let arena = ArenaConfig::open();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        assert!(classify_los(&arena, random_point(&mut rng, &arena), random_point(&mut rng, &arena)));
    }
}

/// Closed loop around the arena interior at 0.05 m/s.
fn loop_trajectory(duration_s: f64) -> Trajectory {
    let corners = [(0.15, 0.12), (1.05, 0.12), (1.05, 0.48), (0.15, 0.48)];
    let speed = 0.05;
    let mut waypoints = vec![Waypoint { t: 0.0, x: corners[0].0, y: corners[0].1 }];
    let mut t = 0.0;
    let mut k = 0;
    while t < duration_s {
        let (a, b) = (corners[k % 4], corners[(k + 1) % 4]);
        t += Point2::new(a.0, a.1).distance(Point2::new(b.0, b.1)) / speed;
        waypoints.push(Waypoint { t, x: b.0, y: b.1 });
        k += 1;
    }
    Trajectory { waypoints, max_speed_mps: speed * 1.001 }
}

fn scenario(arena: ArenaConfig, trajectory: Trajectory, noise: NoiseModel, ranges_per_fix: usize) -> Scenario {
    Scenario {
        arena,
        trajectory,
        noise,
        channel: ChannelParams::default(),
        clock: ClockModel::default(),
        ranges_per_fix,
    }
}

fn ks_statistic(samples: &mut [f64], mean: f64, sd: f64) -> f64 {
    let dist = Normal::new(mean, sd).unwrap();
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn range_noise_matches_regime_gaussians() {
    let mut arena = ArenaConfig::default();
    arena.obstacles = vec![Rect::new(0.55, 0.0, 0.67, 0.45)];
    let noise = NoiseModel { mode: NoiseMode::RangeNoise, ..NoiseModel::default() };
    let sc = scenario(arena, loop_trajectory(1700.0), noise.clone(), 3);
    let sched = build_schedule(1, 150.0, &SuperframeConfig::default(), 8).unwrap();
    let out = simulate(&sc, &sched, 11).unwrap();

    let (mut los, mut nlos) = (Vec::new(), Vec::new());
    for m in &out.measurements {
        let truth = sc.trajectory.position_at(m.t_s).distance(sc.arena.anchors[m.anchor_id as usize]);
        let err = m.distance_m - truth;
        if m.los { los.push(err) } else { nlos.push(err) }
    }
    for (name, samples, (mean, sd)) in [
        ("los", &mut los, noise.regime(true)),
        ("nlos", &mut nlos, noise.regime(false)),
    ] {
        assert!(samples.len() >= 100_000, "{name}: only {} samples", samples.len());
        let samples = &mut samples[..100_000];
        let d = ks_statistic(samples, mean, sd);
        let critical = 1.628 / (samples.len() as f64).sqrt();
        assert!(d < critical, "{name}: D = {d} >= {critical}");
    }
}

#[test]
fn position_noise_los_statistics() {
    let sc = scenario(ArenaConfig::open(), loop_trajectory(1100.0), NoiseModel::default(), 3);
    let sched = build_schedule(1, 30.0, &SuperframeConfig::default(), 8).unwrap();
    let out = simulate(&sc, &sched, 5).unwrap();
    assert!(out.fixes.len() >= 10_000, "{}", out.fixes.len());
    let errors: Vec<f64> = out.fixes.iter().zip(&out.truth).map(|(f, t)| f.position.distance(*t)).collect();
    let s = ErrorStats::from_errors(&errors).unwrap();
    assert!((s.mean_m - 0.162).abs() <= 0.01, "{}", s.mean_m);
    assert!((s.sigma_m - 0.076).abs() <= 0.01, "{}", s.sigma_m);
}

#[test]
fn position_noise_nlos_wall_statistics() {
    let mut arena = ArenaConfig::default();
    // full-height wall; every right-hand anchor is behind it from the left half
    arena.obstacles = vec![Rect::new(0.55, 0.0, 0.57, arena.height_m)];
    let tag = Point2::new(0.3, 0.3);
    let sc = scenario(arena, Trajectory::stationary(tag, 1100.0), NoiseModel::default(), 3);
    let blocked = sc.arena.anchors.iter().filter(|a| !classify_los(&sc.arena, tag, **a)).count();
    assert!(blocked >= 4, "{blocked}");
    let sched = build_schedule(1, 30.0, &SuperframeConfig::default(), 8).unwrap();
    let out = simulate(&sc, &sched, 6).unwrap();
    let errors: Vec<f64> = out
        .fixes
        .iter()
        .zip(&out.truth)
        .zip(&out.fix_los)
        .filter(|(_, los)| !**los)
        .map(|((f, t), _)| f.position.distance(*t))
        .collect();
    assert!(errors.len() >= 10_000, "{}", errors.len());
    let s = ErrorStats::from_errors(&errors).unwrap();
    assert!((s.mean_m - 0.356).abs() <= 0.02, "{}", s.mean_m);
    assert!((s.sigma_m - 0.270).abs() <= 0.02, "{}", s.sigma_m);
}

#[test]
fn raw_truncation_shifts_the_mean_to_the_oracle_value() {
    // truncating N(0.356, 0.270) at zero without moment matching
    let raw = TruncatedNormal::from_parent(0.356, 0.270);
    assert!((raw.mean() - 0.405_828_357_007_613_97).abs() < 1e-12);
    assert!((raw.sd() - 0.229_517_406_187_877_60).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let draws: Vec<f64> = (0..100_000).map(|_| raw.sample(&mut rng)).collect();
    let s = ErrorStats::from_errors(&draws).unwrap();
    assert!((s.fitted_mu_m - 0.405_828).abs() <= 0.01, "{}", s.fitted_mu_m);

    let matched = TruncatedNormal::matching_moments(0.356, 0.270).unwrap();
    let draws: Vec<f64> = (0..100_000).map(|_| matched.sample(&mut rng)).collect();
    let s = ErrorStats::from_errors(&draws).unwrap();
    assert!((s.fitted_mu_m - 0.356).abs() <= 0.02, "{}", s.fitted_mu_m);
    assert!(draws.iter().all(|&x| x >= 0.0));

    let los = TruncatedNormal::from_parent(0.162, 0.076);
    assert!((los.mean() - 0.165_179_230_320_527_99).abs() < 1e-12);
    assert!((los.sd() - 0.072_462_798_611_725_60).abs() < 1e-12);
}

#[test]
fn same_seed_is_bit_identical() {
    let mut sc = scenario(ArenaConfig::default(), loop_trajectory(60.0), NoiseModel::default(), 3);
    sc.clock = ClockModel { drift_ppm: 2.0, sync_offset_s: 1e-9, sigma_tof_s: 50e-12 };
    let sched = build_schedule(1, 30.0, &SuperframeConfig::default(), 8).unwrap();
    let a = simulate(&sc, &sched, 77).unwrap();
    let b = simulate(&sc, &sched, 77).unwrap();
    let bits = |o: &uwbtrack_core::SimOutput| -> Vec<u64> {
        o.measurements
            .iter()
            .flat_map(|m| [m.t_s.to_bits(), m.distance_m.to_bits(), m.snr_db.to_bits()])
            .chain(o.fixes.iter().flat_map(|f| [f.position.x.to_bits(), f.position.y.to_bits()]))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&simulate(&sc, &sched, 78).unwrap()));
}

#[test]
fn measurements_sit_on_their_scheduled_slots() {
    let sc = scenario(ArenaConfig::default(), loop_trajectory(30.0), NoiseModel::default(), 3);
    let sched = build_schedule(1, 20.0, &SuperframeConfig::default(), 8).unwrap();
    let out = simulate(&sc, &sched, 3).unwrap();
    assert!(!out.measurements.is_empty());
    let slot_s = sched.frame.slot_s();
    for m in &out.measurements {
        let g = (m.t_s / slot_s).round() as u64;
        assert_eq!(sched.slot_start_s(g), m.t_s);
        let a = sched.assignment_at(g).expect("measurement outside any slot");
        assert_eq!((a.tag_id, a.anchor_id, a.slot_index), (m.tag_id, m.anchor_id, m.slot_index));
    }
    let owned = (0..=(sc.trajectory.end_s() / slot_s) as u64)
        .filter(|&g| sched.assignment_at(g).is_some())
        .count();
    assert_eq!(owned, out.measurements.len());
}

#[test]
fn trajectory_leaving_the_arena_is_rejected() {
    let mut t = loop_trajectory(10.0);
    t.waypoints[1].x = 2.0;
    t.max_speed_mps = 10.0;
    let sc = scenario(ArenaConfig::default(), t, NoiseModel::default(), 3);
    let sched = build_schedule(1, 30.0, &SuperframeConfig::default(), 8).unwrap();
    let e = simulate(&sc, &sched, 0).unwrap_err();
    assert!(e.to_string().contains("trajectory"), "{e}");
}
