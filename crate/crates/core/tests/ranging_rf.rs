use proptest::prelude::*;
use uwbtrack_core::ranging::{apply_clock_model, ClockModel, RangingExchange};
use uwbtrack_core::rf::{
    channel_capacity_bps, free_space_range, linear_to_db, path_loss_db, snr_db, ChannelParams,
};
use uwbtrack_core::{distance_from_tof, tof_from_exchange};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn twr_round_trip(d in 0.0f64..200.0, reply in 0.0f64..10e-3, start in 0.0f64..3600.0) {
        let ex = RangingExchange::for_distance(start, d, reply);
        let est = tof_from_exchange(&ex);
        prop_assert!(est.valid);
        let back = distance_from_tof(est.tof_s).unwrap();
        prop_assert!((back - d).abs() < 1e-12, "d={d} back={back}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn reply_delay_does_not_change_tof(d in 0.0f64..50.0, r1 in 0.0f64..10e-3, r2 in 0.0f64..10e-3) {
        let a = tof_from_exchange(&RangingExchange::for_distance(1.0, d, r1));
        let b = tof_from_exchange(&RangingExchange::for_distance(1.0, d, r2));
        prop_assert_eq!(a.tof_s, b.tof_s);
    }

    #[test]
    fn uniform_drift_scales_tof(d in 0.1f64..50.0, ppm in -100.0f64..100.0, reply in 0.0f64..1e-3) {
        let ex = RangingExchange::for_distance(0.0, d, reply);
        let clock = ClockModel { drift_ppm: ppm, ..ClockModel::default() };
        let drifted = tof_from_exchange(&apply_clock_model(&ex, &clock, 3));
        let expected = tof_from_exchange(&ex).tof_s * (1.0 + ppm * 1e-6);
        prop_assert!((drifted.tof_s - expected).abs() < 1e-21, "{} vs {}", drifted.tof_s, expected);
    }

    #[test]
    fn path_loss_increases_with_distance_and_obstacles(d in 1e-3f64..100.0, k in 1.0001f64..10.0, n in 0u32..10) {
        let p = ChannelParams::default();
        let base = path_loss_db(&p, d, n).unwrap();
        prop_assert!(path_loss_db(&p, d * k, n).unwrap() > base);
        prop_assert!(path_loss_db(&p, d, n + 1).unwrap() > base);
    }

    #[test]
    fn free_space_range_consistent_with_path_loss(rx_dbm in -120.0f64..0.0, gt in 0.5f64..4.0, gr in 0.5f64..4.0) {
        let p = ChannelParams {
            tx_power_w: 1e-3,
            tx_gain_linear: gt,
            rx_gain_linear: gr,
            ..ChannelParams::isotropic()
        };
        let rx_w = 1e-3 * 10f64.powf(rx_dbm / 10.0);
        let d = free_space_range(&p, rx_w).unwrap();
        let loss = path_loss_db(&p, d, 0).unwrap();
        let expected = linear_to_db(p.tx_power_w * gt * gr / rx_w);
        prop_assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
    }

    #[test]
    fn snr_is_antisymmetric(a in 1e-15f64..1e3, b in 1e-15f64..1e3) {
        prop_assert!((snr_db(a, b).unwrap() + snr_db(b, a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn capacity_monotone_and_concave(b in 1e6f64..2e9, s1 in 0.0f64..1e4, s2 in 0.0f64..1e4) {
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        prop_assume!(hi - lo > 1e-9);
        let c = |s: f64| channel_capacity_bps(b, s).unwrap();
        prop_assert!(c(hi) > c(lo));
        prop_assert!(channel_capacity_bps(b * 1.5, hi).unwrap() > c(hi));
        prop_assert!(c(0.5 * (lo + hi)) >= 0.5 * (c(lo) + c(hi)) * (1.0 - 1e-12));
        // spectral efficiency depends on SNR only
        let eff = c(hi) / b;
        let eff2 = channel_capacity_bps(2.0 * b, hi).unwrap() / (2.0 * b);
        prop_assert!((eff - eff2).abs() <= 1e-12 * eff.max(1.0));
    }
}
