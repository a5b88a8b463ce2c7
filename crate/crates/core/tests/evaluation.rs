use proptest::prelude::*;
use uwbtrack_core::{align, error_stats, gaussian_pdf, GroundTruthTrack, Point2, PositionFix, SolveMethod};

fn fix(t: f64, p: Point2) -> PositionFix {
    PositionFix {
        t_s: t,
        position: p,
        sigma_pos_m: 0.0,
        residual_rms_m: 0.0,
        n_ranges_used: 3,
        method: SolveMethod::LeastSquares,
        converged: true,
    }
}

fn pairs() -> impl Strategy<Value = Vec<(PositionFix, Point2)>> {
    prop::collection::vec(((-5.0f64..5.0, -5.0f64..5.0), (-0.5f64..0.5, -0.5f64..0.5)), 1..200).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, ((x, y), (dx, dy)))| (fix(i as f64, Point2::new(x + dx, y + dy)), Point2::new(x, y)))
            .collect()
    })
}

fn transform(p: Point2, theta: f64, shift: Point2) -> Point2 {
    let (s, c) = theta.sin_cos();
    Point2::new(c * p.x - s * p.y, s * p.x + c * p.y) + shift
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rigid_transform_invariance(ps in pairs(), theta in 0.0f64..6.3, sx in -100.0f64..100.0, sy in -100.0f64..100.0) {
        let shift = Point2::new(sx, sy);
        let moved: Vec<_> = ps
            .iter()
            .map(|(f, t)| {
                let mut g = *f;
                g.position = transform(f.position, theta, shift);
                (g, transform(*t, theta, shift))
            })
            .collect();
        let (a, b) = (error_stats(&ps).unwrap(), error_stats(&moved).unwrap());
        prop_assert!((a.mean_m - b.mean_m).abs() < 1e-9);
        prop_assert!((a.sigma_m - b.sigma_m).abs() < 1e-9);
        prop_assert!((a.max_m - b.max_m).abs() < 1e-9);
    }

    #[test]
    fn scaling_scales_exactly(ps in pairs(), e in -4i32..5) {
        let k = 2f64.powi(e);
        let scaled: Vec<_> = ps
            .iter()
            .map(|(f, t)| {
                let mut g = *f;
                g.position = f.position * k;
                (g, *t * k)
            })
            .collect();
        let (a, b) = (error_stats(&ps).unwrap(), error_stats(&scaled).unwrap());
        prop_assert_eq!(b.mean_m, a.mean_m * k);
        prop_assert_eq!(b.sigma_m, a.sigma_m * k);
        prop_assert_eq!(b.max_m, a.max_m * k);
    }

    #[test]
    fn stats_invariants(ps in pairs()) {
        let s = error_stats(&ps).unwrap();
        prop_assert_eq!(s.n, ps.len());
        prop_assert!(s.sigma_m >= 0.0);
        prop_assert!(s.max_m >= s.mean_m);
        prop_assert!((s.fitted_mu_m - s.mean_m).abs() <= 1e-12);
        prop_assert!((s.fitted_sigma_m - s.sigma_m).abs() <= 1e-12);
        prop_assert!(s.histogram.len() >= 20);
        prop_assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), s.n);
    }

    #[test]
    fn align_keeps_fixes_inside_the_span(times in prop::collection::vec(0.0f64..100.0, 1..100)) {
        let truth = GroundTruthTrack::from_samples((0..=100).map(|i| (i as f64, Point2::new(i as f64 * 0.01, 0.0)))).unwrap();
        let fixes: Vec<_> = times.iter().map(|&t| fix(t, Point2::ORIGIN)).collect();
        let a = align(&fixes, &truth, 1.0).unwrap();
        prop_assert_eq!(a.dropped, 0);
        prop_assert_eq!(a.pairs.len(), fixes.len());
        for (f, p) in &a.pairs {
            prop_assert!((p.x - f.t_s * 0.01).abs() < 1e-12);
        }
    }
}

/// Composite Simpson rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + inner + f(b)) * h / 3.0
}

#[test]
fn pdf_integrates_to_one() {
    for (mu, sigma) in [(0.356, 0.270), (0.162, 0.076), (0.0, 1.0)] {
        let area = simpson(|x| gaussian_pdf(x, mu, sigma).unwrap(), mu - 6.0 * sigma, mu + 6.0 * sigma, 2000);
        assert!((area - 1.0).abs() < 1e-6, "{area}");
    }
}

#[test]
fn three_four_five() {
    let ps: Vec<_> = [3.0, 4.0, 5.0]
        .iter()
        .enumerate()
        .map(|(i, &e)| (fix(i as f64, Point2::new(e, 0.0)), Point2::ORIGIN))
        .collect();
    let s = error_stats(&ps).unwrap();
    assert_eq!(s.mean_m, 4.0);
    assert!((s.sigma_m - 0.816_496_580_927_726).abs() < 1e-12);
    assert_eq!(s.max_m, 5.0);
}
