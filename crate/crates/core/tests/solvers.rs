use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uwbtrack_core::geometry::triangle_area;
use uwbtrack_core::sim::perimeter_anchors;
use uwbtrack_core::{combine_uncertainty, multilaterate_ls, trilaterate, AnchorId, AnchorSet, Point2};

fn point(range: f64) -> impl Strategy<Value = Point2> {
    (-range..range, -range..range).prop_map(|(x, y)| Point2::new(x, y))
}

/// Anchor triples whose triangle is not close to a line.
fn triple() -> impl Strategy<Value = [Point2; 3]> {
    [point(10.0), point(10.0), point(10.0)].prop_filter("well-conditioned", |[a, b, c]| {
        let longest = a.distance(*b).max(b.distance(*c)).max(a.distance(*c));
        triangle_area(*a, *b, *c) > 0.05 * longest * longest
    })
}

fn rotate(p: Point2, theta: f64, shift: Point2) -> Point2 {
    let (s, c) = theta.sin_cos();
    Point2::new(c * p.x - s * p.y, s * p.x + c * p.y) + shift
}

fn ranges_to(anchors: &[Point2], target: Point2) -> Vec<(AnchorId, f64)> {
    anchors
        .iter()
        .enumerate()
        .map(|(i, a)| (i as AnchorId, a.distance(target)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn noiseless_trilateration_is_exact(a in triple(), target in point(10.0)) {
        let d = a.map(|ai| ai.distance(target));
        let t = trilaterate(a, d).unwrap();
        prop_assert!(!t.approximate);
        prop_assert!(t.position.distance(target) < 1e-9, "{:?} vs {:?}", t.position, target);
    }

    #[test]
    fn least_squares_matches_closed_form(a in triple(), target in point(10.0)) {
        let d = a.map(|ai| ai.distance(target));
        let closed = trilaterate(a, d).unwrap().position;
        let set = AnchorSet::from_positions(&a).unwrap();
        let fix = multilaterate_ls(&set, &ranges_to(&a, target), set.centroid()).unwrap();
        prop_assert!(fix.converged);
        prop_assert!(fix.position.distance(closed) < 1e-9, "{:?} vs {:?}", fix.position, closed);
    }

    #[test]
    fn combine_is_hypot(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let c = combine_uncertainty(a, b);
        prop_assert!((c - (a * a + b * b).sqrt()).abs() <= 1e-12);
        prop_assert_eq!(c, combine_uncertainty(b, a));
        prop_assert!(c >= a.max(b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn rigid_motion_leaves_relative_position(a in triple(), target in point(10.0),
                                            theta in 0.0f64..std::f64::consts::TAU, shift in point(50.0)) {
        let d = a.map(|ai| ai.distance(target));
        let moved = a.map(|ai| rotate(ai, theta, shift));
        let p1 = trilaterate(a, d).unwrap().position;
        let p2 = trilaterate(moved, d).unwrap().position;
        prop_assert!(rotate(p1, theta, shift).distance(p2) < 1e-9);
    }
}

#[test]
fn pythagorean_uncertainty() {
    assert_eq!(combine_uncertainty(3.0, 4.0), 5.0);
    assert_eq!(combine_uncertainty(0.25, 0.0), 0.25);
}

#[test]
fn eight_anchor_fix_and_biased_ranges_against_grid_search() {
    let positions = perimeter_anchors(1.2192, 0.6096);
    let set = AnchorSet::from_positions(&positions).unwrap();
    let target = Point2::new(0.9, 0.25);

    let exact = multilaterate_ls(&set, &ranges_to(&positions, target), set.centroid()).unwrap();
    assert!(exact.position.distance(target) < 1e-9);
    assert!(exact.residual_rms_m < 1e-9);

    let biased: Vec<_> = ranges_to(&positions, target)
        .into_iter()
        .map(|(id, d)| (id, d + 0.05))
        .collect();
    let fix = multilaterate_ls(&set, &biased, set.centroid()).unwrap();
    assert!(fix.converged);
    assert!(fix.residual_rms_m > 0.0);

    let cost = |p: Point2| -> f64 {
        biased
            .iter()
            .map(|&(id, d)| (p.distance(positions[id as usize]) - d).powi(2))
            .sum()
    };
    let mut best = (f64::INFINITY, Point2::ORIGIN);
    for i in 0..=1219 {
        for j in 0..=609 {
            let p = Point2::new(i as f64 * 1e-3, j as f64 * 1e-3);
            let c = cost(p);
            if c < best.0 {
                best = (c, p);
            }
        }
    }
    let grid = best.1;
    assert!(fix.position.distance(grid) <= 1e-3, "{:?} vs {:?}", fix.position, grid);
    let shift = fix.position.distance(target);
    assert!(shift > 1e-3);
    assert!((shift - grid.distance(target)).abs() <= 1e-3);
    assert!(cost(fix.position) <= best.0);
}

#[test]
fn residual_grows_with_range_noise() {
    let positions = perimeter_anchors(1.2192, 0.6096);
    let set = AnchorSet::from_positions(&positions).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 400;
    let mean_residual = |sigma: f64, rng: &mut ChaCha8Rng| -> (f64, f64) {
        let noise = Normal::new(0.0, sigma).unwrap();
        let r: Vec<f64> = (0..trials)
            .map(|_| {
                let target = Point2::new(rng.random_range(0.1..1.1), rng.random_range(0.1..0.5));
                let ranges: Vec<_> = ranges_to(&positions, target)
                    .into_iter()
                    .map(|(id, d)| (id, (d + noise.sample(rng)).max(0.0)))
                    .collect();
                multilaterate_ls(&set, &ranges, set.centroid()).unwrap().residual_rms_m
            })
            .collect();
        let m = r.iter().sum::<f64>() / trials as f64;
        let v = r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (m, (v / trials as f64).sqrt())
    };
    let mut prev = mean_residual(1e-6, &mut rng);
    for sigma in [0.01, 0.03, 0.1] {
        let next = mean_residual(sigma, &mut rng);
        // one-sided 95 % test on the difference of means
        let se = (prev.1.powi(2) + next.1.powi(2)).sqrt();
        assert!(next.0 - prev.0 > 1.645 * se, "sigma {sigma}: {prev:?} -> {next:?}");
        prev = next;
    }
}

#[test]
fn three_range_fix_in_arena_from_centroid() {
    let positions = perimeter_anchors(1.2192, 0.6096);
    let set = AnchorSet::from_positions(&positions).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let target = Point2::new(rng.random_range(0.0..1.2192), rng.random_range(0.0..0.6096));
        let mut ids: Vec<usize> = (0..8).collect();
        for k in 0..3 {
            let j = rng.random_range(k..8);
            ids.swap(k, j);
        }
        let tri = [positions[ids[0]], positions[ids[1]], positions[ids[2]]];
        if triangle_area(tri[0], tri[1], tri[2]) < 1e-6 {
            continue;
        }
        let ranges: Vec<_> = ids[..3]
            .iter()
            .map(|&i| (i as AnchorId, positions[i].distance(target)))
            .collect();
        let fix = multilaterate_ls(&set, &ranges, set.centroid()).unwrap();
        let closed = trilaterate(tri, tri.map(|a| a.distance(target))).unwrap();
        assert!(fix.position.distance(closed.position) < 1e-9, "{target:?} {ids:?}");
    }
}
