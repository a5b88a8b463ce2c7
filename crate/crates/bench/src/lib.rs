//! Shared fixtures for the uwbtrack benchmarks.

use uwbtrack_core::{
    build_schedule, AnchorId, AnchorSet, ArenaConfig, ChannelParams, ClockModel, NoiseModel,
    Point2, Scenario, Schedule, SuperframeConfig, Trajectory, Waypoint,
};

pub const TAG: Point2 = Point2::new(0.41, 0.27);

/// Default eight-anchor arena with its centre obstacle.
pub fn arena() -> ArenaConfig {
    ArenaConfig::default()
}

pub fn anchor_set() -> AnchorSet {
    arena().anchor_set().expect("default arena anchors")
}

/// Noise-free ranges from every anchor of [`arena`] to `tag`.
pub fn exact_ranges(tag: Point2) -> Vec<(AnchorId, f64)> {
    anchor_set()
        .anchors()
        .iter()
        .map(|a| (a.id, a.position.distance(tag)))
        .collect()
}

/// Rectangular loop around the obstacle, `duration_s` long.
pub fn scenario(duration_s: f64, ranges_per_fix: usize) -> Scenario {
    let corners = [(0.2, 0.1), (1.0, 0.1), (1.0, 0.5), (0.2, 0.5)];
    let n = 40;
    let waypoints = (0..=n)
        .map(|k| {
            let (x, y) = corners[k % 4];
            Waypoint {
                t: duration_s * k as f64 / n as f64,
                x,
                y,
            }
        })
        .collect();
    Scenario {
        arena: arena(),
        trajectory: Trajectory {
            waypoints,
            max_speed_mps: 10.0,
        },
        noise: NoiseModel::default(),
        channel: ChannelParams::default(),
        clock: ClockModel::default(),
        ranges_per_fix,
    }
}

pub fn schedule(update_rate_hz: f64) -> Schedule {
    build_schedule(1, update_rate_hz, &SuperframeConfig::default(), 8).expect("feasible schedule")
}
