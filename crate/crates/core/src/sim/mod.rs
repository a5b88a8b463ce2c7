//! Deterministic slot-by-slot simulation of a tag moving through an arena.
//!
//! Every scheduled slot owned by the tag produces one ranging exchange with
//! the slot's anchor: the true distance is turned into four timestamps, clock
//! errors are applied, the exchange is inverted, and regime noise is added
//! according to [`NoiseModel`]. Once `ranges_per_fix` fresh ranges from
//! distinct anchors are buffered they are solved by least squares and the
//! buffer is cleared.
//!
//! All randomness comes from one ChaCha8 stream seeded by the caller.

mod noise;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::geometry::{Point2, Rect};
use crate::localization::{
    combine_uncertainty, multilaterate_ls, AnchorId, AnchorSet, LocalizationError, PositionFix,
};
use crate::ranging::{
    apply_clock_model_with, tof_from_exchange, ClockModel, RangingExchange, DEFAULT_REPLY_DELAY_S,
};
use crate::rf::{ChannelParams, RfError, SPEED_OF_LIGHT};
use crate::tdma::Schedule;

pub use noise::{NoiseMode, NoiseModel, TruncatedNormal};
use noise::RegimeSamplers;

/// 48 in.
pub const ARENA_WIDTH_M: f64 = 1.2192;
/// 24 in.
pub const ARENA_HEIGHT_M: f64 = 0.6096;

/// Shortest distance used for link-budget evaluation.
const MIN_LINK_DISTANCE_M: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("link budget: {0}")]
    Rf(#[from] RfError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    pub width_m: f64,
    pub height_m: f64,
    /// Anchor positions; the anchor id is the index.
    pub anchors: Vec<Point2>,
    pub obstacles: Vec<Rect>,
    /// Height of the solving plane (tag and anchors mounted level).
    pub tag_height_m: f64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            width_m: ARENA_WIDTH_M,
            height_m: ARENA_HEIGHT_M,
            anchors: perimeter_anchors(ARENA_WIDTH_M, ARENA_HEIGHT_M),
            obstacles: vec![default_obstacle(ARENA_WIDTH_M, ARENA_HEIGHT_M)],
            tag_height_m: 0.05,
        }
    }
}

/// Four corners (ids 0-3, counter-clockwise from the origin) followed by the
/// four edge midpoints (bottom, right, top, left).
pub fn perimeter_anchors(width: f64, height: f64) -> Vec<Point2> {
    vec![
        Point2::new(0.0, 0.0),
        Point2::new(width, 0.0),
        Point2::new(width, height),
        Point2::new(0.0, height),
        Point2::new(width / 2.0, 0.0),
        Point2::new(width, height / 2.0),
        Point2::new(width / 2.0, height),
        Point2::new(0.0, height / 2.0),
    ]
}

/// A 0.3 x 0.1 m block in the middle of the arena.
pub fn default_obstacle(width: f64, height: f64) -> Rect {
    let (cx, cy) = (width / 2.0, height / 2.0);
    Rect::new(cx - 0.15, cy - 0.05, cx + 0.15, cy + 0.05)
}

impl ArenaConfig {
    /// The default arena with no obstacles.
    pub fn open() -> Self {
        Self {
            obstacles: Vec::new(),
            ..Self::default()
        }
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width_m, self.height_m)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.width_m > 0.0) || !self.width_m.is_finite() {
            return Err(ConfigError::new("arena.width_m", "must be positive"));
        }
        if !(self.height_m > 0.0) || !self.height_m.is_finite() {
            return Err(ConfigError::new("arena.height_m", "must be positive"));
        }
        if !self.tag_height_m.is_finite() {
            return Err(ConfigError::new("arena.tag_height_m", "must be finite"));
        }
        let bounds = self.bounds();
        for (i, a) in self.anchors.iter().enumerate() {
            if !bounds.contains(*a) {
                return Err(ConfigError::new(
                    format!("arena.anchors[{i}]"),
                    format!("({}, {}) lies outside the arena", a.x, a.y),
                ));
            }
        }
        for (i, r) in self.obstacles.iter().enumerate() {
            if !r.is_well_formed() || !bounds.contains_rect(r) {
                return Err(ConfigError::new(
                    format!("arena.obstacles[{i}]"),
                    "must be a well-formed rectangle inside the arena",
                ));
            }
        }
        AnchorSet::from_positions(&self.anchors)
            .map_err(|e| ConfigError::new("arena.anchors", e))?;
        Ok(())
    }

    pub fn anchor_set(&self) -> Result<AnchorSet, LocalizationError> {
        AnchorSet::from_positions(&self.anchors)
    }

    /// Number of obstacles the open segment `a -> b` passes through.
    pub fn obstacles_crossed(&self, a: Point2, b: Point2) -> u32 {
        self.obstacles
            .iter()
            .filter(|r| r.intersects_open_segment(a, b))
            .count() as u32
    }
}

/// Line of sight: the open segment tag -> anchor misses every obstacle.
pub fn classify_los(arena: &ArenaConfig, tag_pos: Point2, anchor_pos: Point2) -> bool {
    arena
        .obstacles
        .iter()
        .all(|r| !r.intersects_open_segment(tag_pos, anchor_pos))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl Waypoint {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Piecewise-linear tag path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    pub max_speed_mps: f64,
}

impl Trajectory {
    pub fn stationary(p: Point2, duration_s: f64) -> Self {
        Self {
            waypoints: vec![
                Waypoint { t: 0.0, x: p.x, y: p.y },
                Waypoint {
                    t: duration_s,
                    x: p.x,
                    y: p.y,
                },
            ],
            max_speed_mps: 0.0,
        }
    }

    pub fn validate(&self, arena: &ArenaConfig) -> Result<(), ConfigError> {
        if self.waypoints.len() < 2 {
            return Err(ConfigError::new(
                "trajectory.waypoints",
                "at least two waypoints are required",
            ));
        }
        if !(self.max_speed_mps >= 0.0) || !self.max_speed_mps.is_finite() {
            return Err(ConfigError::new("trajectory.max_speed_mps", "must be >= 0"));
        }
        let bounds = arena.bounds();
        for (i, w) in self.waypoints.iter().enumerate() {
            let key = format!("trajectory.waypoints[{i}]");
            if !(w.t.is_finite() && w.x.is_finite() && w.y.is_finite()) {
                return Err(ConfigError::new(key, "non-finite value"));
            }
            if !bounds.contains(w.position()) {
                return Err(ConfigError::new(
                    key,
                    format!("position ({}, {}) lies outside the arena", w.x, w.y),
                ));
            }
            if i > 0 {
                let prev = &self.waypoints[i - 1];
                let dt = w.t - prev.t;
                if !(dt > 0.0) {
                    return Err(ConfigError::new(key, "timestamps must be strictly increasing"));
                }
                let speed = prev.position().distance(w.position()) / dt;
                if speed > self.max_speed_mps * (1.0 + 1e-9) {
                    return Err(ConfigError::new(
                        key,
                        format!(
                            "segment speed {speed:.4} m/s exceeds max_speed_mps {}",
                            self.max_speed_mps
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn start_s(&self) -> f64 {
        self.waypoints.first().map_or(0.0, |w| w.t)
    }

    pub fn end_s(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    /// Interpolated position, clamped to the end points.
    pub fn position_at(&self, t: f64) -> Point2 {
        let w = &self.waypoints;
        if t <= w[0].t {
            return w[0].position();
        }
        let last = w.len() - 1;
        if t >= w[last].t {
            return w[last].position();
        }
        let k = w.partition_point(|p| p.t <= t);
        let (a, b) = (&w[k - 1], &w[k]);
        a.position().lerp(b.position(), (t - a.t) / (b.t - a.t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t_s: f64,
    pub tag_id: u32,
    pub anchor_id: AnchorId,
    pub slot_index: u32,
    pub distance_m: f64,
    pub snr_db: f64,
    pub los: bool,
    pub valid: bool,
}

/// Everything `simulate` needs besides the schedule and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub arena: ArenaConfig,
    pub trajectory: Trajectory,
    pub noise: NoiseModel,
    pub channel: ChannelParams,
    pub clock: ClockModel,
    pub ranges_per_fix: usize,
}

impl Scenario {
    /// Per-fix position uncertainty from the clock model.
    pub fn fix_sigma_m(&self) -> f64 {
        combine_uncertainty(self.clock.range_sigma_m(), self.clock.sync_sigma_m())
    }

    pub fn validate(&self, schedule: &Schedule) -> Result<(), ConfigError> {
        self.arena.validate()?;
        self.trajectory.validate(&self.arena)?;
        self.noise.validate()?;
        self.channel
            .validate()
            .map_err(|e| ConfigError::new("channel", e))?;
        self.clock.validate().map_err(|e| ConfigError::new("clock", e))?;
        if self.ranges_per_fix < 3 || self.ranges_per_fix > self.arena.anchors.len() {
            return Err(ConfigError::new(
                "superframe.ranges_per_fix",
                format!("must lie in 3..={}", self.arena.anchors.len()),
            ));
        }
        if schedule.n_anchors as usize > self.arena.anchors.len() {
            return Err(ConfigError::new(
                "superframe",
                format!(
                    "schedule rotates over {} anchors but the arena has {}",
                    schedule.n_anchors,
                    self.arena.anchors.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Collects fresh ranges per anchor and solves once enough are buffered.
#[derive(Debug, Clone)]
pub struct FixAccumulator {
    anchors: AnchorSet,
    ranges_per_fix: usize,
    fresh: BTreeMap<AnchorId, (f64, bool)>,
    last_position: Option<Point2>,
}

/// One solve attempt.
#[derive(Debug, Clone)]
pub struct FixAttempt {
    pub ranges: Vec<(AnchorId, f64)>,
    pub result: Result<PositionFix, LocalizationError>,
    /// Every range in the attempt was line of sight.
    pub los: bool,
}

impl FixAttempt {
    pub fn succeeded(&self) -> Option<&PositionFix> {
        self.result
            .as_ref()
            .ok()
            .filter(|f| f.converged && f.position.is_finite())
    }
}

impl FixAccumulator {
    pub fn new(anchors: AnchorSet, ranges_per_fix: usize) -> Self {
        Self {
            anchors,
            ranges_per_fix: ranges_per_fix.max(3),
            fresh: BTreeMap::new(),
            last_position: None,
        }
    }

    /// Buffer one valid range; returns an attempt when the buffer is full.
    pub fn push(&mut self, anchor: AnchorId, distance_m: f64, los: bool) -> Option<FixAttempt> {
        self.fresh.insert(anchor, (distance_m, los));
        if self.fresh.len() < self.ranges_per_fix {
            return None;
        }
        let ranges: Vec<(AnchorId, f64)> = self.fresh.iter().map(|(&id, &(d, _))| (id, d)).collect();
        let los = self.fresh.values().all(|&(_, l)| l);
        self.fresh.clear();
        let guess = self.last_position.unwrap_or_else(|| self.anchors.centroid());
        let result = multilaterate_ls(&self.anchors, &ranges, guess);
        if let Ok(fix) = &result {
            if fix.converged && fix.position.is_finite() {
                self.last_position = Some(fix.position);
            }
        }
        Some(FixAttempt {
            ranges,
            result,
            los,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOutput {
    pub measurements: Vec<Measurement>,
    pub fixes: Vec<PositionFix>,
    /// True tag position at each fix time.
    pub truth: Vec<Point2>,
    /// Whether each fix was built from line-of-sight ranges only.
    pub fix_los: Vec<bool>,
    pub attempts: usize,
}

impl SimOutput {
    pub fn success_ratio(&self) -> f64 {
        success_ratio(&self.fixes, self.attempts.max(1))
    }
}

/// Successful fixes over attempts, in `[0, 1]`.
pub fn success_ratio(fixes: &[PositionFix], attempts: usize) -> f64 {
    let attempts = attempts.max(1);
    (fixes.len().min(attempts)) as f64 / attempts as f64
}

/// Run the scenario for the trajectory's time span.
///
/// Only tag 0 carries the trajectory; slots of other tags stay idle.
pub fn simulate(scenario: &Scenario, schedule: &Schedule, seed: u64) -> Result<SimOutput, SimError> {
    scenario.validate(schedule)?;
    let samplers = scenario.noise.samplers()?;
    let anchors = scenario
        .arena
        .anchor_set()
        .map_err(|e| ConfigError::new("arena.anchors", e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = FixAccumulator::new(anchors, scenario.ranges_per_fix);
    let sigma_pos = scenario.fix_sigma_m();

    let slot_s = schedule.frame.slot_s();
    let first = (scenario.trajectory.start_s() / slot_s).ceil().max(0.0) as u64;
    let last = (scenario.trajectory.end_s() / slot_s).floor().max(0.0) as u64;

    let mut out = SimOutput::default();
    for g in first..=last {
        let Some(slot) = schedule.assignment_at(g) else {
            continue;
        };
        if slot.tag_id != 0 {
            continue;
        }
        let t = schedule.slot_start_s(g);
        let tag = scenario.trajectory.position_at(t);
        let anchor = scenario.arena.anchors[slot.anchor_id as usize];
        let true_d = tag.distance(anchor);
        let crossed = scenario.arena.obstacles_crossed(tag, anchor);
        let los = crossed == 0;

        let ideal = RangingExchange::for_distance(t, true_d, DEFAULT_REPLY_DELAY_S);
        let observed = apply_clock_model_with(&ideal, &scenario.clock, &mut rng);
        let tof = tof_from_exchange(&observed);
        let mut distance = SPEED_OF_LIGHT * tof.tof_s;
        if let RegimeSamplers::Range { los: l, nlos: n } = &samplers {
            distance += if los { l.sample(&mut rng) } else { n.sample(&mut rng) };
        }
        let valid = tof.valid && distance >= 0.0 && distance.is_finite();
        let snr_db = scenario
            .channel
            .link_budget(true_d.max(MIN_LINK_DISTANCE_M), crossed)?
            .snr_db;

        out.measurements.push(Measurement {
            t_s: t,
            tag_id: slot.tag_id,
            anchor_id: slot.anchor_id,
            slot_index: slot.slot_index,
            distance_m: distance,
            snr_db,
            los,
            valid,
        });
        if !valid {
            continue;
        }

        let Some(attempt) = acc.push(slot.anchor_id, distance, los) else {
            continue;
        };
        out.attempts += 1;
        let Some(fix) = attempt.succeeded() else {
            continue;
        };
        let mut fix = fix.at(t).with_uncertainty(sigma_pos);
        if let RegimeSamplers::Position { los: l, nlos: n } = &samplers {
            let magnitude = if attempt.los {
                l.sample(&mut rng)
            } else {
                n.sample(&mut rng)
            };
            let theta = rng.random::<f64>() * TAU;
            fix.position = fix.position + Point2::new(theta.cos(), theta.sin()) * magnitude;
        }
        out.fixes.push(fix);
        out.truth.push(tag);
        out.fix_los.push(attempt.los);
    }
    Ok(out)
}
