//! Collision-free TDMA allocation of tag/anchor ranging slots.
//!
//! A superframe of `superframe_s` is split into `slots_per_superframe` equal
//! slots and exactly one tag/anchor pair owns a slot. With the defaults
//! (100 ms, 15 slots) the network carries 150 ranging events per second,
//! which covers both 15 tags at 10 Hz and 750 tags at 0.2 Hz.
//!
//! Slots are laid out over a repeating pattern of `period_superframes`
//! superframes. Within the pattern the `q`-th request (round-major, lowest
//! tag id first) lands on global slot `floor(q * pattern_slots / demand)`,
//! which is strictly increasing in `q` and keeps every tag's spacing within
//! one slot of its nominal update interval. Anchors rotate round-robin per
//! tag and keep rotating across pattern repetitions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SUPERFRAME_S: f64 = 0.100;
pub const DEFAULT_SLOTS_PER_SUPERFRAME: u32 = 15;

/// Longest repeat pattern searched when the update interval is not a whole
/// number of superframes.
const MAX_PERIOD_SUPERFRAMES: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error(
        "capacity exceeded: demand {demand_slots_per_superframe} slots/superframe > capacity {capacity}"
    )]
    CapacityExceeded {
        demand_slots_per_superframe: f64,
        capacity: u32,
    },
    #[error("invalid schedule parameter {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },
    #[error("update rate {rate_hz} Hz does not repeat within {MAX_PERIOD_SUPERFRAMES} superframes")]
    NoRepeatPeriod { rate_hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperframeConfig {
    pub superframe_s: f64,
    pub slots_per_superframe: u32,
}

impl Default for SuperframeConfig {
    fn default() -> Self {
        Self {
            superframe_s: DEFAULT_SUPERFRAME_S,
            slots_per_superframe: DEFAULT_SLOTS_PER_SUPERFRAME,
        }
    }
}

impl SuperframeConfig {
    pub fn slot_s(&self) -> f64 {
        self.superframe_s / f64::from(self.slots_per_superframe)
    }

    /// Ranging events per second the network can carry.
    pub fn capacity_hz(&self) -> f64 {
        f64::from(self.slots_per_superframe) / self.superframe_s
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.superframe_s > 0.0) || !self.superframe_s.is_finite() {
            return Err(ScheduleError::InvalidParameter {
                what: "superframe_s",
                value: self.superframe_s,
            });
        }
        if self.slots_per_superframe == 0 {
            return Err(ScheduleError::InvalidParameter {
                what: "slots_per_superframe",
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub slot_index: u32,
    pub superframe_phase: u64,
    pub tag_id: u32,
    pub anchor_id: u32,
}

/// A repeating slot pattern. `assignments` describe the first repetition;
/// [`Schedule::assignment_at`] resolves any later superframe, including the
/// continuing anchor rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub assignments: Vec<Assignment>,
    pub period_superframes: u64,
    pub frame: SuperframeConfig,
    pub update_rate_hz: f64,
    pub n_tags: u32,
    pub n_anchors: u32,
}

impl Schedule {
    pub fn slots_per_period(&self) -> u64 {
        self.period_superframes * u64::from(self.frame.slots_per_superframe)
    }

    /// Nominal spacing between consecutive slots of one tag, in slots.
    pub fn nominal_interval_slots(&self) -> f64 {
        1.0 / (self.update_rate_hz * self.frame.slot_s())
    }

    /// Ranging slots each tag owns per repetition.
    pub fn slots_per_tag_per_period(&self) -> u64 {
        let n_tags = u64::from(self.n_tags.max(1));
        self.assignments.len() as u64 / n_tags
    }

    /// Owner of an absolute slot number (slot 0 starts at t = 0), if any.
    pub fn assignment_at(&self, global_slot: u64) -> Option<Assignment> {
        let slots = u64::from(self.frame.slots_per_superframe);
        let per_period = self.slots_per_period();
        let cycle = global_slot / per_period;
        let in_period = global_slot % per_period;
        let phase = in_period / slots;
        let slot_index = (in_period % slots) as u32;
        // assignments are sorted by (phase, slot)
        let idx = self
            .assignments
            .binary_search_by(|a| (a.superframe_phase, a.slot_index).cmp(&(phase, slot_index)))
            .ok()?;
        let mut a = self.assignments[idx];
        if self.n_anchors > 0 {
            let shift = (cycle % u64::from(self.n_anchors)) * self.slots_per_tag_per_period();
            a.anchor_id = ((u64::from(a.anchor_id) + shift) % u64::from(self.n_anchors)) as u32;
        }
        Some(a)
    }

    /// Start time of an absolute slot number.
    pub fn slot_start_s(&self, global_slot: u64) -> f64 {
        global_slot as f64 * self.frame.slot_s()
    }

    /// `slot,phase,tag,anchor` rows, header included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,phase,tag,anchor\n");
        for a in &self.assignments {
            out.push_str(&format!(
                "{},{},{},{}\n",
                a.slot_index, a.superframe_phase, a.tag_id, a.anchor_id
            ));
        }
        out
    }
}

/// Slots per superframe requested by `n_tags` tags at `update_rate_hz`.
pub fn slot_demand(n_tags: u32, update_rate_hz: f64, cfg: &SuperframeConfig) -> f64 {
    f64::from(n_tags) * update_rate_hz * cfg.superframe_s
}

/// Smallest number of superframes holding a whole number of updates per tag.
fn repeat_period(update_rate_hz: f64, cfg: &SuperframeConfig) -> Result<(u64, u64), ScheduleError> {
    let per_frame = update_rate_hz * cfg.superframe_s;
    // Pure inverse first, which is the common case (0.2 Hz -> 50 frames).
    let inverse = (1.0 / per_frame).ceil().max(1.0) as u64;
    let candidates = std::iter::once(inverse).chain(1..=MAX_PERIOD_SUPERFRAMES);
    for p in candidates {
        let updates = per_frame * p as f64;
        let rounded = updates.round();
        if rounded >= 1.0 && (updates - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            return Ok((p, rounded as u64));
        }
    }
    Err(ScheduleError::NoRepeatPeriod {
        rate_hz: update_rate_hz,
    })
}

/// Allocate one slot per tag per update interval, round-robin over anchors.
pub fn build_schedule(
    n_tags: u32,
    update_rate_hz: f64,
    cfg: &SuperframeConfig,
    n_anchors: u32,
) -> Result<Schedule, ScheduleError> {
    cfg.validate()?;
    if n_tags == 0 {
        return Err(ScheduleError::InvalidParameter {
            what: "n_tags",
            value: 0.0,
        });
    }
    if !(update_rate_hz > 0.0) || !update_rate_hz.is_finite() {
        return Err(ScheduleError::InvalidParameter {
            what: "update_rate_hz",
            value: update_rate_hz,
        });
    }
    if n_anchors == 0 {
        return Err(ScheduleError::InvalidParameter {
            what: "n_anchors",
            value: 0.0,
        });
    }
    let demand = slot_demand(n_tags, update_rate_hz, cfg);
    let capacity = cfg.slots_per_superframe;
    if demand > f64::from(capacity) * (1.0 + 1e-12) {
        return Err(ScheduleError::CapacityExceeded {
            demand_slots_per_superframe: demand,
            capacity,
        });
    }

    let (period, per_tag) = repeat_period(update_rate_hz, cfg)?;
    let slots = u64::from(capacity);
    let pattern_slots = period * slots;
    let requests = per_tag * u64::from(n_tags);
    debug_assert!(requests <= pattern_slots);

    let mut assignments = Vec::with_capacity(requests as usize);
    for q in 0..requests {
        let round = q / u64::from(n_tags);
        let tag_id = (q % u64::from(n_tags)) as u32;
        let global = (u128::from(q) * u128::from(pattern_slots) / u128::from(requests)) as u64;
        assignments.push(Assignment {
            slot_index: (global % slots) as u32,
            superframe_phase: global / slots,
            tag_id,
            anchor_id: ((u64::from(tag_id) + round) % u64::from(n_anchors)) as u32,
        });
    }

    Ok(Schedule {
        assignments,
        period_superframes: period,
        frame: cfg.clone(),
        update_rate_hz,
        n_tags,
        n_anchors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Conflict {
    /// Several assignments share one slot of the pattern.
    Collision {
        slot_index: u32,
        superframe_phase: u64,
        tags: Vec<u32>,
    },
    /// A tag waits longer than its update interval (plus one slot) for a slot.
    Starvation {
        tag_id: u32,
        gap_slots: u64,
        allowed_slots: f64,
    },
    /// A tag gets slots more often than its update interval (minus one slot).
    Crowding {
        tag_id: u32,
        gap_slots: u64,
        allowed_slots: f64,
    },
    /// An assignment outside the superframe or repeat pattern.
    OutOfRange { slot_index: u32, superframe_phase: u64 },
}

/// All collisions and update-period violations; empty for a sound schedule.
pub fn validate_schedule(s: &Schedule) -> Vec<Conflict> {
    let mut conflicts = Vec::new();
    let slots = u64::from(s.frame.slots_per_superframe);
    let pattern_slots = s.slots_per_period();

    let mut owners: BTreeMap<(u64, u32), Vec<u32>> = BTreeMap::new();
    let mut per_tag: BTreeMap<u32, Vec<u64>> = (0..s.n_tags).map(|t| (t, Vec::new())).collect();
    for a in &s.assignments {
        if u64::from(a.slot_index) >= slots || a.superframe_phase >= s.period_superframes.max(1) {
            conflicts.push(Conflict::OutOfRange {
                slot_index: a.slot_index,
                superframe_phase: a.superframe_phase,
            });
            continue;
        }
        owners
            .entry((a.superframe_phase, a.slot_index))
            .or_default()
            .push(a.tag_id);
        per_tag
            .entry(a.tag_id)
            .or_default()
            .push(a.superframe_phase * slots + u64::from(a.slot_index));
    }
    for ((phase, slot), tags) in owners {
        if tags.len() > 1 {
            conflicts.push(Conflict::Collision {
                slot_index: slot,
                superframe_phase: phase,
                tags,
            });
        }
    }

    let nominal = s.nominal_interval_slots();
    for (tag_id, mut slots_of_tag) in per_tag {
        if slots_of_tag.is_empty() {
            conflicts.push(Conflict::Starvation {
                tag_id,
                gap_slots: u64::MAX,
                allowed_slots: nominal + 1.0,
            });
            continue;
        }
        slots_of_tag.sort_unstable();
        slots_of_tag.dedup();
        let wrap = slots_of_tag[0] + pattern_slots;
        let gaps = slots_of_tag
            .windows(2)
            .map(|w| w[1] - w[0])
            .chain(std::iter::once(wrap - slots_of_tag[slots_of_tag.len() - 1]));
        for gap in gaps {
            let g = gap as f64;
            if g > nominal + 1.0 + 1e-9 {
                conflicts.push(Conflict::Starvation {
                    tag_id,
                    gap_slots: gap,
                    allowed_slots: nominal + 1.0,
                });
            } else if g < nominal - 1.0 - 1e-9 {
                conflicts.push(Conflict::Crowding {
                    tag_id,
                    gap_slots: gap,
                    allowed_slots: nominal - 1.0,
                });
            }
        }
    }
    conflicts
}
