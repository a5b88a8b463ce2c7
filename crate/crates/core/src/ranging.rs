//! Two-way ranging: time of flight from a four-timestamp exchange.
//!
//! The exchange is read as symmetric double-sided TWR measured at the
//! initiator. Two round trips are timed (poll/response and final/final-ack),
//! each containing one responder reply delay `t_rsp`:
//!
//! ```text
//! ToF = ((t_rr - t_sp) - t_rsp + (t_rf - t_sr) - t_rsp) / 4
//! ```
//!
//! With ideal clocks each `round - reply` is exactly `2 ToF`.
//!
//! Timestamps are held as integer [`Ticks`] of 1e-24 s. A 10 ms exchange
//! stored as `f64` seconds only resolves ~1.7e-18 s (about 0.5 nm of range),
//! while the integer form keeps the round trip exact and reserves all
//! rounding to the single conversion back to seconds.

use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rf::SPEED_OF_LIGHT;

/// Ticks per second of the exchange time base.
pub const TICKS_PER_SECOND: f64 = 1e24;

/// Responder reply delay used by the simulator.
pub const DEFAULT_REPLY_DELAY_S: f64 = 500e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RangingError {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid ranging exchange: {0}")]
    InvalidExchange(&'static str),
}

/// A time instant or duration in units of 1e-24 s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ticks(pub i128);

impl Ticks {
    pub const ZERO: Ticks = Ticks(0);

    /// Nearest tick to `secs`.
    pub fn from_secs(secs: f64) -> Self {
        Ticks((secs * TICKS_PER_SECOND).round() as i128)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND
    }
}

impl Add for Ticks {
    type Output = Ticks;
    fn add(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 + rhs.0)
    }
}

impl Sub for Ticks {
    type Output = Ticks;
    fn sub(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 - rhs.0)
    }
}

/// The four initiator timestamps and the responder reply delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangingExchange {
    /// Initiator sends poll.
    pub t_sp: Ticks,
    /// Initiator receives response.
    pub t_rr: Ticks,
    /// Initiator sends final.
    pub t_sr: Ticks,
    /// Initiator receives final-ack.
    pub t_rf: Ticks,
    /// Responder processing/reply delay.
    pub t_rsp: Ticks,
}

impl RangingExchange {
    /// Exchange seen by perfect clocks for a true time of flight `tof_s`.
    ///
    /// The initiator turns the final around with the same delay as the responder.
    pub fn ideal(start_s: f64, tof_s: f64, reply_s: f64) -> Self {
        let tof = Ticks::from_secs(tof_s);
        let reply = Ticks::from_secs(reply_s);
        let t_sp = Ticks::from_secs(start_s);
        let t_rr = t_sp + tof + reply + tof;
        let t_sr = t_rr + reply;
        let t_rf = t_sr + tof + reply + tof;
        Self {
            t_sp,
            t_rr,
            t_sr,
            t_rf,
            t_rsp: reply,
        }
    }

    /// Exchange that would be observed for a true distance.
    pub fn for_distance(start_s: f64, distance_m: f64, reply_s: f64) -> Self {
        Self::ideal(start_s, distance_m / SPEED_OF_LIGHT, reply_s)
    }

    pub fn validate(&self) -> Result<(), RangingError> {
        if self.t_rr <= self.t_sp {
            return Err(RangingError::InvalidExchange("t_rr must follow t_sp"));
        }
        if self.t_rf <= self.t_sr {
            return Err(RangingError::InvalidExchange("t_rf must follow t_sr"));
        }
        if self.t_rsp < Ticks::ZERO {
            return Err(RangingError::InvalidExchange("t_rsp must be non-negative"));
        }
        if self.t_rr - self.t_sp < self.t_rsp || self.t_rf - self.t_sr < self.t_rsp {
            return Err(RangingError::InvalidExchange(
                "round-trip interval shorter than reply delay",
            ));
        }
        Ok(())
    }
}

/// Result of inverting an exchange. Negative estimates are kept, flagged invalid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TofEstimate {
    pub tof_s: f64,
    pub valid: bool,
}

pub fn tof_from_exchange(ex: &RangingExchange) -> TofEstimate {
    let twice_two_tof = (ex.t_rr - ex.t_sp) - ex.t_rsp + (ex.t_rf - ex.t_sr) - ex.t_rsp;
    let tof_s = twice_two_tof.as_secs() / 4.0;
    TofEstimate {
        tof_s,
        valid: tof_s >= 0.0,
    }
}

pub fn distance_from_tof(tof_s: f64) -> Result<f64, RangingError> {
    if !(tof_s >= 0.0) || !tof_s.is_finite() {
        return Err(RangingError::Domain {
            what: "tof_s",
            value: tof_s,
        });
    }
    Ok(SPEED_OF_LIGHT * tof_s)
}

pub fn tof_from_distance(distance_m: f64) -> Result<f64, RangingError> {
    if !(distance_m >= 0.0) || !distance_m.is_finite() {
        return Err(RangingError::Domain {
            what: "distance_m",
            value: distance_m,
        });
    }
    Ok(distance_m / SPEED_OF_LIGHT)
}

/// Round-trip time as a fraction of the period, in `[0, 1]`.
pub fn normalized_distance(t_rt: f64, t_total: f64) -> Result<f64, RangingError> {
    if !(t_total > 0.0) || !t_total.is_finite() {
        return Err(RangingError::Domain {
            what: "t_total",
            value: t_total,
        });
    }
    if !(t_rt >= 0.0) || t_rt > t_total {
        return Err(RangingError::Domain {
            what: "t_rt",
            value: t_rt,
        });
    }
    Ok(t_rt / t_total)
}

/// Initiator clock imperfections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockModel {
    /// Frequency error of the initiator clock, parts per million.
    pub drift_ppm: f64,
    /// Constant offset added to initiator timestamps. It cancels in two-way
    /// ranging; its magnitude is carried as the synchronisation term of the
    /// position uncertainty.
    pub sync_offset_s: f64,
    /// Standard deviation of the noise on each timestamp.
    pub sigma_tof_s: f64,
}

impl ClockModel {
    pub fn validate(&self) -> Result<(), RangingError> {
        if !self.drift_ppm.is_finite() || self.drift_ppm <= -1e6 {
            return Err(RangingError::Domain {
                what: "drift_ppm",
                value: self.drift_ppm,
            });
        }
        if !self.sync_offset_s.is_finite() {
            return Err(RangingError::Domain {
                what: "sync_offset_s",
                value: self.sync_offset_s,
            });
        }
        if !(self.sigma_tof_s >= 0.0) || !self.sigma_tof_s.is_finite() {
            return Err(RangingError::Domain {
                what: "sigma_tof_s",
                value: self.sigma_tof_s,
            });
        }
        Ok(())
    }

    /// Range standard deviation produced by the timestamp noise. Four noisy
    /// timestamps enter the estimate with weight 1/4, so sigma_ToF = sigma / 2.
    pub fn range_sigma_m(&self) -> f64 {
        SPEED_OF_LIGHT * self.sigma_tof_s / 2.0
    }

    pub fn sync_sigma_m(&self) -> f64 {
        SPEED_OF_LIGHT * self.sync_offset_s.abs()
    }
}

/// Apply drift, offset and timestamp noise, deterministically for a seed.
pub fn apply_clock_model(ex: &RangingExchange, clock: &ClockModel, rng_seed: u64) -> RangingExchange {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    apply_clock_model_with(ex, clock, &mut rng)
}

/// [`apply_clock_model`] drawing noise from a caller-owned generator.
pub fn apply_clock_model_with<R: Rng + ?Sized>(
    ex: &RangingExchange,
    clock: &ClockModel,
    rng: &mut R,
) -> RangingExchange {
    let rate = clock.drift_ppm * 1e-6;
    let scale = |t: Ticks| -> Ticks {
        if rate == 0.0 {
            t
        } else {
            t + Ticks((t.0 as f64 * rate).round() as i128)
        }
    };
    let offset = Ticks::from_secs(clock.sync_offset_s);
    let noise = Normal::new(0.0, clock.sigma_tof_s).ok();
    let mut stamp = |t: Ticks| -> Ticks {
        let jitter = match &noise {
            Some(n) if clock.sigma_tof_s > 0.0 => Ticks::from_secs(n.sample(rng)),
            _ => Ticks::ZERO,
        };
        scale(t) + offset + jitter
    };
    let t_sp = stamp(ex.t_sp);
    let t_rr = stamp(ex.t_rr);
    let t_sr = stamp(ex.t_sr);
    let t_rf = stamp(ex.t_rf);
    RangingExchange {
        t_sp,
        t_rr,
        t_sr,
        t_rf,
        t_rsp: scale(ex.t_rsp),
    }
}
