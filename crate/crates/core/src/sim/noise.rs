//! LoS/NLoS error models.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::config::ConfigError;

/// Parent-normal standardised truncation point range searched by the
/// moment-matching solver.
const ALPHA_MIN: f64 = -40.0;
const ALPHA_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Signed Gaussian bias added to every range.
    RangeNoise,
    /// Ranges stay true; each fix is displaced by a non-negative
    /// Gaussian-magnitude error in a uniformly random direction.
    PositionNoise,
}

/// Error statistics per propagation regime, metres.
///
/// In position-noise mode the mean and sigma describe the displacement
/// magnitude that ends up in the output, truncation at zero included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub mode: NoiseMode,
    pub los_mean_m: f64,
    pub los_sigma_m: f64,
    pub nlos_mean_m: f64,
    pub nlos_sigma_m: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            mode: NoiseMode::PositionNoise,
            los_mean_m: 0.162,
            los_sigma_m: 0.076,
            nlos_mean_m: 0.356,
            nlos_sigma_m: 0.270,
        }
    }
}

impl NoiseModel {
    /// Video-comparison deviations (11.8 mm / 3.5 mm LoS, 35.8 mm / 8.5 mm NLoS).
    pub fn annotation_deviation_preset() -> Self {
        Self {
            mode: NoiseMode::PositionNoise,
            los_mean_m: 0.0118,
            los_sigma_m: 0.0035,
            nlos_mean_m: 0.0358,
            nlos_sigma_m: 0.0085,
        }
    }

    pub fn regime(&self, los: bool) -> (f64, f64) {
        if los {
            (self.los_mean_m, self.los_sigma_m)
        } else {
            (self.nlos_mean_m, self.nlos_sigma_m)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("noise.los_mean_m", self.los_mean_m),
            ("noise.nlos_mean_m", self.nlos_mean_m),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::new(key, format!("must be finite, got {v}")));
            }
        }
        for (key, v) in [
            ("noise.los_sigma_m", self.los_sigma_m),
            ("noise.nlos_sigma_m", self.nlos_sigma_m),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ConfigError::new(key, format!("must be >= 0, got {v}")));
            }
        }
        if self.mode == NoiseMode::PositionNoise {
            for (key, los) in [("noise.los_mean_m", true), ("noise.nlos_mean_m", false)] {
                let (mean, sigma) = self.regime(los);
                TruncatedNormal::matching_moments(mean, sigma)
                    .map_err(|e| ConfigError::new(key, e))?;
            }
        }
        Ok(())
    }

    pub(crate) fn samplers(&self) -> Result<RegimeSamplers, ConfigError> {
        self.validate()?;
        Ok(match self.mode {
            NoiseMode::RangeNoise => RegimeSamplers::Range {
                los: Normal::new(self.los_mean_m, self.los_sigma_m).expect("validated"),
                nlos: Normal::new(self.nlos_mean_m, self.nlos_sigma_m).expect("validated"),
            },
            NoiseMode::PositionNoise => RegimeSamplers::Position {
                los: TruncatedNormal::matching_moments(self.los_mean_m, self.los_sigma_m)
                    .expect("validated"),
                nlos: TruncatedNormal::matching_moments(self.nlos_mean_m, self.nlos_sigma_m)
                    .expect("validated"),
            },
        })
    }
}

pub(crate) enum RegimeSamplers {
    Range { los: Normal<f64>, nlos: Normal<f64> },
    Position { los: TruncatedNormal, nlos: TruncatedNormal },
}

/// Standard normal density.
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `1 - Phi(x)`, accurate far into the tail.
fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Inverse Mills ratio `phi(a) / (1 - Phi(a))`.
fn mills(alpha: f64) -> f64 {
    phi(alpha) / upper_tail(alpha)
}

/// (mean, sd) of a unit parent normal truncated below at `alpha`, shifted so the
/// parent mean is `-alpha` and the bound sits at zero.
fn standard_moments(alpha: f64) -> (f64, f64) {
    let lambda = mills(alpha);
    let mean = lambda - alpha;
    let var = 1.0 + alpha * lambda - lambda * lambda;
    (mean, var.max(0.0).sqrt())
}

/// Normal distribution truncated to `[0, inf)`, sampled by rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub parent_mean: f64,
    pub parent_sigma: f64,
}

impl TruncatedNormal {
    pub fn from_parent(parent_mean: f64, parent_sigma: f64) -> Self {
        Self {
            parent_mean,
            parent_sigma,
        }
    }

    /// Parent normal whose truncation at zero has the given mean and sd.
    ///
    /// Feasible iff `mean > sd` (the ratio tends to 1 in the exponential
    /// limit) or `sd == 0`.
    pub fn matching_moments(mean: f64, sd: f64) -> Result<Self, String> {
        if !(mean >= 0.0) || !mean.is_finite() || !(sd >= 0.0) || !sd.is_finite() {
            return Err(format!(
                "truncated error magnitude needs mean >= 0 and sigma >= 0, got {mean} / {sd}"
            ));
        }
        if sd == 0.0 {
            return Ok(Self::from_parent(mean, 0.0));
        }
        let target = mean / sd;
        let ratio = |a: f64| {
            let (m, s) = standard_moments(a);
            m / s
        };
        if target >= ratio(ALPHA_MIN) {
            // truncation below any representable effect
            return Ok(Self::from_parent(mean, sd));
        }
        if target <= ratio(ALPHA_MAX) {
            return Err(format!(
                "mean/sigma = {target:.4} is not reachable by a zero-truncated normal (needs > 1)"
            ));
        }
        // ratio is decreasing in alpha
        let (mut lo, mut hi) = (ALPHA_MIN, ALPHA_MAX);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let alpha = 0.5 * (lo + hi);
        let (m_std, _) = standard_moments(alpha);
        let parent_sigma = mean / m_std;
        Ok(Self::from_parent(-alpha * parent_sigma, parent_sigma))
    }

    pub fn mean(&self) -> f64 {
        if self.parent_sigma == 0.0 {
            return self.parent_mean.max(0.0);
        }
        let alpha = -self.parent_mean / self.parent_sigma;
        self.parent_sigma * standard_moments(alpha).0
    }

    pub fn sd(&self) -> f64 {
        if self.parent_sigma == 0.0 {
            return 0.0;
        }
        let alpha = -self.parent_mean / self.parent_sigma;
        self.parent_sigma * standard_moments(alpha).1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.parent_sigma == 0.0 {
            return self.parent_mean.max(0.0);
        }
        let n = Normal::new(self.parent_mean, self.parent_sigma).expect("sigma > 0");
        loop {
            let x = n.sample(rng);
            if x >= 0.0 {
                return x;
            }
        }
    }
}
