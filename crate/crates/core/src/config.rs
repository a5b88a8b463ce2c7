//! JSON run configuration.
//!
//! One document with the sections `arena`, `noise`, `trajectory`,
//! `superframe`, `channel`, `clock` and `seed`. Unknown keys are rejected and
//! every error carries the dotted path of the offending key.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rf::ChannelParams;
use crate::ranging::ClockModel;
use crate::sim::{ArenaConfig, NoiseModel, Scenario, Trajectory};
use crate::tdma::{build_schedule, Schedule, SuperframeConfig};

/// Validation failure tied to a configuration key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] ConfigError),
}

/// TDMA section: frame layout plus how the tag uses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub superframe_s: f64,
    pub slots_per_superframe: u32,
    /// Ranging exchanges per second for the tag.
    pub update_rate_hz: f64,
    /// Fresh ranges (distinct anchors) collected before each fix.
    pub ranges_per_fix: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let frame = SuperframeConfig::default();
        Self {
            superframe_s: frame.superframe_s,
            slots_per_superframe: frame.slots_per_superframe,
            update_rate_hz: 30.0,
            ranges_per_fix: 3,
        }
    }
}

impl ScheduleSection {
    pub fn frame(&self) -> SuperframeConfig {
        SuperframeConfig {
            superframe_s: self.superframe_s,
            slots_per_superframe: self.slots_per_superframe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub arena: ArenaConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    pub trajectory: Trajectory,
    #[serde(default)]
    pub superframe: ScheduleSection,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub clock: ClockModel,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { String::new() } else { key };
            ConfigError::new(key, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_json_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.arena.validate()?;
        self.noise.validate()?;
        self.trajectory.validate(&self.arena)?;
        self.channel
            .validate()
            .map_err(|e| ConfigError::new("channel", e))?;
        self.clock.validate().map_err(|e| ConfigError::new("clock", e))?;
        if self.superframe.ranges_per_fix < 3 {
            return Err(ConfigError::new(
                "superframe.ranges_per_fix",
                "at least 3 ranges are needed for a 2D fix",
            ));
        }
        if self.superframe.ranges_per_fix > self.arena.anchors.len() {
            return Err(ConfigError::new(
                "superframe.ranges_per_fix",
                format!(
                    "needs {} distinct anchors but the arena has {}",
                    self.superframe.ranges_per_fix,
                    self.arena.anchors.len()
                ),
            ));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<Schedule, ConfigError> {
        build_schedule(
            1,
            self.superframe.update_rate_hz,
            &self.superframe.frame(),
            self.arena.anchors.len() as u32,
        )
        .map_err(|e| ConfigError::new("superframe", e))
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            arena: self.arena.clone(),
            trajectory: self.trajectory.clone(),
            noise: self.noise.clone(),
            channel: self.channel.clone(),
            clock: self.clock.clone(),
            ranges_per_fix: self.superframe.ranges_per_fix,
        }
    }
}
