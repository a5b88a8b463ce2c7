//! Ultra-wideband real-time locating: radio link model, two-way ranging,
//! TDMA scheduling, position solvers, a deterministic simulator and
//! trajectory evaluation.

pub mod config;
pub mod evaluation;
pub mod format;
pub mod geometry;
pub mod io;
pub mod localization;
pub mod ranging;
pub mod rf;
pub mod sim;
pub mod tdma;

pub use config::{ConfigError, LoadError, RunConfig, ScheduleSection};
pub use evaluation::{
    align, error_stats, gaussian_pdf, percent_distance_error, Alignment, ErrorStats, EvalError,
    GroundTruthTrack, HistogramBin, PctNorm, TruthPoint,
};
pub use geometry::{Point2, Rect};
pub use localization::{
    combine_uncertainty, multilaterate_ls, trilaterate, trilaterate_literal, Anchor, AnchorId,
    AnchorSet, LocalizationError, PositionFix, SolveMethod, Trilateration,
};
pub use ranging::{
    apply_clock_model, distance_from_tof, normalized_distance, tof_from_distance,
    tof_from_exchange, ClockModel, RangingError, RangingExchange, Ticks, TofEstimate,
};
pub use rf::{
    channel_capacity_bps, free_space_range, path_loss_db, penetration_depth_m, range_resolution_m,
    snr_db, ChannelParams, LinkBudget, RfError,
};
pub use sim::{
    classify_los, simulate, success_ratio, ArenaConfig, FixAccumulator, Measurement, NoiseMode,
    NoiseModel, Scenario, SimError, SimOutput, Trajectory, Waypoint,
};
pub use tdma::{
    build_schedule, validate_schedule, Assignment, Conflict, Schedule, ScheduleError,
    SuperframeConfig,
};
