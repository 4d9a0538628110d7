//! Trajectory forecasting and surrogate-safety conflict analysis for
//! signalized intersections.
//!
//! The pipeline runs: trajectory ingestion and windowing ([`data`]) →
//! trajectory predictors ([`predict`]) → oriented-bounding-box
//! time-to-collision conflict detection and aggregation ([`conflict`]) →
//! evaluation reports ([`eval`]).

pub mod config;
pub mod conflict;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod predict;

pub use error::Error;

/// Prediction horizons in seconds: 6 steps, 0.5 s apart.
pub const HORIZONS_S: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

/// Source data frame rate.
pub const FPS: u32 = 30;

/// Frames between consecutive sequence steps (0.5 s at 30 fps).
pub const STRIDE_FRAMES: i64 = 15;

/// Input sequence length in steps (5 s).
pub const IN_STEPS: usize = 10;

/// Output sequence length in steps (3 s).
pub const OUT_STEPS: usize = 6;

/// Miles/hour to feet/second.
pub const MPH_TO_FTPS: f64 = 5280.0 / 3600.0;
