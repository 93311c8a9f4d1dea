//! Single-target passive WiFi tracking from channel state information.
//!
//! The pipeline turns a three-antenna CSI stream into a trajectory:
//!
//! 1. [`dfs`] cross-correlates antenna pairs to cancel the common clock
//!    phase, then recovers a signed Doppler frequency per sub-window.
//! 2. [`dyncomp`] uses the per-antenna CFR power together with that Doppler
//!    estimate to rebuild the complex reflection off the moving person.
//! 3. [`tracker`] aggregates sub-windows into joint windows, detects motion,
//!    grid-searches angle of arrival and reflection distance, smooths both
//!    with Kalman filters and solves the bistatic geometry.
//!
//! [`calib`] recovers antenna spacings and hardware phase offsets from two
//! static captures, and [`synth`] is a forward channel simulator that
//! produces traces with exact ground truth for every stage.

pub mod calib;
pub mod config;
pub mod dfs;
pub mod dsp;
pub mod dyncomp;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod par;
pub mod synth;
pub mod tracker;
pub mod types;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use geometry::Position;
pub use types::{CsiSample, CsiTrace, CsiWindow, NUM_ANTENNAS, NUM_SUBCARRIERS};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
