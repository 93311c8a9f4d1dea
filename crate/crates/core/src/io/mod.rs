//! File formats: CSI traces, trajectories, ground truth and detection series.

mod tables;
mod trace;

pub use tables::*;
pub use trace::*;
