//! Trajectory accuracy against ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::io::TrajectoryRow;
use crate::synth::GroundTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Positions compared.
    pub count: usize,
    pub median_error_m: f64,
    pub p90_error_m: f64,
    pub mean_error_m: f64,
    pub median_abs_x_m: f64,
    pub median_abs_y_m: f64,
    pub latency_mean_ms: Option<f64>,
    pub latency_std_ms: Option<f64>,
}

/// Percentile `q` in `[0, 1]` with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Ground-truth position at `t`, linearly interpolated; `None` outside the
/// recorded range.
pub fn interpolate(truth: &GroundTruth, t: f64) -> Option<Position> {
    let ts = &truth.timestamps;
    if ts.is_empty() || t < ts[0] || t > ts[ts.len() - 1] {
        return None;
    }
    let k = ts.partition_point(|&s| s <= t);
    if k == ts.len() {
        return Some(truth.positions[k - 1]);
    }
    let (t0, t1) = (ts[k - 1], ts[k]);
    let (a, b) = (truth.positions[k - 1], truth.positions[k]);
    let w = (t - t0) / (t1 - t0);
    Some(Position::new(a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)))
}

/// Per-row errors `(estimate - truth)` for rows that carry a position and
/// fall inside the ground-truth range.
pub fn position_errors(rows: &[TrajectoryRow], truth: &GroundTruth) -> Result<Vec<(f64, f64)>> {
    let (Some(first), Some(last)) = (truth.timestamps.first(), truth.timestamps.last()) else {
        return Err(Error::DisjointTimeRanges);
    };
    let overlaps = rows.iter().any(|r| r.timestamp >= *first && r.timestamp <= *last);
    if !overlaps {
        return Err(Error::DisjointTimeRanges);
    }
    Ok(rows
        .iter()
        .filter_map(|r| {
            let p = r.position()?;
            let g = interpolate(truth, r.timestamp)?;
            Some((p.x - g.x, p.y - g.y))
        })
        .collect())
}

pub fn evaluate(rows: &[TrajectoryRow], truth: &GroundTruth) -> Result<EvalReport> {
    let errs = position_errors(rows, truth)?;
    if errs.is_empty() {
        return Err(Error::NoEstimate);
    }
    let dist: Vec<f64> = errs.iter().map(|(dx, dy)| dx.hypot(*dy)).collect();
    let ax: Vec<f64> = errs.iter().map(|e| e.0.abs()).collect();
    let ay: Vec<f64> = errs.iter().map(|e| e.1.abs()).collect();
    let lat: Vec<f64> = rows.iter().filter_map(|r| r.latency_ms).collect();
    let (latency_mean_ms, latency_std_ms) = if lat.is_empty() {
        (None, None)
    } else {
        let n = lat.len() as f64;
        let mean = lat.iter().sum::<f64>() / n;
        let var = lat.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    Ok(EvalReport {
        count: dist.len(),
        median_error_m: percentile(&dist, 0.5),
        p90_error_m: percentile(&dist, 0.9),
        mean_error_m: dist.iter().sum::<f64>() / dist.len() as f64,
        median_abs_x_m: percentile(&ax, 0.5),
        median_abs_y_m: percentile(&ay, 0.5),
        latency_mean_ms,
        latency_std_ms,
    })
}
