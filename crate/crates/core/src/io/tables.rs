//! CSV tables for trajectories, ground truth and motion confidence.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::synth::GroundTruth;
use crate::tracker::TrackOutput;

/// One joint window of a trajectory file. Position columns are empty when
/// no motion was detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub timestamp: f64,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub theta_deg: Option<f64>,
    pub d_m: Option<f64>,
    pub f_d_hz: f64,
    pub p: f64,
    /// Wall-clock processing time of the window, ms; streaming runs only.
    pub latency_ms: Option<f64>,
}

impl TrajectoryRow {
    pub fn from_output(out: &TrackOutput, latency_ms: Option<f64>) -> Self {
        Self {
            timestamp: out.timestamp,
            x: out.position.map(|p| p.x),
            y: out.position.map(|p| p.y),
            theta_deg: out.theta_x_deg,
            d_m: out.d_x,
            f_d_hz: out.f_d_median,
            p: out.motion_confidence,
            latency_ms,
        }
    }

    pub fn position(&self) -> Option<Position> {
        Some(Position::new(self.x?, self.y?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectRow {
    pub timestamp: f64,
    pub p: f64,
    pub motion: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TruthRow {
    timestamp: f64,
    x: Option<f64>,
    y: Option<f64>,
    d_x: Option<f64>,
    f_d: Option<f64>,
    theta_x_deg: Option<f64>,
    tx_x: f64,
    tx_y: f64,
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn check_increasing(times: impl Iterator<Item = f64>, what: &'static str) -> Result<()> {
    let mut last = f64::NEG_INFINITY;
    for (k, t) in times.enumerate() {
        if !(t > last) {
            return Err(Error::Parse {
                // header line plus one-based row
                line: k + 2,
                message: format!("{what} timestamps must increase"),
            });
        }
        last = t;
    }
    Ok(())
}

pub fn write_trajectory<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    write_rows(out, rows)
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let rows: Vec<TrajectoryRow> = read_rows(input)?;
    check_increasing(rows.iter().map(|r| r.timestamp), "trajectory")?;
    Ok(rows)
}

/// Person columns stay empty for scenes without a person.
pub fn write_ground_truth<W: Write>(out: W, truth: &GroundTruth) -> Result<()> {
    let person = !truth.positions.is_empty();
    write_rows(
        out,
        (0..truth.len()).map(|k| TruthRow {
            timestamp: truth.timestamps[k],
            x: person.then(|| truth.positions[k].x),
            y: person.then(|| truth.positions[k].y),
            d_x: person.then(|| truth.d_x[k]),
            f_d: person.then(|| truth.f_d[k]),
            theta_x_deg: person.then(|| truth.theta_x_deg[k]),
            tx_x: truth.tx.x,
            tx_y: truth.tx.y,
        }),
    )
}

pub fn read_ground_truth<R: Read>(input: R) -> Result<GroundTruth> {
    let rows: Vec<TruthRow> = read_rows(input)?;
    check_increasing(rows.iter().map(|r| r.timestamp), "ground-truth")?;
    let mut g = GroundTruth {
        tx: rows.first().map_or(Position::ORIGIN, |r| Position::new(r.tx_x, r.tx_y)),
        ..GroundTruth::default()
    };
    let person = rows.first().is_some_and(|r| r.x.is_some());
    for (k, r) in rows.into_iter().enumerate() {
        g.timestamps.push(r.timestamp);
        if !person {
            continue;
        }
        let (Some(x), Some(y), Some(d_x), Some(f_d), Some(theta)) = (r.x, r.y, r.d_x, r.f_d, r.theta_x_deg) else {
            return Err(Error::Parse {
                line: k + 2,
                message: "person columns must be filled in every row or in none".into(),
            });
        };
        g.positions.push(Position::new(x, y));
        g.d_x.push(d_x);
        g.f_d.push(f_d);
        g.theta_x_deg.push(theta);
    }
    Ok(g)
}

pub fn write_detect<W: Write>(out: W, rows: &[DetectRow]) -> Result<()> {
    write_rows(out, rows)
}

pub fn read_detect<R: Read>(input: R) -> Result<Vec<DetectRow>> {
    read_rows(input)
}

macro_rules! file_pair {
    ($save:ident, $load:ident, $write:ident, $read:ident, $ty:ty, $out:ty) => {
        pub fn $save(path: &Path, value: &$ty) -> Result<()> {
            let file = File::create(path).map_err(|e| Error::from(e).at(path))?;
            $write(file, value).map_err(|e| e.at(path))
        }

        pub fn $load(path: &Path) -> Result<$out> {
            let file = File::open(path).map_err(|e| Error::from(e).at(path))?;
            $read(file).map_err(|e| e.at(path))
        }
    };
}

file_pair!(save_trajectory, load_trajectory, write_trajectory, read_trajectory, [TrajectoryRow], Vec<TrajectoryRow>);
file_pair!(save_ground_truth, load_ground_truth, write_ground_truth, read_ground_truth, GroundTruth, GroundTruth);
file_pair!(save_detect, load_detect, write_detect, read_detect, [DetectRow], Vec<DetectRow>);
