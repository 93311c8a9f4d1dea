//! Scalar Kalman filters for sin(AoA) and reflection distance, with a
//! median-absolute-deviation outlier gate in front of each.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;

/// Number of recent measurements the outlier gate looks at.
pub const GATE_HISTORY: usize = 7;
/// Gate threshold in units of the median absolute deviation.
pub const GATE_MADS: f64 = 3.0;
/// Variance inflation of the first measurement.
pub const INITIAL_INFLATION: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kalman1d {
    pub x: f64,
    pub p: f64,
}

impl Kalman1d {
    pub fn predict(&mut self, drift: f64, q: f64) {
        self.x += drift;
        self.p += q;
    }

    pub fn update(&mut self, z: f64, r: f64) {
        let gain = self.p / (self.p + r);
        self.x += gain * (z - self.x);
        self.p *= 1.0 - gain;
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Rejects a measurement lying more than `GATE_MADS` median absolute
/// deviations from the median of the recent history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierGate {
    history: VecDeque<f64>,
    /// Smallest deviation scale, so smooth histories do not reject everything.
    floor: f64,
}

impl OutlierGate {
    pub fn new(floor: f64) -> Self {
        Self {
            history: VecDeque::with_capacity(GATE_HISTORY),
            floor,
        }
    }

    /// Moves every stored value by `delta`, e.g. to follow a known drift.
    pub fn shift(&mut self, delta: f64) {
        self.history.iter_mut().for_each(|v| *v += delta);
    }

    pub fn accepts(&self, z: f64) -> bool {
        if self.history.len() < 3 {
            return true;
        }
        let mut h: Vec<f64> = self.history.iter().copied().collect();
        let med = median(&mut h);
        let mut dev: Vec<f64> = h.iter().map(|v| (v - med).abs()).collect();
        let mad = median(&mut dev).max(self.floor);
        (z - med).abs() <= GATE_MADS * mad
    }

    /// Records `z` whether or not it was accepted.
    pub fn record(&mut self, z: f64) {
        if self.history.len() == GATE_HISTORY {
            self.history.pop_front();
        }
        self.history.push_back(z);
    }
}

/// Noise levels of both filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    pub sin_process_var: f64,
    pub sin_measurement_var: f64,
    pub dist_measurement_var: f64,
    /// Distance process variance per joint-window step, from the Doppler
    /// uncertainty.
    pub dist_process_var: f64,
    /// Path-length change per joint-window step for 1 Hz of Doppler, m.
    pub meters_per_hz: f64,
}

impl KalmanParams {
    pub fn from_config(config: &SystemConfig) -> Self {
        let per_hz = config.meters_per_hz_window();
        Self {
            sin_process_var: SIN_PROCESS_VAR,
            sin_measurement_var: config.kalman_sin_aoa_var.powi(2),
            dist_measurement_var: config.kalman_dist_var_m.powi(2),
            dist_process_var: (config.kalman_dfs_var_hz * per_hz).powi(2),
            meters_per_hz: per_hz,
        }
    }
}

/// Process variance of sin(AoA) per joint-window step.
pub const SIN_PROCESS_VAR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub params: KalmanParams,
    pub aoa: Option<Kalman1d>,
    pub dist: Option<Kalman1d>,
    aoa_gate: OutlierGate,
    dist_gate: OutlierGate,
    /// Median Doppler of the previous step, drives the next distance prediction.
    last_f_d: f64,
}

/// Refined values of one step; `None` until the filter has been initialized.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Refined {
    pub sin_aoa: Option<f64>,
    pub distance: Option<f64>,
    pub aoa_rejected: bool,
    pub dist_rejected: bool,
}

impl Refined {
    pub fn aoa_deg(&self) -> Option<f64> {
        self.sin_aoa.map(|s| s.asin().to_degrees())
    }
}

impl TrackState {
    pub fn new(params: KalmanParams) -> Self {
        Self {
            params,
            aoa: None,
            dist: None,
            aoa_gate: OutlierGate::new(0.02),
            dist_gate: OutlierGate::new(0.05),
            last_f_d: 0.0,
        }
    }

    /// One joint-window step. Measurements may be missing; the filters still
    /// predict.
    pub fn step(&mut self, aoa_deg: Option<f64>, distance: Option<f64>, f_d_median: f64) -> Refined {
        let p = self.params;
        let mut out = Refined::default();

        if let Some(f) = self.aoa.as_mut() {
            f.predict(0.0, p.sin_process_var);
        }
        if let Some(s) = aoa_deg.map(|a| a.to_radians().sin()) {
            if self.aoa_gate.accepts(s) {
                match self.aoa.as_mut() {
                    Some(f) => f.update(s, p.sin_measurement_var),
                    None => {
                        self.aoa = Some(Kalman1d {
                            x: s,
                            p: INITIAL_INFLATION * p.sin_measurement_var,
                        })
                    }
                }
            } else {
                out.aoa_rejected = true;
            }
            self.aoa_gate.record(s);
        }
        if let Some(f) = self.aoa.as_mut() {
            f.x = f.x.clamp(-1.0, 1.0);
        }

        let drift = self.last_f_d * p.meters_per_hz;
        if let Some(f) = self.dist.as_mut() {
            f.predict(drift, p.dist_process_var);
        }
        self.dist_gate.shift(drift);
        if let Some(d) = distance {
            if self.dist_gate.accepts(d) {
                match self.dist.as_mut() {
                    Some(f) => f.update(d, p.dist_measurement_var),
                    None => {
                        self.dist = Some(Kalman1d {
                            x: d,
                            p: INITIAL_INFLATION * p.dist_measurement_var,
                        })
                    }
                }
            } else {
                out.dist_rejected = true;
            }
            self.dist_gate.record(d);
        }
        self.last_f_d = f_d_median;

        out.sin_aoa = self.aoa.map(|f| f.x);
        out.distance = self.dist.map(|f| f.x);
        out
    }
}

/// Functional form of [`TrackState::step`].
pub fn kalman_refine(
    state: &TrackState,
    aoa_deg: Option<f64>,
    distance: Option<f64>,
    f_d_median: f64,
) -> (TrackState, Refined) {
    let mut next = state.clone();
    let out = next.step(aoa_deg, distance, f_d_median);
    (next, out)
}
