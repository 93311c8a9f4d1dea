//! Joint-window motion detection, parameter search, smoothing and
//! localization.
//!
//! Sub-windows are independent and can be processed in any order or in
//! parallel ([`SubWindowProcessor`]). Everything after that point, joint
//! window assembly, the Kalman state and the outlier gates, is sequential
//! and lives in [`Tracker`]. Batch and streaming front ends feed the same
//! [`Tracker`] and therefore produce identical output.

mod kalman;
mod search;

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use kalman::{
    kalman_refine, Kalman1d, KalmanParams, OutlierGate, Refined, TrackState, GATE_HISTORY, GATE_MADS,
    INITIAL_INFLATION, SIN_PROCESS_VAR,
};
pub use search::{
    angle_grid, aoa_spectrum, distance_grid, distance_spectrum, doppler_alignment, estimate_aoa,
    estimate_distance, estimate_tx_aoa,
};

use crate::calib::CalibResult;
use crate::config::SystemConfig;
use crate::dfs::{self, DeltaW, Denoiser, DfsWindow};
use crate::dyncomp::{self, DynamicComponentSet};
use crate::error::{Error, Result};
use crate::geometry::{localize, Position};
use crate::par::{map_range, Parallelism};
use crate::types::{CsiSample, CsiTrace, CsiWindow};

/// Everything the tracker keeps from one sub-window.
#[derive(Debug, Clone)]
pub struct SubWindow {
    pub index: usize,
    pub start_time: f64,
    pub dfs: DfsWindow,
    pub components: DynamicComponentSet,
    /// [`coherence`] of the unfiltered pair-combined term.
    pub coherence: f64,
}

impl SubWindow {
    pub fn f_d(&self) -> f64 {
        self.dfs.estimate.f_d
    }
}

/// Stateless per-sub-window stage: Doppler estimation followed by
/// dynamic-component reconstruction.
#[derive(Debug, Clone)]
pub struct SubWindowProcessor {
    config: SystemConfig,
    denoiser: Denoiser,
}

impl SubWindowProcessor {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            denoiser: Denoiser::new(config)?,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn process(&self, window: &CsiWindow<'_>) -> Result<SubWindow> {
        let cc = dfs::cross_correlate(window);
        let dfs = dfs::process_cross_correlations(&cc, &self.denoiser, &self.config, window.window_index)?;
        let components = dyncomp::separate(window, &dfs, &self.config)?;
        let raw = dfs::build_delta_w(&dfs::split_static_dynamic(&cc))?;
        Ok(SubWindow {
            index: window.window_index,
            start_time: window.start_time(),
            coherence: coherence(&raw, dfs.estimate.f_d, self.config.dt()),
            dfs,
            components,
        })
    }
}

/// `M` consecutive sub-windows.
#[derive(Debug, Clone, Copy)]
pub struct JointWindow<'a> {
    pub subs: &'a [SubWindow],
}

impl<'a> JointWindow<'a> {
    pub fn new(subs: &'a [SubWindow]) -> Result<Self> {
        if subs.is_empty() || subs.len() % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "a joint window needs an odd number of sub-windows, got {}",
                subs.len()
            )));
        }
        if subs.windows(2).any(|w| w[1].index != w[0].index + 1) {
            return Err(Error::InvalidParameter("joint-window sub-windows must be contiguous".into()));
        }
        Ok(Self { subs })
    }

    /// Index of the centre sub-window within the joint window.
    pub fn center(&self) -> usize {
        (self.subs.len() - 1) / 2
    }

    pub fn total_weight(&self) -> f64 {
        self.subs.iter().map(|s| s.components.total_weight()).sum()
    }

    pub fn median_f_d(&self) -> f64 {
        let mut f: Vec<f64> = self.subs.iter().map(|s| s.f_d()).collect();
        f.sort_by(f64::total_cmp);
        f[f.len() / 2]
    }
}

pub const RESIDUE: f64 = 1e-9;

/// Mean over subcarriers of `|sum_k exp(J (arg dw[k] + 2 pi f_d k dt))| / N`.
/// `dw` is relative to the static terms; entries below [`RESIDUE`] are
/// rounding noise of a static channel and contribute nothing.
pub fn coherence(dw: &DeltaW, f_d: f64, dt: f64) -> f64 {
    if dw.rows.is_empty() {
        return 0.0;
    }
    let w = 2.0 * PI * f_d * dt;
    let total: f64 = dw
        .rows
        .iter()
        .map(|row| {
            let sum: Complex64 = row
                .iter()
                .enumerate()
                .filter(|(_, v)| v.norm() > RESIDUE)
                .map(|(k, v)| Complex64::from_polar(1.0, v.arg() + w * k as f64))
                .sum();
            sum.norm() / row.len().max(1) as f64
        })
        .sum();
    total / dw.rows.len() as f64
}

/// Motion confidence of a joint window: the mean sub-window [`coherence`].
pub fn motion_confidence(jw: &JointWindow<'_>) -> f64 {
    jw.subs.iter().map(|s| s.coherence).sum::<f64>() / jw.subs.len() as f64
}

/// One row of tracker output per joint window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    /// Middle of the centre sub-window, s.
    pub timestamp: f64,
    /// Index of the centre sub-window.
    pub window_index: usize,
    pub motion_confidence: f64,
    pub motion: bool,
    pub f_d_median: f64,
    /// Grid-search results before smoothing.
    pub raw_theta_x_deg: Option<f64>,
    pub raw_d_x: Option<f64>,
    /// Kalman-refined values.
    pub theta_x_deg: Option<f64>,
    pub d_x: Option<f64>,
    pub theta_s_deg: Option<f64>,
    pub position: Option<Position>,
}

/// Sequential consumer of sub-windows.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: SystemConfig,
    state: TrackState,
    buffer: VecDeque<SubWindow>,
    last_theta: Option<f64>,
    last_dist: Option<f64>,
}

impl Tracker {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            state: TrackState::new(KalmanParams::from_config(config)),
            buffer: VecDeque::with_capacity(config.m),
            last_theta: None,
            last_dist: None,
        })
    }

    pub fn state(&self) -> &TrackState {
        &self.state
    }

    /// Feeds the next sub-window; returns a row once `M` are buffered.
    pub fn push(&mut self, sub: SubWindow) -> Result<Option<TrackOutput>> {
        if let Some(last) = self.buffer.back() {
            if sub.index != last.index + 1 {
                return Err(Error::InvalidParameter(format!(
                    "sub-window {} does not follow {}",
                    sub.index, last.index
                )));
            }
        }
        if self.buffer.len() == self.config.m {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sub);
        if self.buffer.len() < self.config.m {
            return Ok(None);
        }
        let subs = self.buffer.make_contiguous();
        let jw = JointWindow::new(subs)?;
        let out = step(&self.config, &mut self.state, &jw, self.last_theta, self.last_dist);
        if out.theta_x_deg.is_some() {
            self.last_theta = out.theta_x_deg;
        }
        if out.d_x.is_some() {
            self.last_dist = out.d_x;
        }
        Ok(Some(out))
    }
}

fn step(
    config: &SystemConfig,
    state: &mut TrackState,
    jw: &JointWindow<'_>,
    last_theta: Option<f64>,
    last_dist: Option<f64>,
) -> TrackOutput {
    let centre = &jw.subs[jw.center()];
    let p = motion_confidence(jw);
    let motion = p >= config.motion_threshold;
    let f_med = jw.median_f_d();
    let mut out = TrackOutput {
        timestamp: centre.start_time + 0.5 * (config.n_p - 1) as f64 * config.dt(),
        window_index: centre.index,
        motion_confidence: p,
        motion,
        f_d_median: f_med,
        raw_theta_x_deg: None,
        raw_d_x: None,
        theta_x_deg: None,
        d_x: None,
        theta_s_deg: None,
        position: None,
    };
    let statics: Vec<_> = jw
        .subs
        .iter()
        .map(|s| s.components.statics.as_ref().unwrap_or(&s.dfs.statics))
        .collect();
    out.theta_s_deg = estimate_tx_aoa(&statics, config).ok();
    if !motion {
        return out;
    }
    out.raw_theta_x_deg = estimate_aoa(jw, config, last_theta).ok();
    out.raw_d_x = estimate_distance(jw, config, last_dist).ok();
    let refined = state.step(out.raw_theta_x_deg, out.raw_d_x, f_med);
    out.theta_x_deg = refined.aoa_deg();
    out.d_x = refined.distance;
    if let (Some(t), Some(d), Some(ts)) = (out.theta_x_deg, out.d_x, out.theta_s_deg) {
        out.position = localize(t.to_radians(), d, ts.to_radians(), config.d_s1).ok();
    }
    out
}

fn check_length(trace: &CsiTrace, config: &SystemConfig) -> Result<()> {
    let required = config.m * config.n_p;
    if trace.len() < required {
        return Err(Error::TraceTooShort {
            required,
            actual: trace.len(),
        });
    }
    Ok(())
}

/// Batch tracking: sub-windows in parallel, then the sequential tracker.
pub fn track_trace(trace: &CsiTrace, calib: Option<&CalibResult>, config: &SystemConfig) -> Result<Vec<TrackOutput>> {
    track_trace_with(trace, calib, config, Parallelism::default())
}

pub fn track_trace_with(
    trace: &CsiTrace,
    calib: Option<&CalibResult>,
    config: &SystemConfig,
    mode: Parallelism,
) -> Result<Vec<TrackOutput>> {
    let config = match calib {
        Some(c) => config.with_calibration(c),
        None => config.clone(),
    };
    check_length(trace, &config)?;
    let processor = SubWindowProcessor::new(&config)?;
    let subs = process_sub_windows(trace, &processor, mode)?;
    let mut tracker = Tracker::new(&config)?;
    let mut out = Vec::with_capacity(subs.len());
    for sub in subs {
        if let Some(row) = tracker.push(sub)? {
            out.push(row);
        }
    }
    Ok(out)
}

/// Runs the per-sub-window stage over a whole trace.
pub fn process_sub_windows(
    trace: &CsiTrace,
    processor: &SubWindowProcessor,
    mode: Parallelism,
) -> Result<Vec<SubWindow>> {
    let n_p = processor.config().n_p;
    map_range(trace.num_windows(n_p), mode, |k| {
        let w = trace.window(n_p, k).expect("window index in range");
        processor.process(&w)
    })
    .into_iter()
    .collect()
}

/// Incremental front end: accepts samples one at a time.
#[derive(Debug, Clone)]
pub struct StreamTracker {
    processor: SubWindowProcessor,
    tracker: Tracker,
    pending: Vec<CsiSample>,
    next_index: usize,
}

impl StreamTracker {
    pub fn new(config: &SystemConfig, calib: Option<&CalibResult>) -> Result<Self> {
        let config = match calib {
            Some(c) => config.with_calibration(c),
            None => config.clone(),
        };
        Ok(Self {
            processor: SubWindowProcessor::new(&config)?,
            tracker: Tracker::new(&config)?,
            pending: Vec::with_capacity(config.n_p),
            next_index: 0,
        })
    }

    pub fn push_sample(&mut self, sample: CsiSample) -> Result<Option<TrackOutput>> {
        self.pending.push(sample);
        if self.pending.len() < self.processor.config().n_p {
            return Ok(None);
        }
        let window = CsiWindow {
            samples: &self.pending,
            window_index: self.next_index,
        };
        let sub = self.processor.process(&window)?;
        self.pending.clear();
        self.next_index += 1;
        self.tracker.push(sub)
    }

    /// Sub-windows consumed so far.
    pub fn windows_seen(&self) -> usize {
        self.next_index
    }
}

/// Motion confidence of every joint window, without localization.
pub fn detect_trace(trace: &CsiTrace, config: &SystemConfig, mode: Parallelism) -> Result<Vec<(f64, f64)>> {
    check_length(trace, config)?;
    let processor = SubWindowProcessor::new(config)?;
    let subs = process_sub_windows(trace, &processor, mode)?;
    let dt = config.dt();
    subs.windows(config.m)
        .map(|w| {
            let jw = JointWindow::new(w)?;
            let c = &w[jw.center()];
            Ok((c.start_time + 0.5 * (config.n_p - 1) as f64 * dt, motion_confidence(&jw)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::subcarrier_frequencies;
    use crate::dfs::{DfsEstimate, StaticTerms};
    use crate::types::{NUM_ANTENNAS, NUM_SUBCARRIERS};
    use crate::SPEED_OF_LIGHT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sub(index: usize, f_d: f64, z: impl Fn(usize, usize) -> Complex64, rows: Vec<Vec<Complex64>>) -> SubWindow {
        let coherence = coherence(&DeltaW { rows: rows.clone() }, f_d, 1e-3);
        let one = vec![Complex64::new(1.0, 0.0); NUM_SUBCARRIERS];
        SubWindow {
            index,
            start_time: index as f64 * 0.1,
            dfs: DfsWindow {
                statics: StaticTerms {
                    u12: one.clone(),
                    u23: one.clone(),
                    u31: one,
                },
                delta_w: DeltaW { rows },
                estimate: DfsEstimate {
                    f_d,
                    power: 1.0,
                    window_index: index,
                    clamped: false,
                },
            },
            components: DynamicComponentSet {
                z: std::array::from_fn(|i| std::array::from_fn(|j| z(i, j))),
                w: [[1.0; NUM_SUBCARRIERS]; NUM_ANTENNAS],
                window_index: index,
                flagged: false,
                statics: None,
            },
            coherence,
        }
    }

    fn wavenumbers(cfg: &SystemConfig) -> Vec<f64> {
        subcarrier_frequencies(cfg)
            .iter()
            .map(|f| 2.0 * PI * f / SPEED_OF_LIGHT)
            .collect()
    }

    #[test]
    fn broadside_components() {
        let cfg = SystemConfig::default();
        let subs = vec![sub(0, 20.0, |_, _| Complex64::new(1.0, 0.0), vec![])];
        let jw = JointWindow::new(&subs).unwrap();
        assert_eq!(estimate_aoa(&jw, &cfg, None).unwrap(), 0.0);
    }

    #[test]
    fn constructed_thirty_degrees() {
        let cfg = SystemConfig::default();
        let k = wavenumbers(&cfg);
        let p = cfg.antenna_offsets();
        let s = 30f64.to_radians().sin();
        let subs = vec![sub(0, 20.0, |i, j| Complex64::from_polar(1.0, -k[j] * p[i] * s), vec![])];
        let jw = JointWindow::new(&subs).unwrap();
        assert!((estimate_aoa(&jw, &cfg, None).unwrap() - 30.0).abs() <= 1.0);
        assert_eq!(estimate_aoa(&jw, &cfg, Some(-40.0)).unwrap(), 30.0);
    }

    #[test]
    fn constructed_four_metres() {
        let cfg = SystemConfig::default();
        let k = wavenumbers(&cfg);
        let z = |_: usize, j: usize| Complex64::from_polar(1.0, -k[j] * 4.0);
        let single = vec![sub(0, 0.0, z, vec![])];
        let d1 = estimate_distance(&JointWindow::new(&single).unwrap(), &cfg, None).unwrap();
        assert!((d1 - 4.0).abs() <= 0.05 + 1e-9, "{d1}");

        let still: Vec<SubWindow> = (0..9).map(|l| sub(l, 0.0, z, vec![])).collect();
        let jw = JointWindow::new(&still).unwrap();
        for l in 0..9 {
            assert!(doppler_alignment(&jw, &cfg, l).iter().all(|c| (c - 1.0).norm() < 1e-15));
        }
        assert_eq!(estimate_distance(&jw, &cfg, None).unwrap(), d1);
    }

    #[test]
    fn alignment_undoes_the_path_change() {
        let cfg = SystemConfig::default();
        let k = wavenumbers(&cfg);
        let f_d = 12.0;
        let step = cfg.meters_per_hz_window() * f_d;
        // d grows by `step` per sub-window, centred on 5 m
        let subs: Vec<SubWindow> = (0..5)
            .map(|l| {
                let d = 5.0 + (l as f64 - 2.0) * step;
                sub(l, f_d, |_, j| Complex64::from_polar(1.0, -k[j] * d), vec![])
            })
            .collect();
        let jw = JointWindow::new(&subs).unwrap();
        for (l, s) in subs.iter().enumerate() {
            let a = doppler_alignment(&jw, &cfg, l);
            for j in 0..NUM_SUBCARRIERS {
                let got = s.components.z[0][j] * a[j];
                let want = subs[2].components.z[0][j];
                assert!((got - want).norm() < 1e-9, "l {l} j {j}");
            }
        }
    }

    #[test]
    fn joint_windows_must_be_odd_and_contiguous() {
        let z = |_: usize, _: usize| Complex64::new(1.0, 0.0);
        let two = vec![sub(0, 0.0, z, vec![]), sub(1, 0.0, z, vec![])];
        assert!(JointWindow::new(&two).is_err());
        let gap = vec![sub(0, 0.0, z, vec![]), sub(2, 0.0, z, vec![]), sub(3, 0.0, z, vec![])];
        assert!(JointWindow::new(&gap).is_err());
    }

    #[test]
    fn perfectly_coherent_motion() {
        let cfg = SystemConfig::default();
        let f_d = 17.0;
        let row: Vec<Complex64> = (0..cfg.n_p)
            .map(|k| Complex64::from_polar(2.0, -2.0 * PI * f_d * k as f64 * cfg.dt()))
            .collect();
        let subs = vec![sub(0, f_d, |_, _| Complex64::new(1.0, 0.0), vec![row; NUM_SUBCARRIERS])];
        let p = motion_confidence(&JointWindow::new(&subs).unwrap());
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_phases_stay_below_threshold() {
        let cfg = SystemConfig::default();
        let mut below = 0;
        let mut total = 0.0;
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<Complex64>> = (0..NUM_SUBCARRIERS)
                .map(|_| {
                    (0..cfg.n_p)
                        .map(|_| Complex64::from_polar(1.0, rng.random_range(-PI..PI)))
                        .collect()
                })
                .collect();
            let subs = vec![sub(0, 13.0, |_, _| Complex64::new(1.0, 0.0), rows)];
            let p = motion_confidence(&JointWindow::new(&subs).unwrap());
            total += p;
            if p < cfg.motion_threshold {
                below += 1;
            }
        }
        assert!(below >= 990);
        let mean = total / 1000.0;
        let rayleigh = PI.sqrt() / 2.0 / (cfg.n_p as f64).sqrt();
        assert!((mean - rayleigh).abs() < 0.01, "{mean} vs {rayleigh}");
    }

    #[test]
    fn zero_entries_contribute_nothing() {
        let cfg = SystemConfig::default();
        let rows = vec![vec![Complex64::new(0.0, 0.0); cfg.n_p]; NUM_SUBCARRIERS];
        let subs = vec![sub(0, 5.0, |_, _| Complex64::new(1.0, 0.0), rows)];
        assert_eq!(motion_confidence(&JointWindow::new(&subs).unwrap()), 0.0);
    }
}
