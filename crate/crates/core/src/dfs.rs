//! Unambiguous Doppler estimation from antenna-pair cross-correlations.
//!
//! Multiplying one antenna's CSI by another's conjugate cancels every phase
//! term common to the receiver chain. The static part of each product is
//! its time mean, the remainder carries the person, and a combination of
//! the three pairs cancels the conjugate image so the surviving tone has
//! the sign of the true Doppler shift.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::dsp::{root_music, FilterSpec, SavGol, ZeroPhaseFir};
use crate::error::{Error, Result};
use crate::types::{CsiWindow, NUM_SUBCARRIERS};

/// Tap count of the cross-correlation lowpass.
pub const DENOISE_TAPS: usize = 63;

/// `[subcarrier][sample]` complex series.
pub type SeriesSet = Vec<Vec<Complex64>>;

/// Antenna-pair products `CSI_a * conj(CSI_b)` for the pairs 12, 23 and 31.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrSet {
    pub cc12: SeriesSet,
    pub cc23: SeriesSet,
    pub cc31: SeriesSet,
}

impl CrossCorrSet {
    pub fn pairs(&self) -> [&SeriesSet; 3] {
        [&self.cc12, &self.cc23, &self.cc31]
    }

    fn map(&self, mut f: impl FnMut(&SeriesSet) -> Result<SeriesSet>) -> Result<Self> {
        Ok(Self {
            cc12: f(&self.cc12)?,
            cc23: f(&self.cc23)?,
            cc31: f(&self.cc31)?,
        })
    }
}

/// Time-mean static term `u` and mean-removed dynamic term `v` of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticDynamicSplit {
    pub u: Vec<Complex64>,
    pub v: SeriesSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSplits {
    pub s12: StaticDynamicSplit,
    pub s23: StaticDynamicSplit,
    pub s31: StaticDynamicSplit,
}

/// Static cross-correlation terms of one sub-window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticTerms {
    pub u12: Vec<Complex64>,
    pub u23: Vec<Complex64>,
    pub u31: Vec<Complex64>,
}

impl PairSplits {
    pub fn static_terms(&self) -> StaticTerms {
        StaticTerms {
            u12: self.s12.u.clone(),
            u23: self.s23.u.clone(),
            u31: self.s31.u.clone(),
        }
    }
}

/// Pair-combined dynamic term, `[subcarrier][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaW {
    pub rows: SeriesSet,
}

impl DeltaW {
    pub fn len(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfsEstimate {
    /// Signed Doppler shift, Hz; positive when the reflection path grows.
    pub f_d: f64,
    pub power: f64,
    pub window_index: usize,
    /// The raw estimate exceeded the lowpass passband and was limited to it.
    pub clamped: bool,
}

pub fn cross_correlate(window: &CsiWindow<'_>) -> CrossCorrSet {
    let pair = |a: usize, b: usize| -> SeriesSet {
        (0..NUM_SUBCARRIERS)
            .map(|j| {
                window
                    .samples
                    .iter()
                    .map(|s| s.values[a][j] * s.values[b][j].conj())
                    .collect()
            })
            .collect()
    };
    CrossCorrSet {
        cc12: pair(0, 1),
        cc23: pair(1, 2),
        cc31: pair(2, 0),
    }
}

/// Reusable smoothing and lowpass stages for one window length.
#[derive(Debug, Clone)]
pub struct Denoiser {
    sg: SavGol,
    lowpass: ZeroPhaseFir,
}

impl Denoiser {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        if config.n_p <= DENOISE_TAPS || config.n_p < config.sg_frame {
            return Err(Error::InvalidParameter(format!(
                "denoising needs more than {DENOISE_TAPS} samples per sub-window, got {}",
                config.n_p
            )));
        }
        Ok(Self {
            sg: SavGol::new(config.sg_order, config.sg_frame)?,
            lowpass: ZeroPhaseFir::new(
                &FilterSpec::lowpass(config.lowpass_pass_hz, config.f_s, DENOISE_TAPS),
                config.n_p,
            )?,
        })
    }

    pub fn apply(&self, cc: &CrossCorrSet) -> Result<CrossCorrSet> {
        let mut buf = Vec::new();
        cc.map(|set| {
            set.iter()
                .map(|series| {
                    let smooth = self.sg.apply(series)?;
                    self.lowpass.apply_into(&smooth, &mut buf)?;
                    Ok(buf[..series.len()].to_vec())
                })
                .collect()
        })
    }
}

/// Savitzky-Golay smoothing followed by the zero-phase lowpass, per series.
pub fn denoise(cc: &CrossCorrSet, config: &SystemConfig) -> Result<CrossCorrSet> {
    Denoiser::new(config)?.apply(cc)
}

fn split_one(set: &SeriesSet) -> StaticDynamicSplit {
    let mut u = Vec::with_capacity(set.len());
    let mut v = Vec::with_capacity(set.len());
    for series in set {
        let mean = series.iter().sum::<Complex64>() / series.len().max(1) as f64;
        u.push(mean);
        v.push(series.iter().map(|x| x - mean).collect());
    }
    StaticDynamicSplit { u, v }
}

pub fn split_static_dynamic(cc: &CrossCorrSet) -> PairSplits {
    PairSplits {
        s12: split_one(&cc.cc12),
        s23: split_one(&cc.cc23),
        s31: split_one(&cc.cc31),
    }
}

/// Combines the three pair splits so that only the non-conjugated dynamic
/// tone survives.
pub fn build_delta_w(splits: &PairSplits) -> Result<DeltaW> {
    let parts = [("12", &splits.s12), ("23", &splits.s23), ("31", &splits.s31)];
    let mut scale = 0.0;
    let mut count = 0usize;
    for (_, s) in &parts {
        for (u, v) in s.u.iter().zip(&s.v) {
            let rms = (v.iter().map(|x| x.norm_sqr()).sum::<f64>() / v.len().max(1) as f64).sqrt();
            scale += u.norm() + rms;
            count += 1;
        }
    }
    let floor = 1e-12 * scale / count.max(1) as f64;
    for (name, s) in &parts {
        if let Some(j) = s.u.iter().position(|u| !(u.norm() > floor)) {
            return Err(Error::DegenerateStatic { pair: name, subcarrier: j });
        }
    }
    let (s12, s23, s31) = (&splits.s12, &splits.s23, &splits.s31);
    let rows = (0..s12.u.len())
        .map(|j| {
            let (u12c, u23, u31, u31c) = (s12.u[j].conj(), s23.u[j], s31.u[j], s31.u[j].conj());
            (0..s12.v[j].len())
                .map(|k| {
                    let w12 = s31.v[j][k].conj() / u31c - s23.v[j][k] / u23;
                    let w23 = s12.v[j][k].conj() / u12c - s31.v[j][k] / u31;
                    w12 - w23
                })
                .collect()
        })
        .collect();
    Ok(DeltaW { rows })
}

/// Root-MUSIC over the subcarrier rows of `dw`; returns the strongest tone.
pub fn estimate_dfs(dw: &DeltaW, config: &SystemConfig, window_index: usize) -> Result<DfsEstimate> {
    let zero = DfsEstimate {
        f_d: 0.0,
        power: 0.0,
        window_index,
        clamped: false,
    };
    if dw.rows.is_empty() {
        return Ok(zero);
    }
    let est = root_music(&dw.rows, config.f_s, config.eig_threshold_factor)?;
    let Some(best) = est.iter().max_by(|a, b| a.power.total_cmp(&b.power)) else {
        return Ok(zero);
    };
    // the tone rotates as exp(-J 2 pi f_D t)
    let raw = -best.frequency;
    let cap = config.lowpass_pass_hz;
    Ok(DfsEstimate {
        f_d: raw.clamp(-cap, cap),
        power: best.power,
        window_index,
        clamped: raw.abs() > cap,
    })
}

/// Everything the later stages need from one sub-window's cross-correlations.
#[derive(Debug, Clone)]
pub struct DfsWindow {
    pub statics: StaticTerms,
    pub delta_w: DeltaW,
    pub estimate: DfsEstimate,
}

pub fn process_window(window: &CsiWindow<'_>, denoiser: &Denoiser, config: &SystemConfig) -> Result<DfsWindow> {
    process_cross_correlations(&cross_correlate(window), denoiser, config, window.window_index)
}

/// [`process_window`] starting from already computed cross-correlations.
pub fn process_cross_correlations(
    cc: &CrossCorrSet,
    denoiser: &Denoiser,
    config: &SystemConfig,
    window_index: usize,
) -> Result<DfsWindow> {
    let cc = denoiser.apply(cc)?;
    let splits = split_static_dynamic(&cc);
    let delta_w = build_delta_w(&splits)?;
    let estimate = estimate_dfs(&delta_w, config, window_index)?;
    Ok(DfsWindow {
        statics: splits.static_terms(),
        delta_w,
        estimate,
    })
}
