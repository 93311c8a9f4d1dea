//! Two-sided hardware calibration.
//!
//! With the transmitter on the array line, first beyond antenna 1 (left)
//! and then beyond antenna 3 (right), the static phase of each adjacent
//! pair is the hardware phase difference plus or minus the spacing term.
//! Differencing the two sides gives the spacing up to a half-wavelength
//! step, which is resolved against the nominal spacing; the spacing then
//! fixes the hardware phase without the usual pi ambiguity.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::par::{map_range, Parallelism};
use crate::tracker::SubWindowProcessor;
use crate::types::CsiTrace;
use crate::SPEED_OF_LIGHT;

/// Repetitions per side when none are given.
pub const DEFAULT_REPETITIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibResult {
    pub spacing_12: f64,
    pub spacing_23: f64,
    pub phase_12: f64,
    pub phase_23: f64,
    pub phase_31: f64,
}

impl CalibResult {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("calibration result serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Transmitter beyond antenna 1.
    Left,
    /// Transmitter beyond antenna 3.
    Right,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Static pair phases of one side, one value per repetition (sub-window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibMeasurement {
    pub side: Side,
    pub phase_12: Vec<f64>,
    pub phase_23: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibOptions {
    pub repetitions: usize,
    /// Expected spacing, m; `None` uses half the carrier wavelength.
    pub nominal_spacing: Option<f64>,
    pub parallelism: Parallelism,
}

impl Default for CalibOptions {
    fn default() -> Self {
        Self {
            repetitions: DEFAULT_REPETITIONS,
            nominal_spacing: None,
            parallelism: Parallelism::default(),
        }
    }
}

fn wrap_positive(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn phasor_sum(phases: impl Iterator<Item = f64>) -> (Complex64, usize) {
    phases.fold((Complex64::ZERO, 0), |(s, n), p| (s + Complex64::from_polar(1.0, p), n + 1))
}

fn check_coherence(sum: Complex64, count: usize) -> Result<()> {
    let coherence = if count == 0 { 0.0 } else { sum.norm() / count as f64 };
    if coherence < 0.5 {
        return Err(Error::UnreliableMeasurement { coherence });
    }
    Ok(())
}

impl CalibMeasurement {
    /// Extracts per-sub-window static pair phases from a calibration trace
    /// after checking that every joint window is motion free.
    pub fn from_trace(trace: &CsiTrace, side: Side, config: &SystemConfig, options: &CalibOptions) -> Result<Self> {
        if options.repetitions == 0 {
            return Err(Error::InvalidParameter("calibration needs at least one repetition".into()));
        }
        let required = options.repetitions * config.n_p;
        if trace.len() < required {
            return Err(Error::TraceTooShort {
                required,
                actual: trace.len(),
            });
        }
        let processor = SubWindowProcessor::new(config)?;
        let subs: Vec<_> = map_range(options.repetitions, options.parallelism, |k| {
            processor.process(&trace.window(config.n_p, k).expect("window index in range"))
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let m = config.m.min(subs.len());
        for (start, group) in subs.windows(m).enumerate() {
            let p = group.iter().map(|s| s.coherence).sum::<f64>() / m as f64;
            if p >= config.motion_threshold {
                return Err(Error::CalibrationContaminated {
                    side: side.name(),
                    window: start,
                    confidence: p,
                });
            }
        }

        let mean_phase = |terms: &[Complex64]| terms.iter().map(|u| u / u.norm().max(f64::MIN_POSITIVE)).sum::<Complex64>().arg();
        Ok(Self {
            side,
            phase_12: subs.iter().map(|s| mean_phase(&s.dfs.statics.u12)).collect(),
            phase_23: subs.iter().map(|s| mean_phase(&s.dfs.statics.u23)).collect(),
        })
    }
}

/// Spacing from paired left/right phases of one antenna pair, m. The
/// half-wavelength step is chosen to land closest to `nominal_m`.
pub fn estimate_spacing(left: &[f64], right: &[f64], f_c: f64, nominal_m: f64) -> Result<f64> {
    let (sum, n) = phasor_sum(left.iter().zip(right).map(|(l, r)| l - r));
    check_coherence(sum, n)?;
    let per_rad = SPEED_OF_LIGHT / (TAU * f_c);
    let base = 0.5 * sum.arg();
    let k = ((nominal_m / per_rad - base) / PI).round();
    Ok(per_rad * (base + PI * k))
}

/// Hardware phase difference of one pair in `[0, 2 pi)` given its spacing.
pub fn estimate_phase_offset(left: &[f64], right: &[f64], spacing_m: f64, f_c: f64) -> Result<f64> {
    let shift = TAU * f_c / SPEED_OF_LIGHT * spacing_m;
    let (sl, nl) = phasor_sum(left.iter().map(|l| l - shift));
    let (sr, nr) = phasor_sum(right.iter().map(|r| r + shift));
    check_coherence(sl + sr, nl + nr)?;
    Ok(wrap_positive((sl + sr).arg()))
}

/// Combines both sides into a full result.
pub fn calibrate_measurements(
    left: &CalibMeasurement,
    right: &CalibMeasurement,
    f_c: f64,
    nominal_m: f64,
) -> Result<CalibResult> {
    if left.side != Side::Left || right.side != Side::Right {
        return Err(Error::InvalidParameter("expected one left and one right measurement".into()));
    }
    let pair = |l: &[f64], r: &[f64]| -> Result<(f64, f64)> {
        let spacing = estimate_spacing(l, r, f_c, nominal_m)?;
        if (spacing - nominal_m).abs() > 0.25 * nominal_m {
            return Err(Error::SpacingOutOfRange {
                spacing_m: spacing,
                nominal_m,
            });
        }
        Ok((spacing, estimate_phase_offset(l, r, spacing, f_c)?))
    };
    let (spacing_12, phase_12) = pair(&left.phase_12, &right.phase_12)?;
    let (spacing_23, phase_23) = pair(&left.phase_23, &right.phase_23)?;
    Ok(CalibResult {
        spacing_12,
        spacing_23,
        phase_12,
        phase_23,
        phase_31: wrap_positive(-(phase_12 + phase_23)),
    })
}

pub fn calibrate(left: &CsiTrace, right: &CsiTrace, config: &SystemConfig) -> Result<CalibResult> {
    calibrate_with(left, right, config, &CalibOptions::default())
}

pub fn calibrate_with(
    left: &CsiTrace,
    right: &CsiTrace,
    config: &SystemConfig,
    options: &CalibOptions,
) -> Result<CalibResult> {
    let nominal = options.nominal_spacing.unwrap_or(0.5 * config.wavelength());
    // equal sides read exactly like a half-wavelength spacing, so catch them here
    if left.samples == right.samples {
        return Err(Error::InvalidParameter(
            "left and right calibration traces are identical".into(),
        ));
    }
    let l = CalibMeasurement::from_trace(left, Side::Left, config, options)?;
    let r = CalibMeasurement::from_trace(right, Side::Right, config, options)?;
    calibrate_measurements(&l, &r, config.f_c, nominal)
}
