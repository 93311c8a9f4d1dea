use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Highpass,
}

/// Windowed-sinc FIR description. `passband_hz` is the half-amplitude
/// point of a single pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub passband_hz: f64,
    pub sample_rate_hz: f64,
    pub taps: usize,
}

impl FilterSpec {
    pub fn lowpass(passband_hz: f64, sample_rate_hz: f64, taps: usize) -> Self {
        Self {
            kind: FilterKind::Lowpass,
            passband_hz,
            sample_rate_hz,
            taps,
        }
    }

    pub fn highpass(passband_hz: f64, sample_rate_hz: f64, taps: usize) -> Self {
        Self {
            kind: FilterKind::Highpass,
            passband_hz,
            sample_rate_hz,
            taps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if !(self.passband_hz > 0.0 && self.passband_hz < self.sample_rate_hz / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "passband {} Hz must lie in (0, {}) Hz",
                self.passband_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        if self.taps % 2 == 0 || self.taps < 3 {
            return Err(Error::InvalidParameter(format!(
                "tap count must be odd and at least 3, got {}",
                self.taps
            )));
        }
        Ok(())
    }
}

/// Hamming-windowed sinc taps with unit DC gain (lowpass) or an exact DC
/// null (highpass, by spectral inversion).
pub fn design_fir(spec: &FilterSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.taps;
    let mid = (n / 2) as f64;
    let fc = spec.passband_hz / spec.sample_rate_hz;
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    if spec.kind == FilterKind::Highpass {
        h.iter_mut().for_each(|v| *v = -*v);
        h[n / 2] += 1.0;
    }
    Ok(h)
}

/// Forward-backward FIR on a fixed series length.
///
/// The series is extended by its mirror image to a period of `2n` and the
/// squared magnitude response is applied in the frequency domain, which is
/// exactly a forward pass followed by a time-reversed pass on that periodic
/// extension. Taps longer than `2n` wrap around the period.
#[derive(Clone)]
pub struct ZeroPhaseFir {
    len: usize,
    gain: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ZeroPhaseFir {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZeroPhaseFir").field("len", &self.len).finish()
    }
}

impl ZeroPhaseFir {
    pub fn new(spec: &FilterSpec, len: usize) -> Result<Self> {
        let taps = design_fir(spec)?;
        Self::from_taps(&taps, len)
    }

    pub fn from_taps(taps: &[f64], len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidParameter("series must have at least 2 samples".into()));
        }
        let period = 2 * len;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(period);
        let inv = planner.plan_fft_inverse(period);
        let mut h = vec![Complex64::new(0.0, 0.0); period];
        for (k, &t) in taps.iter().enumerate() {
            h[k % period].re += t;
        }
        fwd.process(&mut h);
        let scale = 1.0 / period as f64;
        let gain = h.iter().map(|v| v.norm_sqr() * scale).collect();
        Ok(Self { len, gain, fwd, inv })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Power response at FFT bin `k` of the `2n` period.
    pub fn power_gain(&self, k: usize) -> f64 {
        self.gain[k] * (2 * self.len) as f64
    }

    pub fn apply(&self, series: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut buf = Vec::with_capacity(2 * self.len);
        self.apply_into(series, &mut buf)?;
        buf.truncate(self.len);
        Ok(buf)
    }

    /// Filters `series`; the first `len` entries of `buf` receive the result.
    pub fn apply_into(&self, series: &[Complex64], buf: &mut Vec<Complex64>) -> Result<()> {
        if series.len() != self.len {
            return Err(Error::InvalidParameter(format!(
                "filter prepared for {} samples, got {}",
                self.len,
                series.len()
            )));
        }
        buf.clear();
        buf.extend_from_slice(series);
        buf.extend(series.iter().rev());
        self.fwd.process(buf);
        for (v, g) in buf.iter_mut().zip(&self.gain) {
            *v *= *g;
        }
        self.inv.process(buf);
        Ok(())
    }

    pub fn apply_real(&self, series: &[f64]) -> Result<Vec<f64>> {
        let c: Vec<Complex64> = series.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Ok(self.apply(&c)?.into_iter().map(|v| v.re).collect())
    }
}

/// Zero-phase filtering of a single series.
pub fn fir_filter(series: &[Complex64], spec: &FilterSpec) -> Result<Vec<Complex64>> {
    spec.validate()?;
    if series.len() <= spec.taps {
        return Err(Error::InvalidParameter(format!(
            "series length {} must exceed the tap count {}",
            series.len(),
            spec.taps
        )));
    }
    ZeroPhaseFir::new(spec, series.len())?.apply(series)
}
