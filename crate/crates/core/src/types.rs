use num_complex::Complex64;

use crate::error::{Error, Result};

pub const NUM_ANTENNAS: usize = 3;
pub const NUM_SUBCARRIERS: usize = 30;

/// One CSI frame: antenna-major matrix of complex channel coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    pub values: [[Complex64; NUM_SUBCARRIERS]; NUM_ANTENNAS],
    pub timestamp: f64,
}

impl CsiSample {
    pub fn zeros(timestamp: f64) -> Self {
        Self {
            values: [[Complex64::new(0.0, 0.0); NUM_SUBCARRIERS]; NUM_ANTENNAS],
            timestamp,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.timestamp.is_finite()
            && self
                .values
                .iter()
                .flatten()
                .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// `N_p` consecutive samples forming one sub-window.
#[derive(Debug, Clone, Copy)]
pub struct CsiWindow<'a> {
    pub samples: &'a [CsiSample],
    pub window_index: usize,
}

impl<'a> CsiWindow<'a> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Timestamp of the first sample.
    pub fn start_time(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.timestamp)
    }

    /// Antenna `i`, subcarrier `j` time series.
    pub fn series(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.samples.iter().map(|s| s.values[i][j]).collect()
    }
}

/// A time-ordered CSI capture.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsiTrace {
    pub samples: Vec<CsiSample>,
}

impl CsiTrace {
    pub fn new(samples: Vec<CsiSample>) -> Result<Self> {
        let trace = Self { samples };
        trace.check()?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Verifies finiteness and strictly increasing timestamps.
    pub fn check(&self) -> Result<()> {
        for (k, s) in self.samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "sample {k} contains a non-finite value"
                )));
            }
            if k > 0 && s.timestamp <= self.samples[k - 1].timestamp {
                return Err(Error::InvalidParameter(format!(
                    "timestamps not strictly increasing at sample {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_windows(&self, n_p: usize) -> usize {
        self.samples.len() / n_p
    }

    /// Non-overlapping sub-windows of `n_p` samples; a trailing partial window is dropped.
    pub fn windows(&self, n_p: usize) -> impl ExactSizeIterator<Item = CsiWindow<'_>> + '_ {
        self.samples
            .chunks_exact(n_p)
            .enumerate()
            .map(|(window_index, samples)| CsiWindow {
                samples,
                window_index,
            })
    }

    pub fn window(&self, n_p: usize, index: usize) -> Option<CsiWindow<'_>> {
        let start = index * n_p;
        self.samples.get(start..start + n_p).map(|samples| CsiWindow {
            samples,
            window_index: index,
        })
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            for c in s.values.iter_mut().flatten() {
                *c *= factor;
            }
        }
        out
    }
}
