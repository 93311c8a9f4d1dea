use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed Savitzky-Golay smoothing weights.
///
/// `rows[s]` holds the weights that evaluate the local least-squares
/// polynomial at frame position `s`. Interior samples use the centre row;
/// the first and last `frame / 2` samples reuse the edge frames with the
/// off-centre rows so the output keeps the input length.
#[derive(Debug, Clone)]
pub struct SavGol {
    frame: usize,
    rows: Vec<Vec<f64>>,
}

impl SavGol {
    pub fn new(order: usize, frame: usize) -> Result<Self> {
        if frame % 2 == 0 || order >= frame {
            return Err(Error::InvalidParameter(format!(
                "Savitzky-Golay needs an odd frame larger than the order (order {order}, frame {frame})"
            )));
        }
        let h = (frame / 2) as f64;
        let vander = DMatrix::from_fn(frame, order + 1, |r, c| (r as f64 - h).powi(c as i32));
        let gram = vander.transpose() * &vander;
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular Savitzky-Golay design".into()))?;
        let hat = &vander * inv * vander.transpose();
        let rows = (0..frame)
            .map(|r| hat.row(r).iter().copied().collect())
            .collect();
        Ok(Self { frame, rows })
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn apply(&self, series: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = series.len();
        let f = self.frame;
        if n < f {
            return Err(Error::InvalidParameter(format!(
                "series of length {n} is shorter than the smoothing frame {f}"
            )));
        }
        let h = f / 2;
        let dot = |row: &[f64], start: usize| -> Complex64 {
            row.iter()
                .zip(&series[start..start + f])
                .map(|(w, x)| x * *w)
                .sum()
        };
        let mut out = Vec::with_capacity(n);
        for s in 0..h {
            out.push(dot(&self.rows[s], 0));
        }
        for k in h..n - h {
            out.push(dot(&self.rows[h], k - h));
        }
        for s in h + 1..f {
            out.push(dot(&self.rows[s], n - f));
        }
        Ok(out)
    }
}

/// Smooths real and imaginary parts with the same polynomial filter.
pub fn savitzky_golay(series: &[Complex64], order: usize, frame: usize) -> Result<Vec<Complex64>> {
    SavGol::new(order, frame)?.apply(series)
}
