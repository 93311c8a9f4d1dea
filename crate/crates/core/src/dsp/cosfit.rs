use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Smallest accepted ratio between the eigenvalues of the 2x2 normal matrix.
const RANK_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosFit {
    pub x: f64,
    pub y: f64,
    /// In `[0, 1]`; 1 for a residual-free fit.
    pub weight: f64,
    pub ssr: f64,
    /// Constant term; zero unless fitted with [`least_squares_cos_fit_offset`].
    pub offset: f64,
}

impl CosFit {
    pub fn amplitude(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Least-squares fit of `ratios[k] ~ x cos(2 pi f_d k dt) + y sin(2 pi f_d k dt)`.
pub fn least_squares_cos_fit(ratios: &[f64], f_d: f64, dt: f64) -> Result<CosFit> {
    let n = ratios.len();
    if n < 2 || !f_d.is_finite() || !(dt > 0.0) {
        return Err(Error::InvalidParameter(
            "cosine fit needs at least 2 samples, finite f_d and positive dt".into(),
        ));
    }
    let w = 2.0 * PI * f_d * dt;
    let (mut scc, mut scs, mut sss, mut bc, mut bs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, &r) in ratios.iter().enumerate() {
        let (s, c) = (w * k as f64).sin_cos();
        scc += c * c;
        scs += c * s;
        sss += s * s;
        bc += c * r;
        bs += s * r;
    }
    let tr = scc + sss;
    let det = scc * sss - scs * scs;
    let disc = ((scc - sss).powi(2) + 4.0 * scs * scs).sqrt();
    let (lmax, lmin) = (0.5 * (tr + disc), 0.5 * (tr - disc));
    if !(lmin > RANK_THRESHOLD * lmax) || det <= 0.0 {
        return Err(Error::DegenerateFit { f_d });
    }
    let x = (sss * bc - scs * bs) / det;
    let y = (scc * bs - scs * bc) / det;
    let mean = ratios.iter().sum::<f64>() / n as f64;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let ssr: f64 = ratios
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let (s, c) = (w * k as f64).sin_cos();
            (r - x * c - y * s).powi(2)
        })
        .sum();
    Ok(CosFit {
        x,
        y,
        weight: weight_of(ssr, var, n),
        ssr,
        offset: 0.0,
    })
}

fn weight_of(ssr: f64, var: f64, n: usize) -> f64 {
    if var > 0.0 {
        (1.0 / (1.0 + ssr / (n as f64 * var))).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Like [`least_squares_cos_fit`] with an extra constant column, for series
/// whose mean was taken over a fractional number of cycles.
pub fn least_squares_cos_fit_offset(ratios: &[f64], f_d: f64, dt: f64) -> Result<CosFit> {
    let n = ratios.len();
    if n < 3 || !f_d.is_finite() || !(dt > 0.0) {
        return Err(Error::InvalidParameter(
            "cosine fit needs at least 3 samples, finite f_d and positive dt".into(),
        ));
    }
    let w = 2.0 * PI * f_d * dt;
    let mut a = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for (k, &r) in ratios.iter().enumerate() {
        let (s, c) = (w * k as f64).sin_cos();
        let row = Vector3::new(c, s, 1.0);
        a += row * row.transpose();
        b += row * r;
    }
    let eig = a.symmetric_eigenvalues();
    let (lmin, lmax) = (eig.min(), eig.max());
    if !(lmin > RANK_THRESHOLD * lmax) {
        return Err(Error::DegenerateFit { f_d });
    }
    let Some(sol) = a.cholesky().map(|ch| ch.solve(&b)) else {
        return Err(Error::DegenerateFit { f_d });
    };
    let (x, y, offset) = (sol[0], sol[1], sol[2]);
    let mean = ratios.iter().sum::<f64>() / n as f64;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let ssr: f64 = ratios
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let (s, c) = (w * k as f64).sin_cos();
            (r - x * c - y * s - offset).powi(2)
        })
        .sum();
    Ok(CosFit {
        x,
        y,
        weight: weight_of(ssr, var, n),
        ssr,
        offset,
    })
}
