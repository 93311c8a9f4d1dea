use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::poly_roots;
use crate::error::{Error, Result};

/// Covariance dimension used by temporal smoothing.
pub const SUBARRAY_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqEstimate {
    /// Signed rotation frequency, Hz.
    pub frequency: f64,
    pub power: f64,
}

fn smoothed_covariance(columns: &[Vec<Complex64>], m: usize) -> DMatrix<Complex64> {
    let n = columns[0].len();
    let snaps = n - m + 1;
    let total = columns.len() * snaps;
    let mut x = DMatrix::<Complex64>::zeros(m, total);
    for (c, col) in columns.iter().enumerate() {
        for t in 0..snaps {
            x.column_mut(c * snaps + t)
                .iter_mut()
                .zip(&col[t..t + m])
                .for_each(|(dst, v)| *dst = *v);
        }
    }
    let r = (&x * x.adjoint()).unscale(total as f64);
    // forward-backward averaging
    DMatrix::from_fn(m, m, |a, b| {
        0.5 * (r[(a, b)] + r[(m - 1 - a, m - 1 - b)].conj())
    })
}

/// Root-MUSIC over several observation columns sharing the same tones.
///
/// Each column is a time series sampled at `f_s`. Returns one estimate per
/// signal-subspace dimension, or nothing when the input carries no energy.
pub fn root_music(
    columns: &[Vec<Complex64>],
    f_s: f64,
    eig_threshold_factor: f64,
) -> Result<Vec<FreqEstimate>> {
    if columns.is_empty() {
        return Err(Error::InvalidParameter("root_music needs at least one column".into()));
    }
    let n = columns[0].len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter("observation columns differ in length".into()));
    }
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "root_music needs at least 4 samples per column, got {n}"
        )));
    }
    if columns
        .iter()
        .flatten()
        .any(|v| !(v.re.is_finite() && v.im.is_finite()))
    {
        return Err(Error::InvalidParameter("non-finite observation".into()));
    }
    let m = SUBARRAY_LEN.min(n / 2);
    let r = smoothed_covariance(columns, m);
    let eig = SymmetricEigen::new(r);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    if !(lmax > f64::MIN_POSITIVE) {
        return Ok(Vec::new());
    }
    let dim = order
        .iter()
        .filter(|&&k| eig.eigenvalues[k] > eig_threshold_factor * lmax)
        .count()
        .clamp(1, m - 1);

    // C = En En^H over the noise eigenvectors
    let mut c = DMatrix::<Complex64>::zeros(m, m);
    for &k in &order[dim..] {
        let v = eig.eigenvectors.column(k);
        c += &v * v.adjoint();
    }
    // coefficient of z^d is the sum of the d-th superdiagonal
    let coeffs: Vec<Complex64> = (0..2 * m - 1)
        .map(|idx| {
            let d = (m - 1) as isize - idx as isize;
            (0..m as isize)
                .filter_map(|p| {
                    let q = p + d;
                    (0..m as isize).contains(&q).then(|| c[(p as usize, q as usize)])
                })
                .sum()
        })
        .collect();
    let mut inside: Vec<Complex64> = poly_roots(&coeffs)
        .into_iter()
        .filter(|z| z.norm() < 1.0 + 1e-9 && z.norm() > 0.0)
        .collect();
    inside.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let mut picked: Vec<Complex64> = Vec::with_capacity(dim);
    for z in inside {
        if picked.len() == dim {
            break;
        }
        if picked.iter().all(|p| (p / p.norm() - z / z.norm()).norm() > 1e-3) {
            picked.push(z);
        }
    }
    if picked.is_empty() {
        return Ok(Vec::new());
    }
    let omegas: Vec<f64> = picked.iter().map(|z| z.arg()).collect();
    let powers = amplitude_powers(columns, &omegas);
    Ok(omegas
        .iter()
        .zip(powers)
        .map(|(w, power)| FreqEstimate {
            frequency: w * f_s / (2.0 * PI),
            power,
        })
        .collect())
}

/// Mean squared least-squares amplitude of each tone over the columns.
fn amplitude_powers(columns: &[Vec<Complex64>], omegas: &[f64]) -> Vec<f64> {
    let n = columns[0].len();
    let d = omegas.len();
    let a = DMatrix::from_fn(n, d, |k, i| Complex64::from_polar(1.0, omegas[i] * k as f64));
    let ah = a.adjoint();
    let gram = &ah * &a;
    let Some(inv) = gram.try_inverse() else {
        return vec![0.0; d];
    };
    let proj = inv * ah;
    let mut acc = vec![0.0; d];
    for col in columns {
        let s = &proj * DVector::from_column_slice(col);
        for (p, v) in acc.iter_mut().zip(s.iter()) {
            *p += v.norm_sqr();
        }
    }
    acc.iter().map(|p| p / columns.len() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn tone_columns(f: f64, s: usize, n: usize) -> Vec<Vec<Complex64>> {
        (0..s)
            .map(|c| {
                let ph = 0.37 * c as f64;
                (0..n)
                    .map(|k| Complex64::from_polar(1.0, 2.0 * PI * f * k as f64 / 1000.0 + ph))
                    .collect()
            })
            .collect()
    }

    /// Peak of a heavily zero-padded FFT, positive-rotation kernel.
    fn fft_peak(cols: &[Vec<Complex64>]) -> f64 {
        let grid: Vec<f64> = (-5000..=5000).map(|i| i as f64 * 0.01).collect();
        let mut best = (0.0, f64::MIN);
        for &f in &grid {
            let p: f64 = cols
                .iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * PI * f * k as f64 / 1000.0))
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum();
            if p > best.1 {
                best = (f, p);
            }
        }
        best.0
    }

    #[test]
    fn single_tone_matches_fft_oracle() {
        let cols = tone_columns(25.0, 30, 100);
        let est = root_music(&cols, 1000.0, 0.6).unwrap();
        assert_eq!(est.len(), 1);
        let oracle = fft_peak(&cols);
        assert!((oracle - 25.0).abs() < 0.02);
        assert!((est[0].frequency - oracle).abs() < 0.1, "{est:?}");
        assert!((est[0].power - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_rotation_keeps_sign() {
        let est = root_music(&tone_columns(-25.0, 30, 100), 1000.0, 0.6).unwrap();
        assert_eq!(est.len(), 1);
        assert!((est[0].frequency + 25.0).abs() < 0.1, "{est:?}");
    }

    #[test]
    fn all_zero_is_empty() {
        let cols = vec![vec![Complex64::new(0.0, 0.0); 100]; 30];
        assert!(root_music(&cols, 1000.0, 0.6).unwrap().is_empty());
    }

    #[test]
    fn scaling_leaves_frequency() {
        let cols = tone_columns(13.0, 30, 100);
        let k = Complex64::new(-3e4, 2e4);
        let scaled: Vec<Vec<Complex64>> =
            cols.iter().map(|c| c.iter().map(|v| v * k).collect()).collect();
        let a = root_music(&cols, 1000.0, 0.6).unwrap();
        let b = root_music(&scaled, 1000.0, 0.6).unwrap();
        assert!((a[0].frequency - b[0].frequency).abs() < 1e-6);
        assert!((b[0].power / a[0].power - k.norm_sqr()).abs() / k.norm_sqr() < 1e-6);
    }

    #[test]
    fn white_noise_power_stays_small() {
        let noise = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols: Vec<Vec<Complex64>> = (0..30)
                .map(|_| {
                    (0..100)
                        .map(|_| Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng)))
                        .collect()
                })
                .collect();
            for e in root_music(&cols, 1000.0, 0.6).unwrap() {
                assert!(e.power < 0.1, "seed {seed}: {e:?}");
            }
        }
    }

    #[test]
    fn two_tones_resolved() {
        let a = tone_columns(-30.0, 30, 100);
        let b = tone_columns(20.0, 30, 100);
        let cols: Vec<Vec<Complex64>> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q * 0.9).collect())
            .collect();
        let mut f: Vec<f64> = root_music(&cols, 1000.0, 0.6)
            .unwrap()
            .iter()
            .map(|e| e.frequency)
            .collect();
        f.sort_by(f64::total_cmp);
        assert_eq!(f.len(), 2);
        assert!((f[0] + 30.0).abs() < 0.1 && (f[1] - 20.0).abs() < 0.1, "{f:?}");
    }
}
