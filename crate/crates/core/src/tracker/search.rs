//! Grid searches for person AoA, reflection distance and transmitter AoA.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::JointWindow;
use crate::config::{subcarrier_frequencies, SystemConfig};
use crate::dfs::StaticTerms;
use crate::error::{Error, Result};
use crate::types::{NUM_ANTENNAS, NUM_SUBCARRIERS};
use crate::SPEED_OF_LIGHT;

/// Index of the largest value; near-ties (relative 1e-9) go to the smallest
/// `preference` score.
fn argmax(values: &[f64], preference: impl Fn(usize) -> f64) -> usize {
    let best = values.iter().copied().fold(f64::MIN, f64::max);
    let tol = 1e-9 * best.abs();
    let mut pick = 0;
    let mut pick_pref = f64::INFINITY;
    for (k, v) in values.iter().enumerate() {
        if best - v <= tol {
            let p = preference(k);
            if p < pick_pref {
                pick = k;
                pick_pref = p;
            }
        }
    }
    pick
}

/// Grid `[-90, 90]` degrees at `step`, always containing both ends and 0.
pub fn angle_grid(step: f64) -> Vec<f64> {
    let n = (90.0 / step).floor() as i64;
    let mut g: Vec<f64> = (-n..=n).map(|k| k as f64 * step).collect();
    if (90.0 - n as f64 * step).abs() > 1e-9 {
        g.insert(0, -90.0);
        g.push(90.0);
    }
    g
}

/// Distance grid over `(d_min, d_max]`.
pub fn distance_grid(d_min: f64, d_max: f64, step: f64) -> Vec<f64> {
    let mut g = Vec::new();
    let mut k = 1;
    loop {
        let d = d_min + k as f64 * step;
        if d > d_max + 1e-9 {
            break;
        }
        g.push(d);
        k += 1;
    }
    g
}

/// Person AoA spectrum `sum_l sum_j |sum_i Z[l][i][j] e^{J k_j p_i sin(theta)}|`
/// over the angle grid.
pub fn aoa_spectrum(jw: &JointWindow<'_>, config: &SystemConfig, grid: &[f64]) -> Vec<f64> {
    let k: Vec<f64> = subcarrier_frequencies(config)
        .iter()
        .map(|f| 2.0 * PI * f / SPEED_OF_LIGHT)
        .collect();
    let offsets = config.antenna_offsets();
    let comps: Vec<_> = jw.subs.iter().map(|s| &s.components).filter(|c| !c.flagged).collect();
    grid.iter()
        .map(|deg| {
            let s = deg.to_radians().sin();
            let mut total = 0.0;
            for j in 0..NUM_SUBCARRIERS {
                let steer: [Complex64; NUM_ANTENNAS] =
                    std::array::from_fn(|i| Complex64::from_polar(1.0, k[j] * offsets[i] * s));
                for c in &comps {
                    let sum: Complex64 = (0..NUM_ANTENNAS).map(|i| c.z[i][j] * steer[i]).sum();
                    total += sum.norm();
                }
            }
            total
        })
        .collect()
}

/// Person AoA in degrees. `previous` (degrees) breaks ties.
pub fn estimate_aoa(jw: &JointWindow<'_>, config: &SystemConfig, previous: Option<f64>) -> Result<f64> {
    if jw.total_weight() == 0.0 {
        return Err(Error::NoEstimate);
    }
    let grid = angle_grid(config.aoa_grid_step);
    let spec = aoa_spectrum(jw, config, &grid);
    let k = argmax(&spec, |k| match previous {
        Some(p) => (grid[k] - p).abs(),
        None => grid[k].abs(),
    });
    Ok(grid[k])
}

/// Per-subcarrier rotation that carries sub-window `l` to the centre
/// sub-window using the accumulated Doppler path change.
pub fn doppler_alignment(jw: &JointWindow<'_>, config: &SystemConfig, l: usize) -> Vec<Complex64> {
    let eps = jw.center();
    let per_hz = config.n_p as f64 * config.dt();
    let cycles: f64 = if l < eps {
        -jw.subs[l..eps].iter().map(|s| s.f_d()).sum::<f64>()
    } else {
        jw.subs[eps..l].iter().map(|s| s.f_d()).sum::<f64>()
    } * per_hz;
    subcarrier_frequencies(config)
        .iter()
        .map(|f| Complex64::from_polar(1.0, 2.0 * PI * cycles * f / config.f_c))
        .collect()
}

/// Reflection-distance spectrum
/// `sum_l sum_i |sum_j Z[l][i][j] Z^D[l][j] e^{J k_j d}|` over the grid.
pub fn distance_spectrum(jw: &JointWindow<'_>, config: &SystemConfig, grid: &[f64]) -> Vec<f64> {
    let k: Vec<f64> = subcarrier_frequencies(config)
        .iter()
        .map(|f| 2.0 * PI * f / SPEED_OF_LIGHT)
        .collect();
    let aligned: Vec<[[Complex64; NUM_SUBCARRIERS]; NUM_ANTENNAS]> = (0..jw.subs.len())
        .filter(|&l| !jw.subs[l].components.flagged)
        .map(|l| {
            let zd = doppler_alignment(jw, config, l);
            let z = &jw.subs[l].components.z;
            std::array::from_fn(|i| std::array::from_fn(|j| z[i][j] * zd[j]))
        })
        .collect();
    grid.iter()
        .map(|d| {
            let steer: Vec<Complex64> = k.iter().map(|kj| Complex64::from_polar(1.0, kj * d)).collect();
            let mut total = 0.0;
            for z in &aligned {
                for row in z {
                    let sum: Complex64 = row.iter().zip(&steer).map(|(a, b)| a * b).sum();
                    total += sum.norm();
                }
            }
            total
        })
        .collect()
}

/// Reflection distance in metres. `previous` breaks ties.
pub fn estimate_distance(jw: &JointWindow<'_>, config: &SystemConfig, previous: Option<f64>) -> Result<f64> {
    if jw.total_weight() == 0.0 {
        return Err(Error::NoEstimate);
    }
    let grid = distance_grid(config.d_s1, config.dist_max, config.dist_grid_step);
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty reflection-distance grid".into()));
    }
    let spec = distance_spectrum(jw, config, &grid);
    let k = argmax(&spec, |k| match previous {
        Some(p) => (grid[k] - p).abs(),
        None => grid[k],
    });
    Ok(grid[k])
}

/// Transmitter AoA in degrees from calibrated static cross-correlation
/// phases.
///
/// The calibrated pair phases are chained into a three-element static
/// steering vector and scanned with the same kernel as the person AoA.
pub fn estimate_tx_aoa(statics: &[&StaticTerms], config: &SystemConfig) -> Result<f64> {
    if statics.is_empty() {
        return Err(Error::NoEstimate);
    }
    let k: Vec<f64> = subcarrier_frequencies(config)
        .iter()
        .map(|f| 2.0 * PI * f / SPEED_OF_LIGHT)
        .collect();
    let offsets = config.antenna_offsets();
    // phase of antenna i relative to antenna 1, per sub-window and subcarrier
    let vectors: Vec<[[Complex64; NUM_ANTENNAS]; NUM_SUBCARRIERS]> = statics
        .iter()
        .map(|st| {
            std::array::from_fn(|j| {
                let z12 = Complex64::from_polar(1.0, st.u12[j].arg() - config.hw_phase_12);
                let z23 = Complex64::from_polar(1.0, st.u23[j].arg() - config.hw_phase_23);
                let a2 = z12.conj();
                [Complex64::new(1.0, 0.0), a2, a2 * z23.conj()]
            })
        })
        .collect();
    let grid = angle_grid(config.aoa_grid_step);
    let spec: Vec<f64> = grid
        .iter()
        .map(|deg| {
            let s = deg.to_radians().sin();
            let mut total = 0.0;
            for v in &vectors {
                for j in 0..NUM_SUBCARRIERS {
                    let sum: Complex64 = (0..NUM_ANTENNAS)
                        .map(|i| v[j][i] * Complex64::from_polar(1.0, k[j] * offsets[i] * s))
                        .sum();
                    total += sum.norm();
                }
            }
            total
        })
        .collect();
    Ok(grid[argmax(&spec, |k| grid[k].abs())])
}
