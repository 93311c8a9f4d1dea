//! Reconstruction of the complex reflection off the person at every antenna
//! and subcarrier, from CFR powers and the sub-window Doppler estimate.
//!
//! `|CSI|^2` is free of every receiver phase term. Its oscillating part is a
//! real cosine at the Doppler frequency whose phase holds the static-path
//! phase minus the reflection phase; fitting that cosine and rotating with
//! the static cross-correlation phases yields `Z^X[i][j]`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::config::{subcarrier_frequencies, SystemConfig};
use crate::dfs::{DfsWindow, StaticTerms};
use crate::dsp::{design_fir, least_squares_cos_fit_offset, CosFit, FilterSpec, ZeroPhaseFir};
use crate::error::{Error, Result};
use crate::types::{CsiWindow, NUM_ANTENNAS, NUM_SUBCARRIERS};
use crate::SPEED_OF_LIGHT;

/// Tap count of the Doppler-centred power filters.
pub const REFINE_TAPS: usize = 201;

/// `[subcarrier][sample]` real series.
pub type RealSeriesSet = Vec<Vec<f64>>;

/// CFR power `|CSI|^2` per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSet {
    pub p: [RealSeriesSet; NUM_ANTENNAS],
}

/// Time-mean static power `u[i][j]` and mean-removed dynamic power `v[i][j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSplit {
    pub u: [Vec<f64>; NUM_ANTENNAS],
    pub v: [RealSeriesSet; NUM_ANTENNAS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicComponentSet {
    pub z: [[Complex64; NUM_SUBCARRIERS]; NUM_ANTENNAS],
    /// Fit quality in `[0, 1]`, larger is better.
    pub w: [[f64; NUM_SUBCARRIERS]; NUM_ANTENNAS],
    pub window_index: usize,
    /// No reliable component could be fitted; all weights are zero.
    pub flagged: bool,
    /// Static pair terms with the dynamic products divided out.
    pub statics: Option<StaticTerms>,
}

impl DynamicComponentSet {
    pub fn empty(window_index: usize) -> Self {
        Self {
            z: [[Complex64::new(0.0, 0.0); NUM_SUBCARRIERS]; NUM_ANTENNAS],
            w: [[0.0; NUM_SUBCARRIERS]; NUM_ANTENNAS],
            window_index,
            flagged: true,
            statics: None,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().flatten().sum()
    }
}

pub fn self_correlate(window: &CsiWindow<'_>) -> PowerSet {
    let antenna = |i: usize| -> RealSeriesSet {
        (0..NUM_SUBCARRIERS)
            .map(|j| window.samples.iter().map(|s| s.values[i][j].norm_sqr()).collect())
            .collect()
    };
    PowerSet {
        p: [antenna(0), antenna(1), antenna(2)],
    }
}

pub fn split_power(power: &PowerSet) -> PowerSplit {
    let mut u: [Vec<f64>; NUM_ANTENNAS] = Default::default();
    let mut v: [RealSeriesSet; NUM_ANTENNAS] = Default::default();
    for (i, set) in power.p.iter().enumerate() {
        for series in set {
            let mean = series.iter().sum::<f64>() / series.len().max(1) as f64;
            u[i].push(mean);
            v[i].push(series.iter().map(|x| x - mean).collect());
        }
    }
    PowerSplit { u, v }
}

/// Lowpass at `|f_d| + delta_f`, cascaded with a highpass at
/// `|f_d| - delta_f` once `|f_d|` exceeds the trigger.
pub fn refine_filter(f_d: f64, config: &SystemConfig, len: usize) -> Result<ZeroPhaseFir> {
    let a = f_d.abs();
    let mut taps = design_fir(&FilterSpec::lowpass(a + config.delta_f_hz, config.f_s, REFINE_TAPS))?;
    if a > config.highpass_trigger_hz {
        let hp = design_fir(&FilterSpec::highpass(a - config.delta_f_hz, config.f_s, REFINE_TAPS))?;
        taps = convolve(&taps, &hp);
    }
    ZeroPhaseFir::from_taps(&taps, len)
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn refine_power(
    v: &[RealSeriesSet; NUM_ANTENNAS],
    f_d: f64,
    config: &SystemConfig,
) -> Result<[RealSeriesSet; NUM_ANTENNAS]> {
    let len = v[0].first().map_or(0, |s| s.len());
    let fir = refine_filter(f_d, config, len)?;
    let mut out: [RealSeriesSet; NUM_ANTENNAS] = Default::default();
    let mut packed = Vec::with_capacity(len);
    let mut buf = Vec::with_capacity(2 * len);
    for (i, set) in v.iter().enumerate() {
        out[i] = vec![Vec::new(); set.len()];
        // real taps keep real inputs real, so two series share one pass
        for j in (0..set.len()).step_by(2) {
            let second = set.get(j + 1);
            packed.clear();
            packed.extend((0..len).map(|k| Complex64::new(set[j][k], second.map_or(0.0, |s| s[k]))));
            fir.apply_into(&packed, &mut buf)?;
            out[i][j] = buf[..len].iter().map(|c| c.re).collect();
            if second.is_some() {
                out[i][j + 1] = buf[..len].iter().map(|c| c.im).collect();
            }
        }
    }
    Ok(out)
}

/// Fits the Doppler cosine in each `v'/u` series and maps the fitted
/// phases onto a common reference: antenna 1's static phase is replaced by
/// the direct-path phase over `d_s1`, antennas 2 and 3 are first rotated
/// onto antenna 1 with the static cross-correlation phases.
///
/// The window mean of a cross-correlation also holds the product of the two
/// dynamic terms and whatever the static-dynamic cross terms leave over a
/// non-integer number of Doppler cycles. With `r_i(k) = X_i / S_i` known
/// from the fits, that mean is
/// `S_1 S_2^* (1 + r_1 r_2^* + g r_1 + (g r_2)^*)` with `g` the window mean
/// of `exp(-J w k)`, so the factor is divided out before the static phase
/// is used.
pub fn reconstruct_components(
    v_refined: &[RealSeriesSet; NUM_ANTENNAS],
    u: &[Vec<f64>; NUM_ANTENNAS],
    f_d: f64,
    statics: &StaticTerms,
    config: &SystemConfig,
    window_index: usize,
) -> DynamicComponentSet {
    let mut out = DynamicComponentSet::empty(window_index);
    let dt = config.dt();
    let freqs = subcarrier_frequencies(config);
    let mut fits: [[Option<CosFit>; NUM_SUBCARRIERS]; NUM_ANTENNAS] = [[None; NUM_SUBCARRIERS]; NUM_ANTENNAS];
    let mut ratios = Vec::new();
    for i in 0..NUM_ANTENNAS {
        for j in 0..NUM_SUBCARRIERS {
            let uij = u[i][j];
            if !(uij > 0.0) {
                continue;
            }
            ratios.clear();
            ratios.extend(v_refined[i][j].iter().map(|v| v / uij));
            match least_squares_cos_fit_offset(&ratios, f_d, dt) {
                Ok(fit) => fits[i][j] = Some(fit),
                Err(Error::DegenerateFit { .. }) => return DynamicComponentSet::empty(window_index),
                Err(_) => {}
            }
        }
    }
    let w = 2.0 * PI * f_d * dt;
    let n = v_refined[0].first().map_or(0, |s| s.len()).max(1);
    let g = (0..n).map(|k| Complex64::from_polar(1.0, -w * k as f64)).sum::<Complex64>() / n as f64;
    let factor = |a: Complex64, b: Complex64| 1.0 + a * b.conj() + g * a + (g * b).conj();
    let mut clean = statics.clone();
    for j in 0..NUM_SUBCARRIERS {
        let r: [Complex64; NUM_ANTENNAS] = std::array::from_fn(|i| fits[i][j].as_ref().map_or(Complex64::ZERO, dynamic_ratio));
        clean.u12[j] /= factor(r[0], r[1]);
        clean.u23[j] /= factor(r[1], r[2]);
        clean.u31[j] /= factor(r[2], r[0]);
        let eta = 2.0 * PI * freqs[j] / SPEED_OF_LIGHT * config.d_s1;
        for i in 0..NUM_ANTENNAS {
            let Some(fit) = &fits[i][j] else { continue };
            let mut phase = fit.y.atan2(fit.x);
            match i {
                1 => phase -= clean.u12[j].arg() - config.hw_phase_12,
                2 => phase += clean.u31[j].arg() - config.hw_phase_31,
                _ => {}
            }
            out.z[i][j] = Complex64::from_polar(fit.weight, phase - eta);
            out.w[i][j] = fit.weight;
        }
    }
    out.flagged = out.total_weight() == 0.0;
    out.statics = Some(clean);
    out
}

/// `X / S` from a fit of `2 |S| |X| cos(.)` relative to `|S|^2 + |X|^2`,
/// assuming the static term is the stronger one. The fitted constant
/// corrects the window mean, which is off when the window holds a
/// non-integer number of cycles.
fn dynamic_ratio(fit: &CosFit) -> Complex64 {
    let base = 1.0 + fit.offset;
    if !(base > 0.0) {
        return Complex64::ZERO;
    }
    let a = (fit.x.hypot(fit.y) / base).min(1.0);
    if a == 0.0 {
        return Complex64::ZERO;
    }
    let q = (1.0 - (1.0 - a * a).sqrt()) / a;
    Complex64::from_polar(q, fit.y.atan2(fit.x))
}

/// Self-correlation, power split, Doppler-centred refinement and
/// reconstruction for one sub-window.
pub fn separate(window: &CsiWindow<'_>, dfs: &DfsWindow, config: &SystemConfig) -> Result<DynamicComponentSet> {
    let split = split_power(&self_correlate(window));
    let f_d = dfs.estimate.f_d;
    let refined = refine_power(&split.v, f_d, config)?;
    Ok(reconstruct_components(&refined, &split.u, f_d, &dfs.statics, config, window.window_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CsiSample;

    fn tone(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 * 1e-3).cos()).collect()
    }

    fn rms_mid(x: &[f64]) -> f64 {
        let mid = &x[25..75];
        (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
    }

    fn gain_db(input: Vec<f64>, f_d: f64) -> f64 {
        let cfg = SystemConfig::default();
        let v: [RealSeriesSet; 3] = [vec![input.clone()], vec![input.clone()], vec![input.clone()]];
        let out = refine_power(&v, f_d, &cfg).unwrap();
        20.0 * (rms_mid(&out[1][0]) / rms_mid(&input)).log10()
    }

    #[test]
    fn power_of_three_plus_four_j() {
        let mut s = CsiSample::zeros(0.0);
        s.values[1][4] = Complex64::new(3.0, 4.0);
        let samples = vec![s; 3];
        let p = self_correlate(&CsiWindow { samples: &samples, window_index: 0 });
        assert_eq!(p.p[1][4], vec![25.0; 3]);
        assert!(p.p[0].iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn split_removes_the_mean() {
        let series: Vec<f64> = (0..100).map(|k| 5.0 + (k as f64 * 0.3).sin()).collect();
        let p = PowerSet {
            p: [vec![series.clone()], vec![series.clone()], vec![series]],
        };
        let s = split_power(&p);
        for i in 0..3 {
            assert!(s.v[i][0].iter().sum::<f64>().abs() < 1e-9);
            assert!((s.u[i][0] - 5.0).abs() < 0.05);
        }
    }

    #[test]
    fn refinement_bands() {
        assert!(gain_db(tone(20.0, 100), 20.0).abs() < 1.0);
        assert!(gain_db(tone(45.0, 100), 20.0) <= -20.0);
        assert!(gain_db(vec![1.0; 100], 20.0) <= -20.0);
        assert!(gain_db(vec![1.0; 100], 5.0).abs() < 0.1);
    }

    #[test]
    fn packed_pairs_match_single_series() {
        let cfg = SystemConfig::default();
        let a: Vec<f64> = (0..100).map(|k| (k as f64 * 0.17).sin()).collect();
        let b: Vec<f64> = (0..100).map(|k| (k as f64 * 0.05).cos() * 2.0).collect();
        let both = refine_power(&[vec![a.clone(), b.clone()], vec![], vec![]], 22.0, &cfg).unwrap();
        let fir = refine_filter(22.0, &cfg, 100).unwrap();
        assert!(both[0][0].iter().zip(fir.apply_real(&a).unwrap()).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(both[0][1].iter().zip(fir.apply_real(&b).unwrap()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    fn statics_zero() -> StaticTerms {
        let one = vec![Complex64::new(1.0, 0.0); NUM_SUBCARRIERS];
        StaticTerms {
            u12: one.clone(),
            u23: one.clone(),
            u31: one,
        }
    }

    #[test]
    fn recovers_cosine_phase() {
        let mut cfg = SystemConfig::default();
        cfg.d_s1 = 0.0;
        let alpha = 0.9;
        let series: Vec<f64> = (0..100)
            .map(|k| 0.3 * (alpha - 2.0 * PI * 20.0 * k as f64 * 1e-3).cos())
            .collect();
        let v: [RealSeriesSet; 3] = std::array::from_fn(|_| vec![series.clone(); NUM_SUBCARRIERS]);
        let u: [Vec<f64>; 3] = std::array::from_fn(|_| vec![1.0; NUM_SUBCARRIERS]);
        let set = reconstruct_components(&v, &u, 20.0, &statics_zero(), &cfg, 4);
        assert!(!set.flagged);
        assert_eq!(set.window_index, 4);
        for i in 0..3 {
            for j in 0..NUM_SUBCARRIERS {
                assert!((set.z[i][j].arg() - alpha).abs() < 1e-9);
                assert!((set.w[i][j] - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn static_phase_rotation_signs() {
        let mut cfg = SystemConfig::default();
        cfg.d_s1 = 0.0;
        cfg.hw_phase_12 = 0.4;
        cfg.hw_phase_31 = -0.1;
        let series: Vec<f64> = (0..100).map(|k| (2.0 * PI * 20.0 * k as f64 * 1e-3).cos()).collect();
        let v: [RealSeriesSet; 3] = std::array::from_fn(|_| vec![series.clone(); NUM_SUBCARRIERS]);
        let u: [Vec<f64>; 3] = std::array::from_fn(|_| vec![2.0; NUM_SUBCARRIERS]);
        let mut st = statics_zero();
        st.u12 = vec![Complex64::from_polar(1.0, 1.0); NUM_SUBCARRIERS];
        st.u31 = vec![Complex64::from_polar(1.0, 0.5); NUM_SUBCARRIERS];
        let set = reconstruct_components(&v, &u, 20.0, &st, &cfg, 0);
        assert!((set.z[1][0].arg() - (-(1.0 - 0.4))).abs() < 1e-9);
        assert!((set.z[2][0].arg() - (0.5 + 0.1)).abs() < 1e-9);
    }

    #[test]
    fn zero_power_is_flagged() {
        let cfg = SystemConfig::default();
        let v: [RealSeriesSet; 3] = std::array::from_fn(|_| vec![vec![0.0; 100]; NUM_SUBCARRIERS]);
        let u: [Vec<f64>; 3] = std::array::from_fn(|_| vec![1.0; NUM_SUBCARRIERS]);
        let set = reconstruct_components(&v, &u, 20.0, &statics_zero(), &cfg, 0);
        assert!(set.flagged);
        assert_eq!(set.total_weight(), 0.0);
    }

    #[test]
    fn zero_doppler_is_flagged() {
        let cfg = SystemConfig::default();
        let v: [RealSeriesSet; 3] = std::array::from_fn(|_| vec![tone(20.0, 100); NUM_SUBCARRIERS]);
        let u: [Vec<f64>; 3] = std::array::from_fn(|_| vec![1.0; NUM_SUBCARRIERS]);
        let set = reconstruct_components(&v, &u, 0.0, &statics_zero(), &cfg, 0);
        assert!(set.flagged);
    }

    #[test]
    fn static_term_is_cleaned_of_dynamic_products() {
        let cfg = SystemConfig {
            d_s1: 0.0,
            hw_phase_12: 0.0,
            hw_phase_31: 0.0,
            ..SystemConfig::default()
        };
        let (f_d, n) = (23.0, 100);
        let w = 2.0 * PI * f_d * cfg.dt();
        let a = [0.3, -1.1, 2.0];
        let b = [0.9, 0.2, -2.5];
        let h = |i: usize, k: usize| {
            Complex64::from_polar(1.0, a[i]) + Complex64::from_polar(0.35, b[i] - w * k as f64)
        };
        let mut v: [RealSeriesSet; 3] = Default::default();
        let mut u: [Vec<f64>; 3] = Default::default();
        for i in 0..3 {
            let p: Vec<f64> = (0..n).map(|k| h(i, k).norm_sqr()).collect();
            let mean = p.iter().sum::<f64>() / n as f64;
            v[i] = vec![p.iter().map(|x| x - mean).collect(); NUM_SUBCARRIERS];
            u[i] = vec![mean; NUM_SUBCARRIERS];
        }
        let mean_cc = |x: usize, y: usize| (0..n).map(|k| h(x, k) * h(y, k).conj()).sum::<Complex64>() / n as f64;
        let st = StaticTerms {
            u12: vec![mean_cc(0, 1); NUM_SUBCARRIERS],
            u23: vec![mean_cc(1, 2); NUM_SUBCARRIERS],
            u31: vec![mean_cc(2, 0); NUM_SUBCARRIERS],
        };
        let set = reconstruct_components(&v, &u, f_d, &st, &cfg, 0);
        for i in 1..3 {
            let got = (set.z[i][0] * set.z[0][0].conj()).arg();
            let want = Complex64::from_polar(1.0, b[i] - b[0]).arg();
            assert!((got - want).abs() < 1e-6, "antenna {i}: {got} vs {want}");
        }
    }
}
