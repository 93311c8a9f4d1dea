//! System configuration and the subcarrier frequency grid.
//!
//! Units are SI throughout (m, s, Hz, rad); degrees appear only in the two
//! grid-step style fields that are naturally expressed that way.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{NUM_SUBCARRIERS, SPEED_OF_LIGHT};

/// Half-span of the uniform subcarrier grid, Hz.
pub const SUBCARRIER_HALF_SPAN_HZ: f64 = 8.75e6;

/// Runtime parameters shared by every stage of the pipeline.
///
/// Serialized as flat TOML whose keys are exactly the field names below
/// (`N_p` and `M` keep their upper-case spelling). Missing keys take the
/// defaults, unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// CSI sampling rate, Hz.
    pub f_s: f64,
    /// Samples per sub-window.
    #[serde(rename = "N_p")]
    pub n_p: usize,
    /// Sub-windows per joint window (odd).
    #[serde(rename = "M")]
    pub m: usize,
    /// Offsets of the 30 reported subcarriers relative to `f_c`, Hz.
    pub subcarrier_offsets: Vec<f64>,
    /// Antenna 1 to antenna 2 spacing, m.
    pub spacing_12: f64,
    /// Antenna 2 to antenna 3 spacing, m.
    pub spacing_23: f64,
    /// Hardware phase difference `angle(H1 * conj(H2))`, rad.
    pub hw_phase_12: f64,
    pub hw_phase_23: f64,
    pub hw_phase_31: f64,
    /// Direct path length from the transmitter to antenna 1, m.
    pub d_s1: f64,
    /// AoA search step, degrees.
    pub aoa_grid_step: f64,
    /// Reflection-distance search step, m.
    pub dist_grid_step: f64,
    /// Upper bound of the reflection-distance search, m.
    pub dist_max: f64,
    pub motion_threshold: f64,
    pub kalman_sin_aoa_var: f64,
    pub kalman_dist_var_m: f64,
    pub kalman_dfs_var_hz: f64,
    /// Passband of the cross-correlation lowpass, Hz.
    pub lowpass_pass_hz: f64,
    /// Margin around |f_D| used when refining dynamic power, Hz.
    pub delta_f_hz: f64,
    /// |f_D| above which the refinement highpass is enabled, Hz.
    pub highpass_trigger_hz: f64,
    pub sg_order: usize,
    pub sg_frame: usize,
    /// Signal-subspace eigenvalue threshold relative to the largest one.
    pub eig_threshold_factor: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            f_c: 5.32e9,
            f_s: 1000.0,
            n_p: 100,
            m: 9,
            subcarrier_offsets: uniform_offsets(),
            spacing_12: 0.028,
            spacing_23: 0.028,
            hw_phase_12: 0.0,
            hw_phase_23: 0.0,
            hw_phase_31: 0.0,
            d_s1: 2.35,
            aoa_grid_step: 1.0,
            dist_grid_step: 0.05,
            dist_max: 20.0,
            motion_threshold: 0.3,
            kalman_sin_aoa_var: 0.2,
            kalman_dist_var_m: 0.20,
            kalman_dfs_var_hz: 5.0,
            lowpass_pass_hz: 60.0,
            delta_f_hz: 10.0,
            highpass_trigger_hz: 15.0,
            sg_order: 3,
            sg_frame: 5,
            eig_threshold_factor: 0.6,
        }
    }
}

fn uniform_offsets() -> Vec<f64> {
    let step = 2.0 * SUBCARRIER_HALF_SPAN_HZ / (NUM_SUBCARRIERS - 1) as f64;
    (0..NUM_SUBCARRIERS)
        .map(|j| -SUBCARRIER_HALF_SPAN_HZ + j as f64 * step)
        .collect()
}

impl SystemConfig {
    /// Sampling interval, s.
    pub fn dt(&self) -> f64 {
        1.0 / self.f_s
    }

    /// Carrier wavelength, m.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// Antenna positions along the array, measured from antenna 1.
    pub fn antenna_offsets(&self) -> [f64; 3] {
        [0.0, self.spacing_12, self.spacing_12 + self.spacing_23]
    }

    /// Index of the centre sub-window of a joint window (0-based).
    pub fn center_index(&self) -> usize {
        (self.m - 1) / 2
    }

    /// Path-length change per sub-window for a Doppler of 1 Hz, m.
    pub fn meters_per_hz_window(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c * self.n_p as f64 / self.f_s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let finite = [
            ("f_c", self.f_c),
            ("f_s", self.f_s),
            ("spacing_12", self.spacing_12),
            ("spacing_23", self.spacing_23),
            ("hw_phase_12", self.hw_phase_12),
            ("hw_phase_23", self.hw_phase_23),
            ("hw_phase_31", self.hw_phase_31),
            ("d_s1", self.d_s1),
            ("aoa_grid_step", self.aoa_grid_step),
            ("dist_grid_step", self.dist_grid_step),
            ("dist_max", self.dist_max),
            ("motion_threshold", self.motion_threshold),
            ("kalman_sin_aoa_var", self.kalman_sin_aoa_var),
            ("kalman_dist_var_m", self.kalman_dist_var_m),
            ("kalman_dfs_var_hz", self.kalman_dfs_var_hz),
            ("lowpass_pass_hz", self.lowpass_pass_hz),
            ("delta_f_hz", self.delta_f_hz),
            ("highpass_trigger_hz", self.highpass_trigger_hz),
            ("eig_threshold_factor", self.eig_threshold_factor),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} must be finite"));
        }
        if self.f_c <= 0.0 {
            return bad("f_c must be positive".into());
        }
        if self.f_s <= 0.0 {
            return bad("f_s must be positive".into());
        }
        if self.n_p < 2 {
            return bad(format!("N_p must be at least 2, got {}", self.n_p));
        }
        if self.m == 0 || self.m % 2 == 0 {
            return bad(format!("M must be odd and >= 1, got {}", self.m));
        }
        if self.subcarrier_offsets.len() != NUM_SUBCARRIERS {
            return bad(format!(
                "subcarrier_offsets must have {NUM_SUBCARRIERS} entries, got {}",
                self.subcarrier_offsets.len()
            ));
        }
        if self.subcarrier_offsets.iter().any(|o| !o.is_finite()) {
            return bad("subcarrier_offsets must be finite".into());
        }
        let half_wave = SPEED_OF_LIGHT / (2.0 * self.f_c);
        for (name, s) in [("spacing_12", self.spacing_12), ("spacing_23", self.spacing_23)] {
            if s <= 0.0 || s > half_wave * (1.0 + 1e-12) {
                return bad(format!(
                    "{name} = {s} m must lie in (0, {half_wave:.6}] (half a carrier wavelength)"
                ));
            }
        }
        if self.dist_grid_step <= 0.0 || self.aoa_grid_step <= 0.0 {
            return bad("grid steps must be positive".into());
        }
        if self.d_s1 < 0.0 || self.dist_max <= self.d_s1 {
            return bad("need 0 <= d_s1 < dist_max".into());
        }
        if self.lowpass_pass_hz <= 0.0 || self.lowpass_pass_hz >= self.f_s / 2.0 {
            return bad("lowpass_pass_hz must lie in (0, f_s/2)".into());
        }
        if self.sg_frame % 2 == 0 || self.sg_order >= self.sg_frame {
            return bad("sg_frame must be odd and larger than sg_order".into());
        }
        if !(0.0..=1.0).contains(&self.eig_threshold_factor) {
            return bad("eig_threshold_factor must lie in [0, 1]".into());
        }
        if self.kalman_sin_aoa_var <= 0.0 || self.kalman_dist_var_m <= 0.0 || self.kalman_dfs_var_hz <= 0.0 {
            return bad("Kalman noise parameters must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::from(e).at(path))?;
        Ok(())
    }

    /// Copy of this configuration with calibrated spacings and phases.
    pub fn with_calibration(&self, calib: &crate::calib::CalibResult) -> Self {
        Self {
            spacing_12: calib.spacing_12,
            spacing_23: calib.spacing_23,
            hw_phase_12: calib.phase_12,
            hw_phase_23: calib.phase_23,
            hw_phase_31: calib.phase_31,
            ..self.clone()
        }
    }
}

/// Absolute frequencies of the 30 subcarriers, Hz.
pub fn subcarrier_frequencies(config: &SystemConfig) -> Vec<f64> {
    config
        .subcarrier_offsets
        .iter()
        .map(|o| config.f_c + o)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_symmetric_about_carrier() {
        let cfg = SystemConfig::default();
        let f = subcarrier_frequencies(&cfg);
        assert_eq!(f.len(), 30);
        for j in 0..15 {
            let lo = cfg.f_c - f[j];
            let hi = f[29 - j] - cfg.f_c;
            assert!((lo - hi).abs() < 1e-3, "j={j}: {lo} vs {hi}");
        }
    }

    #[test]
    fn zero_offsets_collapse_to_carrier() {
        let cfg = SystemConfig {
            subcarrier_offsets: vec![0.0; 30],
            ..Default::default()
        };
        assert!(subcarrier_frequencies(&cfg).iter().all(|&f| f == cfg.f_c));
    }

    #[test]
    fn default_spacing_is_17_5_mhz_over_29() {
        let f = subcarrier_frequencies(&SystemConfig::default());
        let expected = 17.5e6 / 29.0;
        for w in f.windows(2) {
            assert!(((w[1] - w[0]) - expected).abs() < 1e-3);
        }
        assert!((expected - 603_448.275_862).abs() < 1e-3);
    }

    #[test]
    fn grid_is_strictly_increasing() {
        let f = subcarrier_frequencies(&SystemConfig::default());
        assert!(f.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn defaults_validate() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_even_m_and_short_window() {
        let even = SystemConfig { m: 4, ..Default::default() };
        assert!(matches!(even.validate(), Err(Error::InvalidConfig(_))));
        let short = SystemConfig { n_p: 1, ..Default::default() };
        assert!(short.validate().is_err());
        let wide = SystemConfig { spacing_12: 0.03, ..Default::default() };
        assert!(wide.validate().is_err());
    }

    #[test]
    fn unknown_key_is_an_error() {
        let text = "f_c = 5.32e9\nbogus = 1\n";
        assert!(SystemConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn keys_keep_their_field_names() {
        let text = SystemConfig::default().to_toml_string();
        assert!(text.contains("N_p = 100"));
        assert!(text.contains("M = 9"));
        assert!(text.contains("f_c = "));
    }

    #[test]
    fn toml_round_trip_is_bit_exact() {
        let cfg = SystemConfig {
            f_c: 5.3200000000000001e9,
            spacing_12: 0.026_18,
            spacing_23: 0.023_91,
            hw_phase_12: 5.956,
            hw_phase_23: 1.418,
            hw_phase_31: (-(5.956f64 + 1.418)).rem_euclid(std::f64::consts::TAU),
            d_s1: 1.0 / 3.0,
            ..Default::default()
        };
        let back = SystemConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        for (a, b) in back.subcarrier_offsets.iter().zip(&cfg.subcarrier_offsets) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
