//! Forward channel simulator.
//!
//! Every sample is built as `H^e * H^h_i * (H^S + H^X + N)` from exact
//! geometry: the static part sums the direct path and any static reflectors,
//! the dynamic part is a point scatterer following a trajectory, and the
//! receiver impairments (AGC gain, timing and frequency offsets) multiply
//! the whole bracket. All randomness comes from independent ChaCha streams
//! derived from the scene seed, so toggling one impairment never changes the
//! realisation of another.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{subcarrier_frequencies, SystemConfig};
use crate::error::{Error, Result};
use crate::geometry::{ArrayFrame, Position};
use crate::par::{map_range, Parallelism};
use crate::types::{CsiSample, CsiTrace, NUM_ANTENNAS, NUM_SUBCARRIERS};
use crate::SPEED_OF_LIGHT;

const STREAM_NOISE: u64 = 1;
const STREAM_TIMING: u64 = 2;
const STREAM_FREQUENCY: u64 = 3;
const STREAM_AGC: u64 = 4;
const STREAM_DROPOUT: u64 = 5;

/// Deterministic generator for sample `k` of a given stream.
fn stream_rng(seed: u64, stream: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((k as u128) << 24);
    rng
}

/// Log-normal random walk of the receiver gain, one step per sub-window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgcWalk {
    pub initial_gain: f64,
    /// Standard deviation of the per-window step in natural-log units.
    pub log_step_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpairmentSpec {
    pub agc: Option<AgcWalk>,
    /// Standard deviation of the per-sample timing offset, s. The phase
    /// slope across subcarriers is `2 pi * offset_j * tau_k`.
    pub timing_offset_std_s: Option<f64>,
    /// Per-sample common phase drawn uniformly from `[-pi, pi)` when set.
    pub frequency_offset: bool,
    /// Noise power relative to the direct-path power; `None` is noiseless.
    pub noise_snr_db: Option<f64>,
}

impl ImpairmentSpec {
    /// Timing and frequency offsets typical of unsynchronised commodity NICs.
    pub fn clock_offsets() -> Self {
        Self {
            timing_offset_std_s: Some(50e-9),
            frequency_offset: true,
            ..Default::default()
        }
    }

    pub fn with_snr(mut self, snr_db: f64) -> Self {
        self.noise_snr_db = Some(snr_db);
        self
    }

    pub fn with_agc(mut self, agc: AgcWalk) -> Self {
        self.agc = Some(agc);
        self
    }

    /// Same spec with the timing and frequency offsets removed.
    pub fn without_clock_offsets(mut self) -> Self {
        self.timing_offset_std_s = None;
        self.frequency_offset = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub attenuation: [f64; NUM_ANTENNAS],
    /// `H^h_i = attenuation_i * exp(-J phase_i)`.
    pub phase: [f64; NUM_ANTENNAS],
    pub spacing_12: f64,
    pub spacing_23: f64,
}

impl Default for HardwareSpec {
    fn default() -> Self {
        Self {
            attenuation: [1.0; NUM_ANTENNAS],
            phase: [0.0; NUM_ANTENNAS],
            spacing_12: 0.028,
            spacing_23: 0.028,
        }
    }
}

impl HardwareSpec {
    /// Hardware with the given pairwise phase differences
    /// `angle(H1 conj H2)` and `angle(H2 conj H3)`.
    pub fn with_phase_differences(spacing_12: f64, spacing_23: f64, dphi_12: f64, dphi_23: f64) -> Self {
        Self {
            attenuation: [1.0; NUM_ANTENNAS],
            phase: [0.0, dphi_12, dphi_12 + dphi_23],
            spacing_12,
            spacing_23,
        }
    }

    pub fn offsets(&self) -> [f64; NUM_ANTENNAS] {
        [0.0, self.spacing_12, self.spacing_12 + self.spacing_23]
    }

    fn factor(&self, i: usize) -> Complex64 {
        Complex64::from_polar(self.attenuation[i], -self.phase[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticReflector {
    pub position: Position,
    pub amplitude: f64,
}

/// A time-parameterised person path in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    Stationary {
        position: Position,
    },
    /// Constant-speed walk along the vertices; closed paths loop, open ones
    /// turn around at the ends.
    Polyline {
        points: Vec<Position>,
        speed: f64,
        #[serde(default)]
        closed: bool,
    },
    Ellipse {
        center: Position,
        semi_x: f64,
        semi_y: f64,
        /// Seconds per lap; the sign sets the direction.
        period_s: f64,
        #[serde(default)]
        start_angle: f64,
    },
}

impl Trajectory {
    pub fn line(from: Position, to: Position, speed: f64) -> Self {
        Trajectory::Polyline {
            points: vec![from, to],
            speed,
            closed: false,
        }
    }

    /// Axis-aligned rectangle walked counter-clockwise from `corner`.
    pub fn rectangle(corner: Position, width: f64, height: f64, speed: f64) -> Self {
        let (x, y) = (corner.x, corner.y);
        Trajectory::Polyline {
            points: vec![
                corner,
                Position::new(x + width, y),
                Position::new(x + width, y + height),
                Position::new(x, y + height),
            ],
            speed,
            closed: true,
        }
    }

    /// Ellipse walked at approximately `speed` m/s.
    pub fn ellipse(center: Position, semi_x: f64, semi_y: f64, speed: f64) -> Self {
        let (a, b) = (semi_x, semi_y);
        let h = ((a - b) / (a + b)).powi(2);
        let perimeter = PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()));
        Trajectory::Ellipse {
            center,
            semi_x,
            semi_y,
            period_s: perimeter / speed,
            start_angle: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            Trajectory::Stationary { position } if !position.is_finite() => bad("non-finite position"),
            Trajectory::Polyline { points, speed, .. } => {
                if points.len() < 2 {
                    return bad("polyline needs at least 2 points");
                }
                if !(*speed >= 0.0 && speed.is_finite()) {
                    return bad("polyline speed must be finite and non-negative");
                }
                if polyline_lengths(points, false).iter().any(|l| *l <= 0.0) {
                    return bad("polyline has repeated consecutive points");
                }
                Ok(())
            }
            Trajectory::Ellipse {
                semi_x,
                semi_y,
                period_s,
                ..
            } => {
                if !(*semi_x > 0.0 && *semi_y > 0.0) {
                    return bad("ellipse semi-axes must be positive");
                }
                if !(period_s.is_finite() && *period_s != 0.0) {
                    return bad("ellipse period must be finite and nonzero");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Position and velocity at time `t`.
    pub fn state(&self, t: f64) -> (Position, (f64, f64)) {
        match self {
            Trajectory::Stationary { position } => (*position, (0.0, 0.0)),
            Trajectory::Ellipse {
                center,
                semi_x,
                semi_y,
                period_s,
                start_angle,
            } => {
                let w = 2.0 * PI / period_s;
                let phi = start_angle + w * t;
                let (s, c) = phi.sin_cos();
                (
                    Position::new(center.x + semi_x * c, center.y + semi_y * s),
                    (-semi_x * w * s, semi_y * w * c),
                )
            }
            Trajectory::Polyline {
                points,
                speed,
                closed,
            } => {
                let lengths = polyline_lengths(points, *closed);
                let total: f64 = lengths.iter().sum();
                let mut s = speed * t;
                let mut dir = 1.0;
                if *closed {
                    s = s.rem_euclid(total);
                } else {
                    s = s.rem_euclid(2.0 * total);
                    if s > total {
                        s = 2.0 * total - s;
                        dir = -1.0;
                    }
                }
                let n = points.len();
                let mut seg = 0;
                while seg + 1 < lengths.len() && s > lengths[seg] {
                    s -= lengths[seg];
                    seg += 1;
                }
                let a = points[seg];
                let b = points[(seg + 1) % n];
                let u = ((b.x - a.x) / lengths[seg], (b.y - a.y) / lengths[seg]);
                let frac = (s / lengths[seg]).clamp(0.0, 1.0);
                (
                    Position::new(a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)),
                    (dir * speed * u.0, dir * speed * u.1),
                )
            }
        }
    }
}

fn polyline_lengths(points: &[Position], closed: bool) -> Vec<f64> {
    let n = points.len();
    let segs = if closed { n } else { n - 1 };
    (0..segs)
        .map(|i| points[i].distance(&points[(i + 1) % n]))
        .collect()
}

/// Bernoulli loss of the person reflection, drawn per block of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSpec {
    pub probability: f64,
    #[serde(default = "one")]
    pub block_len: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonSpec {
    pub trajectory: Trajectory,
    pub reflectivity: f64,
    #[serde(default)]
    pub dropout: Option<DropoutSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub tx_position: Position,
    pub rx_antenna1_position: Position,
    /// Direction from antenna 1 towards antennas 2 and 3.
    pub rx_array_axis: [f64; 2],
    #[serde(default = "unit")]
    pub direct_amplitude: f64,
    #[serde(default)]
    pub static_reflectors: Vec<StaticReflector>,
    #[serde(default)]
    pub person: Option<PersonSpec>,
    #[serde(default)]
    pub impairments: ImpairmentSpec,
    #[serde(default)]
    pub hardware: HardwareSpec,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

impl SceneSpec {
    /// Receiver at the origin with broadside along +y, transmitter at
    /// `tx_distance` m and `tx_aoa` rad.
    pub fn new(tx_distance: f64, tx_aoa: f64, duration_s: f64) -> Self {
        Self {
            tx_position: Position::from_polar(tx_distance, tx_aoa),
            rx_antenna1_position: Position::ORIGIN,
            rx_array_axis: [-1.0, 0.0],
            direct_amplitude: 1.0,
            static_reflectors: Vec::new(),
            person: None,
            impairments: ImpairmentSpec::default(),
            hardware: HardwareSpec::default(),
            duration_s,
            seed: 0,
        }
    }

    pub fn frame(&self) -> Result<ArrayFrame> {
        ArrayFrame::new(
            self.rx_antenna1_position,
            (self.rx_array_axis[0], self.rx_array_axis[1]),
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: SceneSpec = toml::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        if !(self.direct_amplitude > 0.0 && self.direct_amplitude.is_finite()) {
            return bad("direct-path amplitude must be positive".into());
        }
        for (r, refl) in self.static_reflectors.iter().enumerate() {
            if !(refl.amplitude >= 0.0 && refl.amplitude < self.direct_amplitude) {
                return bad(format!(
                    "static reflector {r} amplitude {} must be below the direct path {}",
                    refl.amplitude, self.direct_amplitude
                ));
            }
        }
        if self.hardware.attenuation.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad("hardware attenuations must be positive".into());
        }
        if !(self.hardware.spacing_12 > 0.0 && self.hardware.spacing_23 > 0.0) {
            return bad("hardware spacings must be positive".into());
        }
        if let Some(snr) = self.impairments.noise_snr_db {
            if !snr.is_finite() {
                return bad("SNR must be finite".into());
            }
        }
        if let Some(agc) = self.impairments.agc {
            if !(agc.initial_gain > 0.0 && agc.log_step_std >= 0.0) {
                return bad("AGC gain must be positive with a non-negative step".into());
            }
        }
        if let Some(person) = &self.person {
            person.trajectory.validate()?;
            if !(person.reflectivity >= 0.0 && person.reflectivity.is_finite()) {
                return bad("person reflectivity must be non-negative".into());
            }
            if let Some(d) = person.dropout {
                if !(0.0..=1.0).contains(&d.probability) || d.block_len == 0 {
                    return bad("dropout probability must lie in [0, 1] with a positive block".into());
                }
            }
        }
        self.frame()?;
        Ok(())
    }
}

/// Exact per-sample truth in the receiver frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub timestamps: Vec<f64>,
    pub positions: Vec<Position>,
    /// TX to person to antenna 1, m.
    pub d_x: Vec<f64>,
    /// Hz, positive when `d_x` grows.
    pub f_d: Vec<f64>,
    pub theta_x_deg: Vec<f64>,
    /// Transmitter in the receiver frame.
    pub tx: Position,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn d_s1(&self) -> f64 {
        self.tx.norm()
    }

    pub fn theta_s_deg(&self) -> f64 {
        self.tx.bearing().to_degrees()
    }
}

pub fn generate_trace(scene: &SceneSpec, config: &SystemConfig) -> Result<(CsiTrace, GroundTruth)> {
    generate_trace_with(scene, config, Parallelism::default())
}

pub fn generate_trace_with(
    scene: &SceneSpec,
    config: &SystemConfig,
    mode: Parallelism,
) -> Result<(CsiTrace, GroundTruth)> {
    config.validate()?;
    scene.validate()?;
    let n = (scene.duration_s * config.f_s).round() as usize;
    if n == 0 {
        return Err(Error::InvalidParameter("scene duration shorter than one sample".into()));
    }
    let frame = scene.frame()?;
    let freqs = subcarrier_frequencies(config);
    let k_wave: Vec<f64> = freqs.iter().map(|f| 2.0 * PI * f / SPEED_OF_LIGHT).collect();
    let antennas: Vec<Position> = scene.hardware.offsets().iter().map(|o| frame.antenna(*o)).collect();
    let tx = scene.tx_position;
    let dt = config.dt();
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();

    // static component, constant over time
    let mut h_s = [[Complex64::new(0.0, 0.0); NUM_SUBCARRIERS]; NUM_ANTENNAS];
    for (i, a) in antennas.iter().enumerate() {
        let direct = tx.distance(a);
        for (j, k) in k_wave.iter().enumerate() {
            let mut h = Complex64::from_polar(scene.direct_amplitude, -k * direct);
            for r in &scene.static_reflectors {
                let d = tx.distance(&r.position) + r.position.distance(a);
                h += Complex64::from_polar(r.amplitude, -k * d);
            }
            h_s[i][j] = h;
        }
    }

    let tx_local = frame.to_local(tx);
    let mut truth = GroundTruth {
        timestamps: times.clone(),
        tx: tx_local,
        ..Default::default()
    };
    let person = scene.person.as_ref();
    if let Some(p) = person {
        let scale = config.f_c / SPEED_OF_LIGHT;
        for (k, &t) in times.iter().enumerate() {
            let (pos, vel) = p.trajectory.state(t);
            let local = frame.to_local(pos);
            if !(local.y > 0.0) {
                return Err(Error::OutsideHalfPlane { sample: k, time: t });
            }
            let to_tx = pos - tx;
            let to_rx = pos - antennas[0];
            let (nt, nr) = (to_tx.norm(), to_rx.norm());
            let radial = vel.0 * (to_tx.x / nt + to_rx.x / nr) + vel.1 * (to_tx.y / nt + to_rx.y / nr);
            truth.positions.push(local);
            truth.d_x.push(nt + nr);
            truth.f_d.push(scale * radial);
            truth.theta_x_deg.push(local.bearing().to_degrees());
        }
    }

    let imp = scene.impairments;
    let agc = agc_gains(scene.seed, imp.agc, n, config.n_p);
    let visible = visibility(scene.seed, person.and_then(|p| p.dropout), n);
    let noise_std = imp
        .noise_snr_db
        .map(|snr| scene.direct_amplitude * 10f64.powf(-snr / 20.0) * std::f64::consts::FRAC_1_SQRT_2);
    let hw: Vec<Complex64> = (0..NUM_ANTENNAS).map(|i| scene.hardware.factor(i)).collect();
    let offsets = &config.subcarrier_offsets;

    let samples = map_range(n, mode, |k| {
        let t = times[k];
        let mut s = CsiSample::zeros(t);
        let mut h_x = [[Complex64::new(0.0, 0.0); NUM_SUBCARRIERS]; NUM_ANTENNAS];
        if let Some(p) = person {
            if visible[k] && p.reflectivity > 0.0 {
                let (pos, _) = p.trajectory.state(t);
                let leg = tx.distance(&pos);
                for (i, a) in antennas.iter().enumerate() {
                    let d = leg + pos.distance(a);
                    for (j, kw) in k_wave.iter().enumerate() {
                        h_x[i][j] = Complex64::from_polar(p.reflectivity, -kw * d);
                    }
                }
            }
        }
        let tau = imp.timing_offset_std_s.map_or(0.0, |std| {
            let mut rng = stream_rng(scene.seed, STREAM_TIMING, k);
            Normal::new(0.0, std).map_or(0.0, |d| d.sample(&mut rng))
        });
        let fo = if imp.frequency_offset {
            let mut rng = stream_rng(scene.seed, STREAM_FREQUENCY, k);
            rng.random_range(-PI..PI)
        } else {
            0.0
        };
        let mut noise_rng = stream_rng(scene.seed, STREAM_NOISE, k);
        let unit = Normal::new(0.0, 1.0).unwrap();
        for j in 0..NUM_SUBCARRIERS {
            let h_e = Complex64::from_polar(agc[k], -(2.0 * PI * offsets[j] * tau + fo));
            for i in 0..NUM_ANTENNAS {
                let mut bracket = h_s[i][j] + h_x[i][j];
                if let Some(std) = noise_std {
                    bracket += Complex64::new(unit.sample(&mut noise_rng), unit.sample(&mut noise_rng)) * std;
                }
                s.values[i][j] = h_e * hw[i] * bracket;
            }
        }
        s
    });
    Ok((CsiTrace { samples }, truth))
}

fn agc_gains(seed: u64, agc: Option<AgcWalk>, n: usize, n_p: usize) -> Vec<f64> {
    let Some(agc) = agc else {
        return vec![1.0; n];
    };
    let mut rng = stream_rng(seed, STREAM_AGC, 0);
    let step = Normal::new(0.0, agc.log_step_std.max(0.0)).unwrap();
    let mut gain = agc.initial_gain;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 && k % n_p == 0 {
            gain *= step.sample(&mut rng).exp();
        }
        out.push(gain);
    }
    out
}

fn visibility(seed: u64, dropout: Option<DropoutSpec>, n: usize) -> Vec<bool> {
    let Some(d) = dropout else {
        return vec![true; n];
    };
    let mut rng = stream_rng(seed, STREAM_DROPOUT, 0);
    let mut out = Vec::with_capacity(n);
    let mut vis = true;
    for k in 0..n {
        if k % d.block_len == 0 {
            vis = !rng.random_bool(d.probability);
        }
        out.push(vis);
    }
    out
}

/// Ready-made scenes around the default deployment: transmitter 2.35 m
/// from antenna 1 at -70 degrees, a few weak static reflectors, person
/// reflectivity 0.2.
pub mod scenarios {
    use super::*;

    pub const TX_DISTANCE: f64 = 2.35;
    pub const TX_AOA_DEG: f64 = -70.0;
    pub const PERSON_REFLECTIVITY: f64 = 0.2;

    pub fn office(duration_s: f64, seed: u64) -> SceneSpec {
        let mut s = SceneSpec::new(TX_DISTANCE, TX_AOA_DEG.to_radians(), duration_s);
        s.seed = seed;
        s.static_reflectors = vec![
            StaticReflector {
                position: Position::new(3.5, 5.0),
                amplitude: 0.05,
            },
            StaticReflector {
                position: Position::new(-3.0, 4.5),
                amplitude: 0.04,
            },
            StaticReflector {
                position: Position::new(0.5, 7.0),
                amplitude: 0.03,
            },
        ];
        s.impairments = ImpairmentSpec::clock_offsets()
            .with_snr(30.0)
            .with_agc(AgcWalk {
                initial_gain: 1.0,
                log_step_std: 0.05,
            });
        s
    }

    pub fn with_person(mut scene: SceneSpec, trajectory: Trajectory) -> SceneSpec {
        scene.person = Some(PersonSpec {
            trajectory,
            reflectivity: PERSON_REFLECTIVITY,
            dropout: None,
        });
        scene
    }

    pub fn ellipse_path() -> Trajectory {
        Trajectory::ellipse(Position::new(0.6, 3.2), 1.3, 0.9, 1.0)
    }

    pub fn linear_path() -> Trajectory {
        Trajectory::line(Position::new(-0.8, 2.0), Position::new(1.8, 4.2), 1.0)
    }

    pub fn rectangle_path() -> Trajectory {
        Trajectory::rectangle(Position::new(-0.6, 2.2), 2.2, 1.8, 1.0)
    }

    /// The three walking patterns used for end-to-end evaluation.
    pub fn suite() -> Vec<(&'static str, Trajectory)> {
        vec![
            ("ellipse", ellipse_path()),
            ("linear", linear_path()),
            ("rectangle", rectangle_path()),
        ]
    }

    pub fn walking(trajectory: Trajectory, duration_s: f64, seed: u64) -> SceneSpec {
        with_person(office(duration_s, seed), trajectory)
    }

    /// Transmitter on the array line beyond antenna 1 (`left`) or beyond
    /// antenna 3, in a reflector-free room.
    pub fn calibration(left: bool, hardware: HardwareSpec, snr_db: Option<f64>, duration_s: f64, seed: u64) -> SceneSpec {
        let aoa = if left { 90f64 } else { -90f64 };
        let mut s = SceneSpec::new(2.0, aoa.to_radians(), duration_s);
        if !left {
            // measure from antenna 3 so both sides sit 2 m from the array end
            let span = hardware.spacing_12 + hardware.spacing_23;
            s.tx_position = Position::new(-(2.0 + span), 0.0);
        }
        s.hardware = hardware;
        s.seed = seed;
        s.impairments = ImpairmentSpec {
            noise_snr_db: snr_db,
            ..ImpairmentSpec::clock_offsets()
        };
        s
    }
}
