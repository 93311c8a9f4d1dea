use std::f64::consts::PI;

use dfs_track::config::{subcarrier_frequencies, SystemConfig};
use dfs_track::dfs::{self, Denoiser};
use dfs_track::dyncomp;
use dfs_track::geometry::Position;
use dfs_track::synth::{self, scenarios, HardwareSpec, ImpairmentSpec, SceneSpec, Trajectory};
use dfs_track::SPEED_OF_LIGHT;

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn injected() -> (HardwareSpec, SystemConfig) {
    let hw = HardwareSpec::with_phase_differences(0.02618, 0.02391, 5.956, 1.418);
    let cfg = SystemConfig {
        spacing_12: hw.spacing_12,
        spacing_23: hw.spacing_23,
        hw_phase_12: 5.956,
        hw_phase_23: 1.418,
        hw_phase_31: (-(5.956 + 1.418f64)).rem_euclid(2.0 * PI),
        ..SystemConfig::default()
    };
    (hw, cfg)
}

fn clean_scene(trajectory: Trajectory, duration_s: f64, seed: u64) -> SceneSpec {
    let mut scene = scenarios::with_person(
        SceneSpec::new(scenarios::TX_DISTANCE, scenarios::TX_AOA_DEG.to_radians(), duration_s),
        trajectory,
    );
    scene.impairments = ImpairmentSpec::clock_offsets();
    scene.hardware = injected().0;
    scene.seed = seed;
    scene
}

/// Walks away from the array along a fixed bearing, so the Doppler is
/// high and nearly constant and the AoA does not change.
fn radial_walk(bearing_deg: f64) -> Trajectory {
    let b = bearing_deg.to_radians();
    let at = |r: f64| Position::new(r * b.sin(), r * b.cos());
    Trajectory::line(at(1.5), at(6.0), 1.2)
}

#[test]
fn noiseless_components_follow_the_array_geometry() {
    let (_, cfg) = injected();
    let freqs = subcarrier_frequencies(&cfg);
    let offsets = cfg.antenna_offsets();
    let den = Denoiser::new(&cfg).unwrap();
    let mut checked = 0;
    for (seed, bearing) in [(1, -20.0), (2, 10.0), (3, 35.0)] {
        let (trace, gt) = synth::generate_trace(&clean_scene(radial_walk(bearing), 3.0, seed), &cfg).unwrap();
        for w in trace.windows(cfg.n_p) {
            let d = dfs::process_window(&w, &den, &cfg).unwrap();
            let split = dyncomp::split_power(&dyncomp::self_correlate(&w));
            let comp = dyncomp::reconstruct_components(&split.v, &split.u, d.estimate.f_d, &d.statics, &cfg, w.window_index);
            assert!(!comp.flagged);

            // components describe the middle of the sub-window
            let k0 = w.window_index * cfg.n_p + cfg.n_p / 2;
            let person = gt.positions[k0];
            let path = |p: f64| gt.tx.distance(&person) + person.distance(&Position::new(-p, 0.0));

            for i in 1..3 {
                let delta = path(offsets[i]) - path(0.0);
                for j in 0..30 {
                    let got = (comp.z[i][j] * comp.z[0][j].conj()).arg();
                    let want = -2.0 * PI * freqs[j] / SPEED_OF_LIGHT * delta;
                    assert!(
                        wrap(got - want).abs() < 0.05,
                        "bearing {bearing} window {} antenna {i} subcarrier {j}: {got} vs {want}",
                        w.window_index
                    );
                }
            }

            let mut phases: Vec<f64> = comp.z[0].iter().map(|z| z.arg()).collect();
            for j in 1..phases.len() {
                phases[j] = phases[j - 1] + wrap(phases[j] - phases[j - 1]);
            }
            let fm = freqs.iter().sum::<f64>() / 30.0;
            let pm = phases.iter().sum::<f64>() / 30.0;
            let num: f64 = freqs.iter().zip(&phases).map(|(f, p)| (f - fm) * (p - pm)).sum();
            let den2: f64 = freqs.iter().map(|f| (f - fm).powi(2)).sum();
            let slope = num / den2;
            let want = -2.0 * PI * gt.d_x[k0] / SPEED_OF_LIGHT;
            assert!(
                ((slope - want) / want).abs() < 0.02,
                "bearing {bearing} window {}: slope {slope} vs {want}",
                w.window_index
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 90);
}

#[test]
fn power_ignores_phase_impairments() {
    let (_, cfg) = injected();
    let mut scene = clean_scene(scenarios::ellipse_path(), 0.3, 3);
    let (on, _) = synth::generate_trace(&scene, &cfg).unwrap();
    scene.impairments = scene.impairments.without_clock_offsets();
    let (off, _) = synth::generate_trace(&scene, &cfg).unwrap();
    for (a, b) in on.windows(cfg.n_p).zip(off.windows(cfg.n_p)) {
        let (pa, pb) = (dyncomp::self_correlate(&a), dyncomp::self_correlate(&b));
        for (x, y) in pa.p.iter().flatten().flatten().zip(pb.p.iter().flatten().flatten()) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}

#[test]
fn noise_lowers_weights() {
    let (_, cfg) = injected();
    let mut scene = clean_scene(scenarios::ellipse_path(), 1.0, 5);
    let den = Denoiser::new(&cfg).unwrap();
    let weights = |scene: &SceneSpec| -> Vec<f64> {
        let (trace, _) = synth::generate_trace(scene, &cfg).unwrap();
        trace
            .windows(cfg.n_p)
            .map(|w| {
                let d = dfs::process_window(&w, &den, &cfg).unwrap();
                dyncomp::separate(&w, &d, &cfg).unwrap().total_weight()
            })
            .collect()
    };
    let clean = weights(&scene);
    scene.impairments = scene.impairments.with_snr(15.0);
    let noisy = weights(&scene);
    let lower = clean.iter().zip(&noisy).filter(|(c, n)| n < c).count();
    assert!(lower * 10 >= clean.len() * 9, "{clean:?} {noisy:?}");
}
