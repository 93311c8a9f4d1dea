use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;

use dfs_track::calib::estimate_spacing;
use dfs_track::config::subcarrier_frequencies;
use dfs_track::dfs::{cross_correlate, process_window, Denoiser};
use dfs_track::dsp::{fir_filter, least_squares_cos_fit, root_music, savitzky_golay, FilterSpec};
use dfs_track::dyncomp::self_correlate;
use dfs_track::eval::percentile;
use dfs_track::geometry::{forward_geometry, localize};
use dfs_track::io::{read_trace, write_trace, BodyFormat};
use dfs_track::synth::{generate_trace, scenarios, SceneSpec};
use dfs_track::tracker::{coherence, estimate_aoa, JointWindow, KalmanParams, SubWindow, SubWindowProcessor, TrackState};
use dfs_track::{CsiSample, CsiTrace, CsiWindow, Position, SystemConfig, NUM_ANTENNAS, NUM_SUBCARRIERS};

fn walk() -> &'static (CsiTrace, Vec<SubWindow>) {
    static WALK: OnceLock<(CsiTrace, Vec<SubWindow>)> = OnceLock::new();
    WALK.get_or_init(|| {
        let cfg = SystemConfig::default();
        let trace = generate_trace(&scenarios::walking(scenarios::ellipse_path(), 2.0, 11), &cfg).unwrap().0;
        let p = SubWindowProcessor::new(&cfg).unwrap();
        let subs = trace.windows(cfg.n_p).map(|w| p.process(&w).unwrap()).collect();
        (trace, subs)
    })
}

fn window(index: usize) -> CsiWindow<'static> {
    walk().0.window(100, index).unwrap()
}

fn complex_series(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), len)
}

fn close(a: Complex64, b: Complex64, scale: f64) -> bool {
    (a - b).norm() <= 1e-9 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subcarriers_increase(f_c in 2.0e9f64..6.0e9) {
        let cfg = SystemConfig { f_c, ..SystemConfig::default() };
        let f = subcarrier_frequencies(&cfg);
        prop_assert_eq!(f.clone(), subcarrier_frequencies(&cfg));
        prop_assert!(f.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn config_round_trips(f_s in 200.0f64..5000.0, m in 0usize..10, step in 0.001f64..0.5, thr in 0.01f64..0.99) {
        let cfg = SystemConfig {
            f_s,
            m: 2 * m + 1,
            dist_grid_step: step,
            motion_threshold: thr,
            ..SystemConfig::default()
        };
        prop_assert_eq!(SystemConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn cross_correlation_cancels_common_phase(
        values in complex_series(5 * NUM_ANTENNAS * NUM_SUBCARRIERS),
        fo in prop::collection::vec(-PI..PI, 5),
        to in prop::collection::vec(-1e-6f64..1e-6, 5),
    ) {
        let cfg = SystemConfig::default();
        let make = |impaired: bool| -> Vec<CsiSample> {
            (0..5).map(|k| {
                let mut s = CsiSample::zeros(k as f64 * 1e-3);
                for i in 0..NUM_ANTENNAS {
                    for j in 0..NUM_SUBCARRIERS {
                        let v = values[(k * NUM_ANTENNAS + i) * NUM_SUBCARRIERS + j];
                        let phase = if impaired { fo[k] + 2.0 * PI * cfg.subcarrier_offsets[j] * to[k] } else { 0.0 };
                        s.values[i][j] = v * Complex64::from_polar(1.0, phase);
                    }
                }
                s
            }).collect()
        };
        let (clean, dirty) = (make(false), make(true));
        let a = cross_correlate(&CsiWindow { samples: &clean, window_index: 0 });
        let b = cross_correlate(&CsiWindow { samples: &dirty, window_index: 0 });
        for (pa, pb) in a.pairs().iter().zip(b.pairs()) {
            for (ra, rb) in pa.iter().zip(pb.iter()) {
                for (x, y) in ra.iter().zip(rb) {
                    prop_assert!(close(*x, *y, x.norm()));
                }
            }
        }
        let (pa, pb) = (self_correlate(&CsiWindow { samples: &clean, window_index: 0 }),
                        self_correlate(&CsiWindow { samples: &dirty, window_index: 0 }));
        for (x, y) in pa.p.iter().flatten().flatten().zip(pb.p.iter().flatten().flatten()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn smoothing_filters_are_linear(u in complex_series(100), v in complex_series(100), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mix: Vec<Complex64> = u.iter().zip(&v).map(|(x, y)| x * a + y * b).collect();
        let spec = FilterSpec::lowpass(60.0, 1000.0, 63);
        let ops: [&dyn Fn(&[Complex64]) -> Vec<Complex64>; 2] = [
            &|s| savitzky_golay(s, 3, 11).unwrap(),
            &|s| fir_filter(s, &spec).unwrap(),
        ];
        for op in ops {
            let (fu, fv, fm) = (op(&u), op(&v), op(&mix));
            for k in 0..100 {
                prop_assert!(close(fm[k], fu[k] * a + fv[k] * b, 10.0));
            }
        }
    }

    #[test]
    fn cos_fit_residual_is_orthogonal(r in prop::collection::vec(-1.0f64..1.0, 100), f_d in 5.0f64..60.0) {
        let fit = least_squares_cos_fit(&r, f_d, 1e-3).unwrap();
        let w = 2.0 * PI * f_d * 1e-3;
        let (mut c, mut s) = (0.0, 0.0);
        for (k, v) in r.iter().enumerate() {
            let e = v - fit.x * (w * k as f64).cos() - fit.y * (w * k as f64).sin();
            c += e * (w * k as f64).cos();
            s += e * (w * k as f64).sin();
        }
        prop_assert!(c.abs() < 1e-9 && s.abs() < 1e-9);
    }

    #[test]
    fn localize_inverts_forward_geometry(r in 0.5f64..12.0, theta in -85.0f64..85.0) {
        let tx = Position::from_polar(2.35, (-70f64).to_radians());
        let p = Position::from_polar(r, theta.to_radians());
        let g = forward_geometry(p, tx);
        if let Ok(q) = localize(g.theta_x, g.d_x, g.theta_s, g.d_s1) {
            prop_assert!(q.distance(&p) < 1e-6, "{:?} -> {:?}", p, q);
        }
    }

    #[test]
    fn kalman_sin_state_stays_in_range(
        steps in prop::collection::vec((prop::option::of(-90.0f64..90.0), prop::option::of(2.5f64..20.0), -60.0f64..60.0), 1..60),
    ) {
        let mut s = TrackState::new(KalmanParams::from_config(&SystemConfig::default()));
        for (a, d, f) in steps {
            let out = s.step(a, d, f);
            if let Some(v) = out.sin_aoa {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
        prop_assert!(s.params.sin_process_var > 0.0 && s.params.dist_process_var > 0.0);
    }

    #[test]
    fn percentiles_are_monotone(v in prop::collection::vec(-10.0f64..10.0, 1..50), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(percentile(&v, lo) <= percentile(&v, hi));
    }

    #[test]
    fn calibration_swap_keeps_spacing(d in 0.021f64..0.035, phase in 0.0f64..(2.0 * PI), noise in prop::collection::vec(-0.05f64..0.05, 10)) {
        let f_c = 5.32e9;
        let t = 2.0 * PI * f_c / dfs_track::SPEED_OF_LIGHT * d;
        let l: Vec<f64> = noise.iter().map(|n| phase + t + n).collect();
        let r: Vec<f64> = noise.iter().map(|n| phase - t - n).collect();
        let a = estimate_spacing(&l, &r, f_c, 0.028).unwrap();
        let b = estimate_spacing(&r, &l, f_c, -0.028).unwrap();
        prop_assert!((a + b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trace_round_trip_is_exact(values in complex_series(3 * NUM_ANTENNAS * NUM_SUBCARRIERS), t0 in -1e3f64..1e3) {
        let samples = (0..3).map(|k| {
            let mut s = CsiSample::zeros(t0 + k as f64 * 1.000_000_1e-3);
            for (r, c) in s.values.iter_mut().flatten().enumerate() {
                *c = values[k * NUM_ANTENNAS * NUM_SUBCARRIERS + r] * 1e-7;
            }
            s
        }).collect();
        let trace = CsiTrace::new(samples).unwrap();
        for body in [BodyFormat::Text, BodyFormat::Binary] {
            let mut buf = Vec::new();
            write_trace(&mut buf, &trace, &SystemConfig::default(), body).unwrap();
            prop_assert_eq!(&read_trace(&buf[..]).unwrap().1, &trace);
        }
    }

    #[test]
    fn doppler_ignores_csi_scaling(mag in 0.01f64..100.0, arg in -PI..PI, index in 0usize..20) {
        let cfg = SystemConfig::default();
        let den = Denoiser::new(&cfg).unwrap();
        let w = window(index);
        let scaled: Vec<CsiSample> = w.samples.iter().map(|s| {
            let mut s = s.clone();
            s.values.iter_mut().flatten().for_each(|c| *c *= Complex64::from_polar(mag, arg));
            s
        }).collect();
        let a = process_window(&w, &den, &cfg).unwrap().estimate.f_d;
        let b = process_window(&CsiWindow { samples: &scaled, window_index: index }, &den, &cfg).unwrap().estimate.f_d;
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn root_music_ignores_scaling(mag in 0.01f64..100.0, arg in -PI..PI) {
        let cfg = SystemConfig::default();
        let rows = &walk().1[5].dfs.delta_w.rows;
        let scaled: Vec<Vec<Complex64>> = rows.iter().map(|r| r.iter().map(|v| v * Complex64::from_polar(mag, arg)).collect()).collect();
        let a = root_music(rows, cfg.f_s, cfg.eig_threshold_factor).unwrap();
        let b = root_music(&scaled, cfg.f_s, cfg.eig_threshold_factor).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.frequency - y.frequency).abs() < 1e-6);
        }
    }

    #[test]
    fn aoa_ignores_component_scaling(mag in 0.01f64..100.0, arg in -PI..PI, start in 0usize..11) {
        let cfg = SystemConfig::default();
        let subs = &walk().1[start..start + 9];
        let scaled: Vec<SubWindow> = subs.iter().cloned().map(|mut s| {
            s.components.z.iter_mut().flatten().for_each(|z| *z *= Complex64::from_polar(mag, arg));
            s
        }).collect();
        let a = estimate_aoa(&JointWindow::new(subs).unwrap(), &cfg, None).unwrap();
        let b = estimate_aoa(&JointWindow::new(&scaled).unwrap(), &cfg, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn motion_confidence_ignores_per_subcarrier_phase(phases in prop::collection::vec(-PI..PI, NUM_SUBCARRIERS), index in 0usize..20) {
        let sub = &walk().1[index];
        let mut dw = sub.dfs.delta_w.clone();
        for (row, p) in dw.rows.iter_mut().zip(&phases) {
            row.iter_mut().for_each(|v| *v *= Complex64::from_polar(1.0, *p));
        }
        let a = coherence(&sub.dfs.delta_w, sub.f_d(), 1e-3);
        let b = coherence(&dw, sub.f_d(), 1e-3);
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn same_seed_same_trace() {
    let cfg = SystemConfig::default();
    let scene = scenarios::walking(scenarios::linear_path(), 0.3, 99);
    let a = generate_trace(&scene, &cfg).unwrap().0;
    let b = generate_trace(&scene, &cfg).unwrap().0;
    assert_eq!(a, b);
    let other = SceneSpec { seed: 100, ..scene };
    assert_ne!(generate_trace(&other, &cfg).unwrap().0, a);
}
