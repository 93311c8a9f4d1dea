use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dfs_track::calib::{calibrate_with, CalibOptions, CalibResult, DEFAULT_REPETITIONS};
use dfs_track::eval::evaluate;
use dfs_track::io::{self, BodyFormat, DetectRow, TraceReader, TrajectoryRow};
use dfs_track::par::Parallelism;
use dfs_track::synth::{generate_trace, scenarios, HardwareSpec, SceneSpec};
use dfs_track::tracker::{detect_trace, track_trace, StreamTracker};
use dfs_track::{Error, Result, SystemConfig};

/// Passive single-person tracking from three-antenna WiFi CSI.
#[derive(Parser)]
#[command(name = "dfs-track", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic CSI trace and its ground truth.
    Simulate(SimulateArgs),
    /// Estimate antenna spacings and hardware phases from two static traces.
    Calibrate(CalibrateArgs),
    /// Write the motion confidence of every joint window.
    Detect(DetectArgs),
    /// Track the moving person and write one row per joint window.
    Track(TrackArgs),
    /// Compare a trajectory with ground truth.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Static office, nobody moving.
    Office,
    Ellipse,
    Linear,
    Rectangle,
    /// Calibration capture, transmitter beyond antenna 1.
    CalibLeft,
    /// Calibration capture, transmitter beyond antenna 3.
    CalibRight,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scene: Option<PathBuf>,
    /// Built-in scene instead of a scene file.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Duration of a preset scene, s.
    #[arg(long, default_value_t = 12.0)]
    duration: f64,
    /// Noise level override, dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// System configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output trace.
    #[arg(long)]
    trace: PathBuf,
    /// Output ground truth (CSV).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write a packed binary body instead of text.
    #[arg(long)]
    binary: bool,
    /// Also save the resolved scene (TOML).
    #[arg(long)]
    save_scene: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Overrides the configuration stored in the left trace.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sub-windows used per side.
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    repetitions: usize,
    /// Expected antenna spacing, m (default: half a wavelength).
    #[arg(long)]
    nominal_spacing: Option<f64>,
    /// Output calibration file (TOML).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Calibration file from `calibrate`.
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Read the trace incrementally and record per-window latency.
    #[arg(long)]
    stream: bool,
    /// Process sub-windows on one thread (batch mode).
    #[arg(long)]
    sequential: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Also write the report (JSON).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn load_config(path: Option<&Path>, fallback: SystemConfig) -> Result<SystemConfig> {
    match path {
        Some(p) => SystemConfig::load(p),
        None => Ok(fallback),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::from(e).at(path))
}

fn mode(sequential: bool) -> Parallelism {
    if sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    }
}

fn preset_scene(preset: Preset, duration: f64, seed: u64) -> SceneSpec {
    match preset {
        Preset::Office => scenarios::office(duration, seed),
        Preset::Ellipse => scenarios::walking(scenarios::ellipse_path(), duration, seed),
        Preset::Linear => scenarios::walking(scenarios::linear_path(), duration, seed),
        Preset::Rectangle => scenarios::walking(scenarios::rectangle_path(), duration, seed),
        Preset::CalibLeft => scenarios::calibration(true, HardwareSpec::default(), Some(30.0), duration, seed),
        Preset::CalibRight => scenarios::calibration(false, HardwareSpec::default(), Some(30.0), duration, seed),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut scene = match (&a.scene, a.preset) {
        (Some(path), _) => {
            let text = read_text(path)?;
            SceneSpec::from_toml_str(&text).map_err(|e| match e {
                Error::Format { message, .. } => Error::Format {
                    what: "scene file",
                    message: format!("{}: {message}", path.display()),
                },
                e => e,
            })?
        }
        (None, Some(p)) => preset_scene(p, a.duration, 0),
        (None, None) => unreachable!("clap requires a scene or a preset"),
    };
    if let Some(seed) = a.seed {
        scene.seed = seed;
    }
    if let Some(snr) = a.snr {
        scene.impairments.noise_snr_db = Some(snr);
    }
    let config = load_config(a.config.as_deref(), SystemConfig::default())?;
    let (trace, truth) = generate_trace(&scene, &config)?;
    let body = if a.binary { BodyFormat::Binary } else { BodyFormat::Text };
    io::save_trace(&a.trace, &trace, &config, body)?;
    if let Some(path) = &a.truth {
        io::save_ground_truth(path, &truth)?;
    }
    if let Some(path) = &a.save_scene {
        write_text(path, &scene.to_toml_string())?;
    }
    eprintln!("wrote {} samples to {}", trace.len(), a.trace.display());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let (header, left) = io::load_trace(&a.left)?;
    let (_, right) = io::load_trace(&a.right)?;
    let config = load_config(a.config.as_deref(), header.config)?;
    let options = CalibOptions {
        repetitions: a.repetitions,
        nominal_spacing: a.nominal_spacing,
        ..CalibOptions::default()
    };
    let result = calibrate_with(&left, &right, &config, &options)?;
    write_text(&a.output, &result.to_toml_string())?;
    eprintln!(
        "spacing {:.3} / {:.3} cm, phase {:.3} / {:.3} rad",
        100.0 * result.spacing_12,
        100.0 * result.spacing_23,
        result.phase_12,
        result.phase_23
    );
    Ok(())
}

fn detect(a: DetectArgs) -> Result<()> {
    let (header, trace) = io::load_trace(&a.trace)?;
    let config = load_config(a.config.as_deref(), header.config)?;
    let rows: Vec<DetectRow> = detect_trace(&trace, &config, mode(a.sequential))?
        .into_iter()
        .map(|(timestamp, p)| DetectRow {
            timestamp,
            p,
            motion: p >= config.motion_threshold,
        })
        .collect();
    io::save_detect(&a.output, &rows)?;
    let moving = rows.iter().filter(|r| r.motion).count();
    eprintln!("{} joint windows, {moving} with motion", rows.len());
    Ok(())
}

fn track_stream(path: &Path, config: Option<&Path>, calib: Option<&CalibResult>) -> Result<Vec<TrajectoryRow>> {
    let file = File::open(path).map_err(|e| Error::from(e).at(path))?;
    let reader = TraceReader::new(BufReader::new(file)).map_err(|e| e.at(path))?;
    let config = load_config(config, reader.header().config.clone())?;
    let mut tracker = StreamTracker::new(&config, calib)?;

    let (tx, rx) = mpsc::sync_channel(4 * config.n_p);
    let producer = thread::spawn(move || {
        for sample in reader {
            let failed = sample.is_err();
            if tx.send(sample).is_err() || failed {
                break;
            }
        }
    });

    let mut rows = Vec::new();
    let mut received = 0;
    for sample in rx {
        let sample = sample?;
        received += 1;
        let start = Instant::now();
        if let Some(out) = tracker.push_sample(sample)? {
            let ms = start.elapsed().as_secs_f64() * 1e3;
            rows.push(TrajectoryRow::from_output(&out, Some(ms)));
        }
    }
    producer.join().expect("trace reader thread panicked");
    let required = config.m * config.n_p;
    if received < required {
        return Err(Error::TraceTooShort { required, actual: received });
    }
    Ok(rows)
}

fn track(a: TrackArgs) -> Result<()> {
    let calib = match &a.calib {
        Some(p) => Some(CalibResult::from_toml_str(&read_text(p)?)?),
        None => None,
    };
    let rows = if a.stream {
        track_stream(&a.trace, a.config.as_deref(), calib.as_ref())?
    } else {
        let (header, trace) = io::load_trace(&a.trace)?;
        let config = load_config(a.config.as_deref(), header.config)?;
        let out = if a.sequential {
            dfs_track::tracker::track_trace_with(&trace, calib.as_ref(), &config, Parallelism::Sequential)?
        } else {
            track_trace(&trace, calib.as_ref(), &config)?
        };
        out.iter().map(|o| TrajectoryRow::from_output(o, None)).collect()
    };
    io::save_trajectory(&a.output, &rows)?;
    let located = rows.iter().filter(|r| r.x.is_some()).count();
    eprintln!("{} joint windows, {located} located", rows.len());
    if a.stream && !rows.is_empty() {
        let mean = rows.iter().filter_map(|r| r.latency_ms).sum::<f64>() / rows.len() as f64;
        eprintln!("mean processing time per joint window: {mean:.2} ms");
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let rows = io::load_trajectory(&a.trajectory)?;
    let truth = io::load_ground_truth(&a.truth)?;
    let report = evaluate(&rows, &truth)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(path) = &a.output {
        write_text(path, &(json + "\n"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Detect(a) => detect(a),
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
