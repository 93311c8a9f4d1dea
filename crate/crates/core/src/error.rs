use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error("trace too short: need at least {required} samples, got {actual}")]
    TraceTooShort { required: usize, actual: usize },

    #[error("person leaves the valid AoA half-plane at sample {sample} (t = {time:.4} s)")]
    OutsideHalfPlane { sample: usize, time: f64 },

    #[error("degenerate least-squares fit: Doppler {f_d:.3} Hz leaves the cosine/sine columns collinear")]
    DegenerateFit { f_d: f64 },

    #[error("static cross-correlation term of pair {pair} at subcarrier {subcarrier} is below the resolvable floor")]
    DegenerateStatic { pair: &'static str, subcarrier: usize },

    #[error("person lies on the TX-RX baseline extension; position is not resolvable")]
    GeometricDegeneracy,

    #[error("no reliable dynamic component in the joint window")]
    NoEstimate,

    #[error("motion detected in calibration trace ({side}) at joint window {window} (confidence {confidence:.3})")]
    CalibrationContaminated {
        side: &'static str,
        window: usize,
        confidence: f64,
    },

    #[error("calibration repetitions are inconsistent (phasor coherence {coherence:.3} < 0.5)")]
    UnreliableMeasurement { coherence: f64 },

    #[error("calibrated spacing {spacing_m:.5} m is outside +/-25% of nominal {nominal_m:.5} m")]
    SpacingOutOfRange { spacing_m: f64, nominal_m: f64 },

    #[error("trajectory and ground truth time ranges do not overlap")]
    DisjointTimeRanges,
}

impl Error {
    /// Process exit code for the command-line front end: 2 for malformed or
    /// unreadable input, 3 for inputs that are well-formed but violate a
    /// precondition of the algorithm.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::Format { .. }
            | Error::Io(_)
            | Error::File { .. } => 2,
            _ => 3,
        }
    }
}

impl Error {
    /// Attaches `path` to a bare I/O error.
    pub fn at(self, path: &std::path::Path) -> Self {
        match self {
            Error::Io(source) => Error::File {
                path: path.to_path_buf(),
                source,
            },
            e => e,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Format {
            what: "structured text",
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}
