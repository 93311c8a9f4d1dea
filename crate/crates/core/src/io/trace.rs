//! CSI trace files.
//!
//! ```text
//! # dfs-track trace
//! # version: 1
//! # body: text
//! # samples: 2
//! # config: {"f_c":5320000000.0, ...}
//! # end
//! timestamp,antenna,subcarrier,re,im
//! 0.0000000000000000e0,1,1,1.0000000000000000e0,-2.5000000000000000e-1
//! ...
//! ```
//!
//! A text body has one row per coefficient, sorted by timestamp, antenna
//! and subcarrier, rendered with 17 significant digits so that a round trip
//! is exact. A binary body stores, per sample, the timestamp followed by
//! the 90 coefficients as little-endian `f64` pairs in the same order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::types::{CsiSample, CsiTrace, NUM_ANTENNAS, NUM_SUBCARRIERS};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "# dfs-track trace";
const COLUMNS: &str = "timestamp,antenna,subcarrier,re,im";
const ROWS_PER_SAMPLE: usize = NUM_ANTENNAS * NUM_SUBCARRIERS;
const BINARY_SAMPLE_BYTES: usize = 8 * (1 + 2 * ROWS_PER_SAMPLE);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BodyFormat {
    #[default]
    Text,
    Binary,
}

impl BodyFormat {
    fn name(self) -> &'static str {
        match self {
            BodyFormat::Text => "text",
            BodyFormat::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub version: u32,
    pub body: BodyFormat,
    pub samples: usize,
    pub config: SystemConfig,
}

pub fn write_trace<W: Write>(out: W, trace: &CsiTrace, config: &SystemConfig, body: BodyFormat) -> Result<()> {
    let mut w = BufWriter::new(out);
    let snapshot = serde_json::to_string(config).map_err(|e| Error::Format {
        what: "trace header",
        message: e.to_string(),
    })?;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "# version: {FORMAT_VERSION}")?;
    writeln!(w, "# body: {}", body.name())?;
    writeln!(w, "# samples: {}", trace.len())?;
    writeln!(w, "# config: {snapshot}")?;
    writeln!(w, "# end")?;
    match body {
        BodyFormat::Text => {
            writeln!(w, "{COLUMNS}")?;
            for s in &trace.samples {
                for (i, row) in s.values.iter().enumerate() {
                    for (j, c) in row.iter().enumerate() {
                        writeln!(w, "{:.16e},{},{},{:.16e},{:.16e}", s.timestamp, i + 1, j + 1, c.re, c.im)?;
                    }
                }
            }
        }
        BodyFormat::Binary => {
            for s in &trace.samples {
                w.write_all(&s.timestamp.to_le_bytes())?;
                for c in s.values.iter().flatten() {
                    w.write_all(&c.re.to_le_bytes())?;
                    w.write_all(&c.im.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(path: &Path, trace: &CsiTrace, config: &SystemConfig, body: BodyFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::from(e).at(path))?;
    write_trace(file, trace, config, body).map_err(|e| e.at(path))
}

/// Reads a whole trace.
pub fn read_trace<R: Read>(input: R) -> Result<(TraceHeader, CsiTrace)> {
    let reader = TraceReader::new(BufReader::new(input))?;
    let header = reader.header().clone();
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, CsiTrace { samples }))
}

pub fn load_trace(path: &Path) -> Result<(TraceHeader, CsiTrace)> {
    let file = File::open(path).map_err(|e| Error::from(e).at(path))?;
    read_trace(file).map_err(|e| e.at(path))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn next_line<R: BufRead>(input: &mut R, line: &mut String, number: &mut usize) -> Result<usize> {
    line.clear();
    if input.read_line(line)? == 0 {
        return Err(parse_err(*number + 1, "unexpected end of file in header"));
    }
    *number += 1;
    Ok(*number)
}

fn read_header<R: BufRead>(input: &mut R) -> Result<(TraceHeader, usize)> {
    let mut line = String::new();
    let mut number = 0;
    let n = next_line(input, &mut line, &mut number)?;
    if line.trim_end() != MAGIC {
        return Err(parse_err(n, "not a dfs-track trace file"));
    }
    let (mut version, mut body, mut samples, mut config) = (None, None, None, None);
    loop {
        let n = next_line(input, &mut line, &mut number)?;
        let text = line.trim_end();
        if text == "# end" {
            break;
        }
        let Some((key, value)) = text.strip_prefix("# ").and_then(|t| t.split_once(": ")) else {
            return Err(parse_err(n, format!("expected `# key: value`, got `{text}`")));
        };
        match key {
            "version" => {
                let v: u32 = value.parse().map_err(|_| parse_err(n, "version is not an integer"))?;
                if v != FORMAT_VERSION {
                    return Err(parse_err(n, format!("unsupported format version {v}")));
                }
                version = Some(v);
            }
            "body" => {
                body = Some(match value {
                    "text" => BodyFormat::Text,
                    "binary" => BodyFormat::Binary,
                    other => return Err(parse_err(n, format!("unknown body format `{other}`"))),
                })
            }
            "samples" => samples = Some(value.parse().map_err(|_| parse_err(n, "sample count is not an integer"))?),
            "config" => {
                let cfg: SystemConfig =
                    serde_json::from_str(value).map_err(|e| parse_err(n, format!("config snapshot: {e}")))?;
                cfg.validate().map_err(|e| parse_err(n, e.to_string()))?;
                config = Some(cfg);
            }
            other => return Err(parse_err(n, format!("unknown header key `{other}`"))),
        }
    }
    let missing = |k: &str| parse_err(number, format!("header lacks `{k}`"));
    let header = TraceHeader {
        version: version.ok_or_else(|| missing("version"))?,
        body: body.ok_or_else(|| missing("body"))?,
        samples: samples.ok_or_else(|| missing("samples"))?,
        config: config.ok_or_else(|| missing("config"))?,
    };
    if header.body == BodyFormat::Text {
        let n = next_line(input, &mut line, &mut number)?;
        if line.trim_end() != COLUMNS {
            return Err(parse_err(n, format!("expected column line `{COLUMNS}`")));
        }
    }
    Ok((header, number))
}

/// Incremental reader yielding one [`CsiSample`] at a time.
pub struct TraceReader<R: BufRead> {
    input: R,
    header: TraceHeader,
    line: usize,
    read: usize,
    last_timestamp: f64,
    buf: String,
    failed: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let (header, line) = read_header(&mut input)?;
        Ok(Self {
            input,
            header,
            line,
            read: 0,
            last_timestamp: f64::NEG_INFINITY,
            buf: String::new(),
            failed: false,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    fn text_sample(&mut self) -> Result<CsiSample> {
        let mut sample = CsiSample::zeros(0.0);
        for r in 0..ROWS_PER_SAMPLE {
            self.buf.clear();
            if self.input.read_line(&mut self.buf)? == 0 {
                return Err(parse_err(
                    self.line + 1,
                    format!("sample {} ends after {r} of {ROWS_PER_SAMPLE} rows", self.read),
                ));
            }
            self.line += 1;
            let n = self.line;
            let fields: Vec<&str> = self.buf.trim_end().split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(n, format!("expected 5 fields, got {}", fields.len())));
            }
            let num = |k: usize, what: &str| -> Result<f64> {
                fields[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(n, format!("{what} `{}` is not a number", fields[k])))
            };
            let idx = |k: usize, what: &str| -> Result<usize> {
                fields[k]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(n, format!("{what} `{}` is not an index", fields[k])))
            };
            let t = num(0, "timestamp")?;
            let (i, j) = (idx(1, "antenna")?, idx(2, "subcarrier")?);
            let (want_i, want_j) = (r / NUM_SUBCARRIERS + 1, r % NUM_SUBCARRIERS + 1);
            if (i, j) != (want_i, want_j) {
                return Err(parse_err(
                    n,
                    format!("expected antenna {want_i} subcarrier {want_j}, got antenna {i} subcarrier {j}"),
                ));
            }
            if r == 0 {
                sample.timestamp = t;
            } else if t != sample.timestamp {
                return Err(parse_err(n, "timestamp changes inside a 3x30 block"));
            }
            sample.values[i - 1][j - 1] = Complex64::new(num(3, "real part")?, num(4, "imaginary part")?);
        }
        Ok(sample)
    }

    fn binary_sample(&mut self) -> Result<CsiSample> {
        let mut bytes = [0u8; BINARY_SAMPLE_BYTES];
        self.input.read_exact(&mut bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format {
                what: "binary trace body",
                message: format!("truncated at sample {}", self.read),
            },
            _ => e.into(),
        })?;
        let f = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8 bytes"));
        let mut sample = CsiSample::zeros(f(0));
        for (r, c) in sample.values.iter_mut().flatten().enumerate() {
            *c = Complex64::new(f(1 + 2 * r), f(2 + 2 * r));
        }
        Ok(sample)
    }

    fn next_sample(&mut self) -> Result<Option<CsiSample>> {
        if self.read == self.header.samples {
            let trailing = match self.header.body {
                BodyFormat::Text => {
                    self.buf.clear();
                    loop {
                        if self.input.read_line(&mut self.buf)? == 0 {
                            break false;
                        }
                        if !self.buf.trim().is_empty() {
                            break true;
                        }
                        self.buf.clear();
                    }
                }
                BodyFormat::Binary => !self.input.fill_buf()?.is_empty(),
            };
            if trailing {
                return Err(Error::Format {
                    what: "trace body",
                    message: format!("more data than the {} samples declared", self.header.samples),
                });
            }
            return Ok(None);
        }
        let sample = match self.header.body {
            BodyFormat::Text => self.text_sample()?,
            BodyFormat::Binary => self.binary_sample()?,
        };
        if !sample.is_finite() {
            return Err(parse_err(self.line, format!("sample {} contains a non-finite value", self.read)));
        }
        if sample.timestamp <= self.last_timestamp {
            return Err(parse_err(
                self.line,
                format!("timestamps not strictly increasing at sample {}", self.read),
            ));
        }
        self.last_timestamp = sample.timestamp;
        self.read += 1;
        Ok(Some(sample))
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<CsiSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = self.next_sample().transpose();
        if matches!(out, Some(Err(_))) {
            self.failed = true;
        }
        out
    }
}
