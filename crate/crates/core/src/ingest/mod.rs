//! Sensor traces: loading, validation and synthetic generation.
//!
//! A trace is a uniformly sampled sequence of six-axis frames. On disk it is
//! a CSV with columns `t, ax, ay, az, gx, gy, gz` (SI units); labeled traces
//! append an integer `label` column. A header line is optional on input and
//! always written on output.

mod synth;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{
    braking_experiment, gesture_class, parse_scenario, random_posture_script, synthesize_braking,
    synthesize_braking_trace, synthesize_posture, synthesize_posture_trace, BrakingState, BrakingSynthParams,
    PostureSynthParams, ScenarioSegment, SynthOutput, BRAKING_CLASS_NAMES, GESTURE_COUNT,
    POSTURE_CHANNEL_NAMES, POSTURE_CLASS_NAMES, POSTURE_COUNT,
};

/// Default per-axis identifiers for an IMU trace.
pub const IMU_CHANNEL_NAMES: [&str; 6] = ["ax", "ay", "az", "gx", "gy", "gz"];

const SPACING_TOLERANCE: f64 = 0.01;

/// One time-stamped six-axis frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds.
    pub t: f64,
    /// Specific force in m/s², device axes.
    pub accel: [f64; 3],
    /// Angular rate in rad/s about the device axes.
    pub gyro: [f64; 3],
}

impl ImuSample {
    pub fn new(t: f64, accel: [f64; 3], gyro: [f64; 3]) -> Self {
        Self { t, accel, gyro }
    }

    /// The six data channels in file order.
    pub fn channels(&self) -> [f64; 6] {
        let [ax, ay, az] = self.accel;
        let [gx, gy, gz] = self.gyro;
        [ax, ay, az, gx, gy, gz]
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite() && self.channels().iter().all(|v| v.is_finite())
    }
}

/// A validated, uniformly sampled sequence of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    samples: Vec<ImuSample>,
    fs: f64,
    channel_names: Vec<String>,
}

impl SignalTrace {
    /// Validates finiteness, strictly increasing time and uniform spacing
    /// (within 1% of `1/fs`).
    pub fn new(samples: Vec<ImuSample>, fs: f64, channel_names: Vec<String>) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Parameter(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if channel_names.len() != 6 {
            return Err(Error::Parameter(format!(
                "expected 6 channel names, got {}",
                channel_names.len()
            )));
        }
        if samples.is_empty() {
            return Err(Error::Format {
                row: 0,
                message: "trace contains no samples".into(),
            });
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Format {
                row: i + 1,
                message: "non-finite value".into(),
            });
        }
        check_spacing(&samples, fs)?;
        Ok(Self {
            samples,
            fs,
            channel_names,
        })
    }

    /// Builds a trace with the default IMU channel names.
    pub fn imu(samples: Vec<ImuSample>, fs: f64) -> Result<Self> {
        Self::new(
            samples,
            fs,
            IMU_CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits at sample `at`, keeping the time stamps. Both halves must be
    /// non-empty.
    pub fn split_at(&self, at: usize) -> Result<(SignalTrace, SignalTrace)> {
        if at == 0 || at >= self.len() {
            return Err(Error::Parameter(format!(
                "split point {at} outside 1..{}",
                self.len()
            )));
        }
        let (a, b) = self.samples.split_at(at);
        Ok((
            SignalTrace {
                samples: a.to_vec(),
                fs: self.fs,
                channel_names: self.channel_names.clone(),
            },
            SignalTrace {
                samples: b.to_vec(),
                fs: self.fs,
                channel_names: self.channel_names.clone(),
            },
        ))
    }
}

/// A trace with one ground-truth class id per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub trace: SignalTrace,
    pub labels: Vec<usize>,
}

impl LabeledTrace {
    pub fn new(trace: SignalTrace, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != trace.len() {
            return Err(Error::Shape {
                expected: format!("{} labels", trace.len()),
                got: format!("{} labels", labels.len()),
            });
        }
        Ok(Self { trace, labels })
    }

    /// One past the largest label present.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

fn check_spacing(samples: &[ImuSample], fs: f64) -> Result<()> {
    let expected = 1.0 / fs;
    let mut worst: Option<(f64, usize)> = None;
    for (i, pair) in samples.windows(2).enumerate() {
        let gap = pair[1].t - pair[0].t;
        let dev = (gap - expected).abs();
        if gap <= 0.0 || dev > SPACING_TOLERANCE * expected {
            let is_worse = worst.is_none_or(|(g, _)| dev > (g - expected).abs());
            if is_worse {
                worst = Some((gap, i + 2));
            }
        }
    }
    match worst {
        None => Ok(()),
        Some((worst_gap, row)) => Err(Error::Timing {
            fs,
            worst_gap,
            expected,
            row,
        }),
    }
}

/// Loads a trace (7 numeric columns); a trailing label column is ignored.
pub fn load_trace(path: impl AsRef<Path>, fs: f64) -> Result<SignalTrace> {
    let (samples, _) = read_rows(path.as_ref(), false)?;
    SignalTrace::imu(samples, fs)
}

/// Loads a labeled trace (7 numeric columns plus an integer label).
pub fn load_labeled_trace(path: impl AsRef<Path>, fs: f64) -> Result<LabeledTrace> {
    let (samples, labels) = read_rows(path.as_ref(), true)?;
    LabeledTrace::new(SignalTrace::imu(samples, fs)?, labels)
}

fn read_rows(path: &Path, labeled: bool) -> Result<(Vec<ImuSample>, Vec<usize>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let ncols = if labeled { 8..=8 } else { 7..=8 };
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Format {
            row,
            message: e.to_string(),
        })?;
        if idx == 0 && looks_like_header(&record) {
            continue;
        }
        if !ncols.contains(&record.len()) {
            return Err(Error::Format {
                row,
                message: format!("expected {} columns, found {}", ncols.start(), record.len()),
            });
        }
        let mut vals = [0.0; 7];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = record[k].parse::<f64>().map_err(|_| Error::Format {
                row,
                message: format!("column {} is not a number: `{}`", k + 1, &record[k]),
            })?;
        }
        if labeled {
            let label = record[7].parse::<usize>().map_err(|_| Error::Format {
                row,
                message: format!("label is not a non-negative integer: `{}`", &record[7]),
            })?;
            labels.push(label);
        }
        samples.push(ImuSample::new(
            vals[0],
            [vals[1], vals[2], vals[3]],
            [vals[4], vals[5], vals[6]],
        ));
    }
    if samples.is_empty() {
        return Err(Error::Format {
            row: 0,
            message: format!("{} contains no samples", path.display()),
        });
    }
    Ok((samples, labels))
}

fn looks_like_header(record: &csv::StringRecord) -> bool {
    record
        .get(0)
        .and_then(|f| f.chars().next())
        .is_some_and(|c| c.is_ascii_alphabetic())
        && record.get(0).is_some_and(|f| f.parse::<f64>().is_err())
}

fn write_rows(path: &Path, trace: &SignalTrace, labels: Option<&[usize]>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(out, "t,{}", trace.channel_names().join(",")).map_err(io)?;
    if labels.is_some() {
        write!(out, ",label").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (i, s) in trace.samples().iter().enumerate() {
        write!(out, "{}", s.t).map_err(io)?;
        for v in s.channels() {
            write!(out, ",{v}").map_err(io)?;
        }
        if let Some(l) = labels {
            write!(out, ",{}", l[i]).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_trace(path: impl AsRef<Path>, trace: &SignalTrace) -> Result<()> {
    write_rows(path.as_ref(), trace, None)
}

pub fn write_labeled_trace(path: impl AsRef<Path>, labeled: &LabeledTrace) -> Result<()> {
    write_rows(path.as_ref(), &labeled.trace, Some(&labeled.labels))
}
