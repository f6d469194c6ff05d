//! Sliding-window embedding of multi-channel feature streams.
//!
//! Windows are flattened channel-major: the first `w` entries of a column are
//! channel 0 over the window, the next `w` are channel 1, and so on. Stacking
//! stride-1 windows side by side gives a block-Hankel matrix where
//! `X[ch·w + s, j+1] == X[ch·w + s + 1, j]`.
//!
//! # Binary layout
//!
//! `TrainingMatrix` files are little-endian:
//!
//! ```text
//! magic  "HKWM"          4 bytes
//! version u32            currently 1
//! rows u64, cols u64
//! w u32, c u32, stride u32
//! c × (len u32, utf-8 channel name)
//! cols × f64             column end times
//! rows·cols × f64        data, column-major
//! ```

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const MATRIX_MAGIC: &[u8; 4] = b"HKWM";
const MATRIX_VERSION: u32 = 1;

/// Column norms below this are treated as zero.
pub const MIN_COLUMN_NORM: f64 = 1e-12;

/// Per-sample feature values stored channel by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub times: Vec<f64>,
    pub channel_names: Vec<String>,
    /// `values[ch][i]` is channel `ch` at sample `i`.
    pub values: Vec<Vec<f64>>,
}

impl FeatureSeries {
    /// Builds a series from per-sample rows.
    pub fn from_rows(times: Vec<f64>, channel_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let c = channel_names.len();
        if rows.len() != times.len() {
            return Err(Error::Shape {
                expected: format!("{} rows", times.len()),
                got: format!("{} rows", rows.len()),
            });
        }
        let mut values = vec![Vec::with_capacity(rows.len()); c];
        for row in rows {
            if row.len() != c {
                return Err(Error::Shape {
                    expected: format!("{c} channels"),
                    got: format!("{} channels", row.len()),
                });
            }
            for (ch, &v) in row.iter().enumerate() {
                values[ch].push(v);
            }
        }
        Ok(Self {
            times,
            channel_names,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }
}

/// One flattened window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub data: Vec<f64>,
    pub t_end: f64,
}

/// Windows stacked as columns, with the metadata needed to rebuild them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    pub x: DMatrix<f64>,
    pub column_times: Vec<f64>,
    pub window: usize,
    pub channels: usize,
    pub stride: usize,
    pub channel_names: Vec<String>,
}

impl TrainingMatrix {
    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn window_at(&self, j: usize) -> FeatureWindow {
        FeatureWindow {
            data: self.x.column(j).iter().copied().collect(),
            t_end: self.column_times[j],
        }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> TrainingMatrix {
        TrainingMatrix {
            x: self.x.select_columns(cols),
            column_times: cols.iter().map(|&j| self.column_times[j]).collect(),
            window: self.window,
            channels: self.channels,
            stride: self.stride,
            channel_names: self.channel_names.clone(),
        }
    }
}

/// Number of windows of width `w` at `stride` over `len` samples.
pub fn window_count(len: usize, w: usize, stride: usize) -> usize {
    if len < w || stride == 0 {
        0
    } else {
        (len - w) / stride + 1
    }
}

/// Embeds the selected channels of `series` as a block-Hankel matrix.
///
/// Column `j` covers samples `[j·stride, j·stride + w)`.
pub fn slide_windows(
    series: &FeatureSeries,
    channels: &[usize],
    w: usize,
    stride: usize,
) -> Result<TrainingMatrix> {
    if w < 2 {
        return Err(Error::Parameter(format!(
            "window width must be at least 2, got {w}"
        )));
    }
    if stride == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    if channels.is_empty() {
        return Err(Error::Parameter("no channels selected".into()));
    }
    if let Some(&bad) = channels.iter().find(|&&c| c >= series.channels()) {
        return Err(Error::Parameter(format!(
            "channel {bad} out of range ({} channels)",
            series.channels()
        )));
    }
    let len = series.len();
    if len < w {
        return Err(Error::InsufficientData { needed: w, got: len });
    }
    let cols = window_count(len, w, stride);
    let c = channels.len();
    let mut x = DMatrix::zeros(w * c, cols);
    let mut column_times = Vec::with_capacity(cols);
    for j in 0..cols {
        let start = j * stride;
        for (k, &ch) in channels.iter().enumerate() {
            let src = &series.values[ch][start..start + w];
            for (s, &v) in src.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("channel {ch} sample {}", start + s)));
                }
                x[(k * w + s, j)] = v;
            }
        }
        column_times.push(series.times[start + w - 1]);
    }
    Ok(TrainingMatrix {
        x,
        column_times,
        window: w,
        channels: c,
        stride,
        channel_names: channels
            .iter()
            .map(|&ch| series.channel_names[ch].clone())
            .collect(),
    })
}

/// Scales every column to unit Euclidean norm; returns the original norms.
pub fn normalize_columns(m: &TrainingMatrix) -> Result<(TrainingMatrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut scales = Vec::with_capacity(m.cols());
    for (j, mut col) in out.x.column_iter_mut().enumerate() {
        let n = col.norm();
        if !(n.is_finite() && n >= MIN_COLUMN_NORM) {
            return Err(Error::DegenerateColumn { index: j });
        }
        col /= n;
        scales.push(n);
    }
    Ok((out, scales))
}

/// Normalizes a single window in place; zero windows are left alone.
pub fn normalize_window(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n >= MIN_COLUMN_NORM {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Per-channel standardization constants fit on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelScaler {
    /// Pools every series; channels with no spread get unit scale.
    pub fn fit(series: &[&FeatureSeries]) -> Result<Self> {
        let c = series.first().map_or(0, |s| s.channels());
        if c == 0 || series.iter().any(|s| s.channels() != c) {
            return Err(Error::Parameter(
                "scaler needs series with a common channel count".into(),
            ));
        }
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        for ch in 0..c {
            let n: usize = series.iter().map(|s| s.values[ch].len()).sum();
            if n == 0 {
                return Err(Error::InsufficientData { needed: 1, got: 0 });
            }
            let m = series.iter().flat_map(|s| &s.values[ch]).sum::<f64>() / n as f64;
            let var = series
                .iter()
                .flat_map(|s| &s.values[ch])
                .map(|v| (v - m) * (v - m))
                .sum::<f64>()
                / n as f64;
            mean[ch] = m;
            std[ch] = if var.sqrt() > MIN_COLUMN_NORM {
                var.sqrt()
            } else {
                1.0
            };
        }
        Ok(Self { mean, std })
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    #[inline]
    pub fn apply(&self, ch: usize, v: f64) -> f64 {
        (v - self.mean[ch]) / self.std[ch]
    }

    pub fn transform(&self, series: &FeatureSeries) -> Result<FeatureSeries> {
        if series.channels() != self.mean.len() {
            return Err(Error::Shape {
                expected: format!("{} channels", self.mean.len()),
                got: format!("{} channels", series.channels()),
            });
        }
        let mut out = series.clone();
        for (ch, vals) in out.values.iter_mut().enumerate() {
            for v in vals.iter_mut() {
                *v = self.apply(ch, *v);
            }
        }
        Ok(out)
    }
}

pub fn encode_training_matrix(m: &TrainingMatrix) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MATRIX_MAGIC);
    w.u32(MATRIX_VERSION);
    w.u64(m.x.nrows() as u64);
    w.u64(m.x.ncols() as u64);
    w.u32(m.window as u32);
    w.u32(m.channels as u32);
    w.u32(m.stride as u32);
    for name in &m.channel_names {
        w.str(name);
    }
    w.f64s(&m.column_times);
    w.f64s(m.x.as_slice());
    w.buf
}

pub fn decode_training_matrix(bytes: &[u8]) -> Result<TrainingMatrix> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MATRIX_MAGIC)?;
    let version = r.u32()?;
    if version != MATRIX_VERSION {
        return Err(Error::Format {
            row: 0,
            message: format!("unsupported matrix version {version}"),
        });
    }
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let window = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let stride = r.u32()? as usize;
    if rows != window * channels {
        return Err(Error::Format {
            row: 0,
            message: format!("{rows} rows but w×c = {}", window * channels),
        });
    }
    let channel_names = (0..channels).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let column_times = r.f64s(cols)?;
    let data = r.f64s(rows * cols)?;
    r.finish()?;
    Ok(TrainingMatrix {
        x: DMatrix::from_vec(rows, cols, data),
        column_times,
        window,
        channels,
        stride,
        channel_names,
    })
}

pub fn write_training_matrix(path: impl AsRef<Path>, m: &TrainingMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_training_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn read_training_matrix(path: impl AsRef<Path>) -> Result<TrainingMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_training_matrix(&bytes)
}
