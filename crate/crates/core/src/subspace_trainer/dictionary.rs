//! Class-blocked dictionary and its on-disk form.
//!
//! # Binary layout
//!
//! Little-endian:
//!
//! ```text
//! magic "HKWD"                 4 bytes
//! version u32                  currently 1
//! rows u64, cols u64
//! w u32, fs f64
//! c u32, c × (len u32, utf-8 channel name)
//! k u32, k × (len u32, utf-8 class name)
//! k × (start u64, len u64)     block table, class order
//! c × f64 mean, c × f64 std    standardization constants
//! rows·cols × f64              columns, column-major
//! ```

use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::hankel_embedding::ChannelScaler;

const DICT_MAGIC: &[u8; 4] = b"HKWD";
const DICT_VERSION: u32 = 1;
const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDictionary {
    pub a: DMatrix<f64>,
    /// Column range of each class; index is the class id.
    pub blocks: Vec<Range<usize>>,
    pub class_names: Vec<String>,
    pub channel_names: Vec<String>,
    pub window: usize,
    pub fs: f64,
    pub scaler: ChannelScaler,
}

impl LabeledDictionary {
    /// Assembles a dictionary from per-class column sets.
    pub fn from_classes(
        columns: Vec<DMatrix<f64>>,
        class_names: Vec<String>,
        channel_names: Vec<String>,
        window: usize,
        fs: f64,
        scaler: ChannelScaler,
    ) -> Result<Self> {
        let rows = window * channel_names.len();
        let total: usize = columns.iter().map(|c| c.ncols()).sum();
        let mut a = DMatrix::zeros(rows, total);
        let mut blocks = Vec::with_capacity(columns.len());
        let mut start = 0;
        for block in &columns {
            if block.nrows() != rows {
                return Err(Error::Shape {
                    expected: format!("{rows} rows"),
                    got: format!("{} rows", block.nrows()),
                });
            }
            a.columns_mut(start, block.ncols()).copy_from(block);
            blocks.push(start..start + block.ncols());
            start += block.ncols();
        }
        let d = Self {
            a,
            blocks,
            class_names,
            channel_names,
            window,
            fs,
            scaler,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn num_classes(&self) -> usize {
        self.blocks.len()
    }

    pub fn class_of_column(&self, j: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&j))
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.len() != self.class_names.len() {
            return Err(Error::Format {
                row: 0,
                message: format!(
                    "{} blocks for {} class names",
                    self.blocks.len(),
                    self.class_names.len()
                ),
            });
        }
        let mut next = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.start != next || b.is_empty() {
                return Err(Error::EmptyClass {
                    class: self.class_names[i].clone(),
                });
            }
            next = b.end;
        }
        if next != self.a.ncols() {
            return Err(Error::Format {
                row: 0,
                message: "blocks do not cover every column".into(),
            });
        }
        if self.a.nrows() != self.window * self.channel_names.len()
            || self.scaler.mean.len() != self.channel_names.len()
            || self.scaler.std.len() != self.channel_names.len()
        {
            return Err(Error::Shape {
                expected: format!("{} channels of width {}", self.channel_names.len(), self.window),
                got: format!("{} rows", self.a.nrows()),
            });
        }
        for (j, c) in self.a.column_iter().enumerate() {
            if (c.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::DegenerateColumn { index: j });
            }
        }
        Ok(())
    }

    /// SHA-256 over the encoded matrix and block table.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.a.nrows() as u64).to_le_bytes());
        h.update((self.a.ncols() as u64).to_le_bytes());
        for v in self.a.iter() {
            h.update(v.to_le_bytes());
        }
        for b in &self.blocks {
            h.update((b.start as u64).to_le_bytes());
            h.update((b.end as u64).to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(DICT_MAGIC);
        w.u32(DICT_VERSION);
        w.u64(self.a.nrows() as u64);
        w.u64(self.a.ncols() as u64);
        w.u32(self.window as u32);
        w.f64(self.fs);
        w.u32(self.channel_names.len() as u32);
        for c in &self.channel_names {
            w.str(c);
        }
        w.u32(self.class_names.len() as u32);
        for c in &self.class_names {
            w.str(c);
        }
        for b in &self.blocks {
            w.u64(b.start as u64);
            w.u64(b.len() as u64);
        }
        w.f64s(&self.scaler.mean);
        w.f64s(&self.scaler.std);
        w.f64s(self.a.as_slice());
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(DICT_MAGIC)?;
        let version = r.u32()?;
        if version != DICT_VERSION {
            return Err(Error::Format {
                row: 0,
                message: format!("unsupported dictionary version {version}"),
            });
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let window = r.u32()? as usize;
        let fs = r.f64()?;
        let c = r.u32()? as usize;
        let channel_names = (0..c).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let k = r.u32()? as usize;
        let class_names = (0..k).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let mut blocks = Vec::with_capacity(k);
        for _ in 0..k {
            let start = r.u64()? as usize;
            let len = r.u64()? as usize;
            blocks.push(start..start + len);
        }
        let mean = r.f64s(c)?;
        let std = r.f64s(c)?;
        let data = r.f64s(rows * cols)?;
        r.finish()?;
        let d = Self {
            a: DMatrix::from_vec(rows, cols, data),
            blocks,
            class_names,
            channel_names,
            window,
            fs,
            scaler: ChannelScaler { mean, std },
        };
        d.validate()?;
        Ok(d)
    }
}

pub fn write_dictionary(path: impl AsRef<Path>, d: &LabeledDictionary) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, d.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<LabeledDictionary> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    LabeledDictionary::decode(&bytes)
}

/// `dict.bin` → `dict.bin.json`.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    let mut s = path.as_ref().as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar<T: Serialize>(dict_path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = sidecar_path(dict_path);
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_sidecar<T: for<'de> Deserialize<'de>>(dict_path: impl AsRef<Path>) -> Result<T> {
    let path = sidecar_path(dict_path);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
