use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::DEFAULT_CRC_LAMBDA;
use crate::error::{Error, Result};
use crate::ingest::{ScenarioSegment, BRAKING_CLASS_NAMES, POSTURE_CLASS_NAMES};
use crate::signal_fusion::{FeatureChannel, FusionConfig, DEFAULT_KI, DEFAULT_KP};
use crate::subspace_trainer::{Assignment, DistillParams, Schedule};

pub const SCHEMA_VERSION: u32 = 1;

/// A training recording and how its clusters map to classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    /// CSV trace, resolved relative to the config file.
    pub trace: String,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub fs: f64,
    pub window: usize,
    /// Column stride used when embedding training traces.
    pub train_stride: usize,
    pub channels: Vec<FeatureChannel>,
    pub kp: f64,
    pub ki: f64,
    pub butterworth_cutoff: f64,
    pub distill: DistillParams,
    pub crc_lambda: f64,
    pub class_names: Vec<String>,
    #[serde(default)]
    pub training: Vec<TrainingSpec>,
    /// Scripts for `simulate`; braking segments.
    #[serde(default)]
    pub scenarios: Vec<Vec<ScenarioSegment>>,
    /// Half-width of the lenient scoring band; `window / 2` when absent.
    #[serde(default)]
    pub eval_boundary: Option<usize>,
}

impl PipelineConfig {
    /// Braking-state detection from tablet IMU data.
    pub fn braking() -> Self {
        let window = 20;
        Self {
            schema_version: SCHEMA_VERSION,
            fs: 20.0,
            window,
            train_stride: 2,
            channels: vec![FeatureChannel::FusedPitch, FeatureChannel::PitchRate],
            kp: DEFAULT_KP,
            ki: DEFAULT_KI,
            butterworth_cutoff: 3.0,
            distill: DistillParams {
                boundary_trim: window / 2 / 2,
                ..DistillParams::default()
            },
            crc_lambda: DEFAULT_CRC_LAMBDA,
            class_names: BRAKING_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            training: Vec::new(),
            scenarios: Vec::new(),
            eval_boundary: None,
        }
    }

    /// Hand postures and gestures from palm-tracking data.
    pub fn posture() -> Self {
        let window = 20;
        Self {
            schema_version: SCHEMA_VERSION,
            fs: 20.0,
            window,
            train_stride: 1,
            channels: (0..6).map(FeatureChannel::Raw).collect(),
            kp: DEFAULT_KP,
            ki: DEFAULT_KI,
            butterworth_cutoff: 3.0,
            distill: DistillParams {
                boundary_trim: window / 2 / 2,
                ..DistillParams::default()
            },
            crc_lambda: DEFAULT_CRC_LAMBDA,
            class_names: POSTURE_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            training: Vec::new(),
            scenarios: Vec::new(),
            eval_boundary: None,
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            fs: self.fs,
            kp: self.kp,
            ki: self.ki,
            butterworth_cutoff: self.butterworth_cutoff,
        }
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.to_string()).collect()
    }

    pub fn boundary(&self) -> usize {
        self.eval_boundary.unwrap_or(self.window / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::Config(format!("fs must be positive, got {}", self.fs)));
        }
        if self.window < 2 || self.train_stride == 0 {
            return Err(Error::Config("window must be >= 2 and train_stride >= 1".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("no feature channels".into()));
        }
        if !(self.crc_lambda.is_finite() && self.crc_lambda >= 0.0) {
            return Err(Error::Config(format!(
                "crc_lambda must be >= 0, got {}",
                self.crc_lambda
            )));
        }
        if self.class_names.is_empty() {
            return Err(Error::Config("no class names".into()));
        }
        self.fusion().gains().validate()?;
        self.distill.osc.validate()?;
        for t in &self.training {
            t.schedule.validate(&self.class_names)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Schedule for a run holding one dominant state and one other state.
pub fn two_state_schedule(major: &str, minor: &str) -> Schedule {
    Schedule {
        k: 2,
        assign: vec![Assignment::Class(major.into()), Assignment::Class(minor.into())],
    }
}

/// Cruise-dominant run with sudden stops; the stop cluster is split again
/// to shed windows that look like gentle braking.
pub fn sudden_run_schedule() -> Schedule {
    Schedule {
        k: 2,
        assign: vec![
            Assignment::Class("cruise".into()),
            Assignment::Recluster(Schedule {
                k: 2,
                assign: vec![Assignment::Class("sudden".into()), Assignment::Discard],
            }),
        ],
    }
}
