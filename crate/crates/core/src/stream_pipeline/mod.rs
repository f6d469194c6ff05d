//! Per-sample fusion, window assembly and classification, plus training
//! orchestration, scoring and plot-data output.

mod config;
mod evaluate;
mod plot;

use serde::{Deserialize, Serialize};

pub use config::{sudden_run_schedule, two_state_schedule, PipelineConfig, TrainingSpec, SCHEMA_VERSION};
pub use evaluate::{evaluate, EvaluationReport, MisclassifiedRun};
pub use plot::{emit_plot_data, fuse_orientation, load_plot_data, PlotData};

use crate::classifiers::{crc_precompute, ClassificationResult, CrcClassifier, ProjectionOperator};
use crate::error::{Error, Result};
use crate::hankel_embedding::{
    normalize_columns, normalize_window, slide_windows, ChannelScaler, FeatureSeries,
};
use crate::ingest::{ImuSample, SignalTrace};
use crate::signal_fusion::{FeatureChannel, FeatureExtractor};
use crate::subspace_trainer::{
    distill_dictionary, DistillParams, DistillReport, LabeledDictionary, Schedule, TrainingRun,
};

/// Emitted for samples that do not yet close a full window.
pub const WARMUP_LABEL: i64 = -1;

/// Causal features of a whole trace.
pub fn extract_features(trace: &SignalTrace, config: &PipelineConfig) -> Result<FeatureSeries> {
    let mut fx = FeatureExtractor::new(&config.fusion(), &config.channels)?;
    let rows = fx.extract_all(trace.samples())?;
    FeatureSeries::from_rows(
        trace.samples().iter().map(|s| s.t).collect(),
        config.channel_names(),
        &rows,
    )
}

/// Provenance written next to a trained dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub schema_version: u32,
    pub class_names: Vec<String>,
    pub schedules: Vec<Schedule>,
    pub distill: DistillParams,
    pub window: usize,
    pub train_stride: usize,
    pub channels: Vec<String>,
    /// Columns per class in the dictionary.
    pub class_sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub dictionary: LabeledDictionary,
    pub operator: ProjectionOperator,
    pub report: DistillReport,
    pub provenance: TrainingProvenance,
}

/// Features → standardization → Hankel embedding → distillation → ridge
/// projection.
pub fn train(runs: &[(SignalTrace, Schedule)], config: &PipelineConfig) -> Result<TrainedModel> {
    config.validate()?;
    if runs.is_empty() {
        return Err(Error::Training("no training traces".into()));
    }
    let mut series = Vec::with_capacity(runs.len());
    for (trace, _) in runs {
        check_rate(trace, config)?;
        series.push(extract_features(trace, config)?);
    }
    let scaler = ChannelScaler::fit(&series.iter().collect::<Vec<_>>())?;
    let all: Vec<usize> = (0..config.channels.len()).collect();
    let mut training = Vec::with_capacity(runs.len());
    for (s, (_, schedule)) in series.iter().zip(runs) {
        let m = slide_windows(&scaler.transform(s)?, &all, config.window, config.train_stride)?;
        let (m, _) = normalize_columns(&m)?;
        training.push(TrainingRun {
            matrix: m,
            schedule: schedule.clone(),
        });
    }
    let (dictionary, report) = distill_dictionary(
        &training,
        &config.class_names,
        &scaler,
        config.fs,
        &config.distill,
    )?;
    let operator = crc_precompute(&dictionary, config.crc_lambda)?;
    let provenance = TrainingProvenance {
        schema_version: SCHEMA_VERSION,
        class_names: config.class_names.clone(),
        schedules: runs.iter().map(|(_, s)| s.clone()).collect(),
        distill: config.distill,
        window: config.window,
        train_stride: config.train_stride,
        channels: config.channel_names(),
        class_sizes: dictionary.blocks.iter().map(|b| b.len()).collect(),
    };
    Ok(TrainedModel {
        dictionary,
        operator,
        report,
        provenance,
    })
}

fn check_rate(trace: &SignalTrace, config: &PipelineConfig) -> Result<()> {
    if (trace.fs() - config.fs).abs() > 1e-9 * config.fs {
        return Err(Error::Config(format!(
            "trace sampled at {} Hz but config expects {} Hz",
            trace.fs(),
            config.fs
        )));
    }
    Ok(())
}

/// Checks that a dictionary was built with this configuration's features.
pub fn check_compatible(dict: &LabeledDictionary, config: &PipelineConfig) -> Result<()> {
    if dict.window != config.window {
        return Err(Error::Config(format!(
            "dictionary window {} differs from config window {}",
            dict.window, config.window
        )));
    }
    if dict.channel_names != config.channel_names() {
        return Err(Error::Config(format!(
            "dictionary channels {:?} differ from config channels {:?}",
            dict.channel_names,
            config.channel_names()
        )));
    }
    if (dict.fs - config.fs).abs() > 1e-9 * config.fs {
        return Err(Error::Config(format!(
            "dictionary built at {} Hz, config uses {} Hz",
            dict.fs, config.fs
        )));
    }
    Ok(())
}

/// One per-sample output of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamDecision {
    pub t: f64,
    /// Class id, or [`WARMUP_LABEL`].
    pub label: i64,
    pub result: Option<ClassificationResult>,
}

/// Stateful single-stream classifier; feeding a trace in pieces gives the
/// same output as feeding it whole.
#[derive(Debug, Clone)]
pub struct StreamClassifier<'a> {
    crc: CrcClassifier<'a>,
    extractor: FeatureExtractor,
    /// Standardized features, `ring[ch][pos]`.
    ring: Vec<Vec<f64>>,
    head: usize,
    seen: usize,
    window: Vec<f64>,
}

impl<'a> StreamClassifier<'a> {
    pub fn new(
        dict: &'a LabeledDictionary,
        op: &'a ProjectionOperator,
        config: &PipelineConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_compatible(dict, config)?;
        let crc = CrcClassifier::new(op, dict)?;
        let channels: Vec<FeatureChannel> = config.channels.clone();
        let w = dict.window;
        Ok(Self {
            crc,
            extractor: FeatureExtractor::new(&config.fusion(), &channels)?,
            ring: vec![vec![0.0; w]; channels.len()],
            head: 0,
            seen: 0,
            window: vec![0.0; w * channels.len()],
        })
    }

    pub fn push(&mut self, sample: &ImuSample) -> Result<StreamDecision> {
        let features = self.extractor.push(sample)?;
        let dict = self.crc.dictionary();
        let w = dict.window;
        for (ch, v) in features.iter().enumerate() {
            self.ring[ch][self.head] = dict.scaler.apply(ch, *v);
        }
        self.head = (self.head + 1) % w;
        self.seen += 1;
        if self.seen < w {
            return Ok(StreamDecision {
                t: sample.t,
                label: WARMUP_LABEL,
                result: None,
            });
        }
        // oldest sample sits at `head`
        for (ch, ring) in self.ring.iter().enumerate() {
            let dst = &mut self.window[ch * w..(ch + 1) * w];
            dst[..w - self.head].copy_from_slice(&ring[self.head..]);
            dst[w - self.head..].copy_from_slice(&ring[..self.head]);
        }
        normalize_window(&mut self.window);
        let result = self.crc.classify(&self.window)?;
        Ok(StreamDecision {
            t: sample.t,
            label: result.label as i64,
            result: Some(result),
        })
    }

    pub fn push_all(&mut self, samples: &[ImuSample]) -> Result<Vec<StreamDecision>> {
        samples.iter().map(|s| self.push(s)).collect()
    }
}

/// Classifies every sample of `trace`; the first `w − 1` get [`WARMUP_LABEL`].
pub fn run_stream(
    trace: &SignalTrace,
    dict: &LabeledDictionary,
    op: &ProjectionOperator,
    config: &PipelineConfig,
) -> Result<Vec<StreamDecision>> {
    check_rate(trace, config)?;
    StreamClassifier::new(dict, op, config)?.push_all(trace.samples())
}

pub fn labels_of(decisions: &[StreamDecision]) -> Vec<i64> {
    decisions.iter().map(|d| d.label).collect()
}
