//! Unsupervised segmentation of training streams and dictionary distillation.

mod dictionary;
mod distill;
mod osc;
mod spectral;

pub use dictionary::{
    read_dictionary, read_sidecar, sidecar_path, write_dictionary, write_sidecar, LabeledDictionary,
};
pub use distill::{
    boundary_trim, distill_dictionary, farthest_point_sample, Assignment, DistillParams, DistillReport,
    PassReport, RunReport, Schedule, TrainingRun,
};
pub use osc::{build_r, osc_objective, osc_solve, CoefficientMatrix, OscParams};
pub use spectral::{
    build_affinity, kmeans, spectral_cluster, AffinityGraph, SpectralLabels, DEFAULT_KMEANS_RESTARTS,
};
