//! Label-noise robustness toolkit for binary segmentation.
//!
//! Simulates biased annotators by corrupting ground-truth masks with
//! iterated 3×3 morphology, scores predictions with the smoothed soft
//! dice / precision / recall / f-beta family, evaluates a noise-robust
//! oracle that reproduces the corruption exactly, and trains a small
//! per-pixel segmenter with an f-beta loss to measure how much an
//! inversely biased objective offsets biased training masks.

pub mod error;
pub mod metrics;
pub mod morphology;
pub mod noise;
pub mod oracle;
pub mod report;
mod rng;
pub mod trainer;
pub mod volume;

pub use error::{Error, Result};
pub use metrics::{Beta, PredictionFrame, PredictionVolume, ScoreTriple};
pub use morphology::{MaskFrame, SizeChange};
pub use noise::{CorruptionReport, NoiseMode, NoiseSpec};
pub use oracle::{OracleCurve, SweepConfig};
pub use trainer::{GridConfig, LinearSegmenter, TrainConfig};
pub use volume::{DatasetSplit, FoldPlan, MaskVolume, PatientRecord, Shape3};
