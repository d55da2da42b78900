//! Biased-annotator simulation.
//!
//! Every frame draws a contamination scale `k = floor(|x|)` with
//! `x ~ N(0, sigma2)` and applies `k` iterations of dilation or erosion
//! (chosen by the mode). Each `(seed, patient, frame)` triple owns its
//! random stream, so the output does not depend on processing order.
//! The stream is independent of the mode and of `sigma2`: for a fixed
//! seed, raising `sigma2` never lowers any frame's `k`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{dilate, erode, size_change, MaskFrame, SizeChange};
use crate::rng::keyed_rng;
use crate::volume::{DatasetSplit, MaskVolume, PatientRecord, Subset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Dilate,
    Erode,
    Random,
}

impl NoiseMode {
    pub const ALL: [NoiseMode; 3] = [NoiseMode::Dilate, NoiseMode::Erode, NoiseMode::Random];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseMode::Dilate => "dilate",
            NoiseMode::Erode => "erode",
            NoiseMode::Random => "random",
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dilate" => Ok(NoiseMode::Dilate),
            "erode" => Ok(NoiseMode::Erode),
            "random" => Ok(NoiseMode::Random),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise mode {other:?} (dilate, erode, random)"
            ))),
        }
    }
}

/// The morphology actually applied to one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionOp {
    None,
    Dilate,
    Erode,
}

impl CorruptionOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorruptionOp::None => "none",
            CorruptionOp::Dilate => "dilate",
            CorruptionOp::Erode => "erode",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    /// Variance of the normal distribution the scale is drawn from.
    pub sigma2: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(mode: NoiseMode, sigma2: f64, seed: u64) -> Result<Self> {
        let spec = Self { mode, sigma2, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be finite and >= 0, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

/// `floor(|x|)` with `x ~ N(0, sigma2)`.
pub fn sample_scale<R: Rng + ?Sized>(rng: &mut R, sigma2: f64) -> usize {
    let z: f64 = StandardNormal.sample(rng);
    (sigma2.sqrt() * z).abs().floor() as usize
}

/// Audit entry for one corrupted frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameCorruption {
    pub op: CorruptionOp,
    pub k: usize,
    pub size: SizeChange,
}

/// Draws the scale (then, in random mode, a fair coin for the operation)
/// and applies it. `k = 0` leaves the frame untouched.
pub fn corrupt_frame<R: Rng + ?Sized>(
    frame: &MaskFrame,
    mode: NoiseMode,
    sigma2: f64,
    rng: &mut R,
) -> (MaskFrame, FrameCorruption) {
    let k = sample_scale(rng, sigma2);
    let chosen = match mode {
        NoiseMode::Dilate => CorruptionOp::Dilate,
        NoiseMode::Erode => CorruptionOp::Erode,
        NoiseMode::Random => {
            if rng.random_bool(0.5) {
                CorruptionOp::Dilate
            } else {
                CorruptionOp::Erode
            }
        }
    };
    let (out, op) = match (k, chosen) {
        (0, _) => (frame.clone(), CorruptionOp::None),
        (k, CorruptionOp::Dilate) => (dilate(frame, k), CorruptionOp::Dilate),
        (k, _) => (erode(frame, k), CorruptionOp::Erode),
    };
    let size = size_change(frame, &out).expect("morphology preserves shape");
    (out, FrameCorruption { op, k, size })
}

/// Corrupts every frame of one patient's mask using the keyed streams
/// `(seed, patient_id, frame)`.
pub fn corrupt_volume(
    mask: &MaskVolume,
    patient_id: &str,
    mode: NoiseMode,
    sigma2: f64,
    seed: u64,
) -> (MaskVolume, Vec<FrameCorruption>) {
    let mut out = mask.clone();
    let mut log = Vec::with_capacity(mask.shape().depth);
    for (z, frame) in mask.frames().enumerate() {
        let mut rng = keyed_rng(seed, patient_id, z as u64);
        let (corrupted, entry) = corrupt_frame(&frame, mode, sigma2, &mut rng);
        out.set_frame(z, &corrupted).expect("frame shape preserved");
        log.push(entry);
    }
    (out, log)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorruptionRow {
    pub patient_id: String,
    pub frame: usize,
    pub mode: NoiseMode,
    pub op: CorruptionOp,
    pub k: usize,
    pub s_original: usize,
    pub s_modified: usize,
    pub delta_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorruptionReport {
    pub rows: Vec<CorruptionRow>,
}

impl CorruptionReport {
    /// Columns: `patient_id,frame,mode,op,k,s_original,s_modified,delta_s`;
    /// `delta_s` is empty when the original frame is empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "patient_id",
            "frame",
            "mode",
            "op",
            "k",
            "s_original",
            "s_modified",
            "delta_s",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.patient_id.clone(),
                r.frame.to_string(),
                r.mode.to_string(),
                r.op.as_str().to_string(),
                r.k.to_string(),
                r.s_original.to_string(),
                r.s_modified.to_string(),
                r.delta_s.map(|d| format!("{d:.6}")).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("writing corruption report", e))?;
        Ok(())
    }

    /// Mean ΔS over frames whose original mask is nonempty.
    pub fn mean_delta_s(&self) -> Option<f64> {
        let defined: Vec<f64> = self.rows.iter().filter_map(|r| r.delta_s).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Replaces the train and validation masks frame by frame; test masks and
/// patients outside the split are returned unchanged. Output order follows
/// `records`.
pub fn corrupt_dataset(
    records: &[PatientRecord],
    split: &DatasetSplit,
    spec: &NoiseSpec,
) -> Result<(Vec<MaskVolume>, CorruptionReport)> {
    let masks: Vec<(&str, &MaskVolume)> = records.iter().map(|r| (r.patient_id(), &r.mask)).collect();
    corrupt_masks(&masks, split, spec)
}

/// [`corrupt_dataset`] over bare `(patient_id, mask)` pairs.
pub fn corrupt_masks(
    masks: &[(&str, &MaskVolume)],
    split: &DatasetSplit,
    spec: &NoiseSpec,
) -> Result<(Vec<MaskVolume>, CorruptionReport)> {
    spec.validate()?;
    for id in split.all_ids() {
        if !masks.iter().any(|(m, _)| *m == id) {
            return Err(Error::UnknownPatient(id.clone()));
        }
    }

    let per_patient: Vec<(MaskVolume, Vec<CorruptionRow>)> = masks
        .par_iter()
        .map(|&(id, clean)| {
            match split.subset_of(id) {
                Some(Subset::Train | Subset::Val) => {
                    let (mask, log) = corrupt_volume(clean, id, spec.mode, spec.sigma2, spec.seed);
                    let rows = log
                        .into_iter()
                        .enumerate()
                        .map(|(frame, e)| CorruptionRow {
                            patient_id: id.to_string(),
                            frame,
                            mode: spec.mode,
                            op: e.op,
                            k: e.k,
                            s_original: e.size.s_original,
                            s_modified: e.size.s_modified,
                            delta_s: e.size.delta_s,
                        })
                        .collect();
                    (mask, rows)
                }
                _ => (clean.clone(), Vec::new()),
            }
        })
        .collect();

    let mut out = Vec::with_capacity(masks.len());
    let mut report = CorruptionReport::default();
    for (mask, rows) in per_patient {
        out.push(mask);
        report.rows.extend(rows);
    }
    Ok((out, report))
}
