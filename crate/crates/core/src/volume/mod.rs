//! Patient volumes, label merging, intensity normalization, fold planning
//! and synthetic phantoms.

mod bundle;
mod folds;
pub mod nifti;
mod phantom;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::MaskFrame;

pub use bundle::{
    bundle_dirs, load_dataset, load_patient, load_prediction, read_meta, write_patient, write_prediction,
    BundleMeta, PREDICTION_FILE,
};
pub use folds::{make_folds, DatasetSplit, FoldPlan, FoldSizes, Subset};
pub use phantom::{generate_corpus, generate_phantom, PhantomSpec};

/// Volume extent as (frames, rows, columns).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Shape3 {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub fn new(depth: usize, height: usize, width: usize) -> Self {
        Self {
            depth,
            height,
            width,
        }
    }

    pub fn voxels(&self) -> usize {
        self.depth * self.height * self.width
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }
}

impl From<[usize; 3]> for Shape3 {
    fn from([d, h, w]: [usize; 3]) -> Self {
        Self::new(d, h, w)
    }
}

impl From<Shape3> for [usize; 3] {
    fn from(s: Shape3) -> Self {
        s.dims()
    }
}

impl fmt::Display for Shape3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.depth, self.height, self.width)
    }
}

/// One named scalar grid, C-order and frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Modality {
    pub name: String,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiModalVolume {
    patient_id: String,
    shape: Shape3,
    modalities: Vec<Modality>,
}

impl MultiModalVolume {
    pub fn new(patient_id: impl Into<String>, shape: Shape3, modalities: Vec<Modality>) -> Result<Self> {
        if shape.voxels() == 0 {
            return Err(Error::InvalidParameter(format!("volume shape {shape} has a zero extent")));
        }
        for m in &modalities {
            if m.data.len() != shape.voxels() {
                return Err(Error::shape(
                    format!("modality {:?}", m.name),
                    &[shape.voxels()],
                    &[m.data.len()],
                ));
            }
            if let Some(index) = m.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("modality {:?}", m.name),
                    index,
                });
            }
        }
        Ok(Self {
            patient_id: patient_id.into(),
            shape,
            modalities,
        })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn modality(&self, name: &str) -> Option<&Modality> {
        self.modalities.iter().find(|m| m.name == name)
    }

    /// Row-major pixels of frame `z` of modality `index`.
    pub fn frame(&self, index: usize, z: usize) -> &[f32] {
        let n = self.shape.frame_len();
        &self.modalities[index].data[z * n..(z + 1) * n]
    }
}

/// Voxel labels: 0 background, 1 NCR/NET, 2 edema, 4 enhancing tumor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVolume {
    shape: Shape3,
    data: Vec<u8>,
}

impl LabelVolume {
    pub const ALLOWED: [u8; 4] = [0, 1, 2, 4];

    pub fn new(shape: Shape3, data: Vec<u8>) -> Result<Self> {
        if data.len() != shape.voxels() {
            return Err(Error::shape("label volume", &[shape.voxels()], &[data.len()]));
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !Self::ALLOWED.contains(v))
        {
            return Err(Error::IllegalLabel { value, index });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }
}

/// Binary whole-tumor mask volume (the targets `t_i`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskVolume {
    shape: Shape3,
    data: Vec<u8>,
}

impl MaskVolume {
    pub fn new(shape: Shape3, data: Vec<u8>) -> Result<Self> {
        if data.len() != shape.voxels() {
            return Err(Error::shape("mask volume", &[shape.voxels()], &[data.len()]));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::IllegalMaskValue { value, index });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape3) -> Self {
        Self {
            shape,
            data: vec![0; shape.voxels()],
        }
    }

    pub fn from_frames(frames: &[MaskFrame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidParameter("mask volume needs at least one frame".into()))?;
        let (h, w) = first.shape();
        let mut data = Vec::with_capacity(frames.len() * h * w);
        for f in frames {
            if f.shape() != (h, w) {
                return Err(Error::shape("mask frame", &[h, w], &[f.height(), f.width()]));
            }
            data.extend_from_slice(f.as_slice());
        }
        Ok(Self {
            shape: Shape3::new(frames.len(), h, w),
            data,
        })
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn frame_slice(&self, z: usize) -> &[u8] {
        let n = self.shape.frame_len();
        &self.data[z * n..(z + 1) * n]
    }

    pub fn frame(&self, z: usize) -> MaskFrame {
        MaskFrame::from_raw_unchecked(
            self.shape.height,
            self.shape.width,
            self.frame_slice(z).to_vec(),
        )
    }

    pub fn frames(&self) -> impl Iterator<Item = MaskFrame> + '_ {
        (0..self.shape.depth).map(|z| self.frame(z))
    }

    pub fn set_frame(&mut self, z: usize, frame: &MaskFrame) -> Result<()> {
        let (h, w) = (self.shape.height, self.shape.width);
        if frame.shape() != (h, w) {
            return Err(Error::shape("mask frame", &[h, w], &[frame.height(), frame.width()]));
        }
        let n = self.shape.frame_len();
        self.data[z * n..(z + 1) * n].copy_from_slice(frame.as_slice());
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.data.iter().map(|&v| usize::from(v)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub volume: MultiModalVolume,
    pub labels: Option<LabelVolume>,
    pub mask: MaskVolume,
}

impl PatientRecord {
    pub fn new(volume: MultiModalVolume, labels: Option<LabelVolume>, mask: MaskVolume) -> Result<Self> {
        let shape = volume.shape();
        if mask.shape() != shape {
            return Err(Error::shape("mask vs volume", &shape.dims(), &mask.shape().dims()));
        }
        if let Some(l) = &labels {
            if l.shape() != shape {
                return Err(Error::shape("labels vs volume", &shape.dims(), &l.shape().dims()));
            }
        }
        Ok(Self {
            volume,
            labels,
            mask,
        })
    }

    /// Record whose mask is the merged whole-tumor class of `labels`.
    pub fn from_labels(volume: MultiModalVolume, labels: LabelVolume) -> Result<Self> {
        let mask = binarize_labels(&labels);
        Self::new(volume, Some(labels), mask)
    }

    pub fn patient_id(&self) -> &str {
        self.volume.patient_id()
    }

    pub fn shape(&self) -> Shape3 {
        self.volume.shape()
    }

    pub fn with_mask(&self, mask: MaskVolume) -> Result<Self> {
        Self::new(self.volume.clone(), self.labels.clone(), mask)
    }
}

/// Merges every tumor class into one foreground class.
pub fn binarize_labels(labels: &LabelVolume) -> MaskVolume {
    MaskVolume {
        shape: labels.shape,
        data: labels.data.iter().map(|&l| u8::from(l != 0)).collect(),
    }
}

/// Per-modality z-score over the brain region (voxels that are nonzero in
/// the input). Voxels outside the region stay zero. Uses the population
/// standard deviation.
pub fn zscore_normalize(volume: &MultiModalVolume) -> Result<MultiModalVolume> {
    let modalities = volume
        .modalities
        .iter()
        .map(|m| {
            let brain: Vec<f64> = m
                .data
                .iter()
                .filter(|&&v| v != 0.0)
                .map(|&v| f64::from(v))
                .collect();
            if brain.is_empty() {
                return Err(Error::EmptyBrainRegion(m.name.clone()));
            }
            let n = brain.len() as f64;
            let mean = brain.iter().sum::<f64>() / n;
            let var = brain.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) || std < f64::EPSILON * mean.abs() {
                return Err(Error::ZeroVariance(m.name.clone()));
            }
            let data = m
                .data
                .iter()
                .map(|&v| {
                    if v == 0.0 {
                        0.0
                    } else {
                        ((f64::from(v) - mean) / std) as f32
                    }
                })
                .collect();
            Ok(Modality {
                name: m.name.clone(),
                data,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiModalVolume {
        patient_id: volume.patient_id.clone(),
        shape: volume.shape,
        modalities,
    })
}
