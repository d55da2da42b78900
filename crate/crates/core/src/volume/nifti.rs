//! Minimal single-file NIfTI-1 (`.nii`, uncompressed) import.
//!
//! Only 3-D images with datatypes `uint8`, `int16` and `float32` are
//! supported. NIfTI stores x fastest, then y, then z, which is exactly the
//! bundle's C-order `[frame][row][column]` layout with `W = dim[1]`,
//! `H = dim[2]`, `D = dim[3]`.

use std::fs;
use std::path::Path;

use super::{LabelVolume, Modality, MultiModalVolume, PatientRecord, Shape3};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum NiftiData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

impl NiftiData {
    fn datatype(&self) -> (i16, i16) {
        match self {
            NiftiData::U8(_) => (DT_UINT8, 8),
            NiftiData::I16(_) => (DT_INT16, 16),
            NiftiData::F32(_) => (DT_FLOAT32, 32),
        }
    }

    fn len(&self) -> usize {
        match self {
            NiftiData::U8(v) => v.len(),
            NiftiData::I16(v) => v.len(),
            NiftiData::F32(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiImage {
    pub shape: Shape3,
    pub voxel_size_mm: [f64; 3],
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub data: NiftiData,
}

impl NiftiImage {
    /// Intensities with the header's linear scaling applied (slope 0 means
    /// no scaling).
    pub fn to_f32(&self) -> Vec<f32> {
        let raw: Vec<f32> = match &self.data {
            NiftiData::U8(v) => v.iter().map(|&x| f32::from(x)).collect(),
            NiftiData::I16(v) => v.iter().map(|&x| f32::from(x)).collect(),
            NiftiData::F32(v) => v.clone(),
        };
        if self.scl_slope == 0.0 || (self.scl_slope == 1.0 && self.scl_inter == 0.0) {
            raw
        } else {
            raw.into_iter()
                .map(|x| x * self.scl_slope + self.scl_inter)
                .collect()
        }
    }

    /// Raw integer voxels as tumor labels.
    pub fn to_labels(&self) -> Result<LabelVolume> {
        let values = self.to_f32();
        let mut out = Vec::with_capacity(values.len());
        for (index, v) in values.into_iter().enumerate() {
            if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                return Err(Error::Nifti(format!(
                    "label voxel {index} has non-integer value {v}"
                )));
            }
            out.push(v as u8);
        }
        LabelVolume::new(self.shape, out)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    little: bool,
}

impl Reader<'_> {
    fn i16(&self, at: usize) -> i16 {
        let b = [self.bytes[at], self.bytes[at + 1]];
        if self.little {
            i16::from_le_bytes(b)
        } else {
            i16::from_be_bytes(b)
        }
    }

    fn i32(&self, at: usize) -> i32 {
        let b = [
            self.bytes[at],
            self.bytes[at + 1],
            self.bytes[at + 2],
            self.bytes[at + 3],
        ];
        if self.little {
            i32::from_le_bytes(b)
        } else {
            i32::from_be_bytes(b)
        }
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_bits(self.i32(at) as u32)
    }
}

pub fn parse_nifti(bytes: &[u8]) -> Result<NiftiImage> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Nifti(format!("file too short ({} bytes)", bytes.len())));
    }
    let little = i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == HEADER_SIZE as i32;
    let r = Reader { bytes, little };
    if r.i32(0) != HEADER_SIZE as i32 {
        return Err(Error::Nifti("sizeof_hdr is not 348; not a NIfTI-1 file".into()));
    }
    if &bytes[344..347] != b"n+1" {
        return Err(Error::Nifti("only single-file NIfTI-1 (magic \"n+1\") is supported".into()));
    }

    let ndim = r.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Nifti(format!("invalid dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 7];
    for (i, d) in dims.iter_mut().enumerate().take(ndim as usize) {
        let v = r.i16(42 + 2 * i);
        if v < 1 {
            return Err(Error::Nifti(format!("invalid dim[{}] = {v}", i + 1)));
        }
        *d = v as usize;
    }
    if dims[3..].iter().any(|&d| d != 1) {
        return Err(Error::Nifti(format!(
            "only 3-D images are supported, got dims {:?}",
            &dims[..ndim as usize]
        )));
    }
    let shape = Shape3::new(dims[2], dims[1], dims[0]);
    let voxel_size_mm = [
        f64::from(r.f32(76 + 12).abs()),
        f64::from(r.f32(76 + 8).abs()),
        f64::from(r.f32(76 + 4).abs()),
    ];

    let datatype = r.i16(70);
    let vox_offset = r.f32(108);
    if !(vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::Nifti(format!("invalid vox_offset {vox_offset}")));
    }
    let offset = vox_offset as usize;
    let n = shape.voxels();
    let width = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => {
            return Err(Error::Nifti(format!(
                "unsupported datatype code {other} (uint8, int16 and float32 only)"
            )))
        }
    };
    let payload = bytes
        .get(offset..offset + n * width)
        .ok_or_else(|| Error::Nifti(format!("truncated voxel data: need {} bytes", n * width)))?;
    let pr = Reader {
        bytes: payload,
        little,
    };
    let data = match datatype {
        DT_UINT8 => NiftiData::U8(payload.to_vec()),
        DT_INT16 => NiftiData::I16((0..n).map(|i| pr.i16(2 * i)).collect()),
        _ => NiftiData::F32((0..n).map(|i| pr.f32(4 * i)).collect()),
    };
    Ok(NiftiImage {
        shape,
        voxel_size_mm,
        scl_slope: r.f32(112),
        scl_inter: r.f32(116),
        data,
    })
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "gz") {
        return Err(Error::Nifti(format!(
            "{}: compressed NIfTI is not supported",
            path.display()
        )));
    }
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(format!("reading {}", path.display()), e)
        }
    })?;
    parse_nifti(&bytes)
}

/// Serializes a little-endian single-file NIfTI-1 image.
pub fn encode_nifti(shape: Shape3, voxel_size_mm: [f64; 3], data: &NiftiData) -> Result<Vec<u8>> {
    if data.len() != shape.voxels() {
        return Err(Error::shape("nifti data", &[shape.voxels()], &[data.len()]));
    }
    let mut h = vec![0u8; HEADER_SIZE + 4];
    let put_i16 = |h: &mut Vec<u8>, at: usize, v: i16| h[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, at: usize, v: f32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let dims = [3, shape.width, shape.height, shape.depth, 1, 1, 1, 1];
    for (i, &d) in dims.iter().enumerate() {
        let d = i16::try_from(d).map_err(|_| Error::Nifti(format!("dimension {d} exceeds i16")))?;
        put_i16(&mut h, 40 + 2 * i, d);
    }
    let (code, bitpix) = data.datatype();
    put_i16(&mut h, 70, code);
    put_i16(&mut h, 72, bitpix);
    put_f32(&mut h, 76, 1.0);
    put_f32(&mut h, 80, voxel_size_mm[2] as f32);
    put_f32(&mut h, 84, voxel_size_mm[1] as f32);
    put_f32(&mut h, 88, voxel_size_mm[0] as f32);
    put_f32(&mut h, 108, (HEADER_SIZE + 4) as f32);
    put_f32(&mut h, 112, 1.0);
    h[344..348].copy_from_slice(b"n+1\0");
    match data {
        NiftiData::U8(v) => h.extend_from_slice(v),
        NiftiData::I16(v) => h.extend(v.iter().flat_map(|x| x.to_le_bytes())),
        NiftiData::F32(v) => h.extend(v.iter().flat_map(|x| x.to_le_bytes())),
    }
    Ok(h)
}

/// Builds a patient record from one NIfTI file per modality plus an
/// optional label image.
pub fn import_nifti(
    patient_id: &str,
    modalities: &[(String, &Path)],
    labels: Option<&Path>,
) -> Result<PatientRecord> {
    let mut shape = None;
    let mut mods = Vec::with_capacity(modalities.len());
    for (name, path) in modalities {
        let img = read_nifti(path)?;
        match shape {
            None => shape = Some(img.shape),
            Some(s) if s != img.shape => {
                return Err(Error::shape(format!("modality {name:?}"), &s.dims(), &img.shape.dims()))
            }
            _ => {}
        }
        mods.push(Modality {
            name: name.clone(),
            data: img.to_f32(),
        });
    }
    let shape = shape.ok_or_else(|| Error::InvalidParameter("at least one modality is required".into()))?;
    let volume = MultiModalVolume::new(patient_id, shape, mods)?;
    match labels {
        Some(path) => {
            let img = read_nifti(path)?;
            if img.shape != shape {
                return Err(Error::shape("labels", &shape.dims(), &img.shape.dims()));
            }
            PatientRecord::from_labels(volume, img.to_labels()?)
        }
        None => PatientRecord::new(volume, None, super::MaskVolume::zeros(shape)),
    }
}
