//! On-disk volume bundle: one directory per patient holding `meta.json`,
//! one little-endian `f32` raw file per modality, and `u8` raw files for
//! `labels.raw` and/or `mask.raw`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabelVolume, MaskVolume, Modality, MultiModalVolume, PatientRecord, Shape3};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
pub const LABELS_FILE: &str = "labels.raw";
pub const MASK_FILE: &str = "mask.raw";
/// Optional soft prediction map (`f32`, values in `[0, 1]`) used by scoring.
pub const PREDICTION_FILE: &str = "prediction.raw";

const LITTLE_ENDIAN: &str = "little-endian";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub patient_id: String,
    pub shape: Shape3,
    pub modalities: Vec<String>,
    #[serde(default = "unit_voxel")]
    pub voxel_size_mm: [f64; 3],
    #[serde(default = "little_endian")]
    pub byte_order: String,
}

fn unit_voxel() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

fn little_endian() -> String {
    LITTLE_ENDIAN.to_string()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(format!("reading {}", path.display()), e)
        }
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn modality_file(dir: &Path, name: &str) -> Result<PathBuf> {
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(Error::Metadata {
            path: dir.join(META_FILE),
            message: format!("modality name {name:?} is not a valid file stem"),
        });
    }
    Ok(dir.join(format!("{name}.raw")))
}

fn decode_f32(bytes: &[u8], path: &Path, expected: usize) -> Result<Vec<f32>> {
    if bytes.len() != expected * 4 {
        return Err(Error::shape(
            format!("{} (f32 voxels)", path.display()),
            &[expected],
            &[bytes.len() / 4],
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn encode_f32(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_u8_volume(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    if bytes.len() != expected {
        return Err(Error::shape(
            format!("{} (u8 voxels)", path.display()),
            &[expected],
            &[bytes.len()],
        ));
    }
    Ok(bytes)
}

pub fn read_meta(dir: &Path) -> Result<BundleMeta> {
    let path = dir.join(META_FILE);
    let meta: BundleMeta = serde_json::from_slice(&read(&path)?).map_err(|e| Error::Metadata {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if meta.byte_order != LITTLE_ENDIAN {
        return Err(Error::Metadata {
            path,
            message: format!("unsupported byte order {:?}", meta.byte_order),
        });
    }
    Ok(meta)
}

/// Reads one patient bundle. The mask comes from `mask.raw` when present,
/// otherwise from binarizing `labels.raw`.
pub fn load_patient(dir: impl AsRef<Path>) -> Result<PatientRecord> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let n = meta.shape.voxels();

    let modalities = meta
        .modalities
        .iter()
        .map(|name| {
            let path = modality_file(dir, name)?;
            let data = decode_f32(&read(&path)?, &path, n)?;
            Ok(Modality {
                name: name.clone(),
                data,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let volume = MultiModalVolume::new(meta.patient_id.clone(), meta.shape, modalities)?;

    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        Some(LabelVolume::new(meta.shape, read_u8_volume(&labels_path, n)?)?)
    } else {
        None
    };

    let mask_path = dir.join(MASK_FILE);
    let mask = if mask_path.exists() {
        MaskVolume::new(meta.shape, read_u8_volume(&mask_path, n)?)?
    } else if let Some(l) = &labels {
        super::binarize_labels(l)
    } else {
        return Err(Error::MissingFile(mask_path));
    };

    PatientRecord::new(volume, labels, mask)
}

pub fn write_patient(record: &PatientRecord, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let volume = &record.volume;
    let meta = BundleMeta {
        patient_id: volume.patient_id().to_string(),
        shape: volume.shape(),
        modalities: volume.modalities().iter().map(|m| m.name.clone()).collect(),
        voxel_size_mm: unit_voxel(),
        byte_order: little_endian(),
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("bundle metadata serializes");
    json.push('\n');
    write(&dir.join(META_FILE), json.as_bytes())?;
    for m in volume.modalities() {
        write(&modality_file(dir, &m.name)?, &encode_f32(&m.data))?;
    }
    if let Some(labels) = &record.labels {
        write(&dir.join(LABELS_FILE), labels.as_slice())?;
    }
    write(&dir.join(MASK_FILE), record.mask.as_slice())
}

/// Soft predictions stored next to a bundle's metadata.
pub fn write_prediction(dir: impl AsRef<Path>, shape: Shape3, values: &[f32]) -> Result<()> {
    let dir = dir.as_ref();
    if values.len() != shape.voxels() {
        return Err(Error::shape("prediction", &[shape.voxels()], &[values.len()]));
    }
    write(&dir.join(PREDICTION_FILE), &encode_f32(values))
}

/// Reads `prediction.raw` if present, else falls back to `mask.raw`.
pub fn load_prediction(dir: impl AsRef<Path>) -> Result<(String, Shape3, Vec<f64>)> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let n = meta.shape.voxels();
    let path = dir.join(PREDICTION_FILE);
    let values: Vec<f64> = if path.exists() {
        decode_f32(&read(&path)?, &path, n)?
            .into_iter()
            .map(f64::from)
            .collect()
    } else {
        let mask = MaskVolume::new(meta.shape, read_u8_volume(&dir.join(MASK_FILE), n)?)?;
        mask.as_slice().iter().map(|&v| f64::from(v)).collect()
    };
    Ok((meta.patient_id, meta.shape, values))
}

/// Patient bundle directories directly under `root`, in name order.
pub fn bundle_dirs(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    if root.join(META_FILE).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
        let path = entry.path();
        if path.join(META_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Loads every bundle under `root` (or `root` itself if it is a bundle).
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<PatientRecord>> {
    bundle_dirs(root)?.iter().map(load_patient).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_bundle(
        dir: &Path,
        shape: [usize; 3],
        modalities: &[(&str, [usize; 3])],
        labels: Option<Vec<u8>>,
    ) {
        fs::create_dir_all(dir).unwrap();
        let meta = serde_json::json!({
            "patient_id": "case-1",
            "shape": shape,
            "modalities": modalities.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
            "voxel_size_mm": [1.0, 1.0, 1.0],
            "byte_order": "little-endian",
        });
        fs::write(dir.join(META_FILE), meta.to_string()).unwrap();
        for (name, s) in modalities {
            let n = s[0] * s[1] * s[2];
            let vals: Vec<f32> = (0..n).map(|i| i as f32 + 1.0).collect();
            fs::write(dir.join(format!("{name}.raw")), encode_f32(&vals)).unwrap();
        }
        if let Some(l) = labels {
            fs::write(dir.join(LABELS_FILE), l).unwrap();
        }
    }

    #[test]
    fn all_background_labels_give_empty_mask() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(tmp.path(), [2, 4, 4], &[("T1", [2, 4, 4])], Some(vec![0; 32]));
        let rec = load_patient(tmp.path()).unwrap();
        assert_eq!(rec.mask.voxel_count(), 0);
        assert_eq!(rec.shape(), Shape3::new(2, 4, 4));
    }

    #[test]
    fn modality_shape_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(
            tmp.path(),
            [2, 4, 4],
            &[("T1", [2, 4, 4]), ("T2", [2, 4, 5])],
            Some(vec![0; 32]),
        );
        assert!(matches!(
            load_patient(tmp.path()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn illegal_label_three() {
        let tmp = tempfile::tempdir().unwrap();
        let mut labels = vec![0u8; 32];
        labels[5] = 3;
        write_bundle(tmp.path(), [2, 4, 4], &[("T1", [2, 4, 4])], Some(labels));
        assert!(matches!(
            load_patient(tmp.path()),
            Err(Error::IllegalLabel { value: 3, index: 5 })
        ));
    }

    #[test]
    fn missing_files() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_patient(tmp.path()), Err(Error::MissingFile(_))));
        write_bundle(tmp.path(), [1, 2, 2], &[("T1", [1, 2, 2])], None);
        assert!(matches!(load_patient(tmp.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn non_finite_intensity() {
        let tmp = tempfile::tempdir().unwrap();
        write_bundle(tmp.path(), [1, 2, 2], &[("T1", [1, 2, 2])], Some(vec![0; 4]));
        fs::write(
            tmp.path().join("T1.raw"),
            encode_f32(&[1.0, f32::INFINITY, 0.0, 2.0]),
        )
        .unwrap();
        assert!(matches!(
            load_patient(tmp.path()),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn write_then_load_preserves_record() {
        let tmp = tempfile::tempdir().unwrap();
        let shape = Shape3::new(1, 2, 3);
        let volume = MultiModalVolume::new(
            "rt",
            shape,
            vec![Modality {
                name: "FLAIR".into(),
                data: vec![0.5, -1.0, 2.0, 3.5, 0.0, 1e-3],
            }],
        )
        .unwrap();
        let labels = LabelVolume::new(shape, vec![0, 1, 2, 4, 0, 0]).unwrap();
        let rec = PatientRecord::from_labels(volume, labels).unwrap();
        write_patient(&rec, tmp.path().join("rt")).unwrap();
        let back = load_dataset(tmp.path()).unwrap();
        assert_eq!(back, vec![rec]);
    }
}
