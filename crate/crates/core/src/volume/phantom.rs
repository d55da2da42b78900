//! Synthetic tumor phantoms: filled elliptical blobs extruded over a run of
//! consecutive frames, with noisy multi-modal intensities.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{MaskVolume, Modality, MultiModalVolume, PatientRecord, Shape3};
use crate::error::{Error, Result};
use crate::rng::keyed_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub blobs_min: usize,
    pub blobs_max: usize,
    /// Semi-axis range in pixels.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Minimum pixel gap between any blob and the frame edge.
    pub margin: usize,
    pub modalities: Vec<String>,
    pub background_mean: f64,
    pub foreground_offset: f64,
    pub noise_std: f64,
    /// Box-blur radius applied to the foreground indicator before it is
    /// added to the intensities (0 keeps edges sharp).
    pub edge_blur: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            depth: 8,
            height: 64,
            width: 64,
            blobs_min: 1,
            blobs_max: 3,
            radius_min: 5.0,
            radius_max: 10.0,
            margin: 8,
            modalities: vec!["T1c".into(), "FLAIR".into()],
            background_mean: 1.0,
            foreground_offset: 1.0,
            noise_std: 0.35,
            edge_blur: 1,
        }
    }
}

impl PhantomSpec {
    pub fn shape(&self) -> Shape3 {
        Shape3::new(self.depth, self.height, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidPhantom(m));
        if self.depth == 0 || self.height == 0 || self.width == 0 {
            return fail(format!("shape {} has a zero extent", self.shape()));
        }
        if self.blobs_min > self.blobs_max {
            return fail(format!(
                "blobs_min {} exceeds blobs_max {}",
                self.blobs_min, self.blobs_max
            ));
        }
        if !(self.radius_min > 0.0 && self.radius_min <= self.radius_max && self.radius_max.is_finite()) {
            return fail(format!(
                "radius range [{}, {}] must satisfy 0 < min <= max",
                self.radius_min, self.radius_max
            ));
        }
        // A blob of the largest radius plus margin on both sides must fit.
        let needed = 2.0 * (self.radius_max.ceil() + self.margin as f64) + 1.0;
        let available = self.height.min(self.width) as f64;
        if self.blobs_max > 0 && needed > available {
            return fail(format!(
                "radius_max {} with margin {} needs a frame of at least {needed} px, got {available}",
                self.radius_max, self.margin
            ));
        }
        if self.modalities.is_empty() {
            return fail("at least one modality is required".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!("noise_std {} must be finite and >= 0", self.noise_std));
        }
        if !(self.background_mean.is_finite() && self.foreground_offset.is_finite()) {
            return fail("intensity means must be finite".into());
        }
        Ok(())
    }
}

struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    cos: f64,
    sin: f64,
    z0: usize,
    z1: usize,
}

impl Blob {
    fn contains(&self, y: usize, x: usize) -> bool {
        let dy = y as f64 - self.cy;
        let dx = x as f64 - self.cx;
        let u = dy * self.cos + dx * self.sin;
        let v = -dy * self.sin + dx * self.cos;
        (u / self.ry).powi(2) + (v / self.rx).powi(2) <= 1.0
    }
}

fn box_blur(values: &[f64], h: usize, w: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return values.to_vec();
    }
    let r = radius as isize;
    let norm = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut out = vec![0.0; values.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    acc += values[yy as usize * w + xx as usize];
                }
            }
            out[y as usize * w + x as usize] = acc / norm;
        }
    }
    out
}

/// Generates one phantom patient. Output is a pure function of
/// `(spec, patient_id, seed)`.
pub fn generate_phantom(spec: &PhantomSpec, patient_id: &str, seed: u64) -> Result<PatientRecord> {
    spec.validate()?;
    let shape = spec.shape();
    let (d, h, w) = (spec.depth, spec.height, spec.width);
    let mut rng = keyed_rng(seed, patient_id, 0);

    let n_blobs = rng.random_range(spec.blobs_min..=spec.blobs_max);
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| {
            let ry = rng.random_range(spec.radius_min..=spec.radius_max);
            let rx = rng.random_range(spec.radius_min..=spec.radius_max);
            let reach = ry.max(rx).ceil() + spec.margin as f64;
            let cy = rng.random_range(reach..=(h as f64 - 1.0 - reach));
            let cx = rng.random_range(reach..=(w as f64 - 1.0 - reach));
            let angle = rng.random_range(0.0..PI);
            let len = rng.random_range(d.div_ceil(2)..=d);
            let z0 = rng.random_range(0..=d - len);
            Blob {
                cy,
                cx,
                ry,
                rx,
                cos: angle.cos(),
                sin: angle.sin(),
                z0,
                z1: z0 + len,
            }
        })
        .collect();

    let mut mask = vec![0u8; shape.voxels()];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let inside = blobs
                    .iter()
                    .any(|b| (b.z0..b.z1).contains(&z) && b.contains(y, x));
                mask[(z * h + y) * w + x] = u8::from(inside);
            }
        }
    }

    let soft: Vec<f64> = (0..d)
        .flat_map(|z| {
            let frame: Vec<f64> = mask[z * h * w..(z + 1) * h * w]
                .iter()
                .map(|&v| f64::from(v))
                .collect();
            box_blur(&frame, h, w, spec.edge_blur)
        })
        .collect();

    let modalities = spec
        .modalities
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut noise_rng = keyed_rng(seed, patient_id, 1 + i as u64);
            let data = soft
                .iter()
                .map(|&s| {
                    let n: f64 = StandardNormal.sample(&mut noise_rng);
                    (spec.background_mean + spec.foreground_offset * s + spec.noise_std * n) as f32
                })
                .collect();
            Modality {
                name: name.clone(),
                data,
            }
        })
        .collect();

    let volume = MultiModalVolume::new(patient_id, shape, modalities)?;
    PatientRecord::new(volume, None, MaskVolume::new(shape, mask)?)
}

/// `count` phantoms named `phantom-000`, `phantom-001`, ...
pub fn generate_corpus(spec: &PhantomSpec, count: usize, seed: u64) -> Result<Vec<PatientRecord>> {
    (0..count)
        .map(|i| generate_phantom(spec, &format!("phantom-{i:03}"), seed))
        .collect()
}
