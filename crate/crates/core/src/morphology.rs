//! Binary 2-D morphology with a fixed 3×3 square structuring element.
//!
//! Both operations use zero padding: pixels outside the frame count as
//! background. `k` iterations are computed as `k` passes of the radius-1
//! operator, which is the same as a single pass with a `(2k+1)×(2k+1)`
//! square (Chebyshev ball of radius `k`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single binary mask frame, stored row-major with values in `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskFrame {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl MaskFrame {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("mask frame", &[height * width], &[data.len()]));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::IllegalMaskValue { value, index });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub(crate) fn from_raw_unchecked(height: usize, width: usize, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.data[y * self.width + x] = u8::from(value);
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &MaskFrame) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a <= b)
    }

    /// Chebyshev distance from the foreground to the nearest frame edge,
    /// or `None` for an empty frame.
    pub fn border_clearance(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    let d = y.min(x).min(self.height - 1 - y).min(self.width - 1 - x);
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
        best
    }
}

/// The fixed 3×3 all-ones footprint (8-connectivity, centered origin).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructuringElement;

impl StructuringElement {
    pub const SIZE: usize = 3;
    pub const RADIUS: usize = 1;

    pub fn footprint(&self) -> [[bool; 3]; 3] {
        [[true; 3]; 3]
    }
}

#[derive(Clone, Copy)]
enum Op {
    Dilate,
    Erode,
}

impl Op {
    #[inline]
    fn combine(self, a: u8, b: u8, c: u8) -> u8 {
        match self {
            Op::Dilate => a | b | c,
            Op::Erode => a & b & c,
        }
    }
}

/// One radius-1 pass, split into a horizontal and a vertical sweep.
fn pass(src: &[u8], height: usize, width: usize, op: Op) -> Vec<u8> {
    let mut horizontal = vec![0u8; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        let out = &mut horizontal[y * width..(y + 1) * width];
        for x in 0..width {
            let left = if x > 0 { row[x - 1] } else { 0 };
            let right = if x + 1 < width { row[x + 1] } else { 0 };
            out[x] = op.combine(left, row[x], right);
        }
    }
    let mut out = vec![0u8; src.len()];
    for y in 0..height {
        for x in 0..width {
            let up = if y > 0 { horizontal[(y - 1) * width + x] } else { 0 };
            let down = if y + 1 < height {
                horizontal[(y + 1) * width + x]
            } else {
                0
            };
            out[y * width + x] = op.combine(up, horizontal[y * width + x], down);
        }
    }
    out
}

fn iterate(frame: &MaskFrame, iterations: usize, op: Op) -> MaskFrame {
    let mut data = frame.data.clone();
    for _ in 0..iterations {
        // Both operators are idempotent on the empty frame.
        if data.iter().all(|&v| v == 0) {
            break;
        }
        data = pass(&data, frame.height, frame.width, op);
    }
    MaskFrame::from_raw_unchecked(frame.height, frame.width, data)
}

/// Grows the foreground: a pixel is set iff some input pixel within
/// Chebyshev distance `iterations` is set.
pub fn dilate(frame: &MaskFrame, iterations: usize) -> MaskFrame {
    iterate(frame, iterations, Op::Dilate)
}

/// Shrinks the foreground: a pixel survives iff every pixel within
/// Chebyshev distance `iterations` is set, with out-of-frame pixels unset.
pub fn erode(frame: &MaskFrame, iterations: usize) -> MaskFrame {
    iterate(frame, iterations, Op::Erode)
}

pub fn mask_area(frame: &MaskFrame) -> usize {
    frame.data.iter().map(|&v| usize::from(v)).sum()
}

/// Pixel counts before and after a corruption, with `delta_s` undefined
/// for an empty original.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeChange {
    pub s_original: usize,
    pub s_modified: usize,
    pub delta_s: Option<f64>,
}

impl SizeChange {
    pub fn from_counts(s_original: usize, s_modified: usize) -> Self {
        let delta_s = (s_original > 0).then(|| s_modified as f64 / s_original as f64);
        Self {
            s_original,
            s_modified,
            delta_s,
        }
    }
}

pub fn size_change(original: &MaskFrame, modified: &MaskFrame) -> Result<SizeChange> {
    if original.shape() != modified.shape() {
        return Err(Error::shape(
            "size_change",
            &[original.height, original.width],
            &[modified.height, modified.width],
        ));
    }
    Ok(SizeChange::from_counts(
        mask_area(original),
        mask_area(modified),
    ))
}
