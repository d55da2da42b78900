//! Soft dice, precision, recall and f-beta scores with a smoothing
//! constant of 1.0, their thresholded counterparts, the f-beta loss with
//! its analytic gradient, and the two aggregation conventions (frame mean
//! and volume-wise sums).
//!
//! With `tp = Σ pᵢtᵢ`, `fp = Σ pᵢ(1−tᵢ)` and `fn = Σ (1−pᵢ)tᵢ`:
//!
//! ```text
//! dice      = (2·tp + 1) / (2·tp + fp + fn + 1)
//! precision = (tp + 1) / (tp + fp + 1)
//! recall    = (tp + 1) / (tp + fn + 1)
//! f_beta    = (1 + β²)·P·R / (β²·P + R)
//! ```
//!
//! Note that the smoothed `f_1` is `2(tp+1)/(2tp+fp+fn+2)`, which differs
//! from the smoothed dice unless `fp = fn = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::MaskFrame;
use crate::volume::{MaskVolume, Shape3};

pub const SMOOTHING: f64 = 1.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn check_prob_slice(context: &str, values: &[f64]) -> Result<()> {
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: context.to_string(),
                index,
            });
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange {
                context: context.to_string(),
                index,
                value: v,
            });
        }
    }
    Ok(())
}

/// Per-pixel foreground probabilities `pᵢ ∈ [0, 1]` for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionFrame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl PredictionFrame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("prediction frame", &[height * width], &[data.len()]));
        }
        check_prob_slice("prediction frame", &data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_mask(mask: &MaskFrame) -> Self {
        Self {
            height: mask.height(),
            width: mask.width(),
            data: mask.as_slice().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn uniform(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionVolume {
    shape: Shape3,
    data: Vec<f64>,
}

impl PredictionVolume {
    pub fn new(shape: Shape3, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.voxels() {
            return Err(Error::shape("prediction volume", &[shape.voxels()], &[data.len()]));
        }
        check_prob_slice("prediction volume", &data)?;
        Ok(Self { shape, data })
    }

    pub fn from_mask(mask: &MaskVolume) -> Self {
        Self {
            shape: mask.shape(),
            data: mask.as_slice().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, z: usize) -> PredictionFrame {
        let n = self.shape.frame_len();
        PredictionFrame {
            height: self.shape.height,
            width: self.shape.width,
            data: self.data[z * n..(z + 1) * n].to_vec(),
        }
    }
}

/// Relative weight of recall against precision in the f-beta score.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta(f64);

impl Beta {
    pub const ONE: Beta = Beta(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Beta(value))
        } else {
            Err(Error::InvalidParameter(format!(
                "beta must be finite and >= 0, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Beta {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Beta::new(value)
    }
}

impl From<Beta> for f64 {
    fn from(b: Beta) -> f64 {
        b.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
}

impl ScoreTriple {
    pub const PERFECT: ScoreTriple = ScoreTriple {
        dice: 1.0,
        precision: 1.0,
        recall: 1.0,
    };

    pub fn mean(items: &[ScoreTriple]) -> Result<ScoreTriple> {
        Ok(ScoreTriple {
            dice: aggregate_framewise(&items.iter().map(|s| s.dice).collect::<Vec<_>>())?,
            precision: aggregate_framewise(&items.iter().map(|s| s.precision).collect::<Vec<_>>())?,
            recall: aggregate_framewise(&items.iter().map(|s| s.recall).collect::<Vec<_>>())?,
        })
    }
}

/// Soft confusion sums over a set of pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overlap {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
}

impl Overlap {
    /// Row-major compensated accumulation; `p` and `t` must have equal length.
    pub fn soft(p: &[f64], t: &[u8]) -> Self {
        debug_assert_eq!(p.len(), t.len());
        let (mut tp, mut fp, mut fn_) = (
            CompensatedSum::default(),
            CompensatedSum::default(),
            CompensatedSum::default(),
        );
        for (&pi, &ti) in p.iter().zip(t) {
            if ti != 0 {
                tp.add(pi);
                fn_.add(1.0 - pi);
            } else {
                fp.add(pi);
            }
        }
        Self {
            tp: tp.value(),
            fp: fp.value(),
            fn_: fn_.value(),
        }
    }

    pub fn hard(p: &[f64], t: &[u8], threshold: f64) -> Self {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (&pi, &ti) in p.iter().zip(t) {
            match (pi >= threshold, ti != 0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        Self {
            tp: tp as f64,
            fp: fp as f64,
            fn_: fn_ as f64,
        }
    }

    pub fn dice(&self) -> f64 {
        (2.0 * self.tp + SMOOTHING) / ((self.tp + self.fp) + (self.tp + self.fn_) + SMOOTHING)
    }

    pub fn precision(&self) -> f64 {
        (self.tp + SMOOTHING) / (self.tp + self.fp + SMOOTHING)
    }

    pub fn recall(&self) -> f64 {
        (self.tp + SMOOTHING) / (self.tp + self.fn_ + SMOOTHING)
    }

    /// Weighted harmonic mean of precision and recall, written so that
    /// `β = 0` returns the precision bit for bit.
    pub fn f_beta(&self, beta: Beta) -> f64 {
        let b2 = beta.0 * beta.0;
        let p = self.precision();
        let r = self.recall();
        (1.0 + b2) * p / (1.0 + b2 * p / r)
    }

    pub fn loss(&self, beta: Beta) -> f64 {
        1.0 - self.f_beta(beta)
    }

    pub fn scores(&self) -> ScoreTriple {
        ScoreTriple {
            dice: self.dice(),
            precision: self.precision(),
            recall: self.recall(),
        }
    }
}

/// Writes `∂loss/∂pᵢ` into `out`, given the frame's precomputed overlap.
///
/// `P` depends on every pixel through `tp + fp = Σ pᵢ`, `R` only through
/// `tp`, so `∂P/∂pᵢ = (tᵢ − P)/(tp + fp + 1)` and `∂R/∂pᵢ = tᵢ/(tp + fn + 1)`.
pub fn loss_gradient_into(overlap: &Overlap, t: &[u8], beta: Beta, out: &mut [f64]) {
    debug_assert_eq!(t.len(), out.len());
    let b2 = beta.0 * beta.0;
    let p = overlap.precision();
    let r = overlap.recall();
    let h = b2 * p + r;
    let df_dp = (1.0 + b2) * r * r / (h * h);
    let df_dr = (1.0 + b2) * b2 * p * p / (h * h);
    let p_den = overlap.tp + overlap.fp + SMOOTHING;
    let r_den = overlap.tp + overlap.fn_ + SMOOTHING;
    for (g, &ti) in out.iter_mut().zip(t) {
        let ti = f64::from(ti);
        let dp = (ti - p) / p_den;
        let dr = ti / r_den;
        *g = -(df_dp * dp + df_dr * dr);
    }
}

fn same_shape(p: &PredictionFrame, t: &MaskFrame) -> Result<()> {
    if p.shape() != t.shape() {
        let (ph, pw) = p.shape();
        return Err(Error::shape("prediction vs target", &[t.height(), t.width()], &[ph, pw]));
    }
    Ok(())
}

fn frame_overlap(p: &PredictionFrame, t: &MaskFrame) -> Result<Overlap> {
    same_shape(p, t)?;
    Ok(Overlap::soft(p.as_slice(), t.as_slice()))
}

pub fn soft_dice(p: &PredictionFrame, t: &MaskFrame) -> Result<f64> {
    Ok(frame_overlap(p, t)?.dice())
}

pub fn soft_precision(p: &PredictionFrame, t: &MaskFrame) -> Result<f64> {
    Ok(frame_overlap(p, t)?.precision())
}

pub fn soft_recall(p: &PredictionFrame, t: &MaskFrame) -> Result<f64> {
    Ok(frame_overlap(p, t)?.recall())
}

pub fn f_beta(p: &PredictionFrame, t: &MaskFrame, beta: Beta) -> Result<f64> {
    Ok(frame_overlap(p, t)?.f_beta(beta))
}

/// `1 − f_beta`.
pub fn loss(p: &PredictionFrame, t: &MaskFrame, beta: Beta) -> Result<f64> {
    Ok(frame_overlap(p, t)?.loss(beta))
}

pub fn grad_loss(p: &PredictionFrame, t: &MaskFrame, beta: Beta) -> Result<Vec<f64>> {
    let overlap = frame_overlap(p, t)?;
    let mut grad = vec![0.0; p.as_slice().len()];
    loss_gradient_into(&overlap, t.as_slice(), beta, &mut grad);
    Ok(grad)
}

/// Binarizes `p` at `threshold` (`pᵢ ≥ threshold` is foreground) and
/// scores it with the same smoothed formulas.
pub fn hard_metrics(p: &PredictionFrame, t: &MaskFrame, threshold: f64) -> Result<ScoreTriple> {
    check_threshold(threshold)?;
    same_shape(p, t)?;
    Ok(Overlap::hard(p.as_slice(), t.as_slice(), threshold).scores())
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )))
    }
}

/// Arithmetic mean of per-frame scores.
pub fn aggregate_framewise(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut acc = CompensatedSum::default();
    for &s in scores {
        acc.add(s);
    }
    Ok(acc.value() / scores.len() as f64)
}

fn same_volume_shape(p: &PredictionVolume, t: &MaskVolume) -> Result<()> {
    if p.shape() != t.shape() {
        return Err(Error::shape(
            "prediction vs target volume",
            &t.shape().dims(),
            &p.shape().dims(),
        ));
    }
    Ok(())
}

/// Soft scores with sums running over every voxel of the volume at once.
pub fn score_volumewise(p: &PredictionVolume, t: &MaskVolume) -> Result<ScoreTriple> {
    same_volume_shape(p, t)?;
    Ok(Overlap::soft(p.as_slice(), t.as_slice()).scores())
}

pub fn hard_volumewise(p: &PredictionVolume, t: &MaskVolume, threshold: f64) -> Result<ScoreTriple> {
    check_threshold(threshold)?;
    same_volume_shape(p, t)?;
    Ok(Overlap::hard(p.as_slice(), t.as_slice(), threshold).scores())
}

/// Volume-wise scores of one binary mask against another.
pub fn mask_scores(predicted: &MaskVolume, target: &MaskVolume) -> Result<ScoreTriple> {
    if predicted.shape() != target.shape() {
        return Err(Error::shape(
            "mask vs mask",
            &target.shape().dims(),
            &predicted.shape().dims(),
        ));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&a, &b) in predicted.as_slice().iter().zip(target.as_slice()) {
        match (a != 0, b != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Overlap {
        tp: tp as f64,
        fp: fp as f64,
        fn_: fn_ as f64,
    }
    .scores())
}

pub mod gradcheck {
    //! Central finite-difference verification of [`grad_loss`](super::grad_loss).

    use super::*;

    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct GradCheck {
        pub max_abs_error: f64,
        pub max_rel_error: f64,
    }

    /// Relative error `|a − n| / max(|a|, |n|)`, with a tiny floor so two
    /// exact zeros compare equal.
    pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-300)
    }

    /// Perturbs each pixel by `±eps` and compares the central difference of
    /// the loss with the analytic gradient.
    pub fn check_loss_gradient(p: &PredictionFrame, t: &MaskFrame, beta: Beta, eps: f64) -> Result<GradCheck> {
        let analytic = grad_loss(p, t, beta)?;
        let mut probe = p.as_slice().to_vec();
        let mut worst = GradCheck {
            max_abs_error: 0.0,
            max_rel_error: 0.0,
        };
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = Overlap::soft(&probe, t.as_slice()).loss(beta);
            probe[i] = orig - eps;
            let down = Overlap::soft(&probe, t.as_slice()).loss(beta);
            probe[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst.max_abs_error = worst.max_abs_error.max((a - numeric).abs());
            worst.max_rel_error = worst.max_rel_error.max(relative_error(a, numeric));
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent scalar reductions straight from the formulas, without
    /// the `Overlap` path.
    fn naive(p: &[f64], t: &[u8]) -> (f64, f64, f64) {
        let mut pt = 0.0;
        let mut ps = 0.0;
        let mut ts = 0.0;
        let mut p1t = 0.0;
        let mut q1t = 0.0;
        for (&pi, &ti) in p.iter().zip(t) {
            let ti = f64::from(ti);
            pt += pi * ti;
            ps += pi;
            ts += ti;
            p1t += pi * (1.0 - ti);
            q1t += (1.0 - pi) * ti;
        }
        let dice = (2.0 * pt + 1.0) / (ps + ts + 1.0);
        let prec = (pt + 1.0) / (pt + p1t + 1.0);
        let rec = (pt + 1.0) / (pt + q1t + 1.0);
        (dice, prec, rec)
    }

    fn mask(h: usize, w: usize, on: &[usize]) -> MaskFrame {
        let mut data = vec![0u8; h * w];
        for &i in on {
            data[i] = 1;
        }
        MaskFrame::new(h, w, data).unwrap()
    }

    fn pred_from(m: &MaskFrame) -> PredictionFrame {
        PredictionFrame::from_mask(m)
    }

    fn beta(b: f64) -> Beta {
        Beta::new(b).unwrap()
    }

    fn arb_pair(n: usize) -> impl Strategy<Value = (PredictionFrame, MaskFrame)> {
        (
            proptest::collection::vec(0.0f64..=1.0, n * n),
            proptest::collection::vec(0u8..=1, n * n),
        )
            .prop_map(move |(p, t)| {
                (
                    PredictionFrame::new(n, n, p).unwrap(),
                    MaskFrame::new(n, n, t).unwrap(),
                )
            })
    }

    #[test]
    fn dice_examples() {
        let t = mask(4, 4, &(0..10).collect::<Vec<_>>());
        assert_eq!(soft_dice(&pred_from(&t), &t).unwrap(), 1.0);

        let t5 = mask(4, 4, &[0, 1, 2, 3, 4]);
        let zeros = PredictionFrame::uniform(4, 4, 0.0).unwrap();
        assert!((soft_dice(&zeros, &t5).unwrap() - 1.0 / 6.0).abs() < 1e-15);

        let empty = MaskFrame::zeros(4, 4);
        assert_eq!(soft_dice(&zeros, &empty).unwrap(), 1.0);
    }

    #[test]
    fn precision_examples() {
        // 4 TP and 4 FP.
        let t = mask(4, 4, &[0, 1, 2, 3]);
        let p = pred_from(&mask(4, 4, &[0, 1, 2, 3, 8, 9, 10, 11]));
        assert!((soft_precision(&p, &t).unwrap() - 5.0 / 9.0).abs() < 1e-15);

        let inner = pred_from(&mask(4, 4, &[1, 2]));
        assert_eq!(soft_precision(&inner, &t).unwrap(), 1.0);

        let zeros = PredictionFrame::uniform(4, 4, 0.0).unwrap();
        assert_eq!(soft_precision(&zeros, &t).unwrap(), 1.0);
    }

    #[test]
    fn recall_examples() {
        let t = mask(4, 4, &[0, 1, 2, 3, 4, 5]);
        let p = pred_from(&mask(4, 4, &[0, 1, 2, 3]));
        assert!((soft_recall(&p, &t).unwrap() - 5.0 / 7.0).abs() < 1e-15);

        let outer = pred_from(&mask(4, 4, &[0, 1, 2, 3, 4, 5, 6, 7]));
        assert_eq!(soft_recall(&outer, &t).unwrap(), 1.0);

        let empty = MaskFrame::zeros(4, 4);
        assert_eq!(soft_recall(&outer, &empty).unwrap(), 1.0);
    }

    #[test]
    fn f_beta_substitution() {
        // tp = 0 gives P = 1/(fp+1) and R = 1/(fn+1): fp = 1 → P = 0.5,
        // fn = 0 → R = 1.
        let t = MaskFrame::zeros(2, 2);
        let p = pred_from(&mask(2, 2, &[0]));
        let o = frame_overlap(&p, &t).unwrap();
        assert_eq!((o.precision(), o.recall()), (0.5, 1.0));
        assert!((f_beta(&p, &t, Beta::ONE).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f_beta_zero_is_precision_bitwise() {
        let t = mask(3, 3, &[0, 4, 8]);
        let p = PredictionFrame::new(3, 3, vec![0.3, 0.7, 0.1, 0.9, 0.2, 0.4, 0.6, 0.5, 0.8]).unwrap();
        assert_eq!(
            f_beta(&p, &t, beta(0.0)).unwrap().to_bits(),
            soft_precision(&p, &t).unwrap().to_bits()
        );
    }

    #[test]
    fn smoothed_f1_closed_form() {
        // Σp = 0 against 5 target pixels: f₁ = 2(0+1)/(0+5+2) = 2/7, whereas
        // the smoothed dice is 1/6.
        let t5 = mask(4, 4, &[0, 1, 2, 3, 4]);
        let zeros = PredictionFrame::uniform(4, 4, 0.0).unwrap();
        assert!((f_beta(&zeros, &t5, Beta::ONE).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        assert!((loss(&zeros, &t5, Beta::ONE).unwrap() - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let t = mask(4, 4, &[1, 5, 6]);
        assert_eq!(loss(&pred_from(&t), &t, Beta::ONE).unwrap(), 0.0);

        let half = PredictionFrame::uniform(4, 4, 0.5).unwrap();
        let (_, prec, rec) = naive(half.as_slice(), t.as_slice());
        for b in [0.0, 0.5, 1.0, 2.0] {
            let b2 = b * b;
            let expected = 1.0 - (1.0 + b2) * prec * rec / (b2 * prec + rec);
            assert!((loss(&half, &t, beta(b)).unwrap() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_signs() {
        // Empty target, β = 0: raising any pᵢ only adds false positives.
        let empty = MaskFrame::zeros(4, 4);
        let p = PredictionFrame::new(4, 4, (0..16).map(|i| 0.05 + 0.05 * i as f64).collect()).unwrap();
        assert!(grad_loss(&p, &empty, beta(0.0)).unwrap().iter().all(|&g| g >= 0.0));

        // Perfect binary prediction, β = 1: TP pixels never want to drop.
        let t = mask(4, 4, &[0, 1, 5, 6]);
        let g = grad_loss(&pred_from(&t), &t, Beta::ONE).unwrap();
        for i in [0, 1, 5, 6] {
            assert!(g[i] <= 0.0);
        }
    }

    #[test]
    fn hard_metrics_containment() {
        use crate::morphology::{dilate, erode};
        let t = MaskFrame::from_fn(12, 12, |y, x| (3..9).contains(&y) && (2..10).contains(&x));
        assert_eq!(hard_metrics(&pred_from(&t), &t, 0.5).unwrap(), ScoreTriple::PERFECT);
        assert_eq!(hard_metrics(&pred_from(&erode(&t, 1)), &t, 0.5).unwrap().precision, 1.0);
        assert_eq!(hard_metrics(&pred_from(&dilate(&t, 2)), &t, 0.5).unwrap().recall, 1.0);
        assert!(hard_metrics(&pred_from(&t), &t, 1.0).is_err());
    }

    #[test]
    fn framewise_aggregation() {
        assert!((aggregate_framewise(&[0.8, 1.0]).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(aggregate_framewise(&[0.37]).unwrap(), 0.37);
        assert!(matches!(aggregate_framewise(&[]), Err(Error::EmptyScores)));
    }

    #[test]
    fn volumewise_single_frame_equals_framewise() {
        let t = mask(4, 4, &[0, 1, 2, 7]);
        let p = PredictionFrame::new(4, 4, (0..16).map(|i| (i as f64) / 16.0).collect()).unwrap();
        let vol_t = MaskVolume::from_frames(std::slice::from_ref(&t)).unwrap();
        let vol_p = PredictionVolume::new(vol_t.shape(), p.as_slice().to_vec()).unwrap();
        let v = score_volumewise(&vol_p, &vol_t).unwrap();
        let o = frame_overlap(&p, &t).unwrap();
        assert_eq!(v, o.scores());
    }

    #[test]
    fn volumewise_weights_by_size() {
        // Frame A: 10-pixel target, prediction covers 3 of them → dice 7/14 = 0.5.
        // Frame B: 1000-pixel target, prediction covers 818 → dice 1637/1819 ≈ 0.9.
        let (h, w) = (40, 40);
        let ta = MaskFrame::from_fn(h, w, |y, x| y * w + x < 10);
        let pa = MaskFrame::from_fn(h, w, |y, x| y * w + x < 3);
        let tb = MaskFrame::from_fn(h, w, |y, x| y * w + x < 1000);
        let pb = MaskFrame::from_fn(h, w, |y, x| y * w + x < 818);
        let da = soft_dice(&pred_from(&pa), &ta).unwrap();
        let db = soft_dice(&pred_from(&pb), &tb).unwrap();
        assert!((da - 0.5).abs() < 1e-12);
        assert!((db - 0.9).abs() < 1e-3);
        let t = MaskVolume::from_frames(&[ta, tb]).unwrap();
        let p = PredictionVolume::from_mask(&MaskVolume::from_frames(&[pa, pb]).unwrap());
        let v = score_volumewise(&p, &t).unwrap().dice;
        assert!(v > da && v < db);
        assert!((v - db).abs() < (v - da).abs());
    }

    #[test]
    fn volumewise_empty_pair_is_perfect() {
        let t = MaskVolume::zeros(Shape3::new(3, 4, 4));
        let p = PredictionVolume::from_mask(&t);
        assert_eq!(score_volumewise(&p, &t).unwrap(), ScoreTriple::PERFECT);
        assert_eq!(mask_scores(&t, &t).unwrap(), ScoreTriple::PERFECT);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PredictionFrame::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(PredictionFrame::new(1, 2, vec![0.5, f64::NAN]).is_err());
        assert!(Beta::new(-0.1).is_err());
        let p = PredictionFrame::uniform(2, 2, 0.5).unwrap();
        assert!(matches!(
            soft_dice(&p, &MaskFrame::zeros(2, 3)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn gradcheck_detects_wrong_gradient() {
        // A perturbed loss must disagree with the analytic gradient.
        let t = mask(4, 4, &[0, 1, 5]);
        let p = PredictionFrame::uniform(4, 4, 0.4).unwrap();
        let ok = gradcheck::check_loss_gradient(&p, &t, beta(0.7), 1e-4).unwrap();
        assert!(ok.max_rel_error < 1e-6, "{ok:?}");
        let g = grad_loss(&p, &t, beta(0.7)).unwrap();
        let numeric_scaled = g[0] * 1.01;
        assert!(gradcheck::relative_error(g[0], numeric_scaled) > 5e-3);
    }

    proptest! {
        #[test]
        fn overlap_matches_naive_reduction((p, t) in arb_pair(8)) {
            let (d, pr, re) = naive(p.as_slice(), t.as_slice());
            prop_assert!((soft_dice(&p, &t).unwrap() - d).abs() < 1e-12);
            prop_assert!((soft_precision(&p, &t).unwrap() - pr).abs() < 1e-12);
            prop_assert!((soft_recall(&p, &t).unwrap() - re).abs() < 1e-12);
        }

        #[test]
        fn scores_in_unit_interval((p, t) in arb_pair(6), b in 0.0f64..5.0) {
            for s in [
                soft_dice(&p, &t).unwrap(),
                soft_precision(&p, &t).unwrap(),
                soft_recall(&p, &t).unwrap(),
                f_beta(&p, &t, beta(b)).unwrap(),
            ] {
                prop_assert!(s > 0.0 && s <= 1.0 + 1e-15, "{}", s);
            }
        }

        #[test]
        fn f_beta_between_precision_and_recall((p, t) in arb_pair(6), b in 0.0f64..50.0) {
            let pr = soft_precision(&p, &t).unwrap();
            let re = soft_recall(&p, &t).unwrap();
            let f = f_beta(&p, &t, beta(b)).unwrap();
            prop_assert!(f >= pr.min(re) - 1e-12 && f <= pr.max(re) + 1e-12);
        }

        #[test]
        fn f_beta_large_beta_tends_to_recall((p, t) in arb_pair(16)) {
            let re = soft_recall(&p, &t).unwrap();
            prop_assert!((f_beta(&p, &t, beta(1e3)).unwrap() - re).abs() < 1e-3);
        }

        #[test]
        fn f1_equals_smoothed_harmonic_form((p, t) in arb_pair(8)) {
            let o = Overlap::soft(p.as_slice(), t.as_slice());
            let closed = 2.0 * (o.tp + 1.0) / (2.0 * o.tp + o.fp + o.fn_ + 2.0);
            prop_assert!((f_beta(&p, &t, Beta::ONE).unwrap() - closed).abs() < 1e-12);
        }

        #[test]
        fn binary_self_match_is_perfect(t in proptest::collection::vec(0u8..=1, 36)) {
            let t = MaskFrame::new(6, 6, t).unwrap();
            let p = pred_from(&t);
            prop_assert_eq!(soft_dice(&p, &t).unwrap(), 1.0);
            prop_assert_eq!(hard_metrics(&p, &t, 0.5).unwrap(), ScoreTriple::PERFECT);
        }

        #[test]
        fn gradient_matches_finite_differences(
            p in proptest::collection::vec(0.05f64..0.95, 64),
            t in proptest::collection::vec(0u8..=1, 64),
            b in prop::sample::select(vec![0.0, 0.4, 1.0, 2.0]),
        ) {
            let p = PredictionFrame::new(8, 8, p).unwrap();
            let t = MaskFrame::new(8, 8, t).unwrap();
            let check = gradcheck::check_loss_gradient(&p, &t, beta(b), 1e-4).unwrap();
            prop_assert!(check.max_rel_error < 1e-4, "{:?}", check);
        }
    }
}
