//! A per-pixel linear-logistic segmenter trained by full-batch gradient
//! descent on the mean per-frame f-beta loss, and the beta × noise-level
//! grid search built on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_framewise, hard_volumewise, loss_gradient_into, Beta, Overlap, PredictionFrame,
    PredictionVolume, ScoreTriple, DEFAULT_THRESHOLD,
};
use crate::noise::{corrupt_masks, NoiseMode, NoiseSpec};
use crate::rng::mix;
use crate::volume::{zscore_normalize, DatasetSplit, MaskVolume, PatientRecord, Shape3};

/// Features computed from one image channel.
pub const FEATURES_PER_CHANNEL: usize = 4;

/// Pixel-major feature matrix for one frame: pixel `i` owns
/// `data[i * arity..(i + 1) * arity]`. The last feature is the constant 1.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    height: usize,
    width: usize,
    arity: usize,
    data: Vec<f64>,
}

impl FeatureStack {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.arity..(i + 1) * self.arity]
    }
}

/// Summed-area table with a zero border row and column.
struct Integral {
    w1: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(pixels: &[f32], height: usize, width: usize) -> Self {
        let w1 = width + 1;
        let mut sum = vec![0.0; (height + 1) * w1];
        let mut sq = vec![0.0; (height + 1) * w1];
        for y in 0..height {
            let (mut row, mut row_sq) = (0.0, 0.0);
            for x in 0..width {
                let v = f64::from(pixels[y * width + x]);
                row += v;
                row_sq += v * v;
                sum[(y + 1) * w1 + x + 1] = sum[y * w1 + x + 1] + row;
                sq[(y + 1) * w1 + x + 1] = sq[y * w1 + x + 1] + row_sq;
            }
        }
        Self { w1, sum, sq }
    }

    /// Sums over the clipped window; zero padding means the divisor is
    /// always the full window size.
    fn window(&self, y: usize, x: usize, r: usize, height: usize, width: usize) -> (f64, f64) {
        let y0 = y.saturating_sub(r);
        let x0 = x.saturating_sub(r);
        let y1 = (y + r + 1).min(height);
        let x1 = (x + r + 1).min(width);
        let at = |t: &[f64], yy: usize, xx: usize| t[yy * self.w1 + xx];
        let s = at(&self.sum, y1, x1) - at(&self.sum, y0, x1) - at(&self.sum, y1, x0) + at(&self.sum, y0, x0);
        let q = at(&self.sq, y1, x1) - at(&self.sq, y0, x1) - at(&self.sq, y1, x0) + at(&self.sq, y0, x0);
        (s, q)
    }
}

fn push_channel_features(out: &mut [f64], arity: usize, offset: usize, pixels: &[f32], height: usize, width: usize) {
    let integral = Integral::new(pixels, height, width);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let (s3, q3) = integral.window(y, x, 1, height, width);
            let (s7, _) = integral.window(y, x, 3, height, width);
            let mean3 = s3 / 9.0;
            let var3 = (q3 / 9.0 - mean3 * mean3).max(0.0);
            let f = &mut out[i * arity + offset..i * arity + offset + FEATURES_PER_CHANNEL];
            f[0] = f64::from(pixels[i]);
            f[1] = mean3;
            f[2] = var3.sqrt();
            f[3] = s7 / 49.0;
        }
    }
}

/// Features of a single channel: intensity, 3×3 mean, 3×3 standard
/// deviation, 7×7 mean (zero padded) and the constant 1.
pub fn extract_features(pixels: &[f32], height: usize, width: usize) -> Result<FeatureStack> {
    extract_multichannel_features(&[pixels], height, width)
}

/// Concatenates the four per-channel features of every channel, followed by
/// one shared constant feature.
pub fn extract_multichannel_features(channels: &[&[f32]], height: usize, width: usize) -> Result<FeatureStack> {
    let n = height * width;
    for c in channels {
        if c.len() != n {
            return Err(Error::shape("feature channel", &[n], &[c.len()]));
        }
    }
    let arity = channels.len() * FEATURES_PER_CHANNEL + 1;
    let mut data = vec![0.0; n * arity];
    for (ci, c) in channels.iter().enumerate() {
        push_channel_features(&mut data, arity, ci * FEATURES_PER_CHANNEL, c, height, width);
    }
    for i in 0..n {
        data[i * arity + arity - 1] = 1.0;
    }
    Ok(FeatureStack {
        height,
        width,
        arity,
        data,
    })
}

#[inline]
fn logistic(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSegmenter {
    pub weights: Vec<f64>,
}

impl LinearSegmenter {
    pub fn zeros(arity: usize) -> Self {
        Self {
            weights: vec![0.0; arity],
        }
    }

    fn scores_into(&self, features: &FeatureStack, out: &mut [f64]) {
        for (i, p) in out.iter_mut().enumerate() {
            let x = features.pixel(i);
            let s: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum();
            *p = logistic(s);
        }
    }

    pub fn predict(&self, features: &FeatureStack) -> Result<PredictionFrame> {
        if features.arity != self.weights.len() {
            return Err(Error::ArityMismatch {
                weights: self.weights.len(),
                features: features.arity,
            });
        }
        let mut p = vec![0.0; features.pixels()];
        self.scores_into(features, &mut p);
        PredictionFrame::new(features.height, features.width, p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta: Beta,
    pub seed: u64,
    /// Standard deviation of the initial weights; 0 starts from all zeros.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5.0,
            epochs: 60,
            beta: Beta::ONE,
            seed: 0,
            init_scale: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidParameter("init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One training example: a frame's features and its (possibly corrupted)
/// target mask.
#[derive(Clone, Copy, Debug)]
pub struct TrainingFrame<'a> {
    pub features: &'a FeatureStack,
    pub target: &'a [u8],
}

/// Mean per-frame loss and its gradient with respect to the weights.
/// Frames are reduced in input order, so the result does not depend on
/// the thread count.
pub fn objective_and_gradient(model: &LinearSegmenter, frames: &[TrainingFrame<'_>], beta: Beta) -> (f64, Vec<f64>) {
    let arity = model.weights.len();
    let per_frame: Vec<(f64, Vec<f64>)> = frames
        .par_iter()
        .map(|f| {
            let n = f.features.pixels();
            let mut p = vec![0.0; n];
            model.scores_into(f.features, &mut p);
            let overlap = Overlap::soft(&p, f.target);
            let mut dl_dp = vec![0.0; n];
            loss_gradient_into(&overlap, f.target, beta, &mut dl_dp);
            let mut g = vec![0.0; arity];
            for i in 0..n {
                let chain = dl_dp[i] * p[i] * (1.0 - p[i]);
                for (gj, xj) in g.iter_mut().zip(f.features.pixel(i)) {
                    *gj += chain * xj;
                }
            }
            (overlap.loss(beta), g)
        })
        .collect();

    let scale = 1.0 / frames.len() as f64;
    let mut grad = vec![0.0; arity];
    let mut losses = Vec::with_capacity(frames.len());
    for (l, g) in per_frame {
        losses.push(l);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b * scale;
        }
    }
    (aggregate_framewise(&losses).unwrap_or(0.0), grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: LinearSegmenter,
    /// Objective value at the start of every epoch, followed by the value
    /// after the final update.
    pub history: Vec<f64>,
}

pub fn train(frames: &[TrainingFrame<'_>], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidParameter("training set is empty".into()))?;
    let arity = first.features.arity();
    if let Some(bad) = frames.iter().find(|f| f.features.arity() != arity) {
        return Err(Error::ArityMismatch {
            weights: arity,
            features: bad.features.arity(),
        });
    }

    let mut model = LinearSegmenter::zeros(arity);
    if config.init_scale > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for w in &mut model.weights {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = config.init_scale * z;
        }
    }

    let mut history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let (loss, grad) = objective_and_gradient(&model, frames, config.beta);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        history.push(loss);
        if epoch == config.epochs {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
    }
    Ok(TrainOutcome { model, history })
}

/// A patient with z-scored features for every frame and its clean mask.
#[derive(Clone, Debug)]
pub struct PreparedPatient {
    pub patient_id: String,
    pub shape: Shape3,
    pub frames: Vec<FeatureStack>,
    pub mask: MaskVolume,
}

/// Z-scores every record and extracts features from all modalities.
pub fn prepare(records: &[PatientRecord]) -> Result<Vec<PreparedPatient>> {
    records
        .par_iter()
        .map(|rec| {
            let norm = zscore_normalize(&rec.volume)?;
            let shape = norm.shape();
            let frames = (0..shape.depth)
                .map(|z| {
                    let channels: Vec<&[f32]> = (0..norm.modalities().len()).map(|m| norm.frame(m, z)).collect();
                    extract_multichannel_features(&channels, shape.height, shape.width)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PreparedPatient {
                patient_id: rec.patient_id().to_string(),
                shape,
                frames,
                mask: rec.mask.clone(),
            })
        })
        .collect()
}

fn index_of(patients: &[PreparedPatient], id: &str) -> Result<usize> {
    patients
        .iter()
        .position(|p| p.patient_id == id)
        .ok_or_else(|| Error::UnknownPatient(id.to_string()))
}

/// Hard (threshold 0.5) volume-wise scores of `model` on the clean masks of
/// `ids`, averaged over patients.
pub fn evaluate(model: &LinearSegmenter, patients: &[PreparedPatient], ids: &[String]) -> Result<ScoreTriple> {
    let scores = ids
        .iter()
        .map(|id| {
            let pat = &patients[index_of(patients, id)?];
            let mut p = Vec::with_capacity(pat.shape.voxels());
            for f in &pat.frames {
                p.extend_from_slice(model.predict(f)?.as_slice());
            }
            hard_volumewise(&PredictionVolume::new(pat.shape, p)?, &pat.mask, DEFAULT_THRESHOLD)
        })
        .collect::<Result<Vec<_>>>()?;
    ScoreTriple::mean(&scores)
}

/// Trains on the train-subset frames against `train_masks` (aligned with
/// `patients`) and scores on the clean test masks.
pub fn train_and_score(
    patients: &[PreparedPatient],
    train_masks: &[MaskVolume],
    split: &DatasetSplit,
    config: &TrainConfig,
) -> Result<(TrainOutcome, ScoreTriple)> {
    if train_masks.len() != patients.len() {
        return Err(Error::shape("train masks", &[patients.len()], &[train_masks.len()]));
    }
    let mut frames = Vec::new();
    for id in &split.train_ids {
        let i = index_of(patients, id)?;
        let mask = &train_masks[i];
        for (z, f) in patients[i].frames.iter().enumerate() {
            frames.push(TrainingFrame {
                features: f,
                target: mask.frame_slice(z),
            });
        }
    }
    let outcome = train(&frames, config)?;
    let scores = evaluate(&outcome.model, patients, &split.test_ids)?;
    Ok((outcome, scores))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub mode: NoiseMode,
    pub betas: Vec<f64>,
    pub sigma2_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            mode: NoiseMode::Dilate,
            betas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            sigma2_values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            seeds: (0..10).collect(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub beta: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub test: ScoreTriple,
    pub final_loss: f64,
}

/// For every `(beta, sigma2, seed)`: corrupt the train/val masks, train
/// with that beta, and score on the clean test masks. Noise for a given
/// `(sigma2, seed)` is shared by all betas.
pub fn beta_gridsearch(
    patients: &[PreparedPatient],
    split: &DatasetSplit,
    config: &GridConfig,
) -> Result<Vec<GridCell>> {
    config.train.validate()?;
    let betas = config
        .betas
        .iter()
        .map(|&b| Beta::new(b))
        .collect::<Result<Vec<_>>>()?;

    let masks: Vec<(&str, &MaskVolume)> = patients.iter().map(|p| (p.patient_id.as_str(), &p.mask)).collect();

    let mut noisy = Vec::new();
    for &sigma2 in &config.sigma2_values {
        for &seed in &config.seeds {
            let spec = NoiseSpec::new(config.mode, sigma2, mix(seed, &[0x006e_6f69_7365]))?;
            let (masks, _) = corrupt_masks(&masks, split, &spec)?;
            noisy.push(((sigma2, seed), masks));
        }
    }

    let mut jobs = Vec::new();
    for &beta in &betas {
        for (idx, ((sigma2, seed), _)) in noisy.iter().enumerate() {
            jobs.push((beta, *sigma2, *seed, idx));
        }
    }
    jobs.into_par_iter()
        .map(|(beta, sigma2, seed, idx)| {
            let cfg = TrainConfig {
                beta,
                seed,
                ..config.train.clone()
            };
            let (outcome, test) = train_and_score(patients, &noisy[idx].1, split, &cfg)?;
            Ok(GridCell {
                beta: beta.value(),
                sigma2,
                seed,
                test,
                final_loss: *outcome.history.last().expect("history is nonempty"),
            })
        })
        .collect()
}

/// Mean test dice per `(beta, sigma2)` over seeds, in grid order.
pub fn mean_dice_grid(cells: &[GridCell]) -> Vec<(f64, f64, f64)> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for c in cells {
        if !keys.contains(&(c.beta, c.sigma2)) {
            keys.push((c.beta, c.sigma2));
        }
    }
    keys.into_iter()
        .map(|(b, s)| {
            let vals: Vec<f64> = cells
                .iter()
                .filter(|c| c.beta == b && c.sigma2 == s)
                .map(|c| c.test.dice)
                .collect();
            (b, s, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}
