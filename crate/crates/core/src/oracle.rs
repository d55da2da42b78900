//! Noise-robust oracle: a hypothetical model that reproduces the
//! annotator corruption exactly. Its scores are obtained by corrupting the
//! test masks and scoring them against the untouched originals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mask_scores, ScoreTriple};
use crate::noise::{corrupt_volume, NoiseMode, NoiseSpec};
use crate::rng::mix;
use crate::volume::{DatasetSplit, FoldPlan, PatientRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub modes: Vec<NoiseMode>,
    pub sigma2_values: Vec<f64>,
    pub repetitions: usize,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            modes: NoiseMode::ALL.to_vec(),
            sigma2_values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            repetitions: 20,
            base_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        if self.modes.is_empty() || self.sigma2_values.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one mode and one sigma2".into()));
        }
        for &s in &self.sigma2_values {
            NoiseSpec::new(NoiseMode::Dilate, s, 0)?;
        }
        Ok(())
    }

    /// Corruption seed of repetition `rep`. It deliberately ignores mode,
    /// sigma2 and fold, so every cell of one repetition shares the same
    /// per-frame normal draws.
    pub fn repetition_seed(&self, rep: usize) -> u64 {
        mix(self.base_seed, &[rep as u64])
    }
}

fn find<'a>(records: &'a [PatientRecord], id: &str) -> Result<&'a PatientRecord> {
    records
        .iter()
        .find(|r| r.patient_id() == id)
        .ok_or_else(|| Error::UnknownPatient(id.to_string()))
}

/// Corrupts each test mask, scores it volume-wise against its original and
/// averages over the test patients.
pub fn simulate_noise_robust(
    records: &[PatientRecord],
    split: &DatasetSplit,
    mode: NoiseMode,
    sigma2: f64,
    seed: u64,
) -> Result<ScoreTriple> {
    NoiseSpec::new(mode, sigma2, seed)?;
    let scores = split
        .test_ids
        .iter()
        .map(|id| {
            let rec = find(records, id)?;
            let (corrupted, _) = corrupt_volume(&rec.mask, id, mode, sigma2, seed);
            mask_scores(&corrupted, &rec.mask)
        })
        .collect::<Result<Vec<_>>>()?;
    ScoreTriple::mean(&scores)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleCell {
    pub mode: NoiseMode,
    pub sigma2: f64,
    pub fold: usize,
    pub rep: usize,
    pub scores: ScoreTriple,
}

/// Mean and sample standard deviation over folds and repetitions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub mode: NoiseMode,
    pub sigma2: f64,
    pub mean: ScoreTriple,
    pub std: ScoreTriple,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleCurve {
    pub cells: Vec<OracleCell>,
    pub points: Vec<CurvePoint>,
}

impl OracleCurve {
    pub fn point(&self, mode: NoiseMode, sigma2: f64) -> Option<&CurvePoint> {
        self.points
            .iter()
            .find(|p| p.mode == mode && p.sigma2 == sigma2)
    }

    /// Mean scores per `(mode, sigma2, fold)` averaged over repetitions,
    /// in canonical order.
    pub fn fold_means(&self) -> Vec<(NoiseMode, f64, usize, ScoreTriple)> {
        let mut out: Vec<(NoiseMode, f64, usize, ScoreTriple)> = Vec::new();
        let mut group: Vec<ScoreTriple> = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            group.push(c.scores);
            let last = self
                .cells
                .get(i + 1)
                .is_none_or(|n| (n.mode, n.sigma2, n.fold) != (c.mode, c.sigma2, c.fold));
            if last {
                out.push((c.mode, c.sigma2, c.fold, ScoreTriple::mean(&group).expect("nonempty group")));
                group.clear();
            }
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Evaluates every `(mode, sigma2, fold, repetition)` cell. Cells run in
/// parallel; the result order is canonical regardless of scheduling.
pub fn run_sweep(records: &[PatientRecord], plan: &FoldPlan, config: &SweepConfig) -> Result<OracleCurve> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &mode in &config.modes {
        for &sigma2 in &config.sigma2_values {
            for fold in 0..plan.folds.len() {
                for rep in 0..config.repetitions {
                    jobs.push((mode, sigma2, fold, rep));
                }
            }
        }
    }
    let cells = jobs
        .into_par_iter()
        .map(|(mode, sigma2, fold, rep)| {
            let scores = simulate_noise_robust(
                records,
                &plan.folds[fold],
                mode,
                sigma2,
                config.repetition_seed(rep),
            )?;
            Ok(OracleCell {
                mode,
                sigma2,
                fold,
                rep,
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    for &mode in &config.modes {
        for &sigma2 in &config.sigma2_values {
            let group: Vec<&OracleCell> = cells
                .iter()
                .filter(|c| c.mode == mode && c.sigma2 == sigma2)
                .collect();
            let stat = |f: fn(&ScoreTriple) -> f64| {
                mean_std(&group.iter().map(|c| f(&c.scores)).collect::<Vec<_>>())
            };
            let (dm, ds) = stat(|s| s.dice);
            let (pm, ps) = stat(|s| s.precision);
            let (rm, rs) = stat(|s| s.recall);
            points.push(CurvePoint {
                mode,
                sigma2,
                mean: ScoreTriple {
                    dice: dm,
                    precision: pm,
                    recall: rm,
                },
                std: ScoreTriple {
                    dice: ds,
                    precision: ps,
                    recall: rs,
                },
                n: group.len(),
            });
        }
    }
    Ok(OracleCurve { cells, points })
}
