use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use segnoise_core::metrics::gradcheck::check_loss_gradient;
use segnoise_core::metrics::{hard_volumewise, score_volumewise};
use segnoise_core::noise::corrupt_dataset;
use segnoise_core::oracle::run_sweep;
use segnoise_core::report::{
    grid_heatmap_svg, oracle_score_table, oracle_svg, write_curve_csv, write_grid_csv, ScoreTable, METRICS,
};
use segnoise_core::trainer::{beta_gridsearch, mean_dice_grid, prepare, GridConfig};
use segnoise_core::volume::{bundle_dirs, load_prediction, write_patient, Subset};
use segnoise_core::{Beta, MaskFrame, PatientRecord, PredictionFrame, PredictionVolume, ScoreTriple};

use crate::config::ExperimentConfig;

pub enum Kind {
    Phantom,
    Corrupt { fold: usize },
    Oracle,
    Gridsearch,
    Gradcheck,
    Score {
        prediction: PathBuf,
        target: PathBuf,
        threshold: f64,
    },
}

/// Runs one command; `Ok(false)` means it completed but a validation
/// failed.
pub fn execute(kind: Kind, cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let inputs: Vec<&Path> = match &kind {
        Kind::Score {
            prediction, target, ..
        } => vec![prediction.as_path(), target.as_path()],
        _ => cfg.data.path.iter().map(PathBuf::as_path).collect(),
    };
    guard_inputs(&inputs, out)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    match kind {
        Kind::Phantom => phantom(cfg, out),
        Kind::Corrupt { fold } => corrupt(cfg, out, fold),
        Kind::Oracle => oracle(cfg, out),
        Kind::Gridsearch => gridsearch(cfg, out),
        Kind::Gradcheck => gradcheck(cfg, out),
        Kind::Score {
            prediction,
            target,
            threshold,
        } => score(&prediction, &target, threshold, out),
    }
}

/// Refuses output directories that overlap an input, so inputs are never
/// written to.
fn guard_inputs(inputs: &[&Path], out: &Path) -> Result<()> {
    let out_abs = absolute(out);
    for input in inputs {
        let in_abs = absolute(input);
        if out_abs.starts_with(&in_abs) || in_abs.starts_with(&out_abs) {
            bail!(
                "output directory {} overlaps input {}",
                out.display(),
                input.display()
            );
        }
    }
    Ok(())
}

fn absolute(p: &Path) -> PathBuf {
    p.canonicalize()
        .or_else(|_| std::path::absolute(p))
        .unwrap_or_else(|_| p.to_path_buf())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_resolved(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut resolved = cfg.clone();
    resolved.output_dir = None;
    write_text(&out.join("config.toml"), &resolved.to_toml()?)
}

fn phantom(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let records = cfg.load_records()?;
    records
        .par_iter()
        .map(|r| write_patient(r, out.join(r.patient_id())).map_err(anyhow::Error::from))
        .collect::<Result<Vec<()>>>()?;
    eprintln!("wrote {} phantom bundles to {}", records.len(), out.display());
    Ok(true)
}

fn corrupt(cfg: &ExperimentConfig, out: &Path, fold: usize) -> Result<bool> {
    let records = cfg.load_records()?;
    let plan = cfg.fold_plan(&records)?;
    let split = plan
        .folds
        .get(fold)
        .with_context(|| format!("fold {fold} out of range for {} folds", plan.folds.len()))?;
    let (masks, report) = corrupt_dataset(&records, split, &cfg.noise)?;

    let bundles = out.join("bundles");
    records
        .par_iter()
        .zip(masks)
        .map(|(r, mask)| {
            let id = r.patient_id();
            let rec = PatientRecord::new(r.volume.clone(), None, mask)
                .with_context(|| format!("patient {id}"))?;
            write_patient(&rec, bundles.join(id)).with_context(|| format!("patient {id}"))
        })
        .collect::<Result<Vec<()>>>()?;

    let mut w = create(&out.join("corruption.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_text(&out.join("split.json"), &(serde_json::to_string_pretty(split)? + "\n"))?;
    write_resolved(cfg, out)?;
    match report.mean_delta_s() {
        Some(d) => eprintln!("corrupted {} frames; mean size change {d:.4}", report.rows.len()),
        None => eprintln!("corrupted {} frames; size change undefined (empty masks)", report.rows.len()),
    }
    Ok(true)
}

fn oracle(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let records = cfg.load_records()?;
    let plan = cfg.fold_plan(&records)?;
    let curve = run_sweep(&records, &plan, &cfg.sweep)?;

    let mut w = create(&out.join("oracle_scores.csv"))?;
    oracle_score_table(&curve).write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("oracle_curve.csv"))?;
    write_curve_csv(&curve, &mut w)?;
    w.flush()?;
    for metric in METRICS {
        write_text(&out.join(format!("oracle_{metric}.svg")), &oracle_svg(&curve, metric))?;
    }
    write_resolved(cfg, out)?;
    for p in &curve.points {
        eprintln!(
            "{:<6} sigma2={:<4} dice={:.4} precision={:.4} recall={:.4}",
            p.mode, p.sigma2, p.mean.dice, p.mean.precision, p.mean.recall
        );
    }
    Ok(true)
}

fn gridsearch(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let records = cfg.load_records()?;
    let plan = cfg.fold_plan(&records)?;
    let split = &plan.folds[cfg.grid.fold];
    let patients = prepare(&records)?;
    let grid = GridConfig {
        mode: cfg.grid.mode,
        betas: cfg.grid.betas.clone(),
        sigma2_values: cfg.grid.sigma2_values.clone(),
        seeds: cfg.grid.seeds.clone(),
        train: cfg.train.clone(),
    };
    let cells = beta_gridsearch(&patients, split, &grid)?;

    let mut w = create(&out.join("grid.csv"))?;
    write_grid_csv(&cells, &mut w)?;
    w.flush()?;

    let mut table = ScoreTable::default();
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for c in &cells {
        if !keys.contains(&(c.beta, c.sigma2)) {
            keys.push((c.beta, c.sigma2));
        }
    }
    for (beta, sigma2) in keys {
        let group: Vec<ScoreTriple> = cells
            .iter()
            .filter(|c| c.beta == beta && c.sigma2 == sigma2)
            .map(|c| c.test)
            .collect();
        table.push_triple(
            Some(grid.mode),
            Some(sigma2),
            Some(beta),
            Some(cfg.grid.fold),
            Some(Subset::Test),
            &ScoreTriple::mean(&group)?,
        );
    }
    let mut w = create(&out.join("grid_scores.csv"))?;
    table.write_csv(&mut w)?;
    w.flush()?;
    write_text(&out.join("grid_heatmap.svg"), &grid_heatmap_svg(&cells))?;
    write_resolved(cfg, out)?;
    for (beta, sigma2, dice) in mean_dice_grid(&cells) {
        eprintln!("beta={beta:<4} sigma2={sigma2:<4} mean test dice={dice:.4}");
    }
    Ok(true)
}

/// Below this step, rounding error in the loss difference swamps the
/// truncation error of the central difference.
const CANCELLATION_EPS: f64 = 1e-8;

fn gradcheck(cfg: &ExperimentConfig, out: &Path) -> Result<bool> {
    let g = &cfg.gradcheck;
    if g.eps < CANCELLATION_EPS {
        eprintln!(
            "warning: eps {:e} is below {CANCELLATION_EPS:e}; floating-point cancellation will dominate the finite differences",
            g.eps
        );
    }
    let betas = g
        .betas
        .iter()
        .map(|&b| Beta::new(b))
        .collect::<segnoise_core::Result<Vec<_>>>()?;
    let rows = (0..g.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let n = g.height * g.width;
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
            let t: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
            let p = PredictionFrame::new(g.height, g.width, p)?;
            let t = MaskFrame::new(g.height, g.width, t)?;
            betas
                .iter()
                .map(|&b| Ok((trial, b.value(), check_loss_gradient(&p, &t, b, g.eps)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut w = csv::Writer::from_writer(create(&out.join("gradcheck.csv"))?);
    w.write_record(["trial", "beta", "max_abs_error", "max_rel_error"])?;
    let mut worst = 0.0_f64;
    for (trial, beta, r) in rows.iter().flatten() {
        worst = worst.max(r.max_rel_error);
        w.write_record([
            trial.to_string(),
            beta.to_string(),
            r.max_abs_error.to_string(),
            r.max_rel_error.to_string(),
        ])?;
    }
    w.flush()?;
    let pass = worst < g.tolerance;
    println!(
        "gradcheck: {} trials, betas {:?}, eps {:e}: max relative error {worst:e} (tolerance {:e}) {}",
        g.trials,
        g.betas,
        g.eps,
        g.tolerance,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn score(prediction: &Path, target: &Path, threshold: f64, out: &Path) -> Result<bool> {
    if !(threshold > 0.0 && threshold < 1.0) {
        bail!("threshold must lie in (0, 1), got {threshold}");
    }
    let targets = segnoise_core::volume::load_dataset(target)
        .with_context(|| format!("loading targets {}", target.display()))?;
    let mut rows = Vec::new();
    for dir in bundle_dirs(prediction)? {
        let (id, shape, values) = load_prediction(&dir).with_context(|| format!("reading {}", dir.display()))?;
        let t = targets
            .iter()
            .find(|r| r.patient_id() == id)
            .with_context(|| format!("no target bundle for patient {id}"))?;
        let p = PredictionVolume::new(shape, values).with_context(|| format!("patient {id}"))?;
        let soft = score_volumewise(&p, &t.mask).with_context(|| format!("patient {id}"))?;
        let hard = hard_volumewise(&p, &t.mask, threshold).with_context(|| format!("patient {id}"))?;
        rows.push((id, soft, hard));
    }
    if rows.is_empty() {
        bail!("no prediction bundles under {}", prediction.display());
    }

    let mut w = csv::Writer::from_writer(create(&out.join("scores.csv"))?);
    w.write_record(["patient_id", "kind", "dice", "precision", "recall"])?;
    let mut emit = |id: &str, kind: &str, s: &ScoreTriple| {
        w.write_record([
            id.to_string(),
            kind.to_string(),
            s.dice.to_string(),
            s.precision.to_string(),
            s.recall.to_string(),
        ])
    };
    for (id, soft, hard) in &rows {
        emit(id, "soft", soft)?;
        emit(id, "hard", hard)?;
    }
    let soft_mean = ScoreTriple::mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>())?;
    let hard_mean = ScoreTriple::mean(&rows.iter().map(|r| r.2).collect::<Vec<_>>())?;
    emit("mean", "soft", &soft_mean)?;
    emit("mean", "hard", &hard_mean)?;
    w.flush()?;
    println!(
        "{} patients: soft dice {:.4} precision {:.4} recall {:.4}; hard dice {:.4} precision {:.4} recall {:.4}",
        rows.len(),
        soft_mean.dice,
        soft_mean.precision,
        soft_mean.recall,
        hard_mean.dice,
        hard_mean.precision,
        hard_mean.recall
    );
    Ok(true)
}
