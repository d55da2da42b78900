use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use segnoise_core::noise::{NoiseMode, NoiseSpec};
use segnoise_core::oracle::SweepConfig;
use segnoise_core::trainer::TrainConfig;
use segnoise_core::volume::{load_dataset, make_folds, FoldSizes, PhantomSpec};
use segnoise_core::volume::generate_corpus;
use segnoise_core::{FoldPlan, PatientRecord};

pub const OUT_DIR_ENV: &str = "SEGNOISE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "segnoise-out";

/// Top-level experiment file. Every section has defaults, so an empty file
/// is a valid phantom experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Overridden by `--out`, then by the environment variable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub folds: FoldConfig,
    pub noise: NoiseSpec,
    pub sweep: SweepConfig,
    pub train: TrainConfig,
    pub grid: GridSection,
    pub gradcheck: GradcheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: None,
            data: DataConfig::default(),
            folds: FoldConfig::default(),
            noise: NoiseSpec {
                mode: NoiseMode::Dilate,
                sigma2: 3.0,
                seed: 0,
            },
            sweep: SweepConfig::default(),
            train: TrainConfig::default(),
            grid: GridSection::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

/// Exactly one of `path` (a directory of bundles) or `phantom`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomSource>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            phantom: Some(PhantomSource::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSource {
    pub count: usize,
    pub seed: u64,
    pub spec: PhantomSpec,
}

impl Default for PhantomSource {
    fn default() -> Self {
        Self {
            count: 16,
            seed: 0,
            spec: PhantomSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldConfig {
    pub n_folds: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for FoldConfig {
    fn default() -> Self {
        Self {
            n_folds: 4,
            train: 10,
            val: 2,
            test: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub mode: NoiseMode,
    pub betas: Vec<f64>,
    pub sigma2_values: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Fold whose split is used for training and testing.
    pub fold: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = segnoise_core::trainer::GridConfig::default();
        Self {
            mode: g.mode,
            betas: g.betas,
            sigma2_values: g.sigma2_values,
            seeds: g.seeds,
            fold: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub height: usize,
    pub width: usize,
    pub trials: usize,
    pub eps: f64,
    pub betas: Vec<f64>,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            trials: 100,
            eps: 1e-4,
            betas: vec![0.0, 0.4, 1.0, 2.0],
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.path, &self.data.phantom) {
            (Some(_), Some(_)) => bail!("data: set either `path` or `phantom`, not both"),
            (None, None) => bail!("data: one of `path` or `phantom` is required"),
            (None, Some(p)) => {
                p.spec.validate()?;
                if p.count == 0 {
                    bail!("data.phantom.count must be >= 1");
                }
            }
            _ => {}
        }
        if self.folds.n_folds == 0 {
            bail!("folds.n_folds must be >= 1");
        }
        self.noise.validate()?;
        self.sweep.validate()?;
        self.train.validate()?;
        if self.train.learning_rate <= 0.0 {
            bail!("train.learning_rate must be > 0");
        }
        if self.grid.betas.is_empty() || self.grid.sigma2_values.is_empty() || self.grid.seeds.is_empty() {
            bail!("grid: betas, sigma2_values and seeds must be nonempty");
        }
        for &b in &self.grid.betas {
            segnoise_core::Beta::new(b)?;
        }
        for &s in &self.grid.sigma2_values {
            NoiseSpec::new(self.grid.mode, s, 0)?;
        }
        if self.grid.fold >= self.folds.n_folds {
            bail!("grid.fold {} is out of range for {} folds", self.grid.fold, self.folds.n_folds);
        }
        let g = &self.gradcheck;
        if g.height == 0 || g.width == 0 || g.trials == 0 {
            bail!("gradcheck: height, width and trials must be >= 1");
        }
        if !(g.eps > 0.0 && g.eps.is_finite()) {
            bail!("gradcheck.eps must be finite and > 0");
        }
        if !(g.tolerance > 0.0) {
            bail!("gradcheck.tolerance must be > 0");
        }
        for &b in &g.betas {
            segnoise_core::Beta::new(b)?;
        }
        Ok(())
    }

    pub fn load_records(&self) -> Result<Vec<PatientRecord>> {
        match (&self.data.path, &self.data.phantom) {
            (Some(path), _) => Ok(load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?),
            (None, Some(p)) => Ok(generate_corpus(&p.spec, p.count, p.seed)?),
            (None, None) => bail!("no data source configured"),
        }
    }

    pub fn fold_plan(&self, records: &[PatientRecord]) -> Result<FoldPlan> {
        let ids: Vec<String> = records.iter().map(|r| r.patient_id().to_string()).collect();
        let f = &self.folds;
        Ok(make_folds(
            &ids,
            f.n_folds,
            FoldSizes::new(f.train, f.val, f.test),
            f.seed,
        )?)
    }
}
