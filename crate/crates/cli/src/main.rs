//! `segnoise`: experiment runner for annotation-noise studies.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, DEFAULT_OUT_DIR, OUT_DIR_ENV};
use segnoise_core::NoiseMode;

#[derive(Parser, Debug)]
#[command(name = "segnoise", version, about = "Simulate biased annotation noise and measure its effect on segmentation scores")]
struct Cli {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory. Falls back to the config file, then to
    /// $SEGNOISE_OUT_DIR, then to ./segnoise-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweep, grid and corruption jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    emit_default_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Directory of volume bundles; replaces the configured data source.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic phantom corpus as volume bundles.
    Phantom {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Corrupt the train and validation masks of one fold.
    Corrupt {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        mode: Option<NoiseMode>,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long)]
        noise_seed: Option<u64>,
        /// Fold whose split decides which masks are corrupted.
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Score corrupted test masks against the originals over a noise sweep.
    Oracle {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        mode: Option<Vec<NoiseMode>>,
        #[arg(long, value_delimiter = ',')]
        sigma2: Option<Vec<f64>>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        base_seed: Option<u64>,
    },
    /// Train the per-pixel model over a beta × sigma2 grid.
    Gridsearch {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        mode: Option<NoiseMode>,
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        sigma2: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Compare the analytic loss gradient with central differences.
    Gradcheck {
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<f64>>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score prediction bundles against mask bundles, matched by patient id.
    Score {
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = segnoise_core::metrics::DEFAULT_THRESHOLD)]
        threshold: f64,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_data(cfg: &mut ExperimentConfig, data: DataArgs) {
    if let Some(p) = data.data {
        cfg.data.path = Some(p);
        cfg.data.phantom = None;
    }
}

/// Folds flag values into the config and returns the command's kind.
fn apply_overrides(cfg: &mut ExperimentConfig, command: Command) -> commands::Kind {
    use commands::Kind;
    match command {
        Command::Phantom { count, seed } => {
            let p = cfg.data.phantom.get_or_insert_with(Default::default);
            set(&mut p.count, count);
            set(&mut p.seed, seed);
            Kind::Phantom
        }
        Command::Corrupt {
            data,
            mode,
            sigma2,
            noise_seed,
            fold,
        } => {
            apply_data(cfg, data);
            set(&mut cfg.noise.mode, mode);
            set(&mut cfg.noise.sigma2, sigma2);
            set(&mut cfg.noise.seed, noise_seed);
            Kind::Corrupt { fold }
        }
        Command::Oracle {
            data,
            mode,
            sigma2,
            repetitions,
            base_seed,
        } => {
            apply_data(cfg, data);
            set(&mut cfg.sweep.modes, mode);
            set(&mut cfg.sweep.sigma2_values, sigma2);
            set(&mut cfg.sweep.repetitions, repetitions);
            set(&mut cfg.sweep.base_seed, base_seed);
            Kind::Oracle
        }
        Command::Gridsearch {
            data,
            mode,
            beta,
            sigma2,
            seeds,
            epochs,
            learning_rate,
            fold,
        } => {
            apply_data(cfg, data);
            set(&mut cfg.grid.mode, mode);
            set(&mut cfg.grid.betas, beta);
            set(&mut cfg.grid.sigma2_values, sigma2);
            set(&mut cfg.grid.seeds, seeds);
            set(&mut cfg.grid.fold, fold);
            set(&mut cfg.train.epochs, epochs);
            set(&mut cfg.train.learning_rate, learning_rate);
            Kind::Gridsearch
        }
        Command::Gradcheck {
            height,
            width,
            trials,
            eps,
            beta,
            tolerance,
            seed,
        } => {
            let g = &mut cfg.gradcheck;
            set(&mut g.height, height);
            set(&mut g.width, width);
            set(&mut g.trials, trials);
            set(&mut g.eps, eps);
            set(&mut g.betas, beta);
            set(&mut g.tolerance, tolerance);
            set(&mut g.seed, seed);
            Kind::Gradcheck
        }
        Command::Score {
            prediction,
            target,
            threshold,
        } => Kind::Score {
            prediction,
            target,
            threshold,
        },
    }
}

fn run(cli: Cli) -> Result<bool> {
    if cli.emit_default_config {
        print!("{}", ExperimentConfig::default().to_toml()?);
        return Ok(true);
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no subcommand given; see --help");
    };

    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let kind = apply_overrides(&mut cfg, command);
    cfg.validate().context("invalid configuration")?;

    let out = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));

    let jobs = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;
    pool.install(|| commands::execute(kind, &cfg, &out))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
