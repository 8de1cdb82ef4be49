//! Optimization of the coarse, fine and boundary networks.
//!
//! The objective is `λ_RGB·L_RGB + λ_BD·L_BD + λ_S·L_S`: squared re-rendering
//! error of both heads, an L1 boundary term on rays the fine head sees as
//! mostly transparent (routed only into the fine density), and a smoothness
//! penalty on the boundary network over a small tile of directions. During
//! warm-up only the re-rendering term is active.

pub mod config;
pub mod loss;
pub mod optim;
pub mod pipeline;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::checkpoint::{load_weights_into, save_weights};
use crate::fields::FieldParams;
use crate::refindex::RefractiveGrid;

pub use config::{LossWeights, SamplingConfig, TrainConfig, CONFIG_VERSION};
pub use loss::LossBreakdown;
pub use optim::Adam;
pub use pipeline::{compute_gradients, render_image, render_rays, Medium, RayOutput, TrainingSet};

/// Ray ids for one step, drawn uniformly with replacement.
pub fn sample_batch(config: &TrainConfig, n_rays: usize, iteration: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(pipeline::derive_seed(config.seed, iteration as u64, u64::MAX));
    (0..config.batch_rays).map(|_| rng.gen_range(0..n_rays)).collect()
}

/// One optimizer update. Fails on a non-finite loss, reporting the batch.
pub fn train_step(
    config: &TrainConfig,
    data: &TrainingSet,
    medium: &Medium,
    params: &mut FieldParams,
    adam: &mut Adam,
    iteration: usize,
) -> Result<LossBreakdown> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training set has no rays".into()));
    }
    let batch = sample_batch(config, data.len(), iteration);
    let (loss, grads) = compute_gradients(config, params, medium, data, &batch, iteration, config.weights_at(iteration));
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NonFiniteLoss { iteration, batch });
    }
    adam.step(params, &grads, config.learning_rate(iteration));
    Ok(loss)
}

/// Initial parameters for a config's seed.
pub fn init_params(config: &TrainConfig) -> FieldParams {
    let mut rng = ChaCha8Rng::seed_from_u64(pipeline::derive_seed(config.seed, u64::MAX, 0));
    FieldParams::new(&config.fields, &mut rng)
}

pub struct Trainer {
    pub config: TrainConfig,
    pub params: FieldParams,
    pub medium: Medium,
    pub data: TrainingSet,
    adam: Adam,
    iteration: usize,
}

impl Trainer {
    /// `straight_paths` in the config replaces `medium` with straight rays.
    pub fn new(config: TrainConfig, medium: Medium, data: TrainingSet) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config);
        let medium = if config.straight_paths { Medium::Straight } else { medium };
        Ok(Trainer {
            adam: Adam::new(&params),
            config,
            params,
            medium,
            data,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    pub fn step(&mut self) -> Result<LossBreakdown> {
        let loss = train_step(&self.config, &self.data, &self.medium, &mut self.params, &mut self.adam, self.iteration)?;
        self.iteration += 1;
        Ok(loss)
    }

    /// Runs the remaining iterations, reporting each breakdown.
    pub fn run(&mut self, mut on_step: impl FnMut(&Trainer, &LossBreakdown) -> Result<()>) -> Result<Vec<LossBreakdown>> {
        let mut history = Vec::with_capacity(self.config.iterations.saturating_sub(self.iteration));
        while !self.is_done() {
            let loss = self.step()?;
            on_step(self, &loss)?;
            history.push(loss);
        }
        Ok(history)
    }
}

/// CSV log of per-iteration losses.
pub struct LossLog<W: Write> {
    out: W,
}

impl<W: Write> LossLog<W> {
    pub const HEADER: &'static str = "iteration,lr,l_rgb,l_bd,l_s,total";

    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{}", Self::HEADER)?;
        Ok(LossLog { out })
    }

    pub fn append(&mut self, loss: &LossBreakdown, lr: f64) -> std::io::Result<()> {
        writeln!(
            self.out,
            "{},{lr:e},{:e},{:e},{:e},{:e}",
            loss.iteration, loss.l_rgb, loss.l_bd, loss.l_s, loss.total
        )
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Parses a loss CSV back into `(iteration, l_rgb, l_bd, l_s, total)` rows.
pub fn read_loss_log(path: &Path) -> Result<Vec<[f64; 5]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format("loss log", e.to_string()))?;
            if v.len() != 6 {
                return Err(Error::format("loss log", format!("row has {} columns", v.len())));
            }
            Ok([v[0], v[2], v[3], v[4], v[5]])
        })
        .collect()
}

pub const SIDECAR_NAME: &str = "checkpoint.json";
pub const WEIGHTS_NAME: &str = "weights.eikw";
pub const GRID_NAME: &str = "grid.eikg";

/// JSON sidecar describing a weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub iteration: usize,
    pub near: f64,
    pub far: f64,
    pub config: TrainConfig,
    pub weights: String,
    /// Index grid file next to the sidecar; absent for straight rays.
    pub grid: Option<String>,
}

/// A loaded checkpoint ready for rendering.
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: FieldParams,
    pub medium: Medium,
}

impl Checkpoint {
    /// Writes weights (also as `weights_{iteration}.eikw` when `keep_history`),
    /// the grid and the sidecar into `dir`.
    pub fn save(dir: &Path, trainer: &Trainer, near: f64, far: f64, keep_history: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_weights(&trainer.params, &dir.join(WEIGHTS_NAME))?;
        if keep_history {
            save_weights(&trainer.params, &dir.join(format!("weights_{:06}.eikw", trainer.iteration())))?;
        }
        let grid = match &trainer.medium {
            Medium::Grid(g) => {
                g.save(&dir.join(GRID_NAME))?;
                Some(GRID_NAME.to_string())
            }
            Medium::Straight => None,
        };
        let meta = CheckpointMeta {
            version: CONFIG_VERSION,
            iteration: trainer.iteration(),
            near,
            far,
            config: trainer.config.clone(),
            weights: WEIGHTS_NAME.to_string(),
            grid,
        };
        let path = dir.join(SIDECAR_NAME);
        let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads from a checkpoint directory or its sidecar file.
    pub fn load(path: &Path) -> Result<Self> {
        let sidecar: PathBuf = if path.is_dir() { path.join(SIDECAR_NAME) } else { path.to_owned() };
        let dir = sidecar.parent().unwrap_or(Path::new(".")).to_owned();
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: sidecar.clone(),
            source,
        })?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != CONFIG_VERSION {
            return Err(Error::VersionMismatch {
                what: "checkpoint",
                found,
                expected: CONFIG_VERSION,
            });
        }
        let meta: CheckpointMeta = serde_json::from_value(value).map_err(|source| Error::Json {
            path: sidecar.clone(),
            source,
        })?;
        meta.config.validate()?;
        let mut params = init_params(&meta.config);
        load_weights_into(&dir.join(&meta.weights), &mut params)?;
        let medium = match &meta.grid {
            Some(g) => Medium::Grid(RefractiveGrid::load(&dir.join(g))?),
            None => Medium::Straight,
        };
        Ok(Checkpoint { meta, params, medium })
    }
}

/// Trains to completion, writing `losses.csv` and checkpoints to `out_dir`.
pub fn run_training(trainer: &mut Trainer, out_dir: &Path, near: f64, far: f64) -> Result<Vec<LossBreakdown>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = out_dir.join("losses.csv");
    let file = std::fs::File::create(&csv).map_err(|e| Error::io(&csv, e))?;
    let mut log = LossLog::new(std::io::BufWriter::new(file)).map_err(|e| Error::io(&csv, e))?;
    let every = trainer.config.checkpoint_every;
    let history = trainer.run(|t, loss| {
        log.append(loss, t.config.learning_rate(loss.iteration)).map_err(|e| Error::io(&csv, e))?;
        if loss.iteration % 100 == 0 {
            log::info!(
                "iter {:>6}  l_rgb {:.5}  l_bd {:.5}  l_s {:.2e}  total {:.5}",
                loss.iteration,
                loss.l_rgb,
                loss.l_bd,
                loss.l_s,
                loss.total
            );
        }
        if every > 0 && t.iteration() % every == 0 && !t.is_done() {
            log.flush().map_err(|e| Error::io(&csv, e))?;
            Checkpoint::save(out_dir, t, near, far, true)?;
        }
        Ok(())
    })?;
    log.flush().map_err(|e| Error::io(&csv, e))?;
    Checkpoint::save(out_dir, trainer, near, far, every > 0)?;
    Ok(history)
}
