use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{BoundaryNetConfig, FieldConfig, RadianceNetConfig};

/// Version stamped into config files and checkpoint sidecars.
pub const CONFIG_VERSION: u32 = 1;

fn config_version() -> u32 {
    CONFIG_VERSION
}

/// Per-ray sample counts used by both training and rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_coarse: usize,
    /// Zero disables hierarchical sampling; the fine network then shades
    /// the coarse samples directly.
    pub n_fine: usize,
    pub n_e: usize,
    pub renormalize: bool,
}

impl SamplingConfig {
    pub fn hierarchical(&self) -> bool {
        self.n_fine > 0
    }

    pub fn track_steps(&self) -> usize {
        self.n_coarse * self.n_e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rgb: f64,
    pub bd: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(default = "config_version")]
    pub version: u32,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub n_e: usize,
    pub batch_rays: usize,
    pub iterations: usize,
    pub warmup_iters: usize,
    pub lambda_rgb: f64,
    pub lambda_bd: f64,
    pub lambda_s: f64,
    /// Transmittance above which the boundary loss applies.
    pub bd_threshold: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    /// Drop the fine sampling pass and shade `no_hierarchical_coarse`
    /// stratified samples instead.
    pub disable_hierarchical: bool,
    pub no_hierarchical_coarse: usize,
    /// Force `λ_BD = 0`.
    pub disable_boundary_reg: bool,
    /// Track straight rays regardless of the index grid.
    pub straight_paths: bool,
    pub renormalize: bool,
    /// Smoothness tile: `tile_size²` directions spanning `tile_span_deg`.
    pub tile_size: usize,
    pub tile_span_deg: f64,
    /// Rays per parallel work unit.
    pub chunk_rays: usize,
    /// Checkpoint period in iterations; 0 keeps only the final checkpoint.
    pub checkpoint_every: usize,
    pub fields: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    /// Settings small enough for a single CPU core.
    pub fn desk() -> Self {
        let radiance = RadianceNetConfig {
            depth: 4,
            width: 64,
            pos_freqs: 6,
            dir_freqs: 4,
            skip: None,
        };
        TrainConfig {
            version: CONFIG_VERSION,
            n_coarse: 32,
            n_fine: 64,
            n_e: 4,
            batch_rays: 64,
            iterations: 3000,
            warmup_iters: 500,
            lambda_rgb: 1.0,
            lambda_bd: 0.1,
            lambda_s: 0.01,
            bd_threshold: 0.5,
            lr_start: 5e-4,
            lr_end: 5e-5,
            seed: 0,
            disable_hierarchical: false,
            no_hierarchical_coarse: 256,
            disable_boundary_reg: false,
            straight_paths: false,
            renormalize: false,
            tile_size: 8,
            tile_span_deg: 5.0,
            chunk_rays: 16,
            checkpoint_every: 0,
            fields: FieldConfig {
                coarse: radiance,
                fine: radiance,
                boundary: BoundaryNetConfig {
                    depth: 3,
                    width: 64,
                    dir_freqs: 4,
                },
            },
        }
    }

    /// Sample counts, batch size and schedule of the original experiments.
    pub fn full() -> Self {
        TrainConfig {
            n_coarse: 64,
            n_fine: 128,
            batch_rays: 1024,
            iterations: 200_000,
            warmup_iters: 2500,
            chunk_rays: 64,
            checkpoint_every: 10_000,
            fields: FieldConfig {
                coarse: RadianceNetConfig::full(),
                fine: RadianceNetConfig::full(),
                boundary: BoundaryNetConfig::default(),
            },
            ..TrainConfig::desk()
        }
    }

    /// The "without hierarchical sampling" ablation.
    pub fn without_hierarchical(mut self) -> Self {
        self.disable_hierarchical = true;
        self
    }

    /// The "without boundary regularizer" ablation.
    pub fn without_boundary_reg(mut self) -> Self {
        self.disable_boundary_reg = true;
        self
    }

    pub fn sampling(&self) -> SamplingConfig {
        let (n_coarse, n_fine) = if self.disable_hierarchical {
            (self.no_hierarchical_coarse, 0)
        } else {
            (self.n_coarse, self.n_fine)
        };
        SamplingConfig {
            n_coarse,
            n_fine,
            n_e: self.n_e,
            renormalize: self.renormalize,
        }
    }

    /// Loss weights in effect at `iteration`: only the re-rendering term
    /// during warm-up.
    pub fn weights_at(&self, iteration: usize) -> LossWeights {
        let warm = iteration < self.warmup_iters;
        LossWeights {
            rgb: self.lambda_rgb,
            bd: if warm || self.disable_boundary_reg { 0.0 } else { self.lambda_bd },
            s: if warm { 0.0 } else { self.lambda_s },
        }
    }

    /// Exponential decay from `lr_start` to `lr_end` over the run.
    pub fn learning_rate(&self, iteration: usize) -> f64 {
        let frac = if self.iterations == 0 {
            0.0
        } else {
            (iteration as f64 / self.iterations as f64).min(1.0)
        };
        self.lr_start * (self.lr_end / self.lr_start).powf(frac)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::VersionMismatch {
                what: "train config",
                found: self.version,
                expected: CONFIG_VERSION,
            });
        }
        let bad = |msg: &str| Err(Error::InvalidInput(format!("train config: {msg}")));
        let s = self.sampling();
        if s.n_coarse == 0 || s.n_e == 0 {
            return bad("n_coarse and n_e must be positive");
        }
        if self.batch_rays == 0 || self.chunk_rays == 0 {
            return bad("batch_rays and chunk_rays must be positive");
        }
        if self.warmup_iters > self.iterations {
            return bad("warmup_iters exceeds iterations");
        }
        let lambdas = [self.lambda_rgb, self.lambda_bd, self.lambda_s];
        if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("loss weights must be finite and non-negative");
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.tile_size < 2 || !(self.tile_span_deg > 0.0) {
            return bad("tile needs at least 2x2 directions and a positive span");
        }
        Ok(())
    }
}
