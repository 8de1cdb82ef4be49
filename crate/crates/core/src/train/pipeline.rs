//! Per-ray forward and reverse passes through tracking, sampling, the three
//! networks and compositing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{LossWeights, SamplingConfig, TrainConfig};
use super::loss::{loss_boundary, loss_boundary_grad_t, loss_smooth_backward, sq_err, sq_err_grad, LossBreakdown};
use crate::camera::Camera;
use crate::eikonal::{track, Ray, TrackOptions};
use crate::error::{Error, Result};
use crate::fields::{BoundaryCache, FieldGrads, FieldParams, RadianceCache};
use crate::refindex::{IndexField, RefractiveGrid};
use crate::render::{composite_backward, composite_with_boundary, CompositeOptions, CompositeResult, CompositeUpstream, Image, Rgb};
use crate::sampling::{merge_sorted, sample_coarse, sample_fine, SampleSet};
use crate::Vec3;

/// What rays are tracked through.
#[derive(Debug, Clone, PartialEq)]
pub enum Medium {
    /// Uniform index 1: straight rays.
    Straight,
    Grid(RefractiveGrid),
}

impl IndexField for Medium {
    fn index(&self, x: &Vec3) -> f64 {
        match self {
            Medium::Straight => 1.0,
            Medium::Grid(g) => g.index(x),
        }
    }

    fn gradient(&self, x: &Vec3) -> Vec3 {
        match self {
            Medium::Straight => Vec3::zeros(),
            Medium::Grid(g) => g.gradient(x),
        }
    }
}

/// Training rays with their target colors.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub rays: Vec<Ray>,
    pub targets: Vec<Rgb>,
}

impl TrainingSet {
    /// One ray per pixel of every view.
    pub fn from_views(views: &[(Camera, Image)], near: f64, far: f64) -> Result<Self> {
        let mut set = TrainingSet::default();
        for (i, (camera, image)) in views.iter().enumerate() {
            let k = camera.intrinsics;
            if (k.width, k.height) != (image.width, image.height) {
                return Err(Error::BadFrame {
                    frame: i,
                    reason: format!("image is {}x{}, camera expects {}x{}", image.width, image.height, k.width, k.height),
                });
            }
            for y in 0..k.height {
                for x in 0..k.width {
                    set.rays.push(camera.pixel_ray(x, y, near, far));
                    set.targets.push(image.get(x, y));
                }
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Deterministic seed for stream `(seed, a, b)`.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed;
    for v in [a, b] {
        z = z.wrapping_add(v.wrapping_add(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn ray_rng(seed: u64, iteration: usize, ray: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, iteration as u64, ray as u64))
}

const NO_KAHAN: CompositeOptions = CompositeOptions { compensated: false };

/// One head's forward results for a group of rays.
struct HeadPass {
    sets: Vec<SampleSet>,
    rgb: Vec<Rgb>,
    cache: RadianceCache,
    composites: Vec<CompositeResult>,
    boundary: Vec<Rgb>,
}

impl HeadPass {
    fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.sets.len() + 1);
        o.push(0);
        for s in &self.sets {
            o.push(o.last().unwrap() + s.len());
        }
        o
    }
}

/// Forward state for a group of rays.
pub struct ChunkForward {
    coarse: Option<HeadPass>,
    fine: HeadPass,
    boundary_cache: BoundaryCache,
}

/// Rendered output of one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayOutput {
    /// Coarse-head color; equals `fine` when hierarchical sampling is off.
    pub coarse: Rgb,
    pub fine: Rgb,
    pub final_transmittance: f64,
    pub boundary: Rgb,
}

fn flatten(sets: &[SampleSet]) -> (Vec<Vec3>, Vec<Vec3>) {
    let pos = sets.iter().flat_map(|s| s.positions.iter().copied()).collect();
    let dir = sets.iter().flat_map(|s| s.directions.iter().copied()).collect();
    (pos, dir)
}

fn run_head(net: &crate::fields::RadianceNet, sets: Vec<SampleSet>, boundary: Vec<Rgb>) -> HeadPass {
    let (pos, dir) = flatten(&sets);
    let out = net.forward(&pos, &dir);
    let mut composites = Vec::with_capacity(sets.len());
    let mut start = 0;
    for (s, b) in sets.iter().zip(&boundary) {
        let end = start + s.len();
        composites.push(composite_with_boundary(&s.deltas, &out.sigma[start..end], &out.rgb[start..end], *b, NO_KAHAN));
        start = end;
    }
    HeadPass {
        sets,
        rgb: out.rgb,
        cache: out.cache,
        composites,
        boundary,
    }
}

/// Tracks, samples and shades `rays`, drawing per-ray randomness from `rngs`.
pub fn forward_chunk(
    params: &FieldParams,
    medium: &Medium,
    sampling: &SamplingConfig,
    rays: &[Ray],
    rngs: &mut [ChaCha8Rng],
) -> ChunkForward {
    assert_eq!(rays.len(), rngs.len());
    let opts = TrackOptions {
        renormalize: sampling.renormalize,
    };
    let mut paths = Vec::with_capacity(rays.len());
    let mut coarse_sets = Vec::with_capacity(rays.len());
    for (ray, rng) in rays.iter().zip(rngs.iter_mut()) {
        let path = track(ray, medium, sampling.track_steps(), opts);
        coarse_sets.push(sample_coarse(&path, sampling.n_coarse, sampling.n_e, rng));
        paths.push(path);
    }

    if !sampling.hierarchical() {
        let exits: Vec<Vec3> = coarse_sets.iter().map(|s| s.exit_direction()).collect();
        let (boundary, boundary_cache) = params.boundary.forward(&exits);
        let fine = run_head(&params.fine, coarse_sets, boundary);
        return ChunkForward {
            coarse: None,
            fine,
            boundary_cache,
        };
    }

    let coarse_exits: Vec<Vec3> = coarse_sets.iter().map(|s| s.exit_direction()).collect();
    let coarse_boundary = params.boundary.forward(&coarse_exits).0;
    let coarse = run_head(&params.coarse, coarse_sets, coarse_boundary);

    let merged: Vec<SampleSet> = (0..rays.len())
        .map(|r| {
            let c = &coarse.sets[r];
            let fine = sample_fine(c, &coarse.composites[r].weights, &paths[r], sampling.n_fine, &mut rngs[r]);
            merge_sorted(c, &fine)
        })
        .collect();
    let mut exits = coarse_exits;
    exits.extend(merged.iter().map(|s| s.exit_direction()));
    let (all_boundary, boundary_cache) = params.boundary.forward(&exits);
    let fine = run_head(&params.fine, merged, all_boundary[rays.len()..].to_vec());
    ChunkForward {
        coarse: Some(coarse),
        fine,
        boundary_cache,
    }
}

impl ChunkForward {
    pub fn outputs(&self) -> Vec<RayOutput> {
        (0..self.fine.sets.len())
            .map(|r| {
                let f = &self.fine.composites[r];
                RayOutput {
                    coarse: self.coarse.as_ref().map_or(f.color, |c| c.composites[r].color),
                    fine: f.color,
                    final_transmittance: f.final_transmittance,
                    boundary: self.fine.boundary[r],
                }
            })
            .collect()
    }
}

/// Loss sums over a chunk (not yet divided by the batch size).
#[derive(Debug, Clone, Copy, Default)]
struct ChunkLoss {
    rgb: f64,
    bd: f64,
}

fn backward_head(
    net: &crate::fields::RadianceNet,
    pass: &HeadPass,
    upstream: &[CompositeUpstream],
    grads: &mut [f64],
) -> Vec<Rgb> {
    let offsets = pass.offsets();
    let total = *offsets.last().unwrap();
    let mut d_sigma = vec![0.0; total];
    let mut d_rgb = vec![[0.0; 3]; total];
    let mut d_boundary = Vec::with_capacity(pass.sets.len());
    for (r, up) in upstream.iter().enumerate() {
        let (a, b) = (offsets[r], offsets[r + 1]);
        let g = composite_backward(&pass.sets[r].deltas, &pass.rgb[a..b], pass.boundary[r], &pass.composites[r], up);
        d_sigma[a..b].copy_from_slice(&g.sigma);
        d_rgb[a..b].copy_from_slice(&g.rgb);
        d_boundary.push(g.boundary);
    }
    net.backward(&pass.cache, &d_sigma, &d_rgb, grads);
    d_boundary
}

fn chunk_gradients(
    params: &FieldParams,
    fwd: &ChunkForward,
    targets: &[Rgb],
    weights: &LossWeights,
    threshold: f64,
    batch: usize,
    grads: &mut FieldGrads,
) -> ChunkLoss {
    let scale = 1.0 / batch as f64;
    let mut loss = ChunkLoss::default();
    let mut boundary_up: Vec<Rgb> = Vec::new();

    if let Some(coarse) = &fwd.coarse {
        let up: Vec<CompositeUpstream> = targets
            .iter()
            .zip(&coarse.composites)
            .map(|(t, c)| {
                loss.rgb += sq_err(&c.color, t);
                CompositeUpstream {
                    color: sq_err_grad(&c.color, t).map(|g| g * weights.rgb * scale),
                    final_transmittance: 0.0,
                }
            })
            .collect();
        boundary_up.extend(backward_head(&params.coarse, coarse, &up, &mut grads.coarse));
    }

    let fine = &fwd.fine;
    let up: Vec<CompositeUpstream> = targets
        .iter()
        .enumerate()
        .map(|(r, t)| {
            let c = &fine.composites[r];
            let b = &fine.boundary[r];
            loss.rgb += sq_err(&c.color, t);
            loss.bd += loss_boundary(t, c.final_transmittance, b, threshold);
            CompositeUpstream {
                color: sq_err_grad(&c.color, t).map(|g| g * weights.rgb * scale),
                final_transmittance: weights.bd * scale * loss_boundary_grad_t(t, c.final_transmittance, b, threshold),
            }
        })
        .collect();
    boundary_up.extend(backward_head(&params.fine, fine, &up, &mut grads.fine));
    params.boundary.backward(&fwd.boundary_cache, &boundary_up, &mut grads.boundary);
    loss
}

/// Losses and weighted gradients for one batch. `batch` holds indices into
/// `data`; randomness is keyed by `(seed, iteration, slot in batch)`.
#[allow(clippy::too_many_arguments)]
pub fn compute_gradients(
    config: &TrainConfig,
    params: &FieldParams,
    medium: &Medium,
    data: &TrainingSet,
    batch: &[usize],
    iteration: usize,
    weights: LossWeights,
) -> (LossBreakdown, FieldGrads) {
    let sampling = config.sampling();
    let chunks: Vec<(usize, &[usize])> = batch
        .chunks(config.chunk_rays)
        .enumerate()
        .map(|(i, c)| (i * config.chunk_rays, c))
        .collect();
    let partial: Vec<(ChunkLoss, FieldGrads)> = chunks
        .par_iter()
        .map(|&(start, ids)| {
            let rays: Vec<Ray> = ids.iter().map(|&i| data.rays[i]).collect();
            let targets: Vec<Rgb> = ids.iter().map(|&i| data.targets[i]).collect();
            let mut rngs: Vec<ChaCha8Rng> = (0..ids.len()).map(|k| ray_rng(config.seed, iteration, start + k)).collect();
            let fwd = forward_chunk(params, medium, &sampling, &rays, &mut rngs);
            let mut grads = params.zero_grads();
            let loss = chunk_gradients(params, &fwd, &targets, &weights, config.bd_threshold, batch.len(), &mut grads);
            (loss, grads)
        })
        .collect();

    let mut grads = params.zero_grads();
    let mut sums = ChunkLoss::default();
    for (loss, g) in &partial {
        sums.rgb += loss.rgb;
        sums.bd += loss.bd;
        grads.add_assign(g);
    }
    let n = batch.len().max(1) as f64;

    let mut tile_rng = ray_rng(config.seed, iteration, usize::MAX);
    let l_s = loss_smooth_backward(
        &params.boundary,
        config.tile_size,
        config.tile_span_deg,
        weights.s,
        &mut tile_rng,
        &mut grads.boundary,
    );
    (LossBreakdown::new(iteration, sums.rgb / n, sums.bd / n, l_s, weights), grads)
}

/// Renders rays with fixed per-ray seeds `(seed, ray_offset + k)`.
pub fn render_rays(
    params: &FieldParams,
    medium: &Medium,
    sampling: &SamplingConfig,
    rays: &[Ray],
    seed: u64,
    chunk: usize,
) -> Vec<RayOutput> {
    let chunk = chunk.max(1);
    let parts: Vec<Vec<RayOutput>> = rays
        .par_chunks(chunk)
        .enumerate()
        .map(|(c, group)| {
            let mut rngs: Vec<ChaCha8Rng> = (0..group.len()).map(|k| ray_rng(seed, 0, c * chunk + k)).collect();
            forward_chunk(params, medium, sampling, group, &mut rngs).outputs()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Fine-head render of a full camera view.
pub fn render_image(
    params: &FieldParams,
    medium: &Medium,
    sampling: &SamplingConfig,
    camera: &Camera,
    near: f64,
    far: f64,
    seed: u64,
) -> Image {
    let k = camera.intrinsics;
    let rays: Vec<Ray> = (0..k.height)
        .flat_map(|y| (0..k.width).map(move |x| (x, y)))
        .map(|(x, y)| camera.pixel_ray(x, y, near, far))
        .collect();
    let out = render_rays(params, medium, sampling, &rays, seed, 64);
    Image {
        width: k.width,
        height: k.height,
        pixels: out.iter().map(|o| o.fine).collect(),
    }
}
