//! Loss terms and their derivatives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::LossWeights;
use crate::fields::BoundaryNet;
use crate::render::Rgb;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub iteration: usize,
    pub l_rgb: f64,
    pub l_bd: f64,
    pub l_s: f64,
    /// Weights in effect for this step (zero during warm-up for BD and S).
    pub weights: LossWeights,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(iteration: usize, l_rgb: f64, l_bd: f64, l_s: f64, weights: LossWeights) -> Self {
        LossBreakdown {
            iteration,
            l_rgb,
            l_bd,
            l_s,
            weights,
            total: weights.rgb * l_rgb + weights.bd * l_bd + weights.s * l_s,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_rgb, self.l_bd, self.l_s, self.total].iter().all(|v| v.is_finite())
    }
}

/// `|a - b|²`.
pub fn sq_err(a: &Rgb, b: &Rgb) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Squared error of both heads for one ray.
pub fn loss_rgb(pred_coarse: &Rgb, pred_fine: &Rgb, target: &Rgb) -> f64 {
    sq_err(pred_coarse, target) + sq_err(pred_fine, target)
}

/// `∂/∂pred` of `|target - pred|²`.
pub fn sq_err_grad(pred: &Rgb, target: &Rgb) -> Rgb {
    [0, 1, 2].map(|k| 2.0 * (pred[k] - target[k]))
}

/// Boundary loss for one ray: `‖target - T·b‖₁` when `T > threshold`, else 0.
pub fn loss_boundary(target: &Rgb, t_last: f64, boundary: &Rgb, threshold: f64) -> f64 {
    if t_last <= threshold {
        return 0.0;
    }
    (0..3).map(|k| (target[k] - t_last * boundary[k]).abs()).sum()
}

/// `∂/∂T` of [`loss_boundary`] with the boundary color held fixed.
pub fn loss_boundary_grad_t(target: &Rgb, t_last: f64, boundary: &Rgb, threshold: f64) -> f64 {
    if t_last <= threshold {
        return 0.0;
    }
    (0..3)
        .map(|k| {
            let r = t_last * boundary[k] - target[k];
            let s = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            s * boundary[k]
        })
        .sum()
}

/// Square tile of directions around `center`, row-major, spanning
/// `span_deg` from first to last row and column.
pub fn direction_tile(center: &Vec3, size: usize, span_deg: f64) -> Vec<Vec3> {
    assert!(size >= 2);
    let c = center.normalize();
    let helper = if c.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = c.cross(&helper).normalize();
    let w = c.cross(&u);
    let span = span_deg.to_radians();
    let angle = |i: usize| (i as f64 / (size - 1) as f64 - 0.5) * span;
    let mut out = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let d = c + angle(col).tan() * u + angle(row).tan() * w;
            out.push(d.normalize());
        }
    }
    out
}

/// Uniform direction on the unit sphere.
pub fn random_direction(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// `0.5·mean(Δ_h²) + 0.5·mean(Δ_v²)` over a `size × size` row-major tile of
/// colors, with means over differences and channels. Returns the value and
/// its gradient per tile entry.
pub fn smoothness_penalty(colors: &[Rgb], size: usize) -> (f64, Vec<Rgb>) {
    assert_eq!(colors.len(), size * size);
    assert!(size >= 2);
    let count = (size * (size - 1) * 3) as f64;
    let mut grad = vec![[0.0; 3]; colors.len()];
    let mut value = 0.0;
    let mut pair = |a: usize, b: usize, value: &mut f64| {
        for k in 0..3 {
            let diff = colors[b][k] - colors[a][k];
            *value += 0.5 * diff * diff / count;
            grad[b][k] += diff / count;
            grad[a][k] -= diff / count;
        }
    };
    for row in 0..size {
        for col in 0..size - 1 {
            pair(row * size + col, row * size + col + 1, &mut value);
        }
    }
    for row in 0..size - 1 {
        for col in 0..size {
            pair(row * size + col, (row + 1) * size + col, &mut value);
        }
    }
    (value, grad)
}

/// Smoothness of the boundary network over one random tile.
pub fn loss_smooth(net: &BoundaryNet, size: usize, span_deg: f64, rng: &mut impl Rng) -> f64 {
    let tile = direction_tile(&random_direction(rng), size, span_deg);
    let (colors, _) = net.forward(&tile);
    smoothness_penalty(&colors, size).0
}

/// Like [`loss_smooth`], also accumulating `scale · ∂L/∂ψ` into `grads`.
pub fn loss_smooth_backward(
    net: &BoundaryNet,
    size: usize,
    span_deg: f64,
    scale: f64,
    rng: &mut impl Rng,
    grads: &mut [f64],
) -> f64 {
    let tile = direction_tile(&random_direction(rng), size, span_deg);
    let (colors, cache) = net.forward(&tile);
    let (value, grad) = smoothness_penalty(&colors, size);
    if scale != 0.0 {
        let upstream: Vec<Rgb> = grad.iter().map(|g| g.map(|v| v * scale)).collect();
        net.backward(&cache, &upstream, grads);
    }
    value
}
