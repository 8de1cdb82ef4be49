//! Emission-absorption compositing with an optional boundary (skybox) term,
//! plus its exact reverse pass.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::refindex::LeReader;

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, Copy, Default)]
pub struct CompositeOptions {
    /// Kahan-compensated optical depth prefix sum.
    pub compensated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeResult {
    pub color: Rgb,
    pub weights: Vec<f64>,
    /// Transmittance reaching each sample, `T_i`.
    pub transmittance: Vec<f64>,
    /// Transmittance past the last sample, `T_{N+1}`.
    pub final_transmittance: f64,
}

/// Upstream gradients of a scalar loss w.r.t. a composite's outputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompositeUpstream {
    pub color: Rgb,
    pub final_transmittance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeGrads {
    pub sigma: Vec<f64>,
    pub rgb: Vec<Rgb>,
    pub boundary: Rgb,
}

fn check_lengths(deltas: &[f64], sigma: &[f64], rgb: &[Rgb]) {
    assert!(
        deltas.len() == sigma.len() && sigma.len() == rgb.len(),
        "composite inputs must have equal lengths"
    );
}

/// `Ĉ = Σ T_i (1 - exp(-σ_i δ_i)) c_i` with no boundary term.
pub fn composite(deltas: &[f64], sigma: &[f64], rgb: &[Rgb], options: CompositeOptions) -> CompositeResult {
    check_lengths(deltas, sigma, rgb);
    let n = sigma.len();
    let mut weights = Vec::with_capacity(n);
    let mut transmittance = Vec::with_capacity(n);
    let mut color = [0.0; 3];
    let mut depth = 0.0f64;
    let mut carry = 0.0f64;
    for i in 0..n {
        let t_i = (-depth).exp();
        let tau = sigma[i] * deltas[i];
        let w = t_i * (1.0 - (-tau).exp());
        for k in 0..3 {
            color[k] += w * rgb[i][k];
        }
        transmittance.push(t_i);
        weights.push(w);
        if options.compensated {
            let y = tau - carry;
            let s = (depth + y).max(depth);
            carry = (s - depth) - y;
            depth = s;
        } else {
            depth += tau;
        }
    }
    CompositeResult {
        color,
        weights,
        transmittance,
        final_transmittance: (-depth).exp(),
    }
}

/// Compositing plus `T_{N+1} · boundary`, the radiance of the environment in
/// the exit direction.
pub fn composite_with_boundary(
    deltas: &[f64],
    sigma: &[f64],
    rgb: &[Rgb],
    boundary: Rgb,
    options: CompositeOptions,
) -> CompositeResult {
    let mut out = composite(deltas, sigma, rgb, options);
    for k in 0..3 {
        out.color[k] += out.final_transmittance * boundary[k];
    }
    out
}

/// Reverse pass of [`composite_with_boundary`] (pass a zero boundary for
/// [`composite`]).
///
/// With `τ_i = σ_i δ_i` and `S_k = Σ_{i>k} w_i c_i + T_{N+1} b`:
/// `∂Ĉ/∂τ_k = T_{k+1} c_k - S_k` and `∂T_{N+1}/∂τ_k = -T_{N+1}`.
pub fn composite_backward(
    deltas: &[f64],
    rgb: &[Rgb],
    boundary: Rgb,
    forward: &CompositeResult,
    upstream: &CompositeUpstream,
) -> CompositeGrads {
    let n = forward.weights.len();
    assert_eq!(n, deltas.len());
    let g = upstream.color;
    let t_end = forward.final_transmittance;
    let dot = |a: &Rgb, b: &Rgb| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

    let mut sigma = vec![0.0; n];
    let mut d_rgb = vec![[0.0; 3]; n];
    // g · S_k, accumulated from the back
    let mut suffix = t_end * dot(&g, &boundary);
    for k in (0..n).rev() {
        let t_next = forward.transmittance.get(k + 1).copied().unwrap_or(t_end);
        let d_tau = t_next * dot(&g, &rgb[k]) - suffix - upstream.final_transmittance * t_end;
        sigma[k] = d_tau * deltas[k];
        let w = forward.weights[k];
        d_rgb[k] = [w * g[0], w * g[1], w * g[2]];
        suffix += w * dot(&g, &rgb[k]);
    }
    CompositeGrads {
        sigma,
        rgb: d_rgb,
        boundary: [t_end * g[0], t_end * g[1], t_end * g[2]],
    }
}

/// Row-major float RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0.0; 3]; (width * height) as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        self.pixels[(y * self.width + x) as usize] = c;
    }

    /// 8-bit PNG with values clamped to `[0, 1]`.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        image::RgbImage::from_raw(self.width, self.height, buf)
            .expect("image buffer size")
            .save(path)
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })?
            .into_rgb8();
        Ok(Image {
            width: img.width(),
            height: img.height(),
            pixels: img.pixels().map(|p| p.0.map(|v| v as f64 / 255.0)).collect(),
        })
    }

    /// Box-filter downscale by an integer factor.
    pub fn downscaled(&self, factor: u32) -> Self {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Image::new(w, h);
        let norm = (factor * factor) as f64;
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for dy in 0..factor {
                    for dx in 0..factor {
                        let c = self.get(x * factor + dx, y * factor + dy);
                        (0..3).for_each(|k| acc[k] += c[k]);
                    }
                }
                out.set(x, y, acc.map(|v| v / norm));
            }
        }
        out
    }

    /// Raw float dump: `EIKR`, version, width, height, channel count (u32
    /// LE), then one f32 plane per channel.
    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(20 + self.pixels.len() * 12);
        out.extend_from_slice(RAW_MAGIC);
        for v in [RAW_VERSION, self.width, self.height, 3] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for k in 0..3 {
            for p in &self.pixels {
                out.extend_from_slice(&(p[k] as f32).to_le_bytes());
            }
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_raw(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = LeReader::new(&bytes, "raw image");
        if r.take(4)? != RAW_MAGIC {
            return Err(Error::format("raw image", "bad magic"));
        }
        let version = r.u32()?;
        if version != RAW_VERSION {
            return Err(Error::VersionMismatch {
                what: "raw image",
                found: version,
                expected: RAW_VERSION,
            });
        }
        let (width, height, channels) = (r.u32()?, r.u32()?, r.u32()?);
        if channels != 3 {
            return Err(Error::format("raw image", format!("{channels} channels")));
        }
        let mut img = Image::new(width, height);
        for k in 0..3 {
            for p in img.pixels.iter_mut() {
                p[k] = r.f32()? as f64;
            }
        }
        Ok(img)
    }
}

const RAW_MAGIC: &[u8; 4] = b"EIKR";
const RAW_VERSION: u32 = 1;
