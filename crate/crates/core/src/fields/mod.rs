//! Coarse, fine and boundary radiance networks with hand-written reverse
//! passes.

pub mod checkpoint;
pub mod encoding;
pub mod mlp;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::render::Rgb;
use crate::Vec3;
use encoding::{encode_batch, encoded_len};
use mlp::{column, concat_cols, leading_cols, relu, relu_backward, sigmoid, softplus, Dense, LayerAllocator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadianceNetConfig {
    pub depth: usize,
    pub width: usize,
    pub pos_freqs: usize,
    pub dir_freqs: usize,
    /// Trunk layer that also receives the encoded position.
    pub skip: Option<usize>,
}

impl RadianceNetConfig {
    /// 8 × 256 with a skip into the fifth layer.
    pub fn full() -> Self {
        RadianceNetConfig {
            depth: 8,
            width: 256,
            pos_freqs: 10,
            dir_freqs: 4,
            skip: Some(4),
        }
    }

    pub fn desk() -> Self {
        RadianceNetConfig {
            depth: 4,
            width: 128,
            pos_freqs: 10,
            dir_freqs: 4,
            skip: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryNetConfig {
    pub depth: usize,
    pub width: usize,
    pub dir_freqs: usize,
}

impl Default for BoundaryNetConfig {
    fn default() -> Self {
        BoundaryNetConfig {
            depth: 4,
            width: 128,
            dir_freqs: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub coarse: RadianceNetConfig,
    pub fine: RadianceNetConfig,
    pub boundary: BoundaryNetConfig,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            coarse: RadianceNetConfig::desk(),
            fine: RadianceNetConfig::desk(),
            boundary: BoundaryNetConfig::default(),
        }
    }
}

/// Density and radiance network. Density branches off the trunk before the
/// view direction is injected, so it cannot depend on direction.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceNet {
    pub config: RadianceNetConfig,
    trunk: Vec<Dense>,
    density: Dense,
    feature: Dense,
    color_hidden: Dense,
    color_out: Dense,
    pub params: Vec<f64>,
}

pub struct RadianceCache {
    trunk_inputs: Vec<Array2<f64>>,
    trunk_pre: Vec<Array2<f64>>,
    hidden: Array2<f64>,
    sigma_pre: Array1<f64>,
    color_in: Array2<f64>,
    color_hidden_pre: Array2<f64>,
    color_hidden: Array2<f64>,
    rgb: Array2<f64>,
}

pub struct RadianceOutput {
    pub sigma: Vec<f64>,
    pub rgb: Vec<Rgb>,
    pub cache: RadianceCache,
}

impl RadianceNet {
    pub fn new(config: RadianceNetConfig, rng: &mut impl Rng) -> Self {
        assert!(config.depth >= 1 && config.width >= 2);
        let pos_in = encoded_len(3, config.pos_freqs);
        let dir_in = encoded_len(3, config.dir_freqs);
        let w = config.width;
        let mut alloc = LayerAllocator::new();
        let trunk: Vec<Dense> = (0..config.depth)
            .map(|l| {
                let inputs = match (l, config.skip) {
                    (0, _) => pos_in,
                    (l, Some(s)) if l == s => w + pos_in,
                    _ => w,
                };
                alloc.dense(inputs, w)
            })
            .collect();
        let density = alloc.dense(w, 1);
        let feature = alloc.dense(w, w);
        let color_hidden = alloc.dense(w + dir_in, w / 2);
        let color_out = alloc.dense(w / 2, 3);
        let mut params = vec![0.0; alloc.total()];
        for layer in trunk.iter().chain([&feature, &color_hidden]) {
            layer.init_uniform(&mut params, rng);
        }
        density.init_zero(&mut params);
        color_out.init_zero(&mut params);
        RadianceNet {
            config,
            trunk,
            density,
            feature,
            color_hidden,
            color_out,
            params,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layers(&self) -> Vec<Dense> {
        let mut v = self.trunk.clone();
        v.extend([self.density, self.feature, self.color_hidden, self.color_out]);
        v
    }

    /// The final radiance layer (weights and bias).
    pub fn color_output_layer(&self) -> Dense {
        self.color_out
    }

    pub fn density_layer(&self) -> Dense {
        self.density
    }

    pub fn forward(&self, positions: &[Vec3], directions: &[Vec3]) -> RadianceOutput {
        assert_eq!(positions.len(), directions.len());
        let p = &self.params;
        let pos_enc = encode_batch(positions, self.config.pos_freqs);
        let dir_enc = encode_batch(directions, self.config.dir_freqs);
        let mut trunk_inputs = Vec::with_capacity(self.trunk.len());
        let mut trunk_pre = Vec::with_capacity(self.trunk.len());
        let mut h = pos_enc.clone();
        for (l, layer) in self.trunk.iter().enumerate() {
            let input = if l > 0 && self.config.skip == Some(l) {
                concat_cols(&h, &pos_enc)
            } else {
                h
            };
            let pre = layer.forward(p, &input);
            h = relu(&pre);
            trunk_inputs.push(input);
            trunk_pre.push(pre);
        }
        let sigma_pre = column(&self.density.forward(p, &h), 0);
        let feature = self.feature.forward(p, &h);
        let color_in = concat_cols(&feature, &dir_enc);
        let color_hidden_pre = self.color_hidden.forward(p, &color_in);
        let color_hidden = relu(&color_hidden_pre);
        let rgb = self.color_out.forward(p, &color_hidden).mapv(sigmoid);

        let sigma = sigma_pre.iter().map(|&s| softplus(s)).collect();
        let rgb_out = rgb.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        RadianceOutput {
            sigma,
            rgb: rgb_out,
            cache: RadianceCache {
                trunk_inputs,
                trunk_pre,
                hidden: h,
                sigma_pre,
                color_in,
                color_hidden_pre,
                color_hidden,
                rgb,
            },
        }
    }

    /// Accumulates parameter gradients given `∂L/∂σ` and `∂L/∂c` per row of
    /// the cached forward pass.
    pub fn backward(&self, cache: &RadianceCache, d_sigma: &[f64], d_rgb: &[Rgb], grads: &mut [f64]) {
        let rows = cache.rgb.nrows();
        assert!(d_sigma.len() == rows && d_rgb.len() == rows, "upstream does not match cached batch");
        assert_eq!(grads.len(), self.params.len());
        let p = &self.params;
        let w = self.config.width;

        let d_rgb_pre = Array2::from_shape_fn((rows, 3), |(i, k)| {
            let s = cache.rgb[[i, k]];
            d_rgb[i][k] * s * (1.0 - s)
        });
        let mut d_hidden_c = self
            .color_out
            .backward(p, &cache.color_hidden, &d_rgb_pre, grads, true)
            .unwrap();
        relu_backward(&cache.color_hidden_pre, &mut d_hidden_c);
        let d_color_in = self
            .color_hidden
            .backward(p, &cache.color_in, &d_hidden_c, grads, true)
            .unwrap();
        let d_feature = leading_cols(&d_color_in, w);
        let mut d_h = self.feature.backward(p, &cache.hidden, &d_feature, grads, true).unwrap();

        let d_sigma_pre = Array2::from_shape_fn((rows, 1), |(i, _)| d_sigma[i] * sigmoid(cache.sigma_pre[i]));
        d_h += &self.density.backward(p, &cache.hidden, &d_sigma_pre, grads, true).unwrap();

        for l in (0..self.trunk.len()).rev() {
            relu_backward(&cache.trunk_pre[l], &mut d_h);
            let d_in = self.trunk[l].backward(p, &cache.trunk_inputs[l], &d_h, grads, l > 0);
            if let Some(d_in) = d_in {
                d_h = if self.config.skip == Some(l) {
                    leading_cols(&d_in, w)
                } else {
                    d_in
                };
            }
        }
    }
}

/// Skybox network mapping a direction to environment radiance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNet {
    pub config: BoundaryNetConfig,
    hidden: Vec<Dense>,
    out: Dense,
    pub params: Vec<f64>,
}

pub struct BoundaryCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    last: Array2<f64>,
    rgb: Array2<f64>,
}

impl BoundaryNet {
    pub fn new(config: BoundaryNetConfig, rng: &mut impl Rng) -> Self {
        assert!(config.width >= 1);
        let mut alloc = LayerAllocator::new();
        let mut inputs = encoded_len(3, config.dir_freqs);
        let hidden: Vec<Dense> = (0..config.depth)
            .map(|_| {
                let d = alloc.dense(inputs, config.width);
                inputs = config.width;
                d
            })
            .collect();
        let out = alloc.dense(inputs, 3);
        let mut params = vec![0.0; alloc.total()];
        for layer in &hidden {
            layer.init_uniform(&mut params, rng);
        }
        out.init_zero(&mut params);
        BoundaryNet {
            config,
            hidden,
            out,
            params,
        }
    }

    pub fn layers(&self) -> Vec<Dense> {
        let mut v = self.hidden.clone();
        v.push(self.out);
        v
    }

    pub fn forward(&self, directions: &[Vec3]) -> (Vec<Rgb>, BoundaryCache) {
        let p = &self.params;
        let mut h = encode_batch(directions, self.config.dir_freqs);
        let mut inputs = Vec::with_capacity(self.hidden.len());
        let mut pre = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let z = layer.forward(p, &h);
            inputs.push(std::mem::replace(&mut h, relu(&z)));
            pre.push(z);
        }
        let rgb = self.out.forward(p, &h).mapv(sigmoid);
        let colors = rgb.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        (
            colors,
            BoundaryCache {
                inputs,
                pre,
                last: h,
                rgb,
            },
        )
    }

    pub fn backward(&self, cache: &BoundaryCache, d_rgb: &[Rgb], grads: &mut [f64]) {
        let rows = cache.rgb.nrows();
        assert_eq!(d_rgb.len(), rows, "upstream does not match cached batch");
        assert_eq!(grads.len(), self.params.len());
        let p = &self.params;
        let d_pre = Array2::from_shape_fn((rows, 3), |(i, k)| {
            let s = cache.rgb[[i, k]];
            d_rgb[i][k] * s * (1.0 - s)
        });
        let mut d_h = self.out.backward(p, &cache.last, &d_pre, grads, !self.hidden.is_empty());
        for l in (0..self.hidden.len()).rev() {
            let mut g = d_h.take().expect("gradient flows into hidden layers");
            relu_backward(&cache.pre[l], &mut g);
            d_h = self.hidden[l].backward(p, &cache.inputs[l], &g, grads, l > 0);
        }
    }

    pub fn eval(&self, d: &Vec3) -> Rgb {
        self.forward(std::slice::from_ref(d)).0[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    pub coarse: RadianceNet,
    pub fine: RadianceNet,
    pub boundary: BoundaryNet,
}

impl FieldParams {
    pub fn new(config: &FieldConfig, rng: &mut impl Rng) -> Self {
        FieldParams {
            coarse: RadianceNet::new(config.coarse, rng),
            fine: RadianceNet::new(config.fine, rng),
            boundary: BoundaryNet::new(config.boundary, rng),
        }
    }

    pub fn config(&self) -> FieldConfig {
        FieldConfig {
            coarse: self.coarse.config,
            fine: self.fine.config,
            boundary: self.boundary.config,
        }
    }

    pub fn radiance(&self, head: Head) -> &RadianceNet {
        match head {
            Head::Coarse => &self.coarse,
            Head::Fine => &self.fine,
        }
    }

    pub fn zero_grads(&self) -> FieldGrads {
        FieldGrads {
            coarse: vec![0.0; self.coarse.params.len()],
            fine: vec![0.0; self.fine.params.len()],
            boundary: vec![0.0; self.boundary.params.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.coarse.params, &self.fine.params, &self.boundary.params]
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.coarse.params, &mut self.fine.params, &mut self.boundary.params]
    }
}

/// Gradient buffers shaped like [`FieldParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrads {
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl FieldGrads {
    pub fn zero(&mut self) {
        for g in self.tensors_mut() {
            g.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &FieldGrads) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn tensors(&self) -> [&Vec<f64>; 3] {
        [&self.coarse, &self.fine, &self.boundary]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.coarse, &mut self.fine, &mut self.boundary]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Single-point density and radiance.
pub fn eval_density_radiance(params: &FieldParams, head: Head, x: &Vec3, d: &Vec3) -> (f64, Rgb) {
    let out = params.radiance(head).forward(std::slice::from_ref(x), std::slice::from_ref(d));
    (out.sigma[0], out.rgb[0])
}

/// Single-direction environment radiance.
pub fn eval_boundary(params: &FieldParams, d: &Vec3) -> Rgb {
    params.boundary.eval(d)
}
