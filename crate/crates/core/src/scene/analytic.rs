//! Closed-form scenes used to generate ground truth and to check the
//! learned pipeline against known geometry.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::refindex::{IndexField, Mask, SilhouetteSet};
use crate::render::{Image, Rgb};
use crate::{Error, Result, Vec3};

/// Cubic smoothstep on `u ∈ [0, 1]` and its derivative.
fn smoothstep(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0)
    } else {
        (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexProfile {
    Constant {
        n: f64,
    },
    /// Sphere of index `n` whose surface is blended into air over a shell of
    /// thickness `band` centered on `radius`.
    Sphere {
        center: [f64; 3],
        radius: f64,
        n: f64,
        band: f64,
    },
    /// Index `n_below` for `z < z0`, `n_above` for `z > z0`, blended over
    /// `band`.
    Planar {
        z0: f64,
        n_below: f64,
        n_above: f64,
        band: f64,
    },
}

impl IndexProfile {
    pub fn material_index(&self) -> f64 {
        match *self {
            IndexProfile::Constant { n } => n,
            IndexProfile::Sphere { n, .. } => n,
            IndexProfile::Planar { n_below, n_above, .. } => n_below.max(n_above),
        }
    }

    /// Whether the straight ray `origin + s·dir, s > 0` meets the dense
    /// region (the nominal, unblended shape).
    pub fn ray_hits_inside(&self, origin: &Vec3, dir: &Vec3) -> bool {
        match *self {
            IndexProfile::Constant { .. } => false,
            IndexProfile::Sphere { center, radius, n, .. } => {
                if n <= 1.0 {
                    return false;
                }
                let oc = origin - Vector3::from(center);
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                disc >= 0.0 && (-b + disc.sqrt()) > 0.0
            }
            IndexProfile::Planar { z0, n_below, n_above, .. } => {
                if n_above > 1.0 && (origin.z > z0 || dir.z > 0.0) {
                    return true;
                }
                n_below > 1.0 && (origin.z < z0 || dir.z < 0.0)
            }
        }
    }
}

impl IndexField for IndexProfile {
    fn index(&self, x: &Vec3) -> f64 {
        match *self {
            IndexProfile::Constant { n } => n,
            IndexProfile::Sphere { center, radius, n, band } => {
                let r = (x - Vector3::from(center)).norm();
                let (s, _) = smoothstep((r - radius + 0.5 * band) / band);
                n + (1.0 - n) * s
            }
            IndexProfile::Planar { z0, n_below, n_above, band } => {
                let (s, _) = smoothstep((x.z - z0 + 0.5 * band) / band);
                n_below + (n_above - n_below) * s
            }
        }
    }

    fn gradient(&self, x: &Vec3) -> Vec3 {
        match *self {
            IndexProfile::Constant { .. } => Vec3::zeros(),
            IndexProfile::Sphere { center, radius, n, band } => {
                let rel = x - Vector3::from(center);
                let r = rel.norm();
                let (_, ds) = smoothstep((r - radius + 0.5 * band) / band);
                if ds == 0.0 || r == 0.0 {
                    return Vec3::zeros();
                }
                rel * ((1.0 - n) * ds / band / r)
            }
            IndexProfile::Planar { z0, n_below, n_above, band } => {
                let (_, ds) = smoothstep((x.z - z0 + 0.5 * band) / band);
                Vector3::new(0.0, 0.0, (n_above - n_below) * ds / band)
            }
        }
    }
}

/// Emitting, absorbing medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Emitter {
    Empty,
    /// Gaussian density bump of constant color.
    Blob {
        center: [f64; 3],
        radius: f64,
        density: f64,
        color: Rgb,
    },
    Uniform {
        density: f64,
        color: Rgb,
    },
}

impl Emitter {
    pub fn density(&self, x: &Vec3) -> f64 {
        match *self {
            Emitter::Empty => 0.0,
            Emitter::Blob { center, radius, density, .. } => {
                let r2 = (x - Vector3::from(center)).norm_squared();
                density * (-r2 / (2.0 * radius * radius)).exp()
            }
            Emitter::Uniform { density, .. } => density,
        }
    }

    pub fn color(&self, _x: &Vec3) -> Rgb {
        match *self {
            Emitter::Empty => [0.0; 3],
            Emitter::Blob { color, .. } | Emitter::Uniform { color, .. } => color,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Skybox {
    Constant { color: Rgb },
    /// Smooth per-channel sinusoids of the direction components.
    Waves { frequency: f64 },
    /// Longitude/latitude checkerboard.
    Checker { cells: u32 },
}

impl Skybox {
    pub fn radiance(&self, d: &Vec3) -> Rgb {
        match *self {
            Skybox::Constant { color } => color,
            Skybox::Waves { frequency: f } => [
                0.5 + 0.4 * (f * d.x).sin(),
                0.5 + 0.4 * (f * d.y + 1.0).sin(),
                0.5 + 0.4 * (f * d.z + 2.0).sin(),
            ],
            Skybox::Checker { cells } => {
                let lon = d.y.atan2(d.x) / std::f64::consts::PI;
                let lat = d.z.clamp(-1.0, 1.0).asin() / std::f64::consts::FRAC_PI_2;
                let a = ((lon + 1.0) * cells as f64).floor() as i64;
                let b = ((lat + 1.0) * 0.5 * cells as f64).floor() as i64;
                if (a + b) % 2 == 0 {
                    [0.9, 0.85, 0.2]
                } else {
                    [0.1, 0.2, 0.6]
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub index: IndexProfile,
    pub emitter: Emitter,
    pub skybox: Skybox,
    pub near: f64,
    pub far: f64,
}

impl IndexField for AnalyticScene {
    fn index(&self, x: &Vec3) -> f64 {
        self.index.index(x)
    }

    fn gradient(&self, x: &Vec3) -> Vec3 {
        self.index.gradient(x)
    }
}

impl AnalyticScene {
    /// Glass sphere (n = 1.5) of radius 1 at the origin, holding a small
    /// colored blob, in front of a smooth skybox.
    pub fn glass_sphere() -> Self {
        AnalyticScene {
            index: IndexProfile::Sphere {
                center: [0.0; 3],
                radius: 1.0,
                n: 1.5,
                band: 0.08,
            },
            emitter: Emitter::Blob {
                center: [0.0; 3],
                radius: 0.2,
                density: 8.0,
                color: [0.9, 0.3, 0.2],
            },
            skybox: Skybox::Waves { frequency: 3.0 },
            near: 2.0,
            far: 6.0,
        }
    }

    /// Water-like sphere (n = 1.33) with no interior emitter.
    pub fn water_sphere() -> Self {
        AnalyticScene {
            index: IndexProfile::Sphere {
                center: [0.0; 3],
                radius: 1.0,
                n: 1.33,
                band: 0.08,
            },
            emitter: Emitter::Empty,
            skybox: Skybox::Waves { frequency: 3.0 },
            near: 2.0,
            far: 6.0,
        }
    }

    pub fn vacuum() -> Self {
        AnalyticScene {
            index: IndexProfile::Constant { n: 1.0 },
            emitter: Emitter::Empty,
            skybox: Skybox::Waves { frequency: 3.0 },
            near: 2.0,
            far: 6.0,
        }
    }

    /// Named presets: `glass-sphere`, `water-sphere`, `vacuum`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "glass-sphere" => Some(Self::glass_sphere()),
            "water-sphere" => Some(Self::water_sphere()),
            "vacuum" => Some(Self::vacuum()),
            _ => None,
        }
    }

    /// Preset with top-level fields replaced by those present in `overrides`.
    pub fn from_preset_with(name: &str, overrides: Option<&serde_json::Value>) -> Result<Self> {
        let base = Self::preset(name).ok_or_else(|| Error::InvalidInput(format!("unknown scene '{name}'")))?;
        let Some(overrides) = overrides else {
            return Ok(base);
        };
        let mut value = serde_json::to_value(base).expect("scene serializes");
        let (Some(dst), Some(src)) = (value.as_object_mut(), overrides.as_object()) else {
            return Err(Error::InvalidInput("scene parameters must be a JSON object".into()));
        };
        for (k, v) in src {
            dst.insert(k.clone(), v.clone());
        }
        serde_json::from_value(value).map_err(|e| Error::InvalidInput(format!("scene parameters: {e}")))
    }
}

/// Reference render: marches the ray equation against the analytic index
/// with `steps` Runge-Kutta steps between the scene bounds, treats every step
/// as a sample and composites with the skybox seen in the final direction.
pub fn render_oracle(scene: &AnalyticScene, camera: &Camera, steps: usize) -> Image {
    assert!(steps >= 1);
    let k = camera.intrinsics;
    let pixels: Vec<Rgb> = (0..k.width * k.height)
        .into_par_iter()
        .map(|i| {
            let d = camera.pixel_direction((i % k.width) as f64, (i / k.width) as f64);
            oracle_pixel(scene, &camera.position, &d, steps)
        })
        .collect();
    Image {
        width: k.width,
        height: k.height,
        pixels,
    }
}

/// Densely marched reference path: positions, arc lengths and the final
/// heading.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePath {
    pub positions: Vec<Vec3>,
    pub t: Vec<f64>,
    pub directions: Vec<Vec3>,
}

/// Integrates `dx/ds = v/n`, `dv/ds = ∇n` with classical Runge-Kutta steps of
/// `(far - near) / steps`, projecting `v` back to length `n(x)` after each
/// step.
pub fn oracle_march(index: &IndexProfile, origin: &Vec3, dir: &Vec3, near: f64, far: f64, steps: usize) -> OraclePath {
    let ds = (far - near) / steps as f64;
    let deriv = |x: &Vec3, v: &Vec3| (v / index.index(x), index.gradient(x));
    let mut x = origin + near * dir;
    let mut v = index.index(&x) * dir;
    let mut heading = *dir;
    let mut t = near;
    let mut path = OraclePath {
        positions: vec![x],
        t: vec![t],
        directions: vec![heading],
    };
    for _ in 0..steps {
        let (k1x, k1v) = deriv(&x, &v);
        let (k2x, k2v) = deriv(&(x + 0.5 * ds * k1x), &(v + 0.5 * ds * k1v));
        let (k3x, k3v) = deriv(&(x + 0.5 * ds * k2x), &(v + 0.5 * ds * k2v));
        let (k4x, k4v) = deriv(&(x + ds * k3x), &(v + ds * k3v));
        let xn = x + ds / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        let vn = v + ds / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        t += (xn - x).norm();
        x = xn;
        let speed = vn.norm();
        if speed > 1e-8 {
            heading = vn / speed;
        }
        v = index.index(&x) * heading;
        path.positions.push(x);
        path.t.push(t);
        path.directions.push(heading);
    }
    path
}

/// Emission-absorption along `path` with every point a sample, gaps clipped
/// at `scene.far`, plus the skybox in the final heading.
pub fn oracle_shade(scene: &AnalyticScene, path: &OraclePath) -> Rgb {
    let far = scene.far;
    let mut color = [0.0; 3];
    let mut transmittance = 1.0f64;
    for (i, x) in path.positions.iter().enumerate() {
        let t = path.t[i];
        let t_next = path.t.get(i + 1).copied().unwrap_or(far.max(t));
        let gap = (t_next.min(far) - t.min(far)).max(0.0);
        let alpha = 1.0 - (-scene.emitter.density(x) * gap).exp();
        let c = scene.emitter.color(x);
        for ch in 0..3 {
            color[ch] += transmittance * alpha * c[ch];
        }
        transmittance *= 1.0 - alpha;
    }
    let sky = scene.skybox.radiance(path.directions.last().expect("non-empty path"));
    for ch in 0..3 {
        color[ch] += transmittance * sky[ch];
    }
    color
}

/// One reference pixel; see [`render_oracle`].
pub fn oracle_pixel(scene: &AnalyticScene, origin: &Vec3, dir: &Vec3, steps: usize) -> Rgb {
    oracle_shade(scene, &oracle_march(&scene.index, origin, dir, scene.near, scene.far, steps))
}

/// Binary silhouettes of the dense region, one straight ray per pixel
/// center.
pub fn make_silhouettes(scene: &AnalyticScene, cameras: &[Camera]) -> Result<SilhouetteSet> {
    let masks = cameras
        .iter()
        .map(|cam| {
            let k = cam.intrinsics;
            let data = (0..k.width * k.height)
                .map(|i| {
                    let d = cam.pixel_direction((i % k.width) as f64, (i / k.width) as f64);
                    scene.index.ray_hits_inside(&cam.position, &d)
                })
                .collect();
            Mask {
                width: k.width,
                height: k.height,
                data,
            }
        })
        .collect();
    SilhouetteSet::new(masks, cameras.to_vec())
}

/// A rendered reference view with its silhouette.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticView {
    pub camera: Camera,
    pub image: Image,
    pub mask: Mask,
}

/// Reference images and silhouettes for each camera.
pub fn synthesize_views(scene: &AnalyticScene, cameras: &[Camera], steps: usize) -> Result<Vec<SyntheticView>> {
    let masks = make_silhouettes(scene, cameras)?;
    Ok(cameras
        .iter()
        .zip(masks.masks())
        .map(|(camera, mask)| SyntheticView {
            camera: *camera,
            image: render_oracle(scene, camera, steps),
            mask: mask.clone(),
        })
        .collect())
}
