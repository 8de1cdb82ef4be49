//! Voxel grid of refractive index carved from silhouettes.
//!
//! Values live on grid vertices. A vertex owns the axis-aligned cell of one
//! grid spacing centered on it; carving counts how many stratified points of
//! that cell fall inside the visual hull and blends air with the material
//! index by that fraction.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{check_rigid, Camera};
use crate::error::{Error, Result};
use crate::Vec3;

/// Anything that can be marched through by the Eikonal tracker.
pub trait IndexField: Sync {
    fn index(&self, x: &Vec3) -> f64;
    fn gradient(&self, x: &Vec3) -> Vec3;
}

/// A medium of constant index. Rays through it stay straight.
#[derive(Debug, Clone, Copy)]
pub struct Homogeneous(pub f64);

impl IndexField for Homogeneous {
    fn index(&self, _x: &Vec3) -> f64 {
        self.0
    }

    fn gradient(&self, _x: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
}

/// Binary silhouette image, row-major, `true` inside the object.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn filled(width: u32, height: u32, inside: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![inside; (width * height) as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    /// Whether continuous pixel coordinates land on an inside pixel.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        if !(u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64) {
            return false;
        }
        self.get(u as u32, v as u32)
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Reads an 8-bit grayscale PNG; pixels `>= 128` are inside.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })?
            .into_luma8();
        Ok(Mask {
            width: img.width(),
            height: img.height(),
            data: img.pixels().map(|p| p.0[0] >= 128).collect(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(self.width, self.height, buf)
            .expect("mask buffer size")
            .save(path)
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })
    }
}

#[derive(Debug, Clone)]
pub struct SilhouetteSet {
    masks: Vec<Mask>,
    cameras: Vec<Camera>,
}

impl SilhouetteSet {
    pub fn new(masks: Vec<Mask>, cameras: Vec<Camera>) -> Result<Self> {
        if masks.len() != cameras.len() {
            return Err(Error::InvalidInput(format!(
                "{} masks for {} cameras",
                masks.len(),
                cameras.len()
            )));
        }
        for (i, (m, c)) in masks.iter().zip(&cameras).enumerate() {
            if m.width != c.intrinsics.width || m.height != c.intrinsics.height {
                return Err(Error::BadFrame {
                    frame: i,
                    reason: format!(
                        "mask is {}x{} but camera images are {}x{}",
                        m.width, m.height, c.intrinsics.width, c.intrinsics.height
                    ),
                });
            }
            check_rigid(&c.rotation).map_err(|e| Error::BadFrame {
                frame: i,
                reason: e.to_string(),
            })?;
        }
        Ok(SilhouetteSet { masks, cameras })
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Visual-hull membership: inside every silhouette. A point behind any
    /// camera is outside.
    pub fn in_hull(&self, p: &Vec3) -> bool {
        self.cameras.iter().zip(&self.masks).all(|(cam, mask)| match cam.project(p) {
            Some((u, v)) => mask.contains(u, v),
            None => false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoundingBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if !(0..3).all(|k| min[k] < max[k]) {
            return Err(Error::InvalidInput(format!(
                "bbox min {min:?} must be below max {max:?} on every axis"
            )));
        }
        Ok(BoundingBox { min, max })
    }

    pub fn cube(half: f64) -> Self {
        BoundingBox {
            min: Vector3::repeat(-half),
            max: Vector3::repeat(half),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CarveOptions {
    pub subsamples_per_axis: usize,
    /// Drop every inside component except the largest (6-connectivity).
    pub keep_largest_component: bool,
}

impl Default for CarveOptions {
    fn default() -> Self {
        CarveOptions {
            subsamples_per_axis: 3,
            keep_largest_component: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CarveReport {
    pub grid: RefractiveGrid,
    /// No vertex had any subsample inside the hull.
    pub empty_hull: bool,
    /// Vertices with at least one inside subsample, after cleanup.
    pub occupied_vertices: usize,
    /// Vertices reset to air by connected-component cleanup.
    pub discarded_vertices: usize,
}

/// Refractive index on a regular vertex grid, with the per-vertex
/// central-difference gradient stored next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct RefractiveGrid {
    dims: [usize; 3],
    bbox: BoundingBox,
    values: Vec<f64>,
    gradient: Vec<Vec3>,
}

impl RefractiveGrid {
    pub fn from_values(dims: [usize; 3], bbox: BoundingBox, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidInput(format!("grid dims {dims:?} must be >= 2 per axis")));
        }
        BoundingBox::new(bbox.min, bbox.max)?;
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::InvalidInput("value count does not match dims".into()));
        }
        let mut grid = RefractiveGrid {
            dims,
            bbox,
            values,
            gradient: Vec::new(),
        };
        grid.gradient = grid.central_differences();
        Ok(grid)
    }

    /// Samples `f` at every vertex.
    pub fn from_fn(dims: [usize; 3], bbox: BoundingBox, f: impl Fn(&Vec3) -> f64) -> Result<Self> {
        let proto = RefractiveGrid {
            dims,
            bbox,
            values: Vec::new(),
            gradient: Vec::new(),
        };
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidInput(format!("grid dims {dims:?} must be >= 2 per axis")));
        }
        let values = (0..dims[0] * dims[1] * dims[2])
            .map(|i| f(&proto.vertex_position(proto.unflatten(i))))
            .collect();
        Self::from_values(dims, bbox, values)
    }

    pub fn constant(dims: [usize; 3], bbox: BoundingBox, n: f64) -> Result<Self> {
        Self::from_values(dims, bbox, vec![n; dims[0] * dims[1] * dims[2]])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradients(&self) -> &[Vec3] {
        &self.gradient
    }

    pub fn spacing(&self) -> Vec3 {
        Vector3::from_fn(|k, _| (self.bbox.max[k] - self.bbox.min[k]) / (self.dims[k] - 1) as f64)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn flat_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn vertex_position(&self, v: [usize; 3]) -> Vec3 {
        let h = self.spacing();
        Vector3::from_fn(|a, _| self.bbox.min[a] + v[a] as f64 * h[a])
    }

    pub fn value_at(&self, v: [usize; 3]) -> f64 {
        self.values[self.flat_index(v)]
    }

    /// Mean index over all vertices.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Volume-weighted material fraction `Σ (n - 1)/(n_material - 1) · cell`.
    pub fn material_volume(&self, n_material: f64) -> f64 {
        let h = self.spacing();
        let cell = h.x * h.y * h.z;
        if n_material <= 1.0 {
            return 0.0;
        }
        self.values.iter().map(|&n| (n - 1.0) / (n_material - 1.0)).sum::<f64>() * cell
    }

    /// Central differences in the interior, one-sided on grid faces.
    pub fn central_differences(&self) -> Vec<Vec3> {
        let h = self.spacing();
        let d = self.dims;
        (0..self.values.len())
            .map(|idx| {
                let v = self.unflatten(idx);
                Vector3::from_fn(|axis, _| {
                    let step = |delta: isize| {
                        let mut w = v;
                        w[axis] = (v[axis] as isize + delta) as usize;
                        self.values[self.flat_index(w)]
                    };
                    if v[axis] == 0 {
                        (step(1) - step(0)) / h[axis]
                    } else if v[axis] == d[axis] - 1 {
                        (step(0) - step(-1)) / h[axis]
                    } else {
                        (step(1) - step(-1)) / (2.0 * h[axis])
                    }
                })
            })
            .collect()
    }

    /// Cell lookup: base vertex and fractional offsets, or `None` outside the bbox.
    #[inline]
    fn locate(&self, x: &Vec3) -> Option<([usize; 3], [f64; 3])> {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let extent = self.bbox.max[a] - self.bbox.min[a];
            let f = (x[a] - self.bbox.min[a]) / extent * (self.dims[a] - 1) as f64;
            if !(f >= 0.0 && f <= (self.dims[a] - 1) as f64) {
                return None;
            }
            let i = (f.floor() as usize).min(self.dims[a] - 2);
            base[a] = i;
            frac[a] = f - i as f64;
        }
        Some((base, frac))
    }

    #[inline]
    fn trilinear<T>(&self, data: &[T], base: [usize; 3], frac: [f64; 3]) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        let i0 = self.flat_index(base);
        let [fx, fy, fz] = frac;
        let lerp = |a: T, b: T, t: f64| a * (1.0 - t) + b * t;
        let c00 = lerp(data[i0], data[i0 + sx], fx);
        let c10 = lerp(data[i0 + sy], data[i0 + sy + sx], fx);
        let c01 = lerp(data[i0 + sz], data[i0 + sz + sx], fx);
        let c11 = lerp(data[i0 + sz + sy], data[i0 + sz + sy + sx], fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }

    /// Trilinearly interpolated index; exactly 1.0 outside the bbox.
    pub fn sample_n(&self, x: &Vec3) -> f64 {
        match self.locate(x) {
            Some((base, frac)) => self.trilinear(&self.values, base, frac),
            None => 1.0,
        }
    }

    /// Trilinearly interpolated stored gradient; zero outside the bbox.
    pub fn sample_grad(&self, x: &Vec3) -> Vec3 {
        match self.locate(x) {
            Some((base, frac)) => self.trilinear(&self.gradient, base, frac),
            None => Vec3::zeros(),
        }
    }

    /// Separable Gaussian blur, truncated at ±3σ with replicated edges.
    /// The gradient is recomputed on the result.
    pub fn smooth(&self, sigma_voxels: f64) -> Result<Self> {
        if !(sigma_voxels >= 0.0) {
            return Err(Error::InvalidInput(format!("smoothing sigma {sigma_voxels} must be >= 0")));
        }
        let mut values = self.values.clone();
        if sigma_voxels > 0.0 {
            let kernel = gaussian_kernel(sigma_voxels);
            for axis in 0..3 {
                values = convolve_axis(&values, self.dims, axis, &kernel);
            }
        }
        Self::from_values(self.dims, self.bbox, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(32 + self.values.len() * 16);
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&GRID_VERSION.to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.bbox.min.iter().chain(self.bbox.max.iter()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for g in &self.gradient {
            for &c in g.iter() {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(bytes, "grid file");
        if r.take(4)? != GRID_MAGIC {
            return Err(Error::format("grid file", "bad magic"));
        }
        let version = r.u32()?;
        if version != GRID_VERSION {
            return Err(Error::VersionMismatch {
                what: "grid file",
                found: version,
                expected: GRID_VERSION,
            });
        }
        let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::format("grid file", format!("dims {dims:?}")));
        }
        let mut b = [0f64; 6];
        for v in &mut b {
            *v = r.f32()? as f64;
        }
        let bbox = BoundingBox::new(Vector3::new(b[0], b[1], b[2]), Vector3::new(b[3], b[4], b[5]))?;
        let count = dims[0] * dims[1] * dims[2];
        let values = (0..count).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        // stored gradient is skipped and re-derived from the values
        r.take(count * 12)?;
        if !r.is_done() {
            return Err(Error::format("grid file", "trailing bytes"));
        }
        Self::from_values(dims, bbox, values)
    }
}

impl IndexField for RefractiveGrid {
    fn index(&self, x: &Vec3) -> f64 {
        self.sample_n(x)
    }

    fn gradient(&self, x: &Vec3) -> Vec3 {
        self.sample_grad(x)
    }
}

const GRID_MAGIC: &[u8; 4] = b"EIKG";
const GRID_VERSION: u32 = 1;

pub(crate) struct LeReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> LeReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        LeReader { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.what, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

fn convolve_axis(values: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let n = dims[axis] as isize;
    (0..values.len())
        .map(|idx| {
            let coord = ((idx / stride) % dims[axis]) as isize;
            let base = idx as isize - coord * stride as isize;
            kernel
                .iter()
                .enumerate()
                .map(|(t, w)| {
                    let c = (coord + t as isize - radius).clamp(0, n - 1);
                    w * values[(base + c * stride as isize) as usize]
                })
                .sum()
        })
        .collect()
}

/// Builds the index grid from silhouettes: per-vertex occupancy fraction of
/// `subsamples³` stratified points inside the visual hull, blended between
/// air (1.0) and `n_material`.
pub fn carve(
    silhouettes: &SilhouetteSet,
    dims: [usize; 3],
    bbox: BoundingBox,
    n_material: f64,
    options: CarveOptions,
) -> Result<CarveReport> {
    if !(n_material >= 1.0) {
        return Err(Error::InvalidInput(format!("material index {n_material} must be >= 1")));
    }
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidInput(format!("grid dims {dims:?} must be >= 2 per axis")));
    }
    if silhouettes.is_empty() {
        return Err(Error::InvalidInput("carving needs at least one silhouette".into()));
    }
    if options.subsamples_per_axis == 0 {
        return Err(Error::InvalidInput("subsamples per axis must be >= 1".into()));
    }
    let bbox = BoundingBox::new(bbox.min, bbox.max)?;
    let mut grid = RefractiveGrid::constant(dims, bbox, 1.0)?;
    let h = grid.spacing();
    let s = options.subsamples_per_axis;
    let offsets: Vec<Vec3> = (0..s * s * s)
        .map(|i| {
            let sub = [i % s, (i / s) % s, i / (s * s)];
            Vector3::from_fn(|a, _| h[a] * ((sub[a] as f64 + 0.5) / s as f64 - 0.5))
        })
        .collect();
    let total = offsets.len();

    let mut inside: Vec<usize> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let center = grid.vertex_position(grid.unflatten(idx));
            offsets.iter().filter(|o| silhouettes.in_hull(&(center + *o))).count()
        })
        .collect();

    let discarded = if options.keep_largest_component {
        keep_largest_component(&grid, &mut inside)
    } else {
        0
    };

    let occupied = inside.iter().filter(|&&b| b > 0).count();
    for (v, &b) in grid.values.iter_mut().zip(&inside) {
        *v = 1.0 + (n_material - 1.0) * (b as f64 / total as f64);
    }
    grid.gradient = grid.central_differences();

    let empty_hull = occupied == 0;
    if empty_hull {
        warn!("visual hull is empty; index grid is all air");
    }
    Ok(CarveReport {
        grid,
        empty_hull,
        occupied_vertices: occupied,
        discarded_vertices: discarded,
    })
}

/// Zeroes every occupied component but the largest; returns how many
/// vertices were cleared.
fn keep_largest_component(grid: &RefractiveGrid, inside: &mut [usize]) -> usize {
    let d = grid.dims;
    let mut label = vec![usize::MAX; inside.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..inside.len() {
        if inside[seed] == 0 || label[seed] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[seed] = id;
        queue.push_back(seed);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let v = grid.unflatten(idx);
            for axis in 0..3 {
                for delta in [-1isize, 1] {
                    let c = v[axis] as isize + delta;
                    if c < 0 || c >= d[axis] as isize {
                        continue;
                    }
                    let mut w = v;
                    w[axis] = c as usize;
                    let n = grid.flat_index(w);
                    if inside[n] > 0 && label[n] == usize::MAX {
                        label[n] = id;
                        queue.push_back(n);
                    }
                }
            }
        }
        sizes.push(size);
    }
    let Some(largest) = (0..sizes.len()).max_by_key(|&i| (sizes[i], std::cmp::Reverse(i))) else {
        return 0;
    };
    let mut cleared = 0;
    for (b, &l) in inside.iter_mut().zip(&label) {
        if *b > 0 && l != largest {
            *b = 0;
            cleared += 1;
        }
    }
    cleared
}
