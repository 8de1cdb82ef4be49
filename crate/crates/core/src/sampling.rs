//! Coarse and fine sample selection along tracked paths.
//!
//! Coarse samples pick one Eikonal sample per bin of `n_e` consecutive path
//! entries. Fine samples invert the CDF of the coarse compositing weights,
//! then snap back onto the path: each fine distance takes the direction of
//! the nearest former Eikonal sample and is placed along it.

use rand::Rng;

use crate::eikonal::EikonalPath;
use crate::Vec3;

/// Total weight below which a ray is treated as empty and fine samples fall
/// back to uniform.
pub const EMPTY_WEIGHT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub positions: Vec<Vec3>,
    pub directions: Vec<Vec3>,
    pub t: Vec<f64>,
    /// Gap to the next sample; the last gap runs to `t_far`. Gaps beyond
    /// `t_far` are clipped to zero.
    pub deltas: Vec<f64>,
    pub t_far: f64,
}

impl SampleSet {
    fn with_capacity(n: usize, t_far: f64) -> Self {
        SampleSet {
            positions: Vec::with_capacity(n),
            directions: Vec::with_capacity(n),
            t: Vec::with_capacity(n),
            deltas: Vec::with_capacity(n),
            t_far,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn push(&mut self, x: Vec3, d: Vec3, t: f64) {
        self.positions.push(x);
        self.directions.push(d);
        self.t.push(t);
    }

    /// Recomputes gaps from the current order, clipping at `t_far`.
    pub fn recompute_deltas(&mut self) {
        let far = self.t_far;
        self.deltas = (0..self.t.len())
            .map(|i| {
                let here = self.t[i].min(far);
                let next = self.t.get(i + 1).map_or(far, |&t| t.min(far));
                (next - here).max(0.0)
            })
            .collect();
    }

    /// Direction the ray leaves the bounded volume with.
    pub fn exit_direction(&self) -> Vec3 {
        *self.directions.last().expect("non-empty sample set")
    }

    /// Every sample of a path, in order.
    pub fn from_path(path: &EikonalPath) -> Self {
        let mut set = SampleSet::with_capacity(path.len(), path.t_far);
        for i in 0..path.len() {
            set.push(path.positions[i], path.directions[i], path.t[i]);
        }
        set.recompute_deltas();
        set
    }
}

/// One Eikonal sample drawn uniformly from each bin of `n_e` consecutive
/// path entries.
pub fn sample_coarse(path: &EikonalPath, n_coarse: usize, n_e: usize, rng: &mut impl Rng) -> SampleSet {
    assert!(n_coarse >= 1 && n_e >= 1);
    assert_eq!(
        path.len(),
        n_coarse * n_e + 1,
        "path length must be n_coarse * n_e + 1"
    );
    let mut set = SampleSet::with_capacity(n_coarse, path.t_far);
    for bin in 0..n_coarse {
        let j = bin * n_e + if n_e > 1 { rng.gen_range(0..n_e) } else { 0 };
        set.push(path.positions[j], path.directions[j], path.t[j]);
    }
    set.recompute_deltas();
    set
}

/// Interval `[lo, hi)` of distances represented by coarse sample `i`.
fn bin_edges(coarse: &SampleSet) -> Vec<f64> {
    let mut edges = Vec::with_capacity(coarse.len() + 1);
    edges.push(coarse.t[0]);
    for i in 0..coarse.len() {
        let lo = *edges.last().unwrap();
        edges.push((coarse.t[i].min(coarse.t_far) + coarse.deltas[i]).max(lo));
    }
    edges
}

/// Inverse-transform sampling of `n_fine` distances from the piecewise
/// constant density over coarse bins, using one stratified uniform per
/// `1/n_fine` slot. Falls back to uniform over `[t_near, t_far]` when the
/// weights are (nearly) all zero.
pub fn sample_distances(coarse: &SampleSet, weights: &[f64], t_near: f64, n_fine: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert_eq!(weights.len(), coarse.len(), "one weight per coarse sample");
    let uniforms = (0..n_fine).map(|k| (k as f64 + rng.gen::<f64>()) / n_fine as f64);
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    if total < EMPTY_WEIGHT || coarse.is_empty() {
        let span = coarse.t_far - t_near;
        return uniforms.map(|u| t_near + u * span).collect();
    }
    let edges = bin_edges(coarse);
    let mut cdf = Vec::with_capacity(weights.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for w in weights {
        acc += w.max(0.0) / total;
        cdf.push(acc);
    }
    *cdf.last_mut().unwrap() = 1.0;
    uniforms
        .map(|u| {
            // first bin whose upper CDF edge exceeds u
            let b = cdf[1..].partition_point(|&c| c <= u).min(weights.len() - 1);
            let (c0, c1) = (cdf[b], cdf[b + 1]);
            let frac = if c1 > c0 { ((u - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
            edges[b] + frac * (edges[b + 1] - edges[b])
        })
        .collect()
}

/// Places distances back on the piecewise-linear path.
pub fn remap_to_path(path: &EikonalPath, distances: &[f64]) -> SampleSet {
    let mut set = SampleSet::with_capacity(distances.len(), path.t_far);
    let mut ts = distances.to_vec();
    ts.sort_by(f64::total_cmp);
    for t in ts {
        let j = path.former_index(t);
        let d = path.directions[j];
        set.push(path.positions[j] + d * (t - path.t[j]), d, t);
    }
    set.recompute_deltas();
    set
}

/// Hierarchical fine samples drawn from the coarse weights and remapped
/// onto the curved path.
pub fn sample_fine(
    coarse: &SampleSet,
    weights: &[f64],
    path: &EikonalPath,
    n_fine: usize,
    rng: &mut impl Rng,
) -> SampleSet {
    assert!(n_fine >= 1, "n_fine must be >= 1");
    let ts = sample_distances(coarse, weights, path.t_near, n_fine, rng);
    remap_to_path(path, &ts)
}

/// Union of two sample sets ordered by distance. Ties keep both samples.
pub fn merge_sorted(coarse: &SampleSet, fine: &SampleSet) -> SampleSet {
    let mut set = SampleSet::with_capacity(coarse.len() + fine.len(), coarse.t_far);
    let (mut i, mut j) = (0, 0);
    while i < coarse.len() || j < fine.len() {
        let take_coarse = j >= fine.len() || (i < coarse.len() && coarse.t[i] <= fine.t[j]);
        if take_coarse {
            set.push(coarse.positions[i], coarse.directions[i], coarse.t[i]);
            i += 1;
        } else {
            set.push(fine.positions[j], fine.directions[j], fine.t[j]);
            j += 1;
        }
    }
    set.recompute_deltas();
    set
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + s * ab)).norm()
}

/// Distance of a sample at arc length `t` to its enclosing path segment. Past
/// the final sample, the continuation along the last direction is used.
pub fn distance_to_path(path: &EikonalPath, x: &Vec3, t: f64) -> f64 {
    let j = path.former_index(t);
    let a = path.positions[j];
    let b = match path.positions.get(j + 1) {
        Some(b) => *b,
        None => a + path.directions[j] * (t - path.t[j]).max(0.0),
    };
    point_segment_distance(x, &a, &b)
}
