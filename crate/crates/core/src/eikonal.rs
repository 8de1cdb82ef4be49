//! Curved-ray tracking through a refractive-index field.
//!
//! The path is advanced with the discrete ray equation of geometric optics,
//! where `v = n dx/ds`:
//!
//! ```text
//! x[i+1] = x[i] + (Δs / n(x[i])) v[i]
//! v[i+1] = v[i] + Δs ∇n(x[i])
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refindex::IndexField;
use crate::Vec3;

const DEGENERATE_V: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, t_near: f64, t_far: f64) -> Result<Self> {
        if ((direction.norm() - 1.0).abs()) > 1e-6 {
            return Err(Error::InvalidInput(format!("ray direction {direction:?} is not unit length")));
        }
        if !(0.0 <= t_near && t_near < t_far) {
            return Err(Error::InvalidInput(format!("ray bounds need 0 <= {t_near} < {t_far}")));
        }
        Ok(Ray {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + t * self.direction
    }
}

/// Step length that spreads `n_coarse · n_e` steps over the ray's bounds.
pub fn step_size(ray: &Ray, n_coarse: usize, n_e: usize) -> f64 {
    assert!(n_coarse >= 1 && n_e >= 1, "step_size needs n_coarse, n_e >= 1");
    (ray.t_far - ray.t_near) / (n_coarse * n_e) as f64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrackOptions {
    /// Rescale `v` to `n(x)` after every step. Off by default: the plain
    /// update lets `|v|` drift.
    pub renormalize: bool,
}

/// Dense per-step samples of a tracked ray ("Eikonal samples").
#[derive(Debug, Clone, PartialEq)]
pub struct EikonalPath {
    pub positions: Vec<Vec3>,
    /// `v = n dx/ds`, in index units.
    pub aux: Vec<Vec3>,
    pub directions: Vec<Vec3>,
    /// Cumulative arc length, starting at `t_near`.
    pub t: Vec<f64>,
    pub t_near: f64,
    pub t_far: f64,
    pub step: f64,
    /// Steps where `|v|` collapsed and the previous direction was reused.
    pub degenerate_steps: usize,
}

impl EikonalPath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index of the last sample with `t[j] <= t` (0 if `t` precedes the path).
    pub fn former_index(&self, t: f64) -> usize {
        self.t.partition_point(|&tj| tj <= t).saturating_sub(1)
    }

    pub fn last_direction(&self) -> Vec3 {
        *self.directions.last().expect("non-empty path")
    }
}

/// Tracks `ray` through `field` for exactly `n_steps` steps of
/// `Δs = (t_far - t_near) / n_steps`, returning `n_steps + 1` samples.
/// Tracking does not stop at `t_far`.
pub fn track(ray: &Ray, field: &impl IndexField, n_steps: usize, options: TrackOptions) -> EikonalPath {
    assert!(n_steps >= 1, "track needs at least one step");
    let ds = (ray.t_far - ray.t_near) / n_steps as f64;
    let mut positions = Vec::with_capacity(n_steps + 1);
    let mut aux = Vec::with_capacity(n_steps + 1);
    let mut directions = Vec::with_capacity(n_steps + 1);
    let mut t = Vec::with_capacity(n_steps + 1);
    let mut degenerate_steps = 0;

    let mut x = ray.at(ray.t_near);
    let mut n = field.index(&x);
    let mut v = n * ray.direction;
    let mut d = ray.direction;
    let mut arc = ray.t_near;
    positions.push(x);
    aux.push(v);
    directions.push(d);
    t.push(arc);

    for _ in 0..n_steps {
        let grad = field.gradient(&x);
        let x_next = x + (ds / n) * v;
        let mut v_next = v + ds * grad;
        arc += (x_next - x).norm();
        x = x_next;
        n = field.index(&x);
        let speed = v_next.norm();
        if speed < DEGENERATE_V || !speed.is_finite() {
            degenerate_steps += 1;
            v_next = n * d;
        } else {
            d = v_next / speed;
            if options.renormalize {
                v_next = n * d;
            }
        }
        v = v_next;
        positions.push(x);
        aux.push(v);
        directions.push(d);
        t.push(arc);
    }

    EikonalPath {
        positions,
        aux,
        directions,
        t,
        t_near: ray.t_near,
        t_far: ray.t_far,
        step: ds,
        degenerate_steps,
    }
}

/// Writes a path as CSV rows `t,x,y,z,dx,dy,dz`.
pub fn write_path_csv(path: &EikonalPath, out: &mut (impl std::io::Write + ?Sized)) -> std::io::Result<()> {
    writeln!(out, "t,x,y,z,dx,dy,dz")?;
    for ((t, x), d) in path.t.iter().zip(&path.positions).zip(&path.directions) {
        writeln!(out, "{t},{},{},{},{},{},{}", x.x, x.y, x.z, d.x, d.y, d.z)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refindex::{BoundingBox, Homogeneous, RefractiveGrid};
    use nalgebra::Vector3;

    fn ray(dir: Vec3) -> Ray {
        Ray::new(Vector3::new(0.1, -0.2, 0.3), dir.normalize(), 2.0, 6.0).unwrap()
    }

    #[test]
    fn step_size_formula() {
        let r = ray(Vector3::x());
        assert_eq!(step_size(&r, 64, 4), 0.015625);
        assert_eq!(64 * 4, 256);
        let unit = Ray::new(Vec3::zeros(), Vector3::z(), 0.0, 1.0).unwrap();
        assert_eq!(step_size(&unit, 1, 1), 1.0);
    }

    #[test]
    fn ray_validation() {
        assert!(Ray::new(Vec3::zeros(), Vector3::new(1.0, 1.0, 0.0), 0.0, 1.0).is_err());
        assert!(Ray::new(Vec3::zeros(), Vector3::x(), 1.0, 1.0).is_err());
        assert!(Ray::new(Vec3::zeros(), Vector3::x(), -1.0, 1.0).is_err());
    }

    #[test]
    fn vacuum_path_is_straight() {
        let r = ray(Vector3::new(0.3, 1.0, -0.2));
        let p = track(&r, &Homogeneous(1.0), 256, TrackOptions::default());
        assert_eq!(p.len(), 257);
        let last = *p.positions.last().unwrap();
        assert!((last - (r.at(2.0) + 256.0 * p.step * r.direction)).norm() < 1e-5);
        assert!((p.t.last().unwrap() - 6.0).abs() < 1e-9);
        assert!(p.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn former_index_lookup() {
        let p = track(&ray(Vector3::x()), &Homogeneous(1.0), 8, TrackOptions::default());
        assert_eq!(p.former_index(2.0), 0);
        assert_eq!(p.former_index(2.6), 1);
        assert_eq!(p.former_index(1.0), 0);
        assert_eq!(p.former_index(10.0), 8);
    }

    #[test]
    fn renormalize_keeps_v_on_index() {
        let grid = RefractiveGrid::from_fn([5, 5, 41], BoundingBox::cube(2.0), |p| 1.25 + 0.2 * (3.0 * p.z).tanh()).unwrap();
        let r = Ray::new(Vector3::new(-1.0, 0.0, -1.5), Vector3::new(0.5, 0.0, 1.0).normalize(), 0.0, 3.0).unwrap();
        let p = track(&r, &grid, 300, TrackOptions { renormalize: true });
        for (x, v) in p.positions.iter().zip(&p.aux).skip(1) {
            assert!((v.norm() - grid.sample_n(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn segments_follow_aux_vector() {
        let grid = RefractiveGrid::from_fn([9, 9, 9], BoundingBox::cube(1.0), |p| 1.0 + 0.4 * (-3.0 * p.norm_squared()).exp()).unwrap();
        let r = Ray::new(Vector3::new(-2.0, 0.3, 0.1), Vector3::x(), 0.5, 3.5).unwrap();
        let p = track(&r, &grid, 200, TrackOptions::default());
        for i in 0..200 {
            let seg = p.positions[i + 1] - p.positions[i];
            let cross = seg.normalize().cross(&p.aux[i].normalize()).norm();
            assert!(cross < 1e-6);
            assert!((p.directions[i].norm() - 1.0).abs() < 1e-6);
        }
        assert_eq!(p.degenerate_steps, 0);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let p = track(&ray(Vector3::y()), &Homogeneous(1.0), 3, TrackOptions::default());
        let mut out = Vec::new();
        write_path_csv(&p, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("t,x,y,z,dx,dy,dz\n2,"));
    }
}
