//! Pinhole cameras in the transforms-JSON convention: camera looks down its
//! local -z axis, +y is up, +x is right, and poses map camera to world.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::eikonal::Ray;
use crate::error::{Error, Result};
use crate::Vec3;

/// Tolerance on `RᵀR = I` for a pose to count as rigid.
pub const RIGID_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square-pixel intrinsics from a horizontal field of view.
    pub fn from_fov_x(width: u32, height: u32, camera_angle_x: f64) -> Self {
        let focal = 0.5 * width as f64 / (0.5 * camera_angle_x).tan();
        Intrinsics {
            width,
            height,
            focal,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
        }
    }

    pub fn camera_angle_x(&self) -> f64 {
        2.0 * (0.5 * self.width as f64 / self.focal).atan()
    }

    /// Intrinsics for the image downscaled by an integer factor.
    pub fn downscaled(&self, factor: u32) -> Self {
        let f = factor as f64;
        Intrinsics {
            width: self.width / factor,
            height: self.height / factor,
            focal: self.focal / f,
            cx: self.cx / f,
            cy: self.cy / f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub rotation: Matrix3<f64>,
    pub position: Vec3,
}

impl Camera {
    /// Builds a camera from a 4x4 camera-to-world matrix, rejecting
    /// non-rigid rotations.
    pub fn from_matrix(intrinsics: Intrinsics, c2w: &Matrix4<f64>) -> Result<Self> {
        let rotation = c2w.fixed_view::<3, 3>(0, 0).into_owned();
        let position = c2w.fixed_view::<3, 1>(0, 3).into_owned();
        check_rigid(&rotation)?;
        Ok(Camera {
            intrinsics,
            rotation,
            position,
        })
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Camera at `eye` looking at `target` with the given world up vector.
    pub fn look_at(intrinsics: Intrinsics, eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let back = (eye - target).normalize();
        let mut right = up.cross(&back);
        if right.norm() < 1e-9 {
            // looking along `up`; pick any perpendicular
            right = Vector3::x().cross(&back);
            if right.norm() < 1e-9 {
                right = Vector3::y().cross(&back);
            }
        }
        let right = right.normalize();
        let true_up = back.cross(&right);
        let rotation = Matrix3::from_columns(&[right, true_up, back]);
        Camera {
            intrinsics,
            rotation,
            position: eye,
        }
    }

    /// Unit world-space direction through the center of pixel `(px, py)`.
    pub fn pixel_direction(&self, px: f64, py: f64) -> Vec3 {
        let k = &self.intrinsics;
        let local = Vector3::new((px + 0.5 - k.cx) / k.focal, -(py + 0.5 - k.cy) / k.focal, -1.0);
        (self.rotation * local).normalize()
    }

    pub fn pixel_ray(&self, px: u32, py: u32, t_near: f64, t_far: f64) -> Ray {
        Ray {
            origin: self.position,
            direction: self.pixel_direction(px as f64, py as f64),
            t_near,
            t_far,
        }
    }

    /// Projects a world point to continuous pixel coordinates. Points on or
    /// behind the image plane yield `None`.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let local = self.rotation.transpose() * (p - self.position);
        if local.z >= -1e-12 {
            return None;
        }
        let k = &self.intrinsics;
        let depth = -local.z;
        Some((k.cx + k.focal * local.x / depth, k.cy - k.focal * local.y / depth))
    }
}

pub fn check_rigid(rotation: &Matrix3<f64>) -> Result<()> {
    let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
    if !err.is_finite() || err > RIGID_TOL {
        return Err(Error::InvalidInput(format!(
            "rotation is not orthonormal (max |RᵀR - I| = {err:.3e})"
        )));
    }
    if rotation.determinant() < 0.0 {
        return Err(Error::InvalidInput("rotation has negative determinant".into()));
    }
    Ok(())
}

/// `count` cameras spread over a sphere of radius `distance` (Fibonacci
/// lattice), all looking at `target`.
pub fn orbit_cameras(intrinsics: Intrinsics, count: usize, distance: f64, target: Vec3) -> Vec<Camera> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let dir = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            Camera::look_at(intrinsics, target + dir * distance, target, Vector3::z())
        })
        .collect()
}
