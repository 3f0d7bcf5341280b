//! Pinhole cameras and ray generation.
//!
//! Convention: right-handed camera frame with +x right, +y down, +z forward;
//! image origin at the top-left corner, pixel `(u, v)` = (column, row) with
//! pixel centers at half-integers. The pose maps camera to world coordinates.

use std::fmt::Write as _;

use crate::geom::{Mat3, Vec3};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-from-camera rotation.
    pub rotation: Mat3,
    /// Camera center in world coordinates.
    pub translation: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    /// Continuous pixel coordinate the ray passes through.
    pub pixel: (f64, f64),
}

impl Ray {
    pub fn at(&self, z: f64) -> Vec3 {
        ray_point(self, z)
    }
}

/// `o + z·d`.
pub fn ray_point(ray: &Ray, z: f64) -> Vec3 {
    ray.origin + ray.dir * z
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, rotation: Mat3, translation: Vec3) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` roughly upward in the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye).normalized();
        let right = forward.cross(up);
        if right.norm() < 1e-9 {
            return Err(Error::InvalidArgument("look_at: up is parallel to the view direction".into()));
        }
        let right = right.normalized();
        let down = forward.cross(right);
        Camera::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            Mat3::from_cols(right, down, forward),
            eye,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(format!(
                "degenerate intrinsics fx={} fy={} cx={} cy={} {}x{}",
                self.fx, self.fy, self.cx, self.cy, self.width, self.height
            )));
        }
        if self.rotation.orthonormality_error() > 1e-9 || (self.rotation.det() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("pose rotation is not a proper rotation".into()));
        }
        if !self.translation.is_finite() {
            return Err(Error::InvalidArgument("pose translation is not finite".into()));
        }
        Ok(())
    }

    /// Ray through continuous pixel coordinate `(u, v)`.
    pub fn ray_through(&self, u: f64, v: f64) -> Ray {
        let d_cam = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        Ray {
            origin: self.translation,
            dir: self.rotation.mul_vec(d_cam).normalized(),
            pixel: (u, v),
        }
    }

    /// Pixel coordinate and depth along the optical axis of a world point.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let q = self.rotation.transpose().mul_vec(p - self.translation);
        (q.z > 0.0).then(|| (self.fx * q.x / q.z + self.cx, self.fy * q.y / q.z + self.cy, q.z))
    }

    /// Same camera with the image resized by `scale` (intrinsics scaled to match).
    pub fn scaled(&self, width: usize, height: usize) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }
}

/// Row-major `rows × cols` rays through the centers of a grid laid over the
/// full image; the grid may be coarser than the image.
pub fn generate_rays(camera: &Camera, grid: (usize, usize)) -> Result<Vec<Ray>> {
    camera.validate()?;
    let (rows, cols) = grid;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!("ray grid {rows}x{cols} is empty")));
    }
    let sy = camera.height as f64 / rows as f64;
    let sx = camera.width as f64 / cols as f64;
    let mut rays = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            rays.push(camera.ray_through((j as f64 + 0.5) * sx, (i as f64 + 0.5) * sy));
        }
    }
    Ok(rays)
}

/// Parses the text camera format: per camera one `fx fy cx cy w h` line
/// followed by three rows of the 3×4 world-from-camera pose. Blank lines and
/// `#` comments are ignored.
pub fn parse_cameras(text: &str) -> Result<Vec<Camera>> {
    let lines: Vec<(usize, Vec<f64>)> = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            l.split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map(|v| (n, v))
                .map_err(|e| Error::Config(format!("camera file line {n}: {e}")))
        })
        .collect::<Result<_>>()?;
    if lines.len() % 4 != 0 {
        return Err(Error::Config(format!(
            "camera file has {} data lines; expected 4 per camera",
            lines.len()
        )));
    }
    lines
        .chunks(4)
        .map(|block| {
            let (n, intr) = &block[0];
            if intr.len() != 6 {
                return Err(Error::Config(format!("camera file line {n}: expected fx fy cx cy w h")));
            }
            let mut rot = [[0.0; 3]; 3];
            let mut t = [0.0; 3];
            for (r, (n, row)) in block[1..].iter().enumerate() {
                if row.len() != 4 {
                    return Err(Error::Config(format!("camera file line {n}: expected 4 pose values")));
                }
                rot[r] = [row[0], row[1], row[2]];
                t[r] = row[3];
            }
            let dims_ok = intr[4] >= 1.0 && intr[5] >= 1.0 && intr[4].fract() == 0.0 && intr[5].fract() == 0.0;
            if !dims_ok {
                return Err(Error::Config(format!("camera file line {n}: image size must be positive integers")));
            }
            Camera::new(intr[0], intr[1], intr[2], intr[3], intr[4] as usize, intr[5] as usize, Mat3(rot), Vec3::from(t))
        })
        .collect()
}

pub fn format_cameras(cameras: &[Camera]) -> String {
    let mut out = String::new();
    for (i, c) in cameras.iter().enumerate() {
        let _ = writeln!(out, "# camera {i}");
        let _ = writeln!(out, "{:?} {:?} {:?} {:?} {} {}", c.fx, c.fy, c.cx, c.cy, c.width, c.height);
        for r in 0..3 {
            let m = &c.rotation.0[r];
            let _ = writeln!(out, "{:?} {:?} {:?} {:?}", m[0], m[1], m[2], c.translation[r]);
        }
    }
    out
}
