//! Scene input: point clouds, PLY files, the voxel hash used for radius
//! queries, and analytic synthetic scenes with a ray-cast ground truth.

mod ply;
mod synthetic;
mod voxel_index;

pub use ply::{load_ply, read_ply, save_ply, write_ply, PlyFormat};
pub use synthetic::{generate_synthetic_scene, raycast_gt, CameraRing, Primitive, SyntheticScene};
pub use voxel_index::{cell_of, RadiusHit, VoxelIndex};

use crate::geom::{Aabb, Vec3};
use crate::{Error, Result};

/// Colored points: positions in meters, colors in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, colors: Vec<[f64; 3]>) -> Result<Self> {
        let cloud = PointCloud { positions, colors };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.colors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} positions but {} colors",
                self.positions.len(),
                self.colors.len()
            )));
        }
        if let Some(index) = self.positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePoint { index });
        }
        if let Some(i) = self.colors.iter().position(|c| c.iter().any(|v| !(0.0..=1.0).contains(v))) {
            return Err(Error::InvalidArgument(format!("color of point {i} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::around(&self.positions)
    }

    pub fn push(&mut self, p: Vec3, c: [f64; 3]) {
        self.positions.push(p);
        self.colors.push(c);
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
    }
}
