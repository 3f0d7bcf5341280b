//! Point-cloud-to-image renderer.
//!
//! A colored point cloud and a camera go in, an image comes out. Rays are
//! sampled only where they pass close to the cloud, a sparse voxel encoder
//! produces a pyramid of feature volumes, per-scale heads turn interpolated
//! features into densities and features, volume rendering collapses them to
//! 2D feature maps, and a fusion decoder upsamples those maps to the image.

pub mod camera;
pub mod decoder;
pub mod error;
pub mod geom;
pub mod fields;
pub mod imaging;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod sampling;
pub mod scene;
pub mod tensor;
pub mod train;

pub use camera::{generate_rays, ray_point, Camera, Ray};
pub use error::{Error, Result};
pub use geom::{Aabb, Mat3, Vec3};
pub use imaging::Image;
pub use scene::{PointCloud, VoxelIndex};
