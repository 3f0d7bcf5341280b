//! Analytic scenes built from colored spheres and axis-aligned boxes.
//!
//! Point clouds are sampled uniformly on primitive surfaces; the ground-truth
//! image is an exact per-pixel ray cast against the same primitives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::camera::{Camera, Ray};
use crate::geom::{Aabb, Vec3};
use crate::imaging::Image;
use crate::tensor::standard_normal;
use crate::{Error, Result};

const HIT_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64, color: [f64; 3] },
    Box { min: Vec3, max: Vec3, color: [f64; 3] },
}

impl Primitive {
    pub fn color(&self) -> [f64; 3] {
        match self {
            Primitive::Sphere { color, .. } | Primitive::Box { color, .. } => *color,
        }
    }

    pub fn bounds(&self) -> Aabb {
        match *self {
            Primitive::Sphere { center, radius, .. } => Aabb::new(center - Vec3::splat(radius), center + Vec3::splat(radius)),
            Primitive::Box { min, max, .. } => Aabb::new(min, max),
        }
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Primitive::Box { min, max, .. } => {
                let e = max - min;
                2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
            }
        }
    }

    /// Smallest `t > 0` where the ray meets the surface.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match *self {
            Primitive::Sphere { center, radius, .. } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_sq() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > HIT_EPS)
            }
            Primitive::Box { min, max, .. } => {
                let (t0, t1) = Aabb::new(min, max).intersect(origin, dir)?;
                [t0, t1].into_iter().find(|&t| t > HIT_EPS)
            }
        }
    }

    /// Unsigned distance from `p` to the primitive's surface.
    pub fn surface_distance(&self, p: Vec3) -> f64 {
        match *self {
            Primitive::Sphere { center, radius, .. } => ((p - center).norm() - radius).abs(),
            Primitive::Box { min, max, .. } => {
                let inside = Aabb::new(min, max).contains(p);
                if inside {
                    (0..3).map(|i| (p[i] - min[i]).min(max[i] - p[i])).fold(f64::INFINITY, f64::min)
                } else {
                    let d = Vec3::new(
                        (min.x - p.x).max(0.0).max(p.x - max.x),
                        (min.y - p.y).max(0.0).max(p.y - max.y),
                        (min.z - p.z).max(0.0).max(p.z - max.z),
                    );
                    d.norm()
                }
            }
        }
    }

    fn sample_surface(&self, rng: &mut impl Rng) -> Vec3 {
        match *self {
            Primitive::Sphere { center, radius, .. } => {
                let n = loop {
                    let v = Vec3::new(standard_normal(rng), standard_normal(rng), standard_normal(rng));
                    if v.norm_sq() > 1e-12 {
                        break v.normalized();
                    }
                };
                center + n * radius
            }
            Primitive::Box { min, max, .. } => {
                let e = max - min;
                let faces = [e.y * e.z, e.y * e.z, e.x * e.z, e.x * e.z, e.x * e.y, e.x * e.y];
                let total: f64 = faces.iter().sum();
                let mut pick = rng.gen::<f64>() * total;
                let mut face = 5;
                for (i, a) in faces.iter().enumerate() {
                    if pick < *a {
                        face = i;
                        break;
                    }
                    pick -= a;
                }
                let mut p = [
                    min.x + rng.gen::<f64>() * e.x,
                    min.y + rng.gen::<f64>() * e.y,
                    min.z + rng.gen::<f64>() * e.z,
                ];
                let axis = face / 2;
                p[axis] = if face % 2 == 0 { min[axis] } else { max[axis] };
                Vec3::from(p)
            }
        }
    }
}

/// Cameras evenly spaced on a horizontal circle, all looking at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    /// Height of the ring above the look-at point.
    pub elevation: f64,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    /// Angular offset of the first camera, radians.
    #[serde(default)]
    pub phase: f64,
    /// Look-at point; defaults to the centroid of the sampled cloud.
    #[serde(default)]
    pub target: Option<Vec3>,
}

impl Default for CameraRing {
    fn default() -> Self {
        CameraRing {
            count: 4,
            radius: 2.0,
            elevation: 1.0,
            focal: 128.0,
            width: 128,
            height: 128,
            phase: 0.0,
            target: None,
        }
    }
}

impl CameraRing {
    pub fn cameras(&self, centroid: Vec3) -> Result<Vec<Camera>> {
        let target = self.target.unwrap_or(centroid);
        (0..self.count)
            .map(|k| {
                let theta = self.phase + 2.0 * std::f64::consts::PI * k as f64 / self.count as f64;
                let eye = target + Vec3::new(self.radius * theta.cos(), self.radius * theta.sin(), self.elevation);
                Camera::look_at(eye, target, Vec3::new(0.0, 0.0, 1.0), self.focal, self.width, self.height)
            })
            .collect()
    }
}

/// Scene description; also the schema of the scene spec file (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub primitives: Vec<Primitive>,
    pub bounds: Aabb,
    #[serde(default)]
    pub seed: u64,
    /// Surface sampling density, points per square meter.
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub ring: CameraRing,
}

fn default_density() -> f64 {
    1500.0
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.primitives.iter().enumerate() {
            if p.color().iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Config(format!("primitive {i}: color outside [0, 1]")));
            }
            let b = p.bounds();
            if !(self.bounds.contains(b.min) && self.bounds.contains(b.max)) {
                return Err(Error::Config(format!("primitive {i} extends outside the world bounds")));
            }
            let degenerate = match *p {
                Primitive::Sphere { radius, .. } => !(radius > 0.0),
                Primitive::Box { min, max, .. } => (0..3).any(|k| !(max[k] >= min[k])),
            };
            if degenerate {
                return Err(Error::Config(format!("primitive {i} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: SyntheticScene = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    /// Nearest hit along a ray: `(t, primitive index)`.
    pub fn trace(&self, origin: Vec3, dir: Vec3) -> Option<(f64, usize)> {
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.intersect(origin, dir).map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Distance from `p` to the nearest primitive surface.
    pub fn surface_distance(&self, p: Vec3) -> f64 {
        self.primitives.iter().map(|q| q.surface_distance(p)).fold(f64::INFINITY, f64::min)
    }

    /// Sphere of radius 0.35 resting on a 3 m square floor slab, viewed
    /// from a ring of cameras that keeps the floor in every pixel.
    pub fn sphere_on_floor(views: usize, image: usize) -> Self {
        SyntheticScene {
            primitives: vec![
                Primitive::Sphere {
                    center: Vec3::new(0.0, 0.0, 0.35),
                    radius: 0.35,
                    color: [0.85, 0.25, 0.15],
                },
                Primitive::Box {
                    min: Vec3::new(-1.5, -1.5, -0.1),
                    max: Vec3::new(1.5, 1.5, 0.0),
                    color: [0.2, 0.45, 0.8],
                },
            ],
            bounds: Aabb::new(Vec3::new(-1.6, -1.6, -0.2), Vec3::new(1.6, 1.6, 1.0)),
            seed: 7,
            density: 1500.0,
            ring: CameraRing {
                count: views,
                radius: 0.7,
                elevation: 2.0,
                focal: image as f64 * 1.25,
                width: image,
                height: image,
                phase: 0.3,
                target: Some(Vec3::new(0.0, 0.0, 0.15)),
            },
        }
    }

    /// Closed room (floor, ceiling, four walls) with a sphere and a box,
    /// cameras on a ring inside the room.
    pub fn room(views: usize, width: usize, height: usize) -> Self {
        let slab = |min: [f64; 3], max: [f64; 3], color: [f64; 3]| Primitive::Box {
            min: Vec3::from(min),
            max: Vec3::from(max),
            color,
        };
        let (hx, hy, hz, t) = (1.5, 1.5, 2.4, 0.05);
        SyntheticScene {
            primitives: vec![
                slab([-hx, -hy, -t], [hx, hy, 0.0], [0.55, 0.45, 0.35]),
                slab([-hx, -hy, hz], [hx, hy, hz + t], [0.9, 0.9, 0.9]),
                slab([-hx - t, -hy, 0.0], [-hx, hy, hz], [0.7, 0.75, 0.6]),
                slab([hx, -hy, 0.0], [hx + t, hy, hz], [0.6, 0.7, 0.8]),
                slab([-hx, -hy - t, 0.0], [hx, -hy, hz], [0.8, 0.7, 0.6]),
                slab([-hx, hy, 0.0], [hx, hy + t, hz], [0.65, 0.6, 0.75]),
                Primitive::Sphere {
                    center: Vec3::new(0.3, 0.2, 0.4),
                    radius: 0.4,
                    color: [0.8, 0.2, 0.2],
                },
                slab([-0.9, -0.6, 0.0], [-0.3, 0.0, 0.7], [0.2, 0.6, 0.3]),
            ],
            bounds: Aabb::new(Vec3::new(-1.6, -1.6, -0.1), Vec3::new(1.6, 1.6, 2.5)),
            seed: 11,
            density: 1000.0,
            ring: CameraRing {
                count: views,
                radius: 1.1,
                elevation: 0.9,
                focal: width as f64 * 0.8,
                width,
                height,
                phase: 0.0,
                target: Some(Vec3::new(0.0, 0.0, 0.5)),
            },
        }
    }
}

/// Samples the scene surfaces (expected `area · density` points per
/// primitive) and places the camera ring. Deterministic for a fixed seed.
pub fn generate_synthetic_scene(scene: &SyntheticScene, density: f64) -> Result<(PointCloud, Vec<Camera>)> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidArgument(format!("density must be positive, got {density}")));
    }
    scene.validate()?;
    if scene.primitives.is_empty() {
        log::warn!("synthetic scene has no primitives; producing an empty cloud");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let mut cloud = PointCloud::default();
    for prim in &scene.primitives {
        let count = (prim.surface_area() * density).round() as usize;
        let color = prim.color();
        for _ in 0..count {
            cloud.push(prim.sample_surface(&mut rng), color);
        }
    }
    let centroid = if cloud.is_empty() {
        scene.bounds.center()
    } else {
        cloud.positions.iter().fold(Vec3::ZERO, |a, &p| a + p) * (1.0 / cloud.len() as f64)
    };
    let cameras = scene.ring.cameras(centroid)?;
    Ok((cloud, cameras))
}

fn shade(scene: &SyntheticScene, ray: &Ray) -> [f64; 3] {
    match scene.trace(ray.origin, ray.dir) {
        Some((_, i)) => scene.primitives[i].color(),
        None => [0.0; 3],
    }
}

/// Exact ground-truth image: color of the nearest primitive hit through each
/// pixel center, black on a miss.
pub fn raycast_gt(scene: &SyntheticScene, camera: &Camera) -> Image {
    let mut img = Image::new(camera.width, camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let ray = camera.ray_through(x as f64 + 0.5, y as f64 + 0.5);
            img.set(x, y, shade(scene, &ray));
        }
    }
    img
}
