//! Per-ray depth samples: uniform, coarse-to-fine and point-guided.
//!
//! Candidates are the midpoints of `N` equal cells between `near` and `far`
//! (or a uniform draw inside each cell when jittered). Every sample carries a
//! `delta` to the next sample; the last one gets `(far - near) / N`.

use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::camera::{ray_point, Ray};
use crate::geom::{Aabb, Vec3};
use crate::scene::VoxelIndex;
use crate::{Error, Result};

/// Samples per ray.
pub const DEFAULT_SAMPLES: usize = 128;
/// Ball radius of the point-guided test, meters.
pub const DEFAULT_RADIUS: f64 = 0.08;
/// Smallest admissible near depth, meters.
pub const MIN_NEAR: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Uniform,
    #[serde(rename = "c2f")]
    CoarseToFine,
    #[serde(rename = "point")]
    PointGuided,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::CoarseToFine => "c2f",
            SamplerKind::PointGuided => "point",
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplerKind::Uniform),
            "c2f" | "coarse-to-fine" => Ok(SamplerKind::CoarseToFine),
            "point" | "point-guided" => Ok(SamplerKind::PointGuided),
            other => Err(Error::InvalidArgument(format!("unknown sampler '{other}' (uniform, c2f, point)"))),
        }
    }
}

/// Samples along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub depths: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub deltas: Vec<f64>,
    pub valid: Vec<bool>,
    /// Set when no candidate passed the point test and all were kept.
    pub fallback: bool,
}

impl SampleSet {
    fn from_depths(ray: &Ray, depths: Vec<f64>, last_delta: f64) -> Self {
        let n = depths.len();
        let mut deltas = Vec::with_capacity(n);
        for i in 0..n {
            deltas.push(if i + 1 < n { depths[i + 1] - depths[i] } else { last_delta });
        }
        SampleSet {
            positions: depths.iter().map(|&z| ray_point(ray, z)).collect(),
            depths,
            deltas,
            valid: vec![true; n],
            fallback: false,
        }
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Indices of valid samples, in depth order.
    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i)
    }
}

fn check_range(near: f64, far: f64, n: usize) -> Result<()> {
    if !(near >= 0.0 && near < far && far.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 <= near < far, got near={near} far={far}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

fn candidate_depths(near: f64, far: f64, n: usize, jitter: Option<&mut dyn RngCore>) -> Vec<f64> {
    let step = (far - near) / n as f64;
    match jitter {
        None => (0..n).map(|i| near + (i as f64 + 0.5) * step).collect(),
        Some(rng) => (0..n).map(|i| near + (i as f64 + rng.gen::<f64>()) * step).collect(),
    }
}

/// Stratified samples; cell midpoints unless `jitter` is given.
pub fn sample_uniform(ray: &Ray, near: f64, far: f64, n: usize, jitter: Option<&mut dyn RngCore>) -> Result<SampleSet> {
    check_range(near, far, n)?;
    Ok(SampleSet::from_depths(ray, candidate_depths(near, far, n, jitter), (far - near) / n as f64))
}

/// `n/2` uniform samples plus `n - n/2` samples drawn from the piecewise
/// constant PDF over `coarse_weights` (bins split `[near, far]` evenly).
/// Without `jitter` the fine draws use evenly spaced quantiles.
pub fn sample_coarse_to_fine(
    ray: &Ray,
    near: f64,
    far: f64,
    n: usize,
    coarse_weights: &[f64],
    mut jitter: Option<&mut dyn RngCore>,
) -> Result<SampleSet> {
    check_range(near, far, n)?;
    if coarse_weights.is_empty() {
        return Err(Error::InvalidArgument("coarse weights are empty".into()));
    }
    if let Some(w) = coarse_weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!("coarse weight {w} is negative or non-finite")));
    }
    let n_coarse = n / 2;
    let n_fine = n - n_coarse;
    let mut depths = candidate_depths(near, far, n_coarse.max(1), jitter.as_mut().map(|r| &mut **r as &mut dyn RngCore));
    depths.truncate(n_coarse);
    let u: Vec<f64> = match jitter {
        None => (0..n_fine).map(|j| (j as f64 + 1.0) / (n_fine as f64 + 1.0)).collect(),
        Some(rng) => (0..n_fine).map(|_| rng.gen::<f64>()).collect(),
    };
    depths.extend(inverse_cdf(coarse_weights, near, far, &u));
    depths.sort_by(f64::total_cmp);
    for i in 1..depths.len() {
        if depths[i] <= depths[i - 1] {
            depths[i] = depths[i - 1].next_up();
        }
    }
    Ok(SampleSet::from_depths(ray, depths, (far - near) / n as f64))
}

/// Maps quantiles `u ∈ [0, 1)` through the inverse CDF of the piecewise
/// constant density with bin masses `weights` on `[lo, hi]`. All-zero weights
/// mean a uniform density.
pub fn inverse_cdf(weights: &[f64], lo: f64, hi: f64, u: &[f64]) -> Vec<f64> {
    let nb = weights.len();
    let total: f64 = weights.iter().sum();
    let uniform = !(total > 0.0);
    let mut cdf = Vec::with_capacity(nb + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for w in weights {
        acc += if uniform { 1.0 } else { *w };
        cdf.push(acc);
    }
    let norm = acc;
    let width = (hi - lo) / nb as f64;
    u.iter()
        .map(|&q| {
            let target = q.clamp(0.0, 1.0) * norm;
            // First bin whose upper CDF value exceeds the target (skips empty bins).
            let b = cdf[1..].partition_point(|&c| c <= target).min(nb - 1);
            let mass = cdf[b + 1] - cdf[b];
            let frac = if mass > 0.0 { ((target - cdf[b]) / mass).clamp(0.0, 1.0) } else { 0.5 };
            (lo + (b as f64 + frac) * width).min(hi)
        })
        .collect()
}

/// Candidates as in [`sample_uniform`]; a sample is valid iff some cloud
/// point lies within `r` of it. With no valid candidate every sample is kept.
pub fn sample_point_guided(
    ray: &Ray,
    index: &VoxelIndex,
    r: f64,
    near: f64,
    far: f64,
    n: usize,
    jitter: Option<&mut dyn RngCore>,
) -> Result<SampleSet> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    if r > index.cell_size() {
        return Err(Error::RadiusExceedsCell { radius: r, cell: index.cell_size() });
    }
    let mut set = sample_uniform(ray, near, far, n, jitter)?;
    let r_sq = r * r;
    for (v, x) in set.valid.iter_mut().zip(&set.positions) {
        *v = index.any_within(*x, r_sq);
    }
    if !set.valid.iter().any(|&v| v) {
        set.valid.iter_mut().for_each(|v| *v = true);
        set.fallback = true;
    }
    Ok(set)
}

/// Depth interval where `ray` crosses `bounds` grown by `margin`, with near
/// clamped to [`MIN_NEAR`]. Rays that miss use `[MIN_NEAR, MIN_NEAR + diagonal]`.
pub fn near_far(ray: &Ray, bounds: &Aabb, margin: f64) -> (f64, f64) {
    let b = bounds.expanded(margin);
    let diag = b.diagonal().max(MIN_NEAR);
    match b.intersect(ray.origin, ray.dir) {
        Some((t0, t1)) if t1 > MIN_NEAR => {
            let near = t0.max(MIN_NEAR);
            let far = t1.min(near + diag);
            if far > near {
                (near, far)
            } else {
                (near, near + diag)
            }
        }
        _ => (MIN_NEAR, MIN_NEAR + diag),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::PointCloud;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z_ray() -> Ray {
        Ray {
            origin: Vec3::ZERO,
            dir: Vec3::new(0.0, 0.0, 1.0),
            pixel: (0.0, 0.0),
        }
    }

    #[test]
    fn midpoints_for_two_samples() {
        let s = sample_uniform(&z_ray(), 0.0, 1.0, 2, None).unwrap();
        assert_eq!(s.depths, vec![0.25, 0.75]);
        assert_eq!(s.deltas, vec![0.5, 0.5]);
        assert_eq!(s.positions[1], Vec3::new(0.0, 0.0, 0.75));
        assert_eq!(s.num_valid(), 2);
    }

    #[test]
    fn default_sample_count() {
        let s = sample_uniform(&z_ray(), 0.5, 3.0, DEFAULT_SAMPLES, None).unwrap();
        assert_eq!(s.len(), 128);
    }

    #[test]
    fn bad_ranges_rejected() {
        assert!(sample_uniform(&z_ray(), 1.0, 1.0, 4, None).is_err());
        assert!(sample_uniform(&z_ray(), 2.0, 1.0, 4, None).is_err());
        assert!(sample_uniform(&z_ray(), 0.0, 1.0, 1, None).is_err());
        assert!(sample_coarse_to_fine(&z_ray(), 0.0, 1.0, 8, &[1.0, -1.0], None).is_err());
    }

    #[test]
    fn jitter_stays_in_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_uniform(&z_ray(), 1.0, 2.0, 10, Some(&mut rng)).unwrap();
        for (i, z) in s.depths.iter().enumerate() {
            assert!(*z >= 1.0 + i as f64 * 0.1 && *z <= 1.0 + (i + 1) as f64 * 0.1);
        }
    }

    #[test]
    fn concentrated_weights_put_fine_samples_in_one_bin() {
        let mut w = vec![0.0; 8];
        w[5] = 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_coarse_to_fine(&z_ray(), 0.0, 8.0, 64, &w, Some(&mut rng)).unwrap();
        assert_eq!(s.len(), 64);
        let in_bin = s.depths.iter().filter(|z| (5.0..=6.0).contains(*z)).count();
        // 32 fine samples plus the 4 coarse midpoints that fall in [5, 6].
        assert!(in_bin >= 32 + 4, "{in_bin}");
    }

    #[test]
    fn uniform_weights_give_uniform_fine_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let mut z = inverse_cdf(&[0.25; 16], 0.0, 1.0, &u);
        z.sort_by(f64::total_cmp);
        let n = z.len() as f64;
        let ks = z
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max((x - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "Kolmogorov distance {ks}");
    }

    #[test]
    fn zero_weights_fall_back_to_uniform_pdf() {
        let u = [0.1, 0.5, 0.9];
        assert_eq!(inverse_cdf(&[0.0; 4], 0.0, 2.0, &u), inverse_cdf(&[1.0; 4], 0.0, 2.0, &u));
        let z = inverse_cdf(&[0.0; 4], 0.0, 2.0, &u);
        for (a, b) in z.iter().zip([0.2, 1.0, 1.8]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn wall_cloud() -> PointCloud {
        let mut cloud = PointCloud::default();
        for i in 0..40 {
            for j in 0..40 {
                cloud.push(Vec3::new(-0.4 + i as f64 * 0.02, -0.4 + j as f64 * 0.02, 1.5), [0.5; 3]);
            }
        }
        cloud
    }

    #[test]
    fn wall_gives_few_valid_samples_matching_brute_force() {
        let cloud = wall_cloud();
        let idx = VoxelIndex::build(&cloud, 0.08).unwrap();
        let s = sample_point_guided(&z_ray(), &idx, 0.08, 0.5, 2.5, 128, None).unwrap();
        assert!(!s.fallback);
        assert!(s.num_valid() > 0 && s.num_valid() < 16, "{}", s.num_valid());
        for (x, v) in s.positions.iter().zip(&s.valid) {
            let brute = cloud.positions.iter().any(|p| p.dist_sq(*x) <= 0.08 * 0.08);
            assert_eq!(*v, brute);
        }
    }

    #[test]
    fn empty_cloud_falls_back_to_all_valid() {
        let idx = VoxelIndex::build(&PointCloud::default(), 0.08).unwrap();
        let s = sample_point_guided(&z_ray(), &idx, 0.08, 0.1, 1.0, 16, None).unwrap();
        assert!(s.fallback);
        assert_eq!(s.num_valid(), 16);
        assert!(matches!(
            sample_point_guided(&z_ray(), &idx, 0.09, 0.1, 1.0, 16, None),
            Err(Error::RadiusExceedsCell { .. })
        ));
    }

    #[test]
    fn near_far_from_bounds() {
        let b = Aabb::new(Vec3::new(-1.0, -1.0, 2.0), Vec3::new(1.0, 1.0, 4.0));
        let (n, f) = near_far(&z_ray(), &b, 0.0);
        assert_eq!((n, f), (2.0, 4.0));
        let inside = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let (n, f) = near_far(&z_ray(), &inside, 0.0);
        assert_eq!((n, f), (MIN_NEAR, 1.0));
        let behind = Aabb::new(Vec3::new(-1.0, -1.0, -4.0), Vec3::new(1.0, 1.0, -2.0));
        let (n, f) = near_far(&z_ray(), &behind, 0.0);
        assert_eq!(n, MIN_NEAR);
        assert!((f - (MIN_NEAR + behind.diagonal())).abs() < 1e-12);
    }

    #[test]
    fn sampler_names_parse() {
        for k in [SamplerKind::Uniform, SamplerKind::CoarseToFine, SamplerKind::PointGuided] {
            assert_eq!(k.name().parse::<SamplerKind>().unwrap(), k);
        }
        assert!("bogus".parse::<SamplerKind>().is_err());
    }

    proptest! {
        #[test]
        fn uniform_depths_increase(near in 0.0f64..5.0, len in 1e-3f64..10.0, n in 2usize..300, seed in any::<u64>(), jit in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let j: Option<&mut dyn RngCore> = if jit { Some(&mut rng) } else { None };
            let s = sample_uniform(&z_ray(), near, near + len, n, j).unwrap();
            prop_assert_eq!(s.len(), n);
            for w in s.depths.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            for i in 0..n - 1 {
                prop_assert_eq!(s.deltas[i], s.depths[i + 1] - s.depths[i]);
            }
            prop_assert!((s.deltas[n - 1] - len / n as f64).abs() < 1e-12);
        }

        #[test]
        fn c2f_sorted_and_sized(n in 2usize..100, w in proptest::collection::vec(0.0f64..2.0, 1..40), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sample_coarse_to_fine(&z_ray(), 0.3, 2.0, n, &w, Some(&mut rng)).unwrap();
            prop_assert_eq!(s.len(), n);
            for d in s.deltas.iter() {
                prop_assert!(*d > 0.0);
            }
            for z in &s.depths {
                prop_assert!(*z >= 0.3 && *z <= 2.0 + 1e-9);
            }
        }

        #[test]
        fn point_guided_shares_uniform_candidates(seed in any::<u64>(), n in 2usize..64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cloud = PointCloud::default();
            for _ in 0..200 {
                cloud.push(Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(0.0..2.0)), [0.0; 3]);
            }
            let idx = VoxelIndex::build(&cloud, 0.08).unwrap();
            let u = sample_uniform(&z_ray(), 0.1, 2.0, n, None).unwrap();
            let p = sample_point_guided(&z_ray(), &idx, 0.08, 0.1, 2.0, n, None).unwrap();
            prop_assert_eq!(&u.depths, &p.depths);
            prop_assert_eq!(&u.deltas, &p.deltas);
            prop_assert!(p.num_valid() >= 1);
        }
    }
}
