//! Shared fixtures for the criterion benchmarks.

use p2px_core::render::RenderedFeatureMaps;
use p2px_core::scene::{generate_synthetic_scene, SyntheticScene};
use p2px_core::{Camera, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The `room` preset cloud and its cameras.
pub fn room() -> (PointCloud, Vec<Camera>) {
    let scene = SyntheticScene::room(4, 256, 192);
    generate_synthetic_scene(&scene, scene.density).expect("preset scene generates")
}

/// Random per-ray `(sigma, delta)` pairs with `n` samples each.
pub fn random_rays(count: usize, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let sigma = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let delta = (0..n).map(|_| rng.gen_range(0.001..0.05)).collect();
            (sigma, delta)
        })
        .collect()
}

/// Random four-scale feature maps of `channels` channels at `height`×`width`.
pub fn feature_maps(height: usize, width: usize, channels: usize, seed: u64) -> RenderedFeatureMaps {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RenderedFeatureMaps {
        height,
        width,
        channels: vec![channels; 4],
        maps: (0..4)
            .map(|_| (0..channels * height * width).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
        rgb: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shapes() {
        let rays = random_rays(3, 5, 0);
        assert!(rays.iter().all(|(s, d)| s.len() == 5 && d.len() == 5));
        let maps = feature_maps(4, 6, 2, 0);
        assert!(maps.maps.iter().all(|m| m.len() == 48));
    }
}
