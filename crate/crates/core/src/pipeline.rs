//! End-to-end model: ray sampling, sparse feature fields, per-scale
//! compositing and the fusion decoder, on the tape for training and chunked
//! for inference.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{generate_rays, Camera, Ray};
use crate::decoder::{Decoder, DecoderConfig};
use crate::fields::grid::trilinear_map;
use crate::fields::{
    pyramid_from_tape, voxelize, EncoderGeometry, FeatureVolumePyramid, FieldModel, SparseVolume, BASE_CELL, FEATURE_CHANNELS,
    NUM_SCALES,
};
use crate::geom::{Aabb, Vec3};
use crate::imaging::Image;
use crate::render::{compute_weights, RenderedFeatureMaps};
use crate::sampling::{
    near_far, sample_coarse_to_fine, sample_point_guided, sample_uniform, SampleSet, SamplerKind, DEFAULT_RADIUS, DEFAULT_SAMPLES,
};
use crate::scene::{PointCloud, VoxelIndex};
use crate::tensor::{load_checkpoint, save_checkpoint, ParamStore, RaySegments, Tape, Tensor, Var};
use crate::{Error, Result};

/// Output pixels per ray along each axis.
pub const UPSAMPLE_FACTOR: usize = 1 << (NUM_SCALES - 1);

/// Samples per inference chunk; bounds the size of head activations.
const CHUNK_SAMPLES: usize = 16384;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub sampler: SamplerKind,
    /// Candidates per ray.
    pub samples: usize,
    /// Point-guided validity radius; also the margin around the cloud bounds.
    pub radius: f64,
    /// Base voxel size of the encoder.
    pub cell: f64,
    /// Ray grid `[rows, cols]`; defaults to the image size divided by 8.
    pub ray_grid: Option<[usize; 2]>,
    pub decoder: DecoderConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sampler: SamplerKind::PointGuided,
            samples: DEFAULT_SAMPLES,
            radius: DEFAULT_RADIUS,
            cell: BASE_CELL,
            ray_grid: None,
            decoder: DecoderConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Config(format!("samples must be at least 2, got {}", self.samples)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return Err(Error::Config(format!("cell must be positive, got {}", self.cell)));
        }
        if self.sampler == SamplerKind::PointGuided && self.radius > self.cell {
            return Err(Error::RadiusExceedsCell {
                radius: self.radius,
                cell: self.cell,
            });
        }
        if let Some([h, w]) = self.ray_grid {
            if h == 0 || w == 0 {
                return Err(Error::Config(format!("ray grid {h}x{w} is empty")));
            }
        }
        if self.decoder.upsample_kernel % 2 == 0 {
            return Err(Error::Config(format!("upsample kernel must be odd, got {}", self.decoder.upsample_kernel)));
        }
        Ok(())
    }

    /// Ray grid `(rows, cols)` for `camera`.
    pub fn grid_for(&self, camera: &Camera) -> (usize, usize) {
        match self.ray_grid {
            Some([h, w]) => (h, w),
            None => ((camera.height / UPSAMPLE_FACTOR).max(1), (camera.width / UPSAMPLE_FACTOR).max(1)),
        }
    }
}

/// Everything derived from the input cloud alone.
#[derive(Clone, Debug)]
pub struct SceneContext {
    pub cloud: PointCloud,
    pub index: VoxelIndex,
    pub base: SparseVolume,
    pub geometry: EncoderGeometry,
    pub bounds: Aabb,
}

impl SceneContext {
    pub fn new(cloud: PointCloud, cell: f64) -> Result<Self> {
        cloud.validate()?;
        if cloud.is_empty() {
            log::warn!("empty point cloud; every ray falls back to uniform samples over empty features");
        }
        let index = VoxelIndex::build(&cloud, cell)?;
        let base = voxelize(&cloud, cell)?;
        let geometry = EncoderGeometry::new(&base.grid, cell);
        let bounds = cloud.bounds().unwrap_or(Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)));
        Ok(SceneContext {
            cloud,
            index,
            base,
            geometry,
            bounds,
        })
    }
}

/// Samples of every ray of a grid.
#[derive(Clone, Debug)]
pub struct RaySamples {
    pub grid: (usize, usize),
    pub sets: Vec<SampleSet>,
}

impl RaySamples {
    pub fn rays(&self) -> usize {
        self.sets.len()
    }

    pub fn total_valid(&self) -> usize {
        self.sets.iter().map(SampleSet::num_valid).sum()
    }

    pub fn mean_valid(&self) -> f64 {
        self.total_valid() as f64 / self.rays().max(1) as f64
    }

    pub fn fallback_rays(&self) -> usize {
        self.sets.iter().filter(|s| s.fallback).count()
    }

    /// Valid positions and compositing segments of rays `range`.
    pub fn segments(&self, range: std::ops::Range<usize>) -> (Vec<Vec3>, RaySegments) {
        let mut positions = Vec::new();
        let mut segs = RaySegments {
            offsets: vec![0],
            deltas: Vec::new(),
        };
        for set in &self.sets[range] {
            for i in set.valid_indices() {
                positions.push(set.positions[i]);
                segs.deltas.push(set.deltas[i]);
            }
            segs.offsets.push(segs.deltas.len());
        }
        (positions, segs)
    }
}

/// Wall-clock seconds of each inference stage plus sample statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RenderStats {
    pub sampling_s: f64,
    pub encode_s: f64,
    pub field_s: f64,
    pub render_s: f64,
    pub decode_s: f64,
    pub mean_valid: f64,
    pub fallback_rays: usize,
    pub rays: usize,
}

impl RenderStats {
    pub fn total_s(&self) -> f64 {
        self.sampling_s + self.encode_s + self.field_s + self.render_s + self.decode_s
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: Image,
    pub maps: RenderedFeatureMaps,
    pub stats: RenderStats,
}

/// Differentiable forward results.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `[3, 8H, 8W]`
    pub image: Var,
    /// Per scale `[C, H, W]`.
    pub maps: [Var; NUM_SCALES],
    /// Direct RGB of the finest scale, `[3, H, W]`.
    pub rgb: Var,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub fields: FieldModel,
    pub decoder: Decoder,
}

fn jitter(rng: &mut Option<ChaCha8Rng>) -> Option<&mut dyn RngCore> {
    rng.as_mut().map(|r| r as &mut dyn RngCore)
}

fn ray_rng(seed: u64, ray: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (ray as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let fields = FieldModel::new(&mut store, &mut rng);
        let decoder = Decoder::new(&mut store, config.decoder.clone(), &mut rng);
        Ok(Model {
            config,
            store,
            fields,
            decoder,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.store, path)
    }

    /// Builds the architecture of `config` and loads parameter values from `path`.
    pub fn load(config: ModelConfig, path: impl AsRef<Path>) -> Result<Self> {
        let mut model = Model::new(config, 0)?;
        let stored = load_checkpoint(path)?;
        model.store.load_values_from(&stored)?;
        Ok(model)
    }

    pub fn context(&self, cloud: PointCloud) -> Result<SceneContext> {
        SceneContext::new(cloud, self.config.cell)
    }

    /// Encodes the context's cloud into plain feature volumes.
    pub fn encode(&self, ctx: &SceneContext) -> FeatureVolumePyramid {
        self.fields.encode_with(&self.store, &ctx.base, &ctx.geometry)
    }

    /// Finest-scale densities at `points`, evaluated in chunks.
    pub fn finest_sigma(&self, pyramid: &FeatureVolumePyramid, points: &[Vec3]) -> Vec<f64> {
        let vol = pyramid.finest();
        let head = self.fields.heads.last().expect("model has heads");
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(CHUNK_SAMPLES) {
            let mut tape = Tape::new();
            let f = tape.constant(Tensor::new(vec![vol.len(), vol.channels], vol.features.clone()));
            let q = tape.gather_weighted(f, Arc::new(trilinear_map(&vol.grid, vol.cell, chunk)));
            let h = head.forward(&mut tape, &self.store, q);
            out.extend_from_slice(tape.value(h.sigma));
        }
        out
    }

    /// Samples every ray with the configured sampler. `pyramid` is needed by
    /// the coarse-to-fine sampler; `jitter_seed` enables stratified jitter.
    pub fn sample_rays(
        &self,
        ctx: &SceneContext,
        rays: &[Ray],
        grid: (usize, usize),
        pyramid: Option<&FeatureVolumePyramid>,
        jitter_seed: Option<u64>,
    ) -> Result<RaySamples> {
        let cfg = &self.config;
        let n = cfg.samples;
        let ranges: Vec<(f64, f64)> = rays.iter().map(|r| near_far(r, &ctx.bounds, cfg.radius)).collect();
        let mut rngs: Vec<Option<ChaCha8Rng>> = (0..rays.len()).map(|i| jitter_seed.map(|s| ray_rng(s, i))).collect();
        let sets = match cfg.sampler {
            SamplerKind::Uniform => rays
                .iter()
                .zip(&ranges)
                .zip(&mut rngs)
                .map(|((ray, &(near, far)), rng)| sample_uniform(ray, near, far, n, jitter(rng)))
                .collect::<Result<Vec<_>>>()?,
            SamplerKind::PointGuided => rays
                .iter()
                .zip(&ranges)
                .zip(&mut rngs)
                .map(|((ray, &(near, far)), rng)| sample_point_guided(ray, &ctx.index, cfg.radius, near, far, n, jitter(rng)))
                .collect::<Result<Vec<_>>>()?,
            SamplerKind::CoarseToFine => {
                let pyramid = pyramid.ok_or_else(|| Error::InvalidArgument("coarse-to-fine sampling needs a feature pyramid".into()))?;
                let n_coarse = (n / 2).max(1);
                let coarse: Vec<SampleSet> = rays
                    .iter()
                    .zip(&ranges)
                    .map(|(ray, &(near, far))| sample_uniform(ray, near, far, n_coarse.max(2), None))
                    .collect::<Result<_>>()?;
                let points: Vec<Vec3> = coarse.iter().flat_map(|s| s.positions.iter().copied()).collect();
                let sigma = self.finest_sigma(pyramid, &points);
                let mut sets = Vec::with_capacity(rays.len());
                let mut at = 0;
                for (((ray, &(near, far)), set), rng) in rays.iter().zip(&ranges).zip(&coarse).zip(&mut rngs) {
                    let w = compute_weights(&sigma[at..at + set.len()], &set.deltas)?;
                    at += set.len();
                    sets.push(sample_coarse_to_fine(ray, near, far, n, &w.weights, jitter(rng))?);
                }
                sets
            }
        };
        Ok(RaySamples { grid, sets })
    }

    /// Per-scale compositing of the samples of `rays` on the tape.
    /// Returns `[R, C]` per scale and the finest-scale colors `[R, 3]`.
    fn composite_scales(&self, tape: &mut Tape, geo: &EncoderGeometry, volumes: &[Var; NUM_SCALES], samples: &RaySamples, range: std::ops::Range<usize>) -> (Vec<Var>, Var) {
        let (positions, segs) = samples.segments(range);
        let segs = Arc::new(segs);
        let mut out = Vec::with_capacity(NUM_SCALES);
        let mut rgb = None;
        for l in 0..NUM_SCALES {
            let map = trilinear_map(geo.scale_grid(l), geo.cell, &positions);
            let q = tape.gather_weighted(volumes[l], Arc::new(map));
            let head = &self.fields.heads[l];
            let h = head.forward(tape, &self.store, q);
            out.push(tape.composite(h.sigma, h.feature, segs.clone()));
            if head.finest {
                let c = head.color(tape, &h);
                rgb = Some(tape.composite(h.sigma, c, segs.clone()));
            }
        }
        (out, rgb.expect("finest head present"))
    }

    /// `[R, C]` ray features to a `[C, H, W]` map.
    fn to_map(tape: &mut Tape, x: Var, grid: (usize, usize)) -> Var {
        let c = tape.shape(x)[1];
        let t = tape.transpose(x);
        tape.reshape(t, &[c, grid.0, grid.1])
    }

    /// Full differentiable forward: encoder, heads, compositing, decoder.
    pub fn forward(&self, tape: &mut Tape, ctx: &SceneContext, samples: &RaySamples) -> Result<ForwardOutput> {
        let volumes = self.fields.encode_on_tape(tape, &self.store, &ctx.base, &ctx.geometry);
        self.forward_from_volumes(tape, &ctx.geometry, &volumes, samples)
    }

    pub fn forward_from_volumes(&self, tape: &mut Tape, geo: &EncoderGeometry, volumes: &[Var; NUM_SCALES], samples: &RaySamples) -> Result<ForwardOutput> {
        let (h, w) = samples.grid;
        if h * w != samples.rays() {
            return Err(Error::Shape(format!("{} rays for a {h}x{w} grid", samples.rays())));
        }
        let (feats, rgb) = self.composite_scales(tape, geo, volumes, samples, 0..samples.rays());
        let maps: [Var; NUM_SCALES] = std::array::from_fn(|l| Self::to_map(tape, feats[l], samples.grid));
        let rgb = Self::to_map(tape, rgb, samples.grid);
        let image = self.decoder.decode(tape, &self.store, &maps)?;
        Ok(ForwardOutput { image, maps, rgb })
    }

    /// Inference render of one camera with per-stage timings.
    pub fn render(&self, ctx: &SceneContext, camera: &Camera) -> Result<RenderOutput> {
        let grid = self.config.grid_for(camera);
        let mut stats = RenderStats::default();

        let t = Instant::now();
        let pyramid = self.encode(ctx);
        stats.encode_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let rays = generate_rays(camera, grid)?;
        let samples = self.sample_rays(ctx, &rays, grid, Some(&pyramid), None)?;
        stats.sampling_s = t.elapsed().as_secs_f64();
        stats.mean_valid = samples.mean_valid();
        stats.fallback_rays = samples.fallback_rays();
        stats.rays = samples.rays();

        let maps = self.render_maps(&pyramid, &ctx.geometry, &samples, &mut stats)?;

        let t = Instant::now();
        let image = self.decoder.decode_image(&self.store, &maps)?;
        stats.decode_s = t.elapsed().as_secs_f64();
        if !maps.is_finite() || image.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rendered output".into()));
        }
        Ok(RenderOutput { image, maps, stats })
    }

    /// Feature maps from plain volumes, a chunk of rays at a time.
    pub fn render_maps(&self, pyramid: &FeatureVolumePyramid, geo: &EncoderGeometry, samples: &RaySamples, stats: &mut RenderStats) -> Result<RenderedFeatureMaps> {
        let (h, w) = samples.grid;
        let r = samples.rays();
        if h * w != r {
            return Err(Error::Shape(format!("{r} rays for a {h}x{w} grid")));
        }
        let c = FEATURE_CHANNELS;
        let mut maps = vec![vec![0.0; c * r]; NUM_SCALES];
        let mut rgb = vec![0.0; 3 * r];
        let mut start = 0;
        while start < r {
            let mut end = start;
            let mut count = 0;
            while end < r && (end == start || count + samples.sets[end].num_valid() <= CHUNK_SAMPLES) {
                count += samples.sets[end].num_valid();
                end += 1;
            }
            let t = Instant::now();
            let mut tape = Tape::new();
            let volumes: [Var; NUM_SCALES] = std::array::from_fn(|l| {
                let v = &pyramid.volumes[l];
                tape.constant(Tensor::new(vec![v.len(), v.channels], v.features.clone()))
            });
            let (feats, col) = self.composite_scales(&mut tape, geo, &volumes, samples, start..end);
            stats.field_s += t.elapsed().as_secs_f64();

            let t = Instant::now();
            for (l, f) in feats.iter().enumerate() {
                let vals = tape.value(*f);
                for (k, ray) in (start..end).enumerate() {
                    for ch in 0..c {
                        maps[l][ch * r + ray] = vals[k * c + ch];
                    }
                }
            }
            let vals = tape.value(col);
            for (k, ray) in (start..end).enumerate() {
                for ch in 0..3 {
                    rgb[ch * r + ray] = vals[k * 3 + ch];
                }
            }
            stats.render_s += t.elapsed().as_secs_f64();
            start = end;
        }
        Ok(RenderedFeatureMaps {
            height: h,
            width: w,
            channels: vec![c; NUM_SCALES],
            maps,
            rgb: Some(rgb),
        })
    }

    /// Plain forward without timing, for evaluation.
    pub fn render_image(&self, ctx: &SceneContext, camera: &Camera) -> Result<Image> {
        Ok(self.render(ctx, camera)?.image)
    }

    /// Values of the encoder on `tape` copied into a plain pyramid.
    pub fn pyramid_of(&self, tape: &Tape, ctx: &SceneContext, volumes: &[Var; NUM_SCALES]) -> FeatureVolumePyramid {
        pyramid_from_tape(tape, volumes, &ctx.base, &ctx.geometry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_synthetic_scene, SyntheticScene};
    use crate::tensor::param_grad_check;

    fn small_config(sampler: SamplerKind) -> ModelConfig {
        ModelConfig {
            sampler,
            samples: 32,
            ray_grid: Some([4, 4]),
            ..Default::default()
        }
    }

    fn sphere_setup() -> (SceneContext, Vec<Camera>, Model) {
        let scene = SyntheticScene::sphere_on_floor(2, 32);
        let (cloud, cams) = generate_synthetic_scene(&scene, 300.0).unwrap();
        let model = Model::new(small_config(SamplerKind::PointGuided), 3).unwrap();
        (model.context(cloud).unwrap(), cams, model)
    }

    #[test]
    fn render_shapes_and_stats() {
        let (ctx, cams, model) = sphere_setup();
        let out = model.render(&ctx, &cams[0]).unwrap();
        assert_eq!((out.image.width, out.image.height), (32, 32));
        assert_eq!((out.maps.height, out.maps.width), (4, 4));
        assert_eq!(out.stats.rays, 16);
        assert!(out.stats.mean_valid > 0.0 && out.stats.mean_valid <= 32.0);
        assert!(out.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn chunked_inference_matches_tape_forward() {
        let (ctx, cams, model) = sphere_setup();
        let rays = generate_rays(&cams[1], (4, 4)).unwrap();
        let samples = model.sample_rays(&ctx, &rays, (4, 4), None, None).unwrap();
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &ctx, &samples).unwrap();
        let out = model.render(&ctx, &cams[1]).unwrap();
        for (a, b) in tape.value(fwd.image).iter().zip(out.image.to_chw()) {
            assert!((a - b).abs() < 1e-9);
        }
        for l in 0..NUM_SCALES {
            for (a, b) in tape.value(fwd.maps[l]).iter().zip(&out.maps.maps[l]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn every_sampler_renders() {
        let scene = SyntheticScene::sphere_on_floor(1, 16);
        let (cloud, cams) = generate_synthetic_scene(&scene, 200.0).unwrap();
        for kind in [SamplerKind::Uniform, SamplerKind::CoarseToFine, SamplerKind::PointGuided] {
            let model = Model::new(small_config(kind), 1).unwrap();
            let ctx = model.context(cloud.clone()).unwrap();
            let out = model.render(&ctx, &cams[0]).unwrap();
            assert!(out.maps.is_finite(), "{kind}");
            let expect = if kind == SamplerKind::PointGuided { out.stats.mean_valid <= 32.0 } else { out.stats.mean_valid == 32.0 };
            assert!(expect, "{kind}: {}", out.stats.mean_valid);
        }
    }

    #[test]
    fn jittered_sampling_is_seeded() {
        let (ctx, cams, model) = sphere_setup();
        let rays = generate_rays(&cams[0], (4, 4)).unwrap();
        let a = model.sample_rays(&ctx, &rays, (4, 4), None, Some(9)).unwrap();
        let b = model.sample_rays(&ctx, &rays, (4, 4), None, Some(9)).unwrap();
        let c = model.sample_rays(&ctx, &rays, (4, 4), None, Some(10)).unwrap();
        assert_eq!(a.sets, b.sets);
        assert_ne!(a.sets, c.sets);
    }

    #[test]
    fn empty_cloud_renders_finite() {
        let model = Model::new(small_config(SamplerKind::PointGuided), 0).unwrap();
        let ctx = model.context(PointCloud::default()).unwrap();
        let cam = Camera::look_at(Vec3::new(0.0, -3.0, 0.0), Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), 32.0, 32, 32).unwrap();
        let out = model.render(&ctx, &cam).unwrap();
        assert_eq!(out.stats.fallback_rays, 16);
        assert!(out.maps.is_finite());
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            radius: 0.2,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::RadiusExceedsCell { .. })));
        assert!(ModelConfig {
            samples: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            ray_grid: Some([0, 3]),
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn checkpoint_round_trip_renders_identically() {
        let (ctx, cams, model) = sphere_setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        model.save(&path).unwrap();
        let loaded = Model::load(model.config.clone(), &path).unwrap();
        let a = model.render(&ctx, &cams[0]).unwrap().image;
        let b = loaded.render(&ctx, &cams[0]).unwrap().image;
        assert_eq!(a.data, b.data);
    }

    /// Pixel loss back to encoder parameters on a two-voxel scene.
    #[test]
    fn end_to_end_gradients_reach_the_encoder() {
        let cloud = PointCloud::new(
            vec![Vec3::new(0.02, 0.02, 0.02), Vec3::new(0.10, 0.03, 0.02)],
            vec![[0.9, 0.2, 0.1], [0.1, 0.8, 0.3]],
        )
        .unwrap();
        let config = ModelConfig {
            sampler: SamplerKind::PointGuided,
            samples: 24,
            ray_grid: Some([2, 2]),
            decoder: DecoderConfig {
                channels: [8, 8, 8, 8],
                upsample_kernel: 1,
            },
            ..Default::default()
        };
        let model = Model::new(config, 5).unwrap();
        let ctx = model.context(cloud).unwrap();
        assert_eq!(ctx.base.len(), 2);
        let cam = Camera::look_at(Vec3::new(0.06, -0.5, 0.03), Vec3::new(0.06, 0.02, 0.03), Vec3::new(0.0, 0.0, 1.0), 40.0, 16, 16).unwrap();
        let rays = generate_rays(&cam, (2, 2)).unwrap();
        let samples = model.sample_rays(&ctx, &rays, (2, 2), None, None).unwrap();
        assert!(samples.total_valid() > 0);
        let target = Tensor::full(&[3, 16, 16], 0.3);
        let ids: Vec<_> = model.store.ids().filter(|id| model.store.name(*id).starts_with("enc.")).collect();
        let report = param_grad_check(
            |tape, store| {
                let m = Model {
                    store: store.clone(),
                    ..model.clone()
                };
                let out = m.forward(tape, &ctx, &samples).unwrap();
                crate::losses::loss_nr(tape, out.image, &target)
            },
            &model.store,
            &ids,
            1e-6,
            6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-3, "{report:?}");
    }
}
