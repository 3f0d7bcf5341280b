//! Multi-scale radiance fields over a voxelized point cloud.
//!
//! The cloud is voxelized at the base cell, a sparse UNet produces feature
//! volumes at strides 8, 4, 2 and 1, and one small MLP head per scale maps a
//! trilinearly interpolated feature to a density and a feature vector.

pub mod grid;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use grid::{align_map, down_map, submanifold_map, trilinear_map, trilinear_taps, up_map, Coord, VoxelGrid};

use crate::geom::Vec3;
use crate::layers::{Dense, SparseConv};
use crate::scene::{cell_of, PointCloud};
use crate::tensor::{sigmoid, KernelMap, ParamStore, RowMap, Tape, Tensor, Var};
use crate::{Error, Result};

/// Base voxel edge, meters; equal to the sampling radius.
pub const BASE_CELL: f64 = 0.08;
pub const NUM_SCALES: usize = 4;
/// Feature channels per scale (`C_l`).
pub const FEATURE_CHANNELS: usize = 16;
pub const HEAD_WIDTH: usize = 64;
/// Density threshold `D` of the point loss hinge and of densification.
pub const DENSITY_THRESHOLD: f64 = 10.0;
/// Strides of `F^1..F^4`, coarse to fine.
pub const SCALE_STRIDES: [usize; NUM_SCALES] = [8, 4, 2, 1];
/// Input channels of the base volume: mean color plus occupancy.
pub const INPUT_CHANNELS: usize = 4;

/// Feature vectors attached to an occupied-voxel set.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVolume {
    pub grid: VoxelGrid,
    pub cell: f64,
    pub channels: usize,
    /// Row-major `[len, channels]`.
    pub features: Vec<f64>,
}

impl SparseVolume {
    pub fn stride(&self) -> usize {
        self.grid.stride()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }
}

/// One voxel per occupied base cell with features `(mean r, g, b, 1)`.
pub fn voxelize(cloud: &PointCloud, cell: f64) -> Result<SparseVolume> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::InvalidArgument(format!("cell size must be positive, got {cell}")));
    }
    cloud.validate()?;
    let mut acc: rustc_hash::FxHashMap<Coord, ([f64; 3], usize)> = Default::default();
    for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
        let e = acc.entry(cell_of(*p, cell)).or_insert(([0.0; 3], 0));
        for k in 0..3 {
            e.0[k] += c[k];
        }
        e.1 += 1;
    }
    let grid = VoxelGrid::from_coords(1, acc.keys().copied().collect());
    let mut features = Vec::with_capacity(grid.len() * INPUT_CHANNELS);
    for c in grid.coords() {
        let (sum, n) = acc[c];
        features.extend(sum.iter().map(|s| s / n as f64));
        features.push(1.0);
    }
    Ok(SparseVolume {
        grid,
        cell,
        channels: INPUT_CHANNELS,
        features,
    })
}

/// Trilinear interpolation over the eight surrounding voxel centers; absent
/// voxels count as zero features.
pub fn query_feature(volume: &SparseVolume, x: Vec3) -> Vec<f64> {
    let mut taps = Vec::with_capacity(8);
    trilinear_taps(&volume.grid, volume.cell, x, &mut taps);
    let mut out = vec![0.0; volume.channels];
    for (i, w) in taps {
        for (o, f) in out.iter_mut().zip(volume.feature(i)) {
            *o += w * f;
        }
    }
    out
}

/// Voxel sets and index maps of the encoder for one base grid. Depends only
/// on the cloud, so it is built once per scene.
#[derive(Clone, Debug)]
pub struct EncoderGeometry {
    pub cell: f64,
    /// Encoder supports at strides 1, 2, 4, 8.
    pub enc: [VoxelGrid; 4],
    /// Generated decoder supports at strides 4, 2, 1.
    pub gen: [VoxelGrid; 3],
    sub1: Arc<KernelMap>,
    down: [Arc<KernelMap>; 3],
    up: [Arc<KernelMap>; 3],
    sub_gen: [Arc<KernelMap>; 2],
    skip: [Arc<RowMap>; 3],
}

impl EncoderGeometry {
    pub fn new(base: &VoxelGrid, cell: f64) -> Self {
        assert_eq!(base.stride(), 1, "encoder input must be a stride-1 grid");
        let e1 = base.clone();
        let e2 = e1.parents();
        let e4 = e2.parents();
        let e8 = e4.parents();
        // Each decoder level generates the children of the encoder level one
        // stride up, which always covers the encoder support at its own stride.
        let g4 = e8.children();
        let g2 = e4.children();
        let g1 = e2.children();
        EncoderGeometry {
            cell,
            sub1: Arc::new(submanifold_map(&e1)),
            down: [
                Arc::new(down_map(&e1, &e2)),
                Arc::new(down_map(&e2, &e4)),
                Arc::new(down_map(&e4, &e8)),
            ],
            up: [Arc::new(up_map(&e8, &g4)), Arc::new(up_map(&g4, &g2)), Arc::new(up_map(&g2, &g1))],
            sub_gen: [Arc::new(submanifold_map(&g4)), Arc::new(submanifold_map(&g2))],
            skip: [
                Arc::new(align_map(&e4, &g4)),
                Arc::new(align_map(&e2, &g2)),
                Arc::new(align_map(&e1, &g1)),
            ],
            enc: [e1, e2, e4, e8],
            gen: [g4, g2, g1],
        }
    }

    /// Support of `F^{l+1}` (`l = 0` is the coarsest scale).
    pub fn scale_grid(&self, l: usize) -> &VoxelGrid {
        match l {
            0 => &self.enc[3],
            1..=3 => &self.gen[l - 1],
            _ => panic!("scale {l} out of range"),
        }
    }
}

/// Sparse UNet: submanifold stem, three stride-2 downsamplings, a generative
/// upsampling path with skip concatenation, and a linear tap per scale.
#[derive(Clone, Debug)]
pub struct Encoder {
    stem: SparseConv,
    down: [SparseConv; 3],
    up: [SparseConv; 3],
    merge4: SparseConv,
    merge2: SparseConv,
    taps: [Dense; NUM_SCALES],
}

impl Encoder {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        // Surfaces occupy roughly 9 of the 27 neighbors.
        let fan = 9;
        let c = FEATURE_CHANNELS;
        Encoder {
            stem: SparseConv::new(store, "enc.stem", INPUT_CHANNELS, 16, fan, rng),
            down: [
                SparseConv::new(store, "enc.down1", 16, 32, fan, rng),
                SparseConv::new(store, "enc.down2", 32, 64, fan, rng),
                SparseConv::new(store, "enc.down3", 64, 64, fan, rng),
            ],
            up: [
                SparseConv::new(store, "enc.up3", 64, 32, 2, rng),
                SparseConv::new(store, "enc.up2", 32, 16, 2, rng),
                SparseConv::new(store, "enc.up1", 16, 16, 2, rng),
            ],
            merge4: SparseConv::new(store, "enc.merge4", 96, 32, fan, rng),
            merge2: SparseConv::new(store, "enc.merge2", 48, 16, fan, rng),
            taps: [
                Dense::new(store, "enc.tap1", 64, c, rng),
                Dense::new(store, "enc.tap2", 32, c, rng),
                Dense::new(store, "enc.tap3", 16, c, rng),
                Dense::new(store, "enc.tap4", 32, c, rng),
            ],
        }
    }

    /// `base` is `[enc[0].len(), 4]`; returns `F^1..F^4` on the grids of
    /// [`EncoderGeometry::scale_grid`].
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, geo: &EncoderGeometry, base: Var) -> [Var; NUM_SCALES] {
        let x1 = self.stem.forward(tape, store, base, &geo.sub1);
        let x1 = tape.relu(x1);
        let x2 = self.down[0].forward(tape, store, x1, &geo.down[0]);
        let x2 = tape.relu(x2);
        let x4 = self.down[1].forward(tape, store, x2, &geo.down[1]);
        let x4 = tape.relu(x4);
        let x8 = self.down[2].forward(tape, store, x4, &geo.down[2]);
        let x8 = tape.relu(x8);

        let u4 = self.up[0].forward(tape, store, x8, &geo.up[0]);
        let u4 = tape.relu(u4);
        let s4 = tape.gather_weighted(x4, geo.skip[0].clone());
        let c4 = tape.concat_last(u4, s4);
        let y4 = self.merge4.forward(tape, store, c4, &geo.sub_gen[0]);
        let y4 = tape.relu(y4);

        let u2 = self.up[1].forward(tape, store, y4, &geo.up[1]);
        let u2 = tape.relu(u2);
        let s2 = tape.gather_weighted(x2, geo.skip[1].clone());
        let c2 = tape.concat_last(u2, s2);
        let y2 = self.merge2.forward(tape, store, c2, &geo.sub_gen[1]);
        let y2 = tape.relu(y2);

        let u1 = self.up[2].forward(tape, store, y2, &geo.up[2]);
        let u1 = tape.relu(u1);
        let s1 = tape.gather_weighted(x1, geo.skip[2].clone());
        let y1 = tape.concat_last(u1, s1);

        let levels = [x8, y4, y2, y1];
        std::array::from_fn(|l| self.taps[l].forward(tape, store, levels[l]))
    }
}

/// Density, feature and (finest scale only) color at one location.
#[derive(Clone, Debug, PartialEq)]
pub struct PointAttributes {
    pub sigma: f64,
    pub feature: Vec<f64>,
    pub color: Option<[f64; 3]>,
}

/// Per-scale MLP `C_l → 64 → 64 → 1 + C_l`; density through softplus.
#[derive(Clone, Debug)]
pub struct Head {
    layers: [Dense; 3],
    pub finest: bool,
}

/// Head outputs for a batch of samples.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// `[S]`
    pub sigma: Var,
    /// `[S, C_l]`
    pub feature: Var,
}

impl Head {
    pub fn new(store: &mut ParamStore, name: &str, finest: bool, rng: &mut impl Rng) -> Self {
        let c = FEATURE_CHANNELS;
        Head {
            layers: [
                Dense::new(store, &format!("{name}.fc1"), c, HEAD_WIDTH, rng),
                Dense::new(store, &format!("{name}.fc2"), HEAD_WIDTH, HEAD_WIDTH, rng),
                Dense::new(store, &format!("{name}.out"), HEAD_WIDTH, 1 + c, rng),
            ],
            finest,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> HeadOutput {
        let h = self.layers[0].forward(tape, store, x);
        let h = tape.relu(h);
        let h = self.layers[1].forward(tape, store, h);
        let h = tape.relu(h);
        let out = self.layers[2].forward(tape, store, h);
        let s = tape.shape(out)[0];
        let raw = tape.narrow(out, 1, 0, 1);
        let raw = tape.reshape(raw, &[s]);
        HeadOutput {
            sigma: tape.softplus(raw),
            feature: tape.narrow(out, 1, 1, FEATURE_CHANNELS),
        }
    }

    /// Colors `[S, 3]` from the first three feature channels.
    pub fn color(&self, tape: &mut Tape, out: &HeadOutput) -> Var {
        let f = tape.narrow(out.feature, 1, 0, 3);
        tape.sigmoid(f)
    }
}

/// Evaluates one head on a single feature vector.
pub fn head_eval(store: &ParamStore, head: &Head, feature: &[f64]) -> Result<PointAttributes> {
    if feature.len() != FEATURE_CHANNELS {
        return Err(Error::Shape(format!("head expects {FEATURE_CHANNELS} channels, got {}", feature.len())));
    }
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, FEATURE_CHANNELS], feature.to_vec()));
    let out = head.forward(&mut tape, store, x);
    let feature = tape.value(out.feature).to_vec();
    let color = head.finest.then(|| [sigmoid(feature[0]), sigmoid(feature[1]), sigmoid(feature[2])]);
    Ok(PointAttributes {
        sigma: tape.value(out.sigma)[0],
        feature,
        color,
    })
}

/// Encoder plus one head per scale.
#[derive(Clone, Debug)]
pub struct FieldModel {
    pub encoder: Encoder,
    pub heads: Vec<Head>,
}

impl FieldModel {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let encoder = Encoder::new(store, rng);
        let heads = (0..NUM_SCALES).map(|l| Head::new(store, &format!("head{}", l + 1), l + 1 == NUM_SCALES, rng)).collect();
        FieldModel { encoder, heads }
    }

    /// Feature volumes on `tape`; empty inputs give empty volumes.
    pub fn encode_on_tape(&self, tape: &mut Tape, store: &ParamStore, base: &SparseVolume, geo: &EncoderGeometry) -> [Var; NUM_SCALES] {
        if base.is_empty() {
            return std::array::from_fn(|_| tape.constant(Tensor::zeros(&[0, FEATURE_CHANNELS])));
        }
        let x = tape.constant(Tensor::new(vec![base.len(), base.channels], base.features.clone()));
        self.encoder.forward(tape, store, geo, x)
    }

    /// Feature volume pyramid as plain values.
    pub fn encode(&self, store: &ParamStore, base: &SparseVolume) -> FeatureVolumePyramid {
        self.encode_with(store, base, &EncoderGeometry::new(&base.grid, base.cell))
    }

    /// [`FieldModel::encode`] with a prebuilt geometry for `base`.
    pub fn encode_with(&self, store: &ParamStore, base: &SparseVolume, geo: &EncoderGeometry) -> FeatureVolumePyramid {
        let mut tape = Tape::new();
        let vars = self.encode_on_tape(&mut tape, store, base, geo);
        pyramid_from_tape(&tape, &vars, base, geo)
    }
}

/// Copies encoder outputs off a tape into plain volumes.
pub fn pyramid_from_tape(tape: &Tape, vars: &[Var; NUM_SCALES], base: &SparseVolume, geo: &EncoderGeometry) -> FeatureVolumePyramid {
    let volumes = (0..NUM_SCALES)
        .map(|l| SparseVolume {
            grid: if base.is_empty() {
                VoxelGrid::from_coords(SCALE_STRIDES[l], Vec::new())
            } else {
                geo.scale_grid(l).clone()
            },
            cell: base.cell,
            channels: FEATURE_CHANNELS,
            features: tape.value(vars[l]).to_vec(),
        })
        .collect();
    FeatureVolumePyramid { volumes }
}

/// `F^1..F^4`, coarse to fine.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolumePyramid {
    pub volumes: Vec<SparseVolume>,
}

impl FeatureVolumePyramid {
    pub fn finest(&self) -> &SparseVolume {
        self.volumes.last().expect("pyramid has scales")
    }
}

/// Evaluates the finest head at many points in one batch.
pub fn eval_finest(store: &ParamStore, model: &FieldModel, pyramid: &FeatureVolumePyramid, points: &[Vec3]) -> Vec<PointAttributes> {
    let vol = pyramid.finest();
    let head = model.heads.last().expect("model has heads");
    let mut tape = Tape::new();
    let f = tape.constant(Tensor::new(vec![vol.len(), vol.channels], vol.features.clone()));
    let q = tape.gather_weighted(f, Arc::new(trilinear_map(&vol.grid, vol.cell, points)));
    let out = head.forward(&mut tape, store, q);
    let sig = tape.value(out.sigma).to_vec();
    let feat = tape.value(out.feature).to_vec();
    sig.iter()
        .zip(feat.chunks(FEATURE_CHANNELS))
        .map(|(&sigma, f)| PointAttributes {
            sigma,
            feature: f.to_vec(),
            color: Some([sigmoid(f[0]), sigmoid(f[1]), sigmoid(f[2])]),
        })
        .collect()
}

/// Draws `samples_per_point` candidates uniformly in the radius-`r` ball
/// around every point, keeps those whose finest-scale density reaches
/// `threshold`, and returns the input followed by the kept points (colored by
/// the color head).
pub fn densify(
    cloud: &PointCloud,
    store: &ParamStore,
    model: &FieldModel,
    pyramid: &FeatureVolumePyramid,
    samples_per_point: usize,
    r: f64,
    threshold: f64,
    seed: u64,
) -> Result<PointCloud> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("densify radius must be positive, got {r}")));
    }
    let mut out = cloud.clone();
    if samples_per_point == 0 || cloud.is_empty() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = Vec::with_capacity(cloud.len() * samples_per_point);
    for p in &cloud.positions {
        for _ in 0..samples_per_point {
            let off = loop {
                let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if v.norm_sq() <= 1.0 {
                    break v * r;
                }
            };
            candidates.push(*p + off);
        }
    }
    const BATCH: usize = 8192;
    for chunk in candidates.chunks(BATCH) {
        for (x, a) in chunk.iter().zip(eval_finest(store, model, pyramid, chunk)) {
            if a.sigma >= threshold {
                out.push(*x, a.color.expect("finest head has color"));
            }
        }
    }
    log::info!("densify: {} -> {} points", cloud.len(), out.len());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::param_grad_check;
    use rand::SeedableRng;

    fn cloud(points: &[([f64; 3], [f64; 3])]) -> PointCloud {
        PointCloud::new(points.iter().map(|p| Vec3::from(p.0)).collect(), points.iter().map(|p| p.1).collect()).unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = PointCloud::default();
        for _ in 0..n {
            c.push(
                Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.1..0.1)),
                [rng.gen(), rng.gen(), rng.gen()],
            );
        }
        c
    }

    #[test]
    fn one_point_one_voxel() {
        let v = voxelize(&cloud(&[([0.01, 0.02, 0.03], [0.2, 0.4, 0.6])]), BASE_CELL).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.feature(0), &[0.2, 0.4, 0.6, 1.0]);
    }

    #[test]
    fn same_cell_colors_average() {
        let v = voxelize(&cloud(&[([0.01, 0.01, 0.01], [0.0; 3]), ([0.02, 0.03, 0.01], [1.0; 3])]), BASE_CELL).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.feature(0), &[0.5, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn voxel_set_matches_floor_division() {
        let c = random_cloud(3000, 1);
        let v = voxelize(&c, BASE_CELL).unwrap();
        let mut want: Vec<Coord> = c.positions.iter().map(|p| [(p.x / 0.08).floor() as i64, (p.y / 0.08).floor() as i64, (p.z / 0.08).floor() as i64]).collect();
        want.sort();
        want.dedup();
        assert_eq!(v.grid.coords(), &want[..]);
    }

    fn trilinear_oracle(vol: &SparseVolume, x: Vec3) -> Vec<f64> {
        let s = vol.stride() as f64 * vol.cell;
        let mut out = vec![0.0; vol.channels];
        // Closed form over the eight corners of the containing dual cell.
        let u = [x.x / s - 0.5, x.y / s - 0.5, x.z / s - 0.5];
        let i0 = u.map(|v| v.floor() as i64);
        for dx in 0..2 {
            for dy in 0..2 {
                for dz in 0..2 {
                    let c = [i0[0] + dx, i0[1] + dy, i0[2] + dz];
                    let w = (1.0 - (u[0] - c[0] as f64).abs()) * (1.0 - (u[1] - c[1] as f64).abs()) * (1.0 - (u[2] - c[2] as f64).abs());
                    if let Some(i) = vol.grid.find(c) {
                        for k in 0..vol.channels {
                            out[k] += w * vol.feature(i)[k];
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn trilinear_matches_closed_form() {
        let vol = voxelize(&random_cloud(2000, 3), BASE_CELL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let x = Vec3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.2..0.2));
            let got = query_feature(&vol, x);
            for (a, b) in got.iter().zip(trilinear_oracle(&vol, x)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn query_identity_midpoint_and_far() {
        let vol = voxelize(&cloud(&[([0.01, 0.01, 0.01], [1.0, 0.0, 0.0]), ([0.09, 0.01, 0.01], [0.0, 0.0, 1.0])]), BASE_CELL).unwrap();
        assert_eq!(query_feature(&vol, Vec3::new(0.04, 0.04, 0.04)), vec![1.0, 0.0, 0.0, 1.0]);
        let mid = query_feature(&vol, Vec3::new(0.08, 0.04, 0.04));
        for (a, b) in mid.iter().zip([0.5, 0.0, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(query_feature(&vol, Vec3::splat(5.0)), vec![0.0; 4]);
    }

    #[test]
    fn single_voxel_support_reaches_every_scale() {
        let vol = voxelize(&cloud(&[([0.3, -0.2, 0.1], [0.5; 3])]), BASE_CELL).unwrap();
        let geo = EncoderGeometry::new(&vol.grid, BASE_CELL);
        let v = vol.grid.coords()[0];
        for l in 0..NUM_SCALES {
            let s = SCALE_STRIDES[l] as i64;
            let g = geo.scale_grid(l);
            assert_eq!(g.stride() as i64, s);
            assert!(g.find(v.map(|c| c.div_euclid(s))).is_some(), "scale {l}");
        }
    }

    #[test]
    fn coarser_support_contains_pooled_finer_support() {
        let vol = voxelize(&random_cloud(500, 9), BASE_CELL).unwrap();
        let geo = EncoderGeometry::new(&vol.grid, BASE_CELL);
        for w in geo.enc.windows(2) {
            for c in w[0].coords() {
                assert!(w[1].find(c.map(|v| v.div_euclid(2))).is_some());
            }
        }
        for (g, e) in geo.gen.iter().zip([&geo.enc[2], &geo.enc[1], &geo.enc[0]]) {
            for c in e.coords() {
                assert!(g.find(*c).is_some());
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let mut store = ParamStore::new();
        let model = FieldModel::new(&mut store, &mut ChaCha8Rng::seed_from_u64(5));
        let vol = voxelize(&random_cloud(300, 2), BASE_CELL).unwrap();
        let a = model.encode(&store, &vol);
        let b = model.encode(&store, &vol);
        assert_eq!(a, b);
        assert_eq!(a.volumes.len(), 4);
        for (v, s) in a.volumes.iter().zip(SCALE_STRIDES) {
            assert_eq!(v.stride(), s);
            assert_eq!(v.features.len(), v.len() * FEATURE_CHANNELS);
        }
    }

    #[test]
    fn empty_cloud_gives_empty_pyramid() {
        let mut store = ParamStore::new();
        let model = FieldModel::new(&mut store, &mut ChaCha8Rng::seed_from_u64(5));
        let vol = voxelize(&PointCloud::default(), BASE_CELL).unwrap();
        let p = model.encode(&store, &vol);
        assert!(p.volumes.iter().all(|v| v.is_empty()));
    }

    #[test]
    fn zero_head_gives_softplus_zero() {
        let mut store = ParamStore::new();
        let head = Head::new(&mut store, "h", true, &mut ChaCha8Rng::seed_from_u64(0));
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).value.data_mut().fill(0.0);
        }
        let a = head_eval(&store, &head, &[0.3; FEATURE_CHANNELS]).unwrap();
        assert!((a.sigma - 2f64.ln()).abs() < 1e-12);
        assert!((a.sigma - 0.6931).abs() < 1e-4);
        assert!(a.feature.iter().all(|&f| f == 0.0));
        assert_eq!(a.color, Some([0.5; 3]));
        assert!(head_eval(&store, &head, &[0.0; 3]).is_err());
    }

    #[test]
    fn density_is_nonnegative() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let head = Head::new(&mut store, "h", false, &mut rng);
        for _ in 0..200 {
            let f: Vec<f64> = (0..FEATURE_CHANNELS).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let a = head_eval(&store, &head, &f).unwrap();
            assert!(a.sigma >= 0.0 && a.sigma.is_finite());
            assert!(a.color.is_none());
        }
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let head = Head::new(&mut store, "h", true, &mut rng);
        let x = Tensor::randn(&[5, FEATURE_CHANNELS], 1.0, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        let report = param_grad_check(
            |tape, s| {
                let xv = tape.constant(x.clone());
                let out = head.forward(tape, s, xv);
                let c = head.color(tape, &out);
                let a = tape.sum(out.sigma);
                let b = tape.sum(c);
                let f = tape.sum(out.feature);
                let ab = tape.add(a, b);
                tape.add(ab, f)
            },
            &store,
            &ids,
            1e-6,
            usize::MAX,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    fn head_forward_with(tape: &mut Tape, p: &[Var], x: Tensor) -> (Var, Var) {
        let x = tape.constant(x);
        let h = tape.linear(x, p[0], p[1]);
        let h = tape.relu(h);
        let h = tape.linear(h, p[2], p[3]);
        let h = tape.relu(h);
        let o = tape.linear(h, p[4], p[5]);
        let s = tape.shape(o)[0];
        let raw = tape.narrow(o, 1, 0, 1);
        let raw = tape.reshape(raw, &[s]);
        (tape.softplus(raw), tape.narrow(o, 1, 1, FEATURE_CHANNELS))
    }

    #[test]
    fn head_forward_matches_manual_composition() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let head = Head::new(&mut store, "h", true, &mut rng);
        let x = Tensor::randn(&[3, FEATURE_CHANNELS], 1.0, &mut rng);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = head.forward(&mut tape, &store, xv);
        let mut t2 = Tape::new();
        let ps: Vec<Var> = store.ids().map(|id| t2.param(&store, id)).collect();
        let (s2, f2) = head_forward_with(&mut t2, &ps, x);
        assert_eq!(tape.value(out.sigma), t2.value(s2));
        assert_eq!(tape.value(out.feature), t2.value(f2));
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let c = cloud(&[([0.01, 0.01, 0.01], [0.9, 0.1, 0.3]), ([0.09, 0.02, 0.01], [0.1, 0.8, 0.5])]);
        let vol = voxelize(&c, BASE_CELL).unwrap();
        let geo = EncoderGeometry::new(&vol.grid, BASE_CELL);
        let mut store = ParamStore::new();
        let model = FieldModel::new(&mut store, &mut ChaCha8Rng::seed_from_u64(11));
        let ids: Vec<_> = store.ids().filter(|id| store.name(*id).starts_with("enc.")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let probe: Vec<Tensor> = (0..NUM_SCALES)
            .map(|l| Tensor::randn(&[geo.scale_grid(l).len(), FEATURE_CHANNELS], 1.0, &mut rng))
            .collect();
        let report = param_grad_check(
            |tape, s| {
                let feats = model.encode_on_tape(tape, s, &vol, &geo);
                let mut total = None;
                for (f, p) in feats.iter().zip(&probe) {
                    let pv = tape.constant(p.clone());
                    let m = tape.mul(*f, pv);
                    let s = tape.sum(m);
                    total = Some(match total {
                        None => s,
                        Some(t) => tape.add(t, s),
                    });
                }
                total.unwrap()
            },
            &store,
            &ids,
            1e-6,
            40,
        )
        .unwrap();
        assert!(report.entries_checked > 500);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn densify_stays_near_input() {
        let mut store = ParamStore::new();
        let model = FieldModel::new(&mut store, &mut ChaCha8Rng::seed_from_u64(1));
        let c = random_cloud(200, 8);
        let pyr = model.encode(&store, &voxelize(&c, BASE_CELL).unwrap());
        let same = densify(&c, &store, &model, &pyr, 0, 0.08, 0.0, 1).unwrap();
        assert_eq!(same, c);
        // Threshold 0 keeps every candidate.
        let all = densify(&c, &store, &model, &pyr, 3, 0.08, 0.0, 1).unwrap();
        assert_eq!(all.len(), 4 * c.len());
        assert_eq!(&all.positions[..c.len()], &c.positions[..]);
        for p in &all.positions[c.len()..] {
            let d = c.positions.iter().map(|q| q.dist_sq(*p)).fold(f64::INFINITY, f64::min);
            assert!(d <= 0.08 * 0.08 + 1e-12);
        }
    }
}
