//! Occupied-voxel sets at a given stride and the index maps that connect
//! them: convolution neighborhoods, parent/child links and trilinear taps.

use rustc_hash::FxHashMap;

use crate::geom::Vec3;
use crate::tensor::{KernelMap, RowMap};

pub type Coord = [i64; 3];

/// Kernel offsets of a 3³ neighborhood, `k = (dx+1)·9 + (dy+1)·3 + (dz+1)`.
pub(crate) const OFFSETS: [[i64; 3]; 27] = {
    let mut out = [[0; 3]; 27];
    let mut i = 0;
    while i < 27 {
        out[i] = [(i / 9) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i % 3) as i64 - 1];
        i += 1;
    }
    out
};

/// Sorted, de-duplicated voxel coordinates at `stride` base cells per voxel.
/// Voxel `v` covers `[v·s·b, (v+1)·s·b)` on each axis for base cell `b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VoxelGrid {
    stride: usize,
    coords: Vec<Coord>,
    lookup: FxHashMap<Coord, u32>,
}

impl VoxelGrid {
    pub fn from_coords(stride: usize, mut coords: Vec<Coord>) -> Self {
        coords.sort_unstable();
        coords.dedup();
        let lookup = coords.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();
        VoxelGrid { stride, coords, lookup }
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn find(&self, c: Coord) -> Option<usize> {
        self.lookup.get(&c).map(|&i| i as usize)
    }

    /// Voxels at twice the stride containing at least one voxel of `self`.
    pub fn parents(&self) -> VoxelGrid {
        VoxelGrid::from_coords(self.stride * 2, self.coords.iter().map(|c| c.map(|v| v.div_euclid(2))).collect())
    }

    /// All eight children of every voxel, at half the stride.
    pub fn children(&self) -> VoxelGrid {
        assert!(self.stride >= 2, "children of a stride-1 grid");
        let mut out = Vec::with_capacity(self.coords.len() * 8);
        for c in &self.coords {
            for k in 0..8 {
                out.push([2 * c[0] + (k >> 2 & 1), 2 * c[1] + (k >> 1 & 1), 2 * c[2] + (k & 1)]);
            }
        }
        VoxelGrid::from_coords(self.stride / 2, out)
    }

    pub fn center(&self, c: Coord, cell: f64) -> Vec3 {
        let s = self.stride as f64 * cell;
        Vec3::new((c[0] as f64 + 0.5) * s, (c[1] as f64 + 0.5) * s, (c[2] as f64 + 0.5) * s)
    }
}

/// Same-grid 3³ neighborhood (output support = input support).
pub fn submanifold_map(grid: &VoxelGrid) -> KernelMap {
    let mut pairs = vec![Vec::new(); 27];
    for (o, c) in grid.coords.iter().enumerate() {
        for (k, d) in OFFSETS.iter().enumerate() {
            if let Some(i) = grid.find([c[0] + d[0], c[1] + d[1], c[2] + d[2]]) {
                pairs[k].push((i as u32, o as u32));
            }
        }
    }
    KernelMap {
        n_in: grid.len(),
        n_out: grid.len(),
        pairs,
    }
}

/// Stride-2 convolution: output `o` reads inputs `2o + k`, `k ∈ {−1,0,1}³`.
pub fn down_map(fine: &VoxelGrid, coarse: &VoxelGrid) -> KernelMap {
    assert_eq!(coarse.stride, fine.stride * 2);
    let mut pairs = vec![Vec::new(); 27];
    for (o, c) in coarse.coords.iter().enumerate() {
        for (k, d) in OFFSETS.iter().enumerate() {
            if let Some(i) = fine.find([2 * c[0] + d[0], 2 * c[1] + d[1], 2 * c[2] + d[2]]) {
                pairs[k].push((i as u32, o as u32));
            }
        }
    }
    KernelMap {
        n_in: fine.len(),
        n_out: coarse.len(),
        pairs,
    }
}

/// Transposed stride-2 convolution: input `c` writes outputs `2c + k`, restricted
/// to the given (generated) output grid.
pub fn up_map(coarse: &VoxelGrid, fine: &VoxelGrid) -> KernelMap {
    assert_eq!(coarse.stride, fine.stride * 2);
    let mut pairs = vec![Vec::new(); 27];
    for (o, p) in fine.coords.iter().enumerate() {
        for (k, d) in OFFSETS.iter().enumerate() {
            let q = [p[0] - d[0], p[1] - d[1], p[2] - d[2]];
            if q.iter().any(|v| v.rem_euclid(2) != 0) {
                continue;
            }
            if let Some(i) = coarse.find(q.map(|v| v / 2)) {
                pairs[k].push((i as u32, o as u32));
            }
        }
    }
    KernelMap {
        n_in: coarse.len(),
        n_out: fine.len(),
        pairs,
    }
}

/// Copies rows of `src` into the rows of `dst` with the same coordinate;
/// coordinates absent from `src` get zero rows.
pub fn align_map(src: &VoxelGrid, dst: &VoxelGrid) -> RowMap {
    let mut map = RowMap::new(src.len());
    for c in &dst.coords {
        map.push_row(src.find(*c).map(|i| (i, 1.0)));
    }
    map
}

/// Trilinear corner weights of `x` on `grid`: up to eight `(voxel, weight)`
/// pairs over present voxels. Absent corners are dropped, not renormalized.
pub fn trilinear_taps(grid: &VoxelGrid, cell: f64, x: Vec3, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let s = grid.stride as f64 * cell;
    let u = [x.x / s - 0.5, x.y / s - 0.5, x.z / s - 0.5];
    let base = u.map(|v| v.floor());
    let frac = [u[0] - base[0], u[1] - base[1], u[2] - base[2]];
    let base = base.map(|v| v as i64);
    for k in 0..8usize {
        let bits = [k >> 2 & 1, k >> 1 & 1, k & 1];
        let mut w = 1.0;
        let mut c = [0i64; 3];
        for a in 0..3 {
            w *= if bits[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            c[a] = base[a] + bits[a] as i64;
        }
        if w == 0.0 {
            continue;
        }
        if let Some(i) = grid.find(c) {
            out.push((i, w));
        }
    }
}

/// [`RowMap`] with one row of trilinear taps per query point.
pub fn trilinear_map(grid: &VoxelGrid, cell: f64, points: &[Vec3]) -> RowMap {
    let mut map = RowMap::new(grid.len());
    let mut taps = Vec::with_capacity(8);
    for p in points {
        trilinear_taps(grid, cell, *p, &mut taps);
        map.push_row(taps.iter().copied());
    }
    map
}
