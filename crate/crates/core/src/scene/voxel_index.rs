use rustc_hash::FxHashMap;

use super::PointCloud;
use crate::geom::Vec3;
use crate::{Error, Result};

/// Integer cell containing `p` for cubic cells of edge `cell`.
pub fn cell_of(p: Vec3, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

/// Result of a radius query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusHit {
    pub valid: bool,
    /// Nearest point when `valid`; ties go to the lowest index.
    pub nearest: Option<usize>,
    pub dist_sq: f64,
}

impl RadiusHit {
    const MISS: RadiusHit = RadiusHit {
        valid: false,
        nearest: None,
        dist_sq: f64::INFINITY,
    };
}

/// Uniform-cell hash over point positions. Immutable after build.
#[derive(Clone, Debug)]
pub struct VoxelIndex {
    cell: f64,
    cells: FxHashMap<[i64; 3], Vec<u32>>,
    positions: Vec<Vec3>,
}

impl VoxelIndex {
    pub fn build(cloud: &PointCloud, cell: f64) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::InvalidArgument(format!("cell size must be positive, got {cell}")));
        }
        let mut cells: FxHashMap<[i64; 3], Vec<u32>> = FxHashMap::default();
        for (i, p) in cloud.positions.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinitePoint { index: i });
            }
            cells.entry(cell_of(*p, cell)).or_default().push(i as u32);
        }
        Ok(VoxelIndex {
            cell,
            cells,
            positions: cloud.positions.clone(),
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_members(&self, cell: [i64; 3]) -> &[u32] {
        self.cells.get(&cell).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn cells(&self) -> impl Iterator<Item = (&[i64; 3], &[u32])> {
        self.cells.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.positions[i]
    }

    /// Nearest point within `r` of `x`, searching the 27 cells around `x`.
    /// Exact as long as `r` does not exceed the cell size.
    pub fn radius_query(&self, x: Vec3, r: f64) -> Result<RadiusHit> {
        if r > self.cell {
            return Err(Error::RadiusExceedsCell { radius: r, cell: self.cell });
        }
        Ok(self.query_unchecked(x, r * r))
    }

    pub(crate) fn query_unchecked(&self, x: Vec3, r_sq: f64) -> RadiusHit {
        let c = cell_of(x, self.cell);
        let mut best = RadiusHit::MISS;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(members) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &i in members {
                        let i = i as usize;
                        let d = x.dist_sq(self.positions[i]);
                        if d <= r_sq && (d < best.dist_sq || (d == best.dist_sq && Some(i) < best.nearest)) {
                            best = RadiusHit {
                                valid: true,
                                nearest: Some(i),
                                dist_sq: d,
                            };
                        }
                    }
                }
            }
        }
        best
    }

    /// True when some point lies within `r` of `x`; stops at the first hit.
    pub(crate) fn any_within(&self, x: Vec3, r_sq: f64) -> bool {
        let c = cell_of(x, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(members) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if members.iter().any(|&i| x.dist_sq(self.positions[i as usize]) <= r_sq) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}
