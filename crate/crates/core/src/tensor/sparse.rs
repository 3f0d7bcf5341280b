//! Sparse tape operations: weighted row gathers (trilinear lookups, skip
//! links), sparse 3D convolution over kernel maps, and front-to-back ray
//! compositing.

use std::sync::Arc;

use super::nn::gemm;
use super::tape::{Tape, Var};

/// Sparse linear map from `n_src` source rows to `rows()` output rows:
/// `out[r] = Σ weight · src[index]` over the entries of row `r`.
#[derive(Clone, Debug, Default)]
pub struct RowMap {
    n_src: usize,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl RowMap {
    pub fn new(n_src: usize) -> Self {
        RowMap {
            n_src,
            offsets: vec![0],
            entries: Vec::new(),
        }
    }

    /// Appends an output row built from `(source index, weight)` pairs.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (i, w) in entries {
            assert!(i < self.n_src, "row map source {i} out of range {}", self.n_src);
            self.entries.push((i as u32, w));
        }
        self.offsets.push(self.entries.len());
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn row(&self, r: usize) -> &[(u32, f64)] {
        &self.entries[self.offsets[r]..self.offsets[r + 1]]
    }
}

/// Input/output pairs of a sparse convolution, grouped by kernel offset.
#[derive(Clone, Debug)]
pub struct KernelMap {
    pub n_in: usize,
    pub n_out: usize,
    pub pairs: Vec<Vec<(u32, u32)>>,
}

impl KernelMap {
    pub fn kernel_volume(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }
}

/// Sample ranges per ray plus per-sample spacing δ.
#[derive(Clone, Debug, Default)]
pub struct RaySegments {
    pub offsets: Vec<usize>,
    pub deltas: Vec<f64>,
}

impl RaySegments {
    pub fn rays(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn samples(&self) -> usize {
        self.deltas.len()
    }

    pub fn range(&self, r: usize) -> std::ops::Range<usize> {
        self.offsets[r]..self.offsets[r + 1]
    }
}

impl Tape {
    /// Applies a [`RowMap`] to the rows of `x[n_src, C]`.
    pub fn gather_weighted(&mut self, x: Var, map: Arc<RowMap>) -> Var {
        let s = self.shape(x).to_vec();
        assert!(s.len() == 2 && s[0] == map.n_src(), "gather_weighted: input {s:?} vs {} sources", map.n_src());
        let c = s[1];
        let src = self.value(x);
        let mut value = vec![0.0; map.rows() * c];
        for (r, out) in value.chunks_mut(c.max(1)).enumerate().take(map.rows()) {
            for &(i, w) in map.row(r) {
                let row = &src[i as usize * c..(i as usize + 1) * c];
                for (o, v) in out.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
        }
        let rows = map.rows();
        self.push_op(vec![rows, c], value, &[x], move |g, _, grads| {
            let slot = grads.slot(x);
            for r in 0..rows {
                let gr = &g[r * c..(r + 1) * c];
                for &(i, w) in map.row(r) {
                    let dst = &mut slot[i as usize * c..(i as usize + 1) * c];
                    for (d, v) in dst.iter_mut().zip(gr) {
                        *d += w * v;
                    }
                }
            }
        })
    }

    /// Sparse convolution: `out[o] = Σ_k Σ_{(i,o) ∈ pairs_k} x[i] · w[k]`
    /// with `x[n_in, Cin]`, `w[K, Cin, Cout]`, output `[n_out, Cout]`.
    pub fn sparse_conv3d(&mut self, x: Var, w: Var, map: Arc<KernelMap>) -> Var {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        assert!(sx.len() == 2 && sx[0] == map.n_in, "sparse_conv3d: input {sx:?} vs {} sites", map.n_in);
        assert!(
            sw.len() == 3 && sw[0] == map.kernel_volume() && sw[1] == sx[1],
            "sparse_conv3d: weight {sw:?} for input {sx:?}"
        );
        let (cin, cout) = (sw[1], sw[2]);
        let xs = self.value(x);
        let ws = self.value(w);
        let mut value = vec![0.0; map.n_out * cout];
        let mut gathered = Vec::new();
        let mut prod = Vec::new();
        for (k, pairs) in map.pairs.iter().enumerate() {
            if pairs.is_empty() {
                continue;
            }
            gather_rows(xs, cin, pairs.iter().map(|p| p.0), &mut gathered);
            prod.clear();
            prod.resize(pairs.len() * cout, 0.0);
            gemm(pairs.len(), cin, cout, &gathered, false, &ws[k * cin * cout..][..cin * cout], false, 0.0, &mut prod);
            scatter_rows_add(&prod, cout, pairs.iter().map(|p| p.1), &mut value);
        }
        let n_out = map.n_out;
        self.push_op(vec![n_out, cout], value, &[x, w], move |g, vals, grads| {
            let (want_x, want_w) = (grads.wants(x), grads.wants(w));
            let mut g_rows = Vec::new();
            let mut x_rows = Vec::new();
            let mut dx_rows = Vec::new();
            for (k, pairs) in map.pairs.iter().enumerate() {
                if pairs.is_empty() {
                    continue;
                }
                gather_rows(g, cout, pairs.iter().map(|p| p.1), &mut g_rows);
                if want_w {
                    gather_rows(vals.get(x), cin, pairs.iter().map(|p| p.0), &mut x_rows);
                    let dw = &mut grads.slot(w)[k * cin * cout..][..cin * cout];
                    gemm(cin, pairs.len(), cout, &x_rows, true, &g_rows, false, 1.0, dw);
                }
                if want_x {
                    dx_rows.clear();
                    dx_rows.resize(pairs.len() * cin, 0.0);
                    let wk = &vals.get(w)[k * cin * cout..][..cin * cout];
                    gemm(pairs.len(), cout, cin, &g_rows, false, wk, true, 0.0, &mut dx_rows);
                    scatter_rows_add(&dx_rows, cin, pairs.iter().map(|p| p.0), grads.slot(x));
                }
            }
        })
    }

    /// Front-to-back compositing along rays:
    /// `out[r] = Σ_i T_i (1 − exp(−σ_i δ_i)) f_i`, `T_i = exp(−Σ_{j<i} σ_j δ_j)`.
    /// `sigma` holds one density per sample, `feat` is `[S, C]`.
    pub fn composite(&mut self, sigma: Var, feat: Var, segs: Arc<RaySegments>) -> Var {
        let n = segs.samples();
        assert_eq!(self.value(sigma).len(), n, "composite: one density per sample");
        let sf = self.shape(feat).to_vec();
        assert!(sf.len() == 2 && sf[0] == n, "composite: features {sf:?} for {n} samples");
        let c = sf[1];
        let rays = segs.rays();
        let (sig, f) = (self.value(sigma), self.value(feat));
        let mut value = vec![0.0; rays * c];
        for r in 0..rays {
            let out = &mut value[r * c..(r + 1) * c];
            let mut depth: f64 = 0.0;
            for i in segs.range(r) {
                let tau = sig[i] * segs.deltas[i];
                let w = (-depth).exp() * -(-tau).exp_m1();
                depth += tau;
                for (o, v) in out.iter_mut().zip(&f[i * c..(i + 1) * c]) {
                    *o += w * v;
                }
            }
        }
        self.push_op(vec![rays, c], value, &[sigma, feat], move |g, vals, grads| {
            let (sig, f) = (vals.get(sigma), vals.get(feat));
            let mut weights = vec![0.0; n];
            let mut t_next = vec![0.0; n];
            let mut proj = vec![0.0; n];
            for r in 0..rays {
                let gr = &g[r * c..(r + 1) * c];
                let mut depth: f64 = 0.0;
                for i in segs.range(r) {
                    let tau = sig[i] * segs.deltas[i];
                    weights[i] = (-depth).exp() * -(-tau).exp_m1();
                    depth += tau;
                    t_next[i] = (-depth).exp();
                    proj[i] = f[i * c..(i + 1) * c].iter().zip(gr).map(|(a, b)| a * b).sum();
                }
            }
            if grads.wants(sigma) {
                let slot = grads.slot(sigma);
                for r in 0..rays {
                    let mut tail = 0.0;
                    for i in segs.range(r).rev() {
                        slot[i] += segs.deltas[i] * (t_next[i] * proj[i] - tail);
                        tail += weights[i] * proj[i];
                    }
                }
            }
            if grads.wants(feat) {
                let slot = grads.slot(feat);
                for r in 0..rays {
                    let gr = &g[r * c..(r + 1) * c];
                    for i in segs.range(r) {
                        for (d, v) in slot[i * c..(i + 1) * c].iter_mut().zip(gr) {
                            *d += weights[i] * v;
                        }
                    }
                }
            }
        })
    }
}

fn gather_rows(src: &[f64], c: usize, idx: impl Iterator<Item = u32>, out: &mut Vec<f64>) {
    out.clear();
    for i in idx {
        out.extend_from_slice(&src[i as usize * c..(i as usize + 1) * c]);
    }
}

fn scatter_rows_add(rows: &[f64], c: usize, idx: impl Iterator<Item = u32>, dst: &mut [f64]) {
    for (row, i) in rows.chunks(c).zip(idx) {
        for (d, v) in dst[i as usize * c..(i as usize + 1) * c].iter_mut().zip(row) {
            *d += v;
        }
    }
}
