//! Dense linear algebra, image-shaped operations and normalization.
//!
//! Image tensors are `[C, H, W]` (single item, channels first).

use super::tape::{Tape, Var};

/// `c = a·b + beta·c` with optional transposition of either operand.
/// `a` is `m×k` (or `k×m` when transposed), `b` is `k×n` (or `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn normalize_groups(x: &[f64], outer: usize, n: usize, inner: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * n * inner + j * inner + i;
            let mean = (0..n).map(|j| x[at(j)]).sum::<f64>() / n as f64;
            let var = (0..n).map(|j| (x[at(j)] - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[o * inner + i] = inv;
            for j in 0..n {
                y[at(j)] = (x[at(j)] - mean) * inv;
            }
        }
    }
    (y, inv_std)
}

impl Tape {
    /// `[M, K] · [K, N] -> [M, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        assert!(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], "matmul: bad shapes {sa:?} x {sb:?}");
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut value = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, 0.0, &mut value);
        self.push_op(vec![m, n], value, &[a, b], move |g, vals, grads| {
            if grads.wants(a) {
                gemm(m, n, k, g, false, vals.get(b), true, 1.0, grads.slot(a));
            }
            if grads.wants(b) {
                gemm(k, m, n, vals.get(a), true, g, false, 1.0, grads.slot(b));
            }
        })
    }

    /// Affine map of row vectors: `x[N, I] · w[I, O] + b[O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    /// Layer normalization over the last axis, no affine parameters.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().expect("layer_norm on rank-0");
        let outer = self.value(x).len() / n.max(1);
        self.normalize(x, shape, outer, n, 1, eps)
    }

    /// Layer normalization across channels at every site of a `[C, H, W]` map.
    pub fn layer_norm_channels(&mut self, x: Var, eps: f64) -> Var {
        let shape = self.shape(x).to_vec();
        assert_eq!(shape.len(), 3, "layer_norm_channels expects [C, H, W]");
        let inner = shape[1] * shape[2];
        self.normalize(x, shape.clone(), 1, shape[0], inner, eps)
    }

    fn normalize(&mut self, x: Var, shape: Vec<usize>, outer: usize, n: usize, inner: usize, eps: f64) -> Var {
        assert!(eps > 0.0, "layer_norm eps must be positive");
        let (y, inv_std) = normalize_groups(self.value(x), outer, n, inner, eps);
        let out = Var(self.len());
        self.push_op(shape, y, &[x], move |g, vals, grads| {
            let y = vals.get(out);
            let slot = grads.slot(x);
            let nf = n as f64;
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| o * n * inner + j * inner + i;
                    let (mut sg, mut sgy) = (0.0, 0.0);
                    for j in 0..n {
                        sg += g[at(j)];
                        sgy += g[at(j)] * y[at(j)];
                    }
                    let inv = inv_std[o * inner + i];
                    for j in 0..n {
                        slot[at(j)] += inv / nf * (nf * g[at(j)] - sg - y[at(j)] * sgy);
                    }
                }
            }
        })
    }

    /// 2D convolution of a `[Cin, H, W]` map with `w[Cout, Cin, k, k]` and
    /// bias `b[Cout]`, zero padding `pad`, stride `stride`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        assert_eq!(sx.len(), 3, "conv2d input must be [C, H, W]");
        assert!(sw.len() == 4 && sw[1] == sx[0] && sw[2] == sw[3], "conv2d: bad weight shape {sw:?} for input {sx:?}");
        assert_eq!(self.shape(b), [sw[0]], "conv2d: bias shape");
        let geo = ConvGeometry {
            cin: sx[0],
            h: sx[1],
            w: sx[2],
            k: sw[2],
            stride,
            pad,
        };
        let cout = sw[0];
        let (ho, wo) = geo.out_dims();
        let cols = geo.im2col(self.value(x));
        let rows = geo.cin * geo.k * geo.k;
        let mut value = vec![0.0; cout * ho * wo];
        gemm(cout, rows, ho * wo, self.value(w), false, &cols, false, 0.0, &mut value);
        let bias = self.value(b);
        for (c, plane) in value.chunks_mut(ho * wo).enumerate() {
            plane.iter_mut().for_each(|v| *v += bias[c]);
        }
        self.push_op(vec![cout, ho, wo], value, &[x, w, b], move |g, vals, grads| {
            let hw = ho * wo;
            if grads.wants(w) {
                gemm(cout, hw, rows, g, false, &cols, true, 1.0, grads.slot(w));
            }
            if grads.wants(b) {
                let slot = grads.slot(b);
                for (c, plane) in g.chunks(hw).enumerate() {
                    slot[c] += plane.iter().sum::<f64>();
                }
            }
            if grads.wants(x) {
                let mut dcols = vec![0.0; rows * hw];
                gemm(rows, cout, hw, vals.get(w), true, g, false, 0.0, &mut dcols);
                geo.col2im_add(&dcols, grads.slot(x));
            }
        })
    }

    /// Channel-to-space rearrangement by 2:
    /// `out(c, 2y+dy, 2x+dx) = in(4c + 2dy + dx, y, x)`.
    pub fn pixel_shuffle(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        assert!(s.len() == 3 && s[0] % 4 == 0, "pixel_shuffle expects [4C, H, W], got {s:?}");
        let (c, h, w) = (s[0] / 4, s[1], s[2]);
        let index = move |oc: usize, oy: usize, ox: usize| {
            let (y, dy, xx, dx) = (oy / 2, oy % 2, ox / 2, ox % 2);
            ((4 * oc + 2 * dy + dx) * h + y) * w + xx
        };
        let src = self.value(x);
        let mut value = Vec::with_capacity(src.len());
        for oc in 0..c {
            for oy in 0..2 * h {
                for ox in 0..2 * w {
                    value.push(src[index(oc, oy, ox)]);
                }
            }
        }
        self.push_op(vec![c, 2 * h, 2 * w], value, &[x], move |g, _, grads| {
            let slot = grads.slot(x);
            let mut i = 0;
            for oc in 0..c {
                for oy in 0..2 * h {
                    for ox in 0..2 * w {
                        slot[index(oc, oy, ox)] += g[i];
                        i += 1;
                    }
                }
            }
        })
    }

    /// Nearest-neighbour replication of a `[C, H, W]` map by an integer factor.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Var {
        let s = self.shape(x).to_vec();
        assert_eq!(s.len(), 3, "upsample_nearest expects [C, H, W]");
        assert!(factor >= 1);
        if factor == 1 {
            return x;
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h * factor, w * factor);
        let src = self.value(x);
        let mut value = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                let row = &src[(ch * h + oy / factor) * w..][..w];
                for ox in 0..ow {
                    value.push(row[ox / factor]);
                }
            }
        }
        self.push_op(vec![c, oh, ow], value, &[x], move |g, _, grads| {
            let slot = grads.slot(x);
            let mut i = 0;
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        slot[(ch * h + oy / factor) * w + ox / factor] += g[i];
                        i += 1;
                    }
                }
            }
        })
    }

    /// Broadcasts a per-channel vector `[C]` to a constant `[C, H, W]` map.
    pub fn broadcast_channels(&mut self, v: Var, h: usize, w: usize) -> Var {
        let c = self.shape(v).iter().product::<usize>();
        let hw = h * w;
        let value = self.value(v).iter().flat_map(|&x| std::iter::repeat(x).take(hw)).collect();
        self.push_op(vec![c, h, w], value, &[v], move |g, _, grads| {
            let slot = grads.slot(v);
            for (ch, plane) in g.chunks(hw).enumerate() {
                slot[ch] += plane.iter().sum::<f64>();
            }
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeometry {
    fn out_dims(&self) -> (usize, usize) {
        let ho = (self.h + 2 * self.pad - self.k) / self.stride + 1;
        let wo = (self.w + 2 * self.pad - self.k) / self.stride + 1;
        (ho, wo)
    }

    /// Visits every (column-matrix index, input index) pair that lies inside the image.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (ho, wo) = self.out_dims();
        let hw = ho * wo;
        for ci in 0..self.cin {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(row * hw + oy * wo + ox, (ci * self.h + iy as usize) * self.w + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (ho, wo) = self.out_dims();
        let mut cols = vec![0.0; self.cin * self.k * self.k * ho * wo];
        self.for_each_tap(|c, i| cols[c] = x[i]);
        cols
    }

    fn col2im_add(&self, cols: &[f64], dx: &mut [f64]) {
        self.for_each_tap(|c, i| dx[i] += cols[c]);
    }
}
