//! Parameter handles for the learned layers, registered by name in a
//! [`ParamStore`] and bound to a [`Tape`] on each forward pass.

use std::sync::Arc;

use rand::Rng;

use crate::tensor::{KernelMap, ParamId, ParamStore, Tape, Tensor, Var};

fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in.max(1) as f64).sqrt()
}

/// Row-vector affine layer `x · w + b`, `w[in, out]`.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Dense {
            w: store.add(format!("{name}.w"), Tensor::randn(&[input, output], he_std(input), rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[output])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.linear(x, w, b)
    }
}

/// Dense 2D convolution over `[C, H, W]` maps, odd square kernel, "same" padding.
#[derive(Clone, Copy, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel % 2 == 1, "conv kernel must be odd");
        Conv2d {
            w: store.add(format!("{name}.w"), Tensor::randn(&[cout, cin, kernel, kernel], he_std(cin * kernel * kernel), rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[cout])),
            kernel,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.conv2d(x, w, b, 1, self.kernel / 2)
    }
}

/// Sparse 3D convolution with a 3³ kernel; geometry comes from a [`KernelMap`].
#[derive(Clone, Copy, Debug)]
pub struct SparseConv {
    pub w: ParamId,
    pub b: ParamId,
}

impl SparseConv {
    pub const VOLUME: usize = 27;

    /// `fan_in` counts the neighbors expected to be occupied on average,
    /// which for surfaces is far below 27.
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, fan_in: usize, rng: &mut impl Rng) -> Self {
        SparseConv {
            w: store.add(format!("{name}.w"), Tensor::randn(&[Self::VOLUME, cin, cout], he_std(cin * fan_in), rng)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[cout])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, map: &Arc<KernelMap>) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.sparse_conv3d(x, w, map.clone());
        tape.add_bias(y, b)
    }
}
