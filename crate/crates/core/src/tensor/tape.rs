use super::{ParamId, ParamStore, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &Values<'_>, &mut GradBuf<'_>)>;

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    param: Option<ParamId>,
    backward: Option<BackwardFn>,
}

/// Read access to forward values during the backward sweep.
pub(crate) struct Values<'a> {
    nodes: &'a [Node],
}

impl Values<'_> {
    pub(crate) fn get(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }
}

/// Gradient accumulators for the backward sweep. Slots are allocated lazily
/// and only for nodes that require a gradient.
pub(crate) struct GradBuf<'a> {
    nodes: &'a [Node],
    grads: &'a mut [Option<Vec<f64>>],
}

impl GradBuf<'_> {
    pub(crate) fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Mutable accumulator for `v`, zero-initialized on first use.
    pub(crate) fn slot(&mut self, v: Var) -> &mut [f64] {
        let len = self.nodes[v.0].value.len();
        self.grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    pub(crate) fn acc(&mut self, v: Var, g: &[f64]) {
        if !self.wants(v) {
            return;
        }
        let slot = self.slot(v);
        for (s, x) in slot.iter_mut().zip(g) {
            *s += x;
        }
    }
}

/// Single-writer record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, ParamId)>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, if `v` was reached.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds parameter gradients into the store (sum semantics).
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(node, id) in &self.params {
            if let Some(g) = &self.grads[node] {
                let dst = store.get_mut(id).grad.data_mut();
                for (d, x) in dst.iter_mut().zip(g) {
                    *d += x;
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "not a scalar");
        val[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_leaf(&mut self, t: Tensor, requires_grad: bool, param: Option<ParamId>) -> Var {
        let id = self.nodes.len();
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: t.into_data(),
            requires_grad,
            param,
            backward: None,
        });
        Var(id)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, true, None)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false, None)
    }

    /// Copies a stored parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push_leaf(store.get(id).value.clone(), true, Some(id))
    }

    /// Records an operation result. The closure is dropped when no parent
    /// requires a gradient.
    pub(crate) fn push_op<F>(&mut self, shape: Vec<usize>, value: Vec<f64>, parents: &[Var], backward: F) -> Var
    where
        F: Fn(&[f64], &Values<'_>, &mut GradBuf<'_>) + 'static,
    {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let id = self.nodes.len();
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            param: None,
            backward: requires_grad.then(|| Box::new(backward) as BackwardFn),
        });
        Var(id)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_shape = &self.nodes[output.0].shape;
        if self.nodes[output.0].value.len() != 1 {
            return Err(Error::NotScalar(out_shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);
        let nodes = &self.nodes[..=output.0];
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(bw) = &nodes[i].backward {
                let values = Values { nodes };
                let mut buf = GradBuf {
                    nodes,
                    grads: &mut grads,
                };
                bw(&g, &values, &mut buf);
            }
            grads[i] = Some(g);
        }
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (i, p)))
            .collect();
        Ok(Gradients { grads, params })
    }

    // ---- elementwise ---------------------------------------------------

    fn same_shape(&self, a: Var, b: Var, op: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{op}: shape mismatch");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push_op(self.shape(a).to_vec(), value, &[a, b], move |g, _, grads| {
            grads.acc(a, g);
            grads.acc(b, g);
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        self.push_op(self.shape(a).to_vec(), value, &[a, b], move |g, _, grads| {
            grads.acc(a, g);
            if grads.wants(b) {
                let slot = grads.slot(b);
                for (s, x) in slot.iter_mut().zip(g) {
                    *s -= x;
                }
            }
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        self.push_op(self.shape(a).to_vec(), value, &[a, b], move |g, vals, grads| {
            if grads.wants(a) {
                let vb = vals.get(b);
                let slot = grads.slot(a);
                for i in 0..g.len() {
                    slot[i] += g[i] * vb[i];
                }
            }
            if grads.wants(b) {
                let va = vals.get(a);
                let slot = grads.slot(b);
                for i in 0..g.len() {
                    slot[i] += g[i] * va[i];
                }
            }
        })
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * k).collect();
        self.push_op(self.shape(a).to_vec(), value, &[a], move |g, _, grads| {
            let slot = grads.slot(a);
            for (s, x) in slot.iter_mut().zip(g) {
                *s += k * x;
            }
        })
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).iter().map(|x| x + k).collect();
        self.push_op(self.shape(a).to_vec(), value, &[a], move |g, _, grads| grads.acc(a, g))
    }

    fn unary<F, D>(&mut self, a: Var, f: F, df: D) -> Var
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let value: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let out = self.nodes.len();
        self.push_op(self.shape(a).to_vec(), value, &[a], move |g, vals, grads| {
            let x = vals.get(a);
            let y = vals.get(Var(out));
            let slot = grads.slot(a);
            for i in 0..g.len() {
                slot[i] += g[i] * df(x[i], y[i]);
            }
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x.is_nan() || x > 0.0 { x } else { 0.0 }, |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, |_, y| y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, |x, _| sigmoid(x))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push_op(vec![1], vec![s], &[a], move |g, _, grads| {
            if grads.wants(a) {
                grads.slot(a).iter_mut().for_each(|v| *v += g[0]);
            }
        })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `x[.., C] + b[C]`, broadcasting `b` over the leading axes.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let c = *self.shape(x).last().expect("add_bias on rank-0");
        assert_eq!(self.shape(b), [c], "add_bias: bias must have shape [{c}]");
        let bv = self.value(b).to_vec();
        let value = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row.iter().zip(&bv).map(|(v, bb)| v + bb))
            .collect();
        self.push_op(self.shape(x).to_vec(), value, &[x, b], move |g, _, grads| {
            grads.acc(x, g);
            if grads.wants(b) {
                let slot = grads.slot(b);
                for row in g.chunks(c) {
                    for (s, v) in slot.iter_mut().zip(row) {
                        *s += v;
                    }
                }
            }
        })
    }

    /// Same data under a new shape.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.value(a).len(),
            "reshape: element count mismatch"
        );
        let value = self.value(a).to_vec();
        self.push_op(shape.to_vec(), value, &[a], move |g, _, grads| grads.acc(a, g))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape(a).to_vec();
        assert!(axis < shape.len() && start + len <= shape[axis], "narrow out of range");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let dim = shape[axis];
        let src = self.value(a);
        let mut value = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            value.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        self.push_op(out_shape, value, &[a], move |g, _, grads| {
            let slot = grads.slot(a);
            for o in 0..outer {
                let base = o * dim * inner + start * inner;
                let gb = o * len * inner;
                for i in 0..len * inner {
                    slot[base + i] += g[gb + i];
                }
            }
        })
    }

    /// Concatenation of two arrays along their last axis; leading shapes must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Var {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        assert_eq!(sa.len(), sb.len(), "concat_last: rank mismatch");
        assert_eq!(sa[..sa.len() - 1], sb[..sb.len() - 1], "concat_last: leading shape mismatch");
        let ca = *sa.last().unwrap();
        let cb = *sb.last().unwrap();
        let rows = self.value(a).len() / ca.max(1);
        let (va, vb) = (self.value(a), self.value(b));
        let mut value = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            value.extend_from_slice(&va[r * ca..(r + 1) * ca]);
            value.extend_from_slice(&vb[r * cb..(r + 1) * cb]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = ca + cb;
        self.push_op(shape, value, &[a, b], move |g, _, grads| {
            let c = ca + cb;
            if grads.wants(a) {
                let slot = grads.slot(a);
                for r in 0..rows {
                    for j in 0..ca {
                        slot[r * ca + j] += g[r * c + j];
                    }
                }
            }
            if grads.wants(b) {
                let slot = grads.slot(b);
                for r in 0..rows {
                    for j in 0..cb {
                        slot[r * cb + j] += g[r * c + ca + j];
                    }
                }
            }
        })
    }

    /// `[A, B] -> [B, A]`.
    pub fn transpose(&mut self, a: Var) -> Var {
        let s = self.shape(a).to_vec();
        assert_eq!(s.len(), 2, "transpose expects rank 2");
        let (r, c) = (s[0], s[1]);
        let src = self.value(a);
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                value[j * r + i] = src[i * c + j];
            }
        }
        self.push_op(vec![c, r], value, &[a], move |g, _, grads| {
            let slot = grads.slot(a);
            for i in 0..r {
                for j in 0..c {
                    slot[i * c + j] += g[j * r + i];
                }
            }
        })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
