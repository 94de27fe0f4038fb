//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every op evaluates eagerly and appends one record. Records are stored in
//! creation order, which is a topological order, so `backward` is a single
//! reverse sweep. Gradients accumulate additively into each input.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `x[n,i] · w[i,o] + b[o]`
    Affine { x: NodeId, w: NodeId, b: NodeId },
    /// `sin(freq · x)`
    Sine { x: NodeId, freq: f64 },
    Relu { x: NodeId },
    SoftmaxRows { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    /// `(a - b)²` elementwise
    SquaredError { a: NodeId, b: NodeId },
    Log1p { x: NodeId },
    Sqrt { x: NodeId },
    SumRows { x: NodeId },
    SumAll { x: NodeId },
    MeanAll { x: NodeId },
    Reshape { x: NodeId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Affine { .. } => "affine",
            Op::Sine { .. } => "sine",
            Op::Relu { .. } => "relu",
            Op::SoftmaxRows { .. } => "softmax",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::SquaredError { .. } => "squared_error",
            Op::Log1p { .. } => "log1p",
            Op::Sqrt { .. } => "sqrt",
            Op::SumRows { .. } => "sum_rows",
            Op::SumAll { .. } => "sum",
            Op::MeanAll { .. } => "mean",
            Op::Reshape { .. } => "reshape",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Not `Sync`-shared: one graph per thread.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients from one backward sweep, indexed by [`NodeId`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of a leaf that requires grad. `None` if the node did not
    /// contribute to the output.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor; zeros when the node received none.
    pub fn tensor(&self, id: NodeId) -> Tensor {
        let shape = self.shapes[id.0].clone();
        match self.get(id) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push_leaf(t, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push_leaf(t, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn check(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::invalid(format!("node {} is not part of this graph", id.0)))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let (n, fan_in) = xv.rows_cols();
        let [wi, wo] = wv.shape() else {
            return Err(Error::shape(format!("affine weight must be 2-D, got {:?}", wv.shape())));
        };
        let (wi, wo) = (*wi, *wo);
        if wi != fan_in || bv.len() != wo {
            return Err(Error::shape(format!(
                "affine: x {:?}, w {:?}, b {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let mut out = Vec::with_capacity(n * wo);
        for _ in 0..n {
            out.extend_from_slice(bv.data());
        }
        gemm(n, wi, wo, xv.data(), (wi, 1), wv.data(), (wo, 1), 1.0, &mut out);
        let t = Tensor::new(vec![n, wo], out)?;
        self.push(t, Op::Affine { x, w, b }, &[x, w, b])
    }

    fn unary(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId> {
        let xv = self.check(x)?;
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(t, op, &[x])
    }

    pub fn sine(&mut self, x: NodeId, freq: f64) -> Result<NodeId> {
        self.unary(x, Op::Sine { x, freq }, |v| (freq * v).sin())
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, Op::Relu { x }, |v| v.max(0.0))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.unary(x, Op::Scale { x, c }, |v| c * v)
    }

    pub fn log1p(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, Op::Log1p { x }, f64::ln_1p)
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, Op::Sqrt { x }, f64::sqrt)
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.check(x)?;
        let (_, k) = xv.rows_cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(k) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(t, Op::SoftmaxRows { x }, &[x])
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.shape() != bv.shape() {
            return Err(Error::shape(format!(
                "{}: {:?} vs {:?}",
                op.name(),
                av.shape(),
                bv.shape()
            )));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.push(t, op, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Add { a, b }, |x, y| x + y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Mul { a, b }, |x, y| x * y)
    }

    pub fn squared_error(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::SquaredError { a, b }, |x, y| (x - y) * (x - y))
    }

    /// `[n, k] -> [n]`
    pub fn sum_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.check(x)?;
        let (n, k) = xv.rows_cols();
        let data = xv.data().chunks(k).map(|r| r.iter().sum()).collect();
        let t = Tensor::new(vec![n], data)?;
        self.push(t, Op::SumRows { x }, &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.check(x)?.data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll { x }, &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.check(x)?;
        let s: f64 = xv.data().iter().sum();
        let m = s / xv.len() as f64;
        self.push(Tensor::scalar(m), Op::MeanAll { x }, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let t = self.check(x)?.clone().reshaped(shape)?;
        self.push(t, Op::Reshape { x }, &[x])
    }

    /// Reverse sweep from `output`, seeded with `output_grad`.
    pub fn backward(&self, output: NodeId, output_grad: &Tensor) -> Result<Gradients> {
        let Some(out_node) = self.nodes.get(output.0) else {
            return Err(Error::BackwardBeforeForward(output.0));
        };
        if out_node.value.shape() != output_grad.shape() {
            return Err(Error::shape(format!(
                "output grad {:?} for output {:?}",
                output_grad.shape(),
                out_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(output_grad.data().to_vec());

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &gy, &mut grads);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    /// Convenience for scalar outputs: seeds with 1.
    pub fn backward_scalar(&self, output: NodeId) -> Result<Gradients> {
        let shape = self
            .nodes
            .get(output.0)
            .ok_or(Error::BackwardBeforeForward(output.0))?
            .value
            .shape()
            .to_vec();
        let seed = Tensor::new(shape.clone(), vec![1.0; shape.iter().product()])?;
        self.backward(output, &seed)
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn backprop_node(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |id: NodeId| self.nodes[id.0].value.data();
        match node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (n, fan_in) = self.nodes[x.0].value.rows_cols();
                let fan_out = self.nodes[b.0].value.len();
                if self.wants(x) {
                    let gx = acc(grads, x, n * fan_in);
                    // dx = dy · wᵀ
                    gemm(n, fan_out, fan_in, gy, (fan_out, 1), val(w), (1, fan_out), 1.0, gx);
                }
                if self.wants(w) {
                    let gw = acc(grads, w, fan_in * fan_out);
                    // dw = xᵀ · dy
                    gemm(fan_in, n, fan_out, val(x), (1, fan_in), gy, (fan_out, 1), 1.0, gw);
                }
                if self.wants(b) {
                    let gb = acc(grads, b, fan_out);
                    for row in gy.chunks(fan_out) {
                        for (g, &d) in gb.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
            }
            Op::Sine { x, freq } => {
                if self.wants(x) {
                    let xs = val(x);
                    let gx = acc(grads, x, xs.len());
                    for ((g, &d), &xi) in gx.iter_mut().zip(gy).zip(xs) {
                        *g += d * freq * (freq * xi).cos();
                    }
                }
            }
            Op::Relu { x } => {
                if self.wants(x) {
                    let xs = val(x);
                    let gx = acc(grads, x, xs.len());
                    for ((g, &d), &xi) in gx.iter_mut().zip(gy).zip(xs) {
                        if xi > 0.0 {
                            *g += d;
                        }
                    }
                }
            }
            Op::SoftmaxRows { x } => {
                if self.wants(x) {
                    let y = node.value.data();
                    let (_, k) = node.value.rows_cols();
                    let gx = acc(grads, x, y.len());
                    for ((gxr, yr), gyr) in gx.chunks_mut(k).zip(y.chunks(k)).zip(gy.chunks(k)) {
                        let dot: f64 = yr.iter().zip(gyr).map(|(a, b)| a * b).sum();
                        for ((g, &yi), &d) in gxr.iter_mut().zip(yr).zip(gyr) {
                            *g += yi * (d - dot);
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for id in [a, b] {
                    if self.wants(id) {
                        let g = acc(grads, id, gy.len());
                        for (g, &d) in g.iter_mut().zip(gy) {
                            *g += d;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                for (id, other) in [(a, b), (b, a)] {
                    if self.wants(id) {
                        let o = val(other);
                        let g = acc(grads, id, gy.len());
                        for ((g, &d), &ov) in g.iter_mut().zip(gy).zip(o) {
                            *g += d * ov;
                        }
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.wants(x) {
                    let g = acc(grads, x, gy.len());
                    for (g, &d) in g.iter_mut().zip(gy) {
                        *g += c * d;
                    }
                }
            }
            Op::SquaredError { a, b } => {
                let (av, bv) = (val(a), val(b));
                for (id, sign) in [(a, 1.0), (b, -1.0)] {
                    if self.wants(id) {
                        let g = acc(grads, id, gy.len());
                        for (i, g) in g.iter_mut().enumerate() {
                            *g += sign * 2.0 * (av[i] - bv[i]) * gy[i];
                        }
                    }
                }
            }
            Op::Log1p { x } => {
                if self.wants(x) {
                    let xs = val(x);
                    let g = acc(grads, x, xs.len());
                    for ((g, &d), &xi) in g.iter_mut().zip(gy).zip(xs) {
                        *g += d / (1.0 + xi);
                    }
                }
            }
            Op::Sqrt { x } => {
                if self.wants(x) {
                    let y = node.value.data();
                    let g = acc(grads, x, y.len());
                    for ((g, &d), &yi) in g.iter_mut().zip(gy).zip(y) {
                        // subgradient 0 at the origin
                        if yi > 0.0 {
                            *g += d / (2.0 * yi);
                        }
                    }
                }
            }
            Op::SumRows { x } => {
                if self.wants(x) {
                    let (n, k) = self.nodes[x.0].value.rows_cols();
                    let g = acc(grads, x, n * k);
                    for (row, &d) in g.chunks_mut(k).zip(gy) {
                        for v in row {
                            *v += d;
                        }
                    }
                }
            }
            Op::SumAll { x } | Op::MeanAll { x } => {
                if self.wants(x) {
                    let len = self.nodes[x.0].value.len();
                    let d = if matches!(node.op, Op::MeanAll { .. }) {
                        gy[0] / len as f64
                    } else {
                        gy[0]
                    };
                    let g = acc(grads, x, len);
                    for v in g {
                        *v += d;
                    }
                }
            }
            Op::Reshape { x } => {
                if self.wants(x) {
                    let g = acc(grads, x, gy.len());
                    for (g, &d) in g.iter_mut().zip(gy) {
                        *g += d;
                    }
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}
