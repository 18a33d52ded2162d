//! Reverse-mode differentiation over dense vectors and matrices.
//!
//! Nodes are appended in evaluation order, so the node index is already a
//! topological order and the backward pass is a single reverse sweep. Only
//! the primitives the localization model needs are provided.

use super::matrix::{dot, norm, t_matvec, Matrix};
use super::ops::{cosine_unchecked, relu, COSINE_EPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param,
    MatVec { w: NodeId, x: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale { x: NodeId, s: NodeId },
    ScaleConst { x: NodeId, c: f64 },
    Relu(NodeId),
    Dot(NodeId, NodeId),
    Norm(NodeId),
    Cosine(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Sum(Vec<NodeId>),
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    Normalize { x: NodeId, fallback: bool },
    Softmax(NodeId),
    MaxPool { items: Vec<NodeId>, argmax: Vec<usize> },
    CrossEntropy { logits: NodeId, target: usize },
    Hinge { x: NodeId, label: f64 },
    SmoothL1 { x: NodeId, target: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Param => "param",
            Op::MatVec { .. } => "matvec",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale { .. } => "scale",
            Op::ScaleConst { .. } => "scale_const",
            Op::Relu(_) => "relu",
            Op::Dot(..) => "dot",
            Op::Norm(_) => "norm",
            Op::Cosine(..) => "cosine",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Sum(_) => "sum",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::Normalize { .. } => "normalize",
            Op::Softmax(_) => "softmax",
            Op::MaxPool { .. } => "max_pool",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Hinge { .. } => "hinge",
            Op::SmoothL1 { .. } => "smooth_l1",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
    mutated_op: Option<&'static str>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Test-harness hook: doubles the input gradient produced by every op
    /// named `op` during backward. Used to check that the gradient checker
    /// actually catches a wrong derivative.
    #[doc(hidden)]
    pub fn corrupt_backward(&mut self, op: &'static str) {
        self.mutated_op = Some(op);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    fn dim(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    fn grad_flag(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].needs_grad)
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op, needs_grad: bool) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push_vec(&mut self, value: Vec<f64>, op: Op, needs_grad: bool) -> NodeId {
        let n = value.len();
        self.push(value, n, 1, op, needs_grad)
    }

    pub fn constant(&mut self, v: &[f64]) -> NodeId {
        self.push_vec(v.to_vec(), Op::Const, false)
    }

    pub fn constant_matrix(&mut self, m: &Matrix) -> NodeId {
        self.push(m.as_slice().to_vec(), m.rows(), m.cols(), Op::Const, false)
    }

    /// Registers a trainable tensor. Parameters are numbered in call order;
    /// [`Gradients::params`] returns gradients in the same order.
    pub fn param(&mut self, m: &Matrix) -> NodeId {
        let id = self.push(m.as_slice().to_vec(), m.rows(), m.cols(), Op::Param, true);
        self.params.push(id);
        id
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.shape(w);
        if self.dim(x) != cols {
            return Err(Error::dim("tape.matvec", cols, self.dim(x)));
        }
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let out = (0..rows).map(|r| dot(&wv[r * cols..(r + 1) * cols], xv)).collect();
        let g = self.grad_flag(&[w, x]);
        Ok(self.push_vec(out, Op::MatVec { w, x }, g))
    }

    fn same_dims(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.dim(a) != self.dim(b) {
            return Err(Error::dim(op, self.dim(a), self.dim(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let g = self.grad_flag(&[a, b]);
        self.push_vec(out, op, g)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_dims("tape.add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_dims("tape.sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_dims("tape.mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Vector times a scalar node.
    pub fn scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if self.dim(s) != 1 {
            return Err(Error::dim("tape.scale", 1, self.dim(s)));
        }
        let sv = self.scalar(s);
        let out = self.nodes[x.0].value.iter().map(|v| v * sv).collect();
        let g = self.grad_flag(&[x, s]);
        Ok(self.push_vec(out, Op::Scale { x, s }, g))
    }

    pub fn scale_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|v| v * c).collect();
        let g = self.grad_flag(&[x]);
        self.push_vec(out, Op::ScaleConst { x, c }, g)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.iter().map(|&v| relu(v)).collect();
        let g = self.grad_flag(&[x]);
        self.push_vec(out, Op::Relu(x), g)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_dims("tape.dot", a, b)?;
        let out = dot(&self.nodes[a.0].value, &self.nodes[b.0].value);
        let g = self.grad_flag(&[a, b]);
        Ok(self.push_vec(vec![out], Op::Dot(a, b), g))
    }

    pub fn norm(&mut self, x: NodeId) -> NodeId {
        let out = norm(&self.nodes[x.0].value);
        let g = self.grad_flag(&[x]);
        self.push_vec(vec![out], Op::Norm(x), g)
    }

    /// Cosine similarity; a degenerate (near zero-norm) operand yields a
    /// constant 0 with zero gradient.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_dims("tape.cosine", a, b)?;
        let out = cosine_unchecked(&self.nodes[a.0].value, &self.nodes[b.0].value);
        let g = self.grad_flag(&[a, b]);
        Ok(self.push_vec(vec![out], Op::Cosine(a, b), g))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        let g = self.grad_flag(parts);
        self.push_vec(out, Op::Concat(parts.to_vec()), g)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start + len > self.dim(x) {
            return Err(Error::dim("tape.slice", start + len, self.dim(x)));
        }
        let out = self.nodes[x.0].value[start..start + len].to_vec();
        let g = self.grad_flag(&[x]);
        Ok(self.push_vec(out, Op::Slice { x, start }, g))
    }

    /// Sum of same-length nodes, accumulated in the given order.
    pub fn sum(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let first = *items
            .first()
            .ok_or_else(|| Error::Contract("tape.sum of empty list".into()))?;
        let n = self.dim(first);
        let mut out = vec![0.0; n];
        for it in items {
            if self.dim(*it) != n {
                return Err(Error::dim("tape.sum", n, self.dim(*it)));
            }
            for (o, v) in out.iter_mut().zip(&self.nodes[it.0].value) {
                *o += v;
            }
        }
        let g = self.grad_flag(items);
        Ok(self.push_vec(out, Op::Sum(items.to_vec()), g))
    }

    /// `sum_j weights[j] * items[j]`, accumulated in item order.
    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> Result<NodeId> {
        if self.dim(weights) != items.len() {
            return Err(Error::dim("tape.weighted_sum", items.len(), self.dim(weights)));
        }
        let first = *items
            .first()
            .ok_or_else(|| Error::Contract("tape.weighted_sum of empty list".into()))?;
        let n = self.dim(first);
        let mut out = vec![0.0; n];
        for (k, it) in items.iter().enumerate() {
            if self.dim(*it) != n {
                return Err(Error::dim("tape.weighted_sum", n, self.dim(*it)));
            }
            let w = self.nodes[weights.0].value[k];
            for (o, v) in out.iter_mut().zip(&self.nodes[it.0].value) {
                *o += w * v;
            }
        }
        let mut deps = items.to_vec();
        deps.push(weights);
        let g = self.grad_flag(&deps);
        Ok(self.push_vec(
            out,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
            g,
        ))
    }

    /// Divides a nonnegative vector by its sum. When the sum is below `eps`
    /// the output is the uniform distribution, which carries no gradient.
    pub fn normalize(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        let n = self.dim(x);
        if n == 0 {
            return Err(Error::Contract("tape.normalize of empty vector".into()));
        }
        let v = &self.nodes[x.0].value;
        let total: f64 = v.iter().sum();
        let (out, fallback) = if total < eps {
            (vec![1.0 / n as f64; n], true)
        } else {
            (v.iter().map(|a| a / total).collect(), false)
        };
        let g = !fallback && self.grad_flag(&[x]);
        Ok(self.push_vec(out, Op::Normalize { x, fallback }, g))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let out = softmax(&self.nodes[x.0].value);
        let g = self.grad_flag(&[x]);
        self.push_vec(out, Op::Softmax(x), g)
    }

    /// Elementwise maximum over the items; the gradient of each output
    /// coordinate is routed to the first item attaining the maximum.
    pub fn max_pool(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let first = *items
            .first()
            .ok_or_else(|| Error::Contract("tape.max_pool of empty list".into()))?;
        let n = self.dim(first);
        let mut out = self.nodes[first.0].value.clone();
        let mut argmax = vec![0usize; n];
        for (k, it) in items.iter().enumerate().skip(1) {
            if self.dim(*it) != n {
                return Err(Error::dim("tape.max_pool", n, self.dim(*it)));
            }
            for (d, v) in self.nodes[it.0].value.iter().enumerate() {
                if *v > out[d] || v.is_nan() {
                    out[d] = *v;
                    argmax[d] = k;
                }
            }
        }
        let g = self.grad_flag(items);
        Ok(self.push_vec(
            out,
            Op::MaxPool {
                items: items.to_vec(),
                argmax,
            },
            g,
        ))
    }

    /// `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let n = self.dim(logits);
        if target >= n {
            return Err(Error::Contract(format!(
                "cross_entropy target {target} out of range for {n} logits"
            )));
        }
        let v = &self.nodes[logits.0].value;
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        let out = lse - v[target];
        let g = self.grad_flag(&[logits]);
        Ok(self.push_vec(vec![out], Op::CrossEntropy { logits, target }, g))
    }

    /// `max(0, 1 - label * x)` for a scalar node.
    pub fn hinge(&mut self, x: NodeId, label: f64) -> Result<NodeId> {
        if self.dim(x) != 1 {
            return Err(Error::dim("tape.hinge", 1, self.dim(x)));
        }
        let out = relu(1.0 - label * self.scalar(x));
        let g = self.grad_flag(&[x]);
        Ok(self.push_vec(vec![out], Op::Hinge { x, label }, g))
    }

    /// Sum over coordinates of the smooth L1 penalty of `x - target`.
    pub fn smooth_l1(&mut self, x: NodeId, target: &[f64]) -> Result<NodeId> {
        if self.dim(x) != target.len() {
            return Err(Error::dim("tape.smooth_l1", target.len(), self.dim(x)));
        }
        let out = self.nodes[x.0]
            .value
            .iter()
            .zip(target)
            .map(|(a, t)| smooth_l1(a - t))
            .sum();
        let g = self.grad_flag(&[x]);
        Ok(self.push_vec(
            vec![out],
            Op::SmoothL1 {
                x,
                target: target.to_vec(),
            },
            g,
        ))
    }

    /// Smallest distance of any parameter-dependent nonsmooth op from its
    /// kink (ReLU at 0, hinge at margin 1, smooth L1 at |u| = 1, max-pool
    /// ties). Finite differences are only trustworthy when this exceeds the
    /// step size by a comfortable factor.
    pub fn kink_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for node in self.nodes.iter().filter(|n| n.needs_grad) {
            match &node.op {
                Op::Relu(x) => {
                    for v in &self.nodes[x.0].value {
                        m = m.min(v.abs());
                    }
                }
                Op::Hinge { x, label } => {
                    m = m.min((1.0 - label * self.nodes[x.0].value[0]).abs());
                }
                Op::SmoothL1 { x, target } => {
                    for (a, t) in self.nodes[x.0].value.iter().zip(target) {
                        m = m.min(((a - t).abs() - 1.0).abs());
                    }
                }
                Op::MaxPool { items, .. } if items.len() > 1 => {
                    for d in 0..node.value.len() {
                        let mut vals: Vec<f64> =
                            items.iter().map(|i| self.nodes[i.0].value[d]).collect();
                        vals.sort_by(|a, b| b.total_cmp(a));
                        m = m.min(vals[0] - vals[1]);
                    }
                }
                Op::Cosine(a, b) => {
                    let na = norm(&self.nodes[a.0].value);
                    let nb = norm(&self.nodes[b.0].value);
                    m = m.min(na.min(nb));
                }
                _ => {}
            }
        }
        m
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.dim(loss) != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node has {} entries",
                self.dim(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let factor = if self.mutated_op == Some(node.op.name()) {
                2.0
            } else {
                1.0
            };
            let mut send = |target: NodeId, contrib: Vec<f64>| {
                if !self.nodes[target.0].needs_grad {
                    return;
                }
                match &mut grads[target.0] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(contrib) {
                            *a += factor * c;
                        }
                    }
                    slot @ None => {
                        *slot = Some(contrib.into_iter().map(|c| factor * c).collect());
                    }
                }
            };
            self.backward_node(node, &g, &mut send);
            grads[idx] = Some(g);
        }

        let params = self
            .params
            .iter()
            .map(|id| {
                let n = &self.nodes[id.0];
                let data = grads
                    .get(id.0)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| vec![0.0; n.value.len()]);
                Matrix::from_vec(n.rows, n.cols, data).expect("param gradient shape")
            })
            .collect();
        Ok(Gradients { nodes: grads, params })
    }

    fn backward_node(&self, node: &Node, g: &[f64], send: &mut impl FnMut(NodeId, Vec<f64>)) {
        let val = |id: &NodeId| &self.nodes[id.0].value;
        match &node.op {
            Op::Const | Op::Param => {}
            Op::MatVec { w, x } => {
                let (rows, cols) = self.shape(*w);
                let xv = val(x);
                if self.nodes[w.0].needs_grad {
                    let mut gw = vec![0.0; rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            gw[r * cols + c] = g[r] * xv[c];
                        }
                    }
                    send(*w, gw);
                }
                if self.nodes[x.0].needs_grad {
                    send(*x, t_matvec(val(w), cols, g));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                send(*a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                send(*b, g.iter().zip(av).map(|(g, a)| g * a).collect());
            }
            Op::Scale { x, s } => {
                let sv = val(s)[0];
                send(*x, g.iter().map(|v| v * sv).collect());
                send(*s, vec![dot(g, val(x))]);
            }
            Op::ScaleConst { x, c } => send(*x, g.iter().map(|v| v * c).collect()),
            Op::Relu(x) => send(
                *x,
                g.iter()
                    .zip(val(x))
                    .map(|(g, a)| if *a > 0.0 { *g } else { 0.0 })
                    .collect(),
            ),
            Op::Dot(a, b) => {
                send(*a, val(b).iter().map(|v| g[0] * v).collect());
                send(*b, val(a).iter().map(|v| g[0] * v).collect());
            }
            Op::Norm(x) => {
                let n = node.value[0];
                if n > 0.0 {
                    send(*x, val(x).iter().map(|v| g[0] * v / n).collect());
                }
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (val(a), val(b));
                let (na, nb) = (norm(av), norm(bv));
                if na < COSINE_EPS || nb < COSINE_EPS {
                    return;
                }
                let c = node.value[0];
                let ga = av
                    .iter()
                    .zip(bv)
                    .map(|(x, y)| g[0] * (y / (na * nb) - c * x / (na * na)))
                    .collect();
                let gb = av
                    .iter()
                    .zip(bv)
                    .map(|(x, y)| g[0] * (x / (na * nb) - c * y / (nb * nb)))
                    .collect();
                send(*a, ga);
                send(*b, gb);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.dim(*p);
                    send(*p, g[off..off + n].to_vec());
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let mut gx = vec![0.0; self.dim(*x)];
                gx[*start..*start + g.len()].copy_from_slice(g);
                send(*x, gx);
            }
            Op::Sum(items) => {
                for it in items {
                    send(*it, g.to_vec());
                }
            }
            Op::WeightedSum { weights, items } => {
                let wv = val(weights);
                let mut gw = Vec::with_capacity(items.len());
                for (k, it) in items.iter().enumerate() {
                    gw.push(dot(g, val(it)));
                    send(*it, g.iter().map(|v| v * wv[k]).collect());
                }
                send(*weights, gw);
            }
            Op::Normalize { x, fallback } => {
                if *fallback {
                    return;
                }
                let total: f64 = val(x).iter().sum();
                let inner = dot(g, &node.value);
                send(*x, g.iter().map(|gj| (gj - inner) / total).collect());
            }
            Op::Softmax(x) => {
                let p = &node.value;
                let inner = dot(g, p);
                send(*x, p.iter().zip(g).map(|(p, g)| p * (g - inner)).collect());
            }
            Op::MaxPool { items, argmax } => {
                for (k, it) in items.iter().enumerate() {
                    let gk: Vec<f64> = g
                        .iter()
                        .zip(argmax)
                        .map(|(g, a)| if *a == k { *g } else { 0.0 })
                        .collect();
                    send(*it, gk);
                }
            }
            Op::CrossEntropy { logits, target } => {
                let mut p = softmax(val(logits));
                p[*target] -= 1.0;
                send(*logits, p.into_iter().map(|v| g[0] * v).collect());
            }
            Op::Hinge { x, label } => {
                if 1.0 - label * val(x)[0] > 0.0 {
                    send(*x, vec![-label * g[0]]);
                }
            }
            Op::SmoothL1 { x, target } => send(
                *x,
                val(x)
                    .iter()
                    .zip(target)
                    .map(|(a, t)| g[0] * smooth_l1_grad(a - t))
                    .collect(),
            ),
        }
    }
}

/// Node and parameter gradients from one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Matrix>,
}

impl Gradients {
    /// Gradient of the loss with respect to a node; zero-length slice when the
    /// node is unreachable from the loss or does not depend on a parameter.
    pub fn wrt(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes.get(id.0).and_then(|g| g.as_deref())
    }

    /// Parameter gradients in registration order. Parameters the loss does
    /// not reach get all-zero gradients.
    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn into_params(self) -> Vec<Matrix> {
        self.params
    }
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn smooth_l1(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.5 * u * u
    } else {
        u.abs() - 0.5
    }
}

fn smooth_l1_grad(u: f64) -> f64 {
    if u.abs() < 1.0 {
        u
    } else {
        u.signum()
    }
}
