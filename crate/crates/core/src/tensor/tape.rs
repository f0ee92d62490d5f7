//! Wengert tape: records forward ops, replays them in reverse for gradients.
//!
//! Nodes live in an append-only arena, so inputs always precede their
//! consumers and a single reverse sweep performs the whole backward pass.
//! A tape and its [`Var`]s form a single-owner unit; distinct tapes are
//! independent and may run on separate threads.

use std::cell::RefCell;
use std::f64;
use std::rc::Rc;

use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryKind {
    Relu,
    LeakyRelu(f64),
    Sin,
    Cos,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Div { a: usize, b: usize },
    Scale { x: usize, c: f64 },
    ScaleBy { x: usize, s: usize },
    Unary { x: usize, kind: UnaryKind },
    ClampMin { x: usize, min: f64 },
    Concat { xs: Vec<usize>, axis: usize },
    Softmax { x: usize, axis: usize },
    ReduceSum { x: usize, axis: usize },
    ReduceMean { x: usize, axis: usize },
    Element { x: usize, index: usize },
    Reshape { x: usize },
    CrossEntropy { logits: usize, label: usize },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
struct TapeInner {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

/// Shared handle to one recording of a differentiable computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to one node on a tape.
#[derive(Debug, Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            shape,
            data,
            requires_grad,
            op,
        });
        Var {
            tape: self.clone(),
            id,
        }
    }

    /// Leaf that participates in gradient computation.
    pub fn parameter(&self, value: &Tensor) -> Var {
        self.push(value.shape().to_vec(), value.data().to_vec(), true, Op::Leaf)
    }

    /// Leaf treated as fixed input; no gradient is accumulated for it.
    pub fn constant(&self, value: &Tensor) -> Var {
        self.push(value.shape().to_vec(), value.data().to_vec(), false, Op::Leaf)
    }

    pub fn scalar_constant(&self, value: f64) -> Var {
        self.constant(&Tensor::scalar(value))
    }

    /// Reverse sweep from `loss`, accumulating gradients for every node that
    /// requires them. Rejected when `loss` is not scalar or when gradients
    /// are already present.
    pub fn backward(&self, loss: &Var) -> Result<(), TensorError> {
        if !Rc::ptr_eq(&self.inner, &loss.tape.inner) {
            return Err(TensorError::TapeMismatch { op: "backward" });
        }
        let mut inner = self.inner.borrow_mut();
        if inner.backward_done {
            return Err(TensorError::BackwardAlreadyRun);
        }
        if inner.nodes[loss.id].data.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: inner.nodes[loss.id].shape.clone(),
            });
        }
        let n = inner.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.id] = Some(vec![1.0]);

        let inner = &mut *inner;
        for id in (0..n).rev() {
            let g = match &grads[id] {
                Some(g) if inner.nodes[id].requires_grad => g.clone(),
                _ => continue,
            };
            backprop_node(&inner.nodes, id, &g, &mut grads);
        }
        inner.grads = grads;
        inner.backward_done = true;
        Ok(())
    }

    /// Accumulated gradient for `v` (zeros when no gradient flowed to it).
    pub fn grad(&self, v: &Var) -> Result<Tensor, TensorError> {
        let inner = self.inner.borrow();
        if !inner.backward_done {
            return Err(TensorError::NoGradients);
        }
        let shape = inner.nodes[v.id].shape.clone();
        let data = match &inner.grads[v.id] {
            Some(g) => g.clone(),
            None => vec![0.0; inner.nodes[v.id].data.len()],
        };
        Ok(Tensor::new(shape, data).expect("gradient shape matches node"))
    }

    /// Clears gradients so a fresh backward pass may run on the same tape.
    pub fn reset_gradients(&self) {
        let mut inner = self.inner.borrow_mut();
        inner.grads.clear();
        inner.backward_done = false;
    }
}

// Gradient accumulation for one node, dispatched on its op.
fn backprop_node(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let acc = |grads: &mut [Option<Vec<f64>>], target: usize, contrib: &[f64]| {
        if !nodes[target].requires_grad {
            return;
        }
        match &mut grads[target] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e += c;
                }
            }
            None => grads[target] = Some(contrib.to_vec()),
        }
    };

    match &nodes[id].op {
        Op::Leaf => {}
        Op::Matmul { a, b } => {
            let (m, k) = (nodes[*a].shape[0], nodes[*a].shape[1]);
            let n = nodes[*b].shape[1];
            let (da_buf, db_buf) = {
                let av = &nodes[*a].data;
                let bv = &nodes[*b].data;
                // da = g · bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..k {
                        let mut s = 0.0;
                        for c in 0..n {
                            s += g[i * n + c] * bv[j * n + c];
                        }
                        da[i * k + j] = s;
                    }
                }
                // db = aᵀ · g
                let mut db = vec![0.0; k * n];
                for i in 0..k {
                    for j in 0..n {
                        let mut s = 0.0;
                        for r in 0..m {
                            s += av[r * k + i] * g[r * n + j];
                        }
                        db[i * n + j] = s;
                    }
                }
                (da, db)
            };
            acc(grads, *a, &da_buf);
            acc(grads, *b, &db_buf);
        }
        Op::Add { a, b } => {
            acc(grads, *a, g);
            acc(grads, *b, g);
        }
        Op::Sub { a, b } => {
            acc(grads, *a, g);
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            acc(grads, *b, &neg);
        }
        Op::Mul { a, b } => {
            let da: Vec<f64> = g
                .iter()
                .zip(&nodes[*b].data)
                .map(|(g, b)| g * b)
                .collect();
            let db: Vec<f64> = g
                .iter()
                .zip(&nodes[*a].data)
                .map(|(g, a)| g * a)
                .collect();
            acc(grads, *a, &da);
            acc(grads, *b, &db);
        }
        Op::Div { a, b } => {
            let av = &nodes[*a].data;
            let bv = &nodes[*b].data;
            let da: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g / b).collect();
            let db: Vec<f64> = g
                .iter()
                .zip(av.iter().zip(bv))
                .map(|(g, (a, b))| -g * a / (b * b))
                .collect();
            acc(grads, *a, &da);
            acc(grads, *b, &db);
        }
        Op::Scale { x, c } => {
            let dx: Vec<f64> = g.iter().map(|g| g * c).collect();
            acc(grads, *x, &dx);
        }
        Op::ScaleBy { x, s } => {
            let sv = nodes[*s].data[0];
            let dx: Vec<f64> = g.iter().map(|g| g * sv).collect();
            let ds = [g
                .iter()
                .zip(&nodes[*x].data)
                .map(|(g, x)| g * x)
                .sum::<f64>()];
            acc(grads, *x, &dx);
            acc(grads, *s, &ds);
        }
        Op::Unary { x, kind } => {
            let xv = &nodes[*x].data;
            let dx: Vec<f64> = match kind {
                // Subgradient 0 at the kink.
                UnaryKind::Relu => g
                    .iter()
                    .zip(xv)
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect(),
                UnaryKind::LeakyRelu(slope) => g
                    .iter()
                    .zip(xv)
                    .map(|(g, x)| if *x > 0.0 { *g } else { g * slope })
                    .collect(),
                UnaryKind::Sin => g.iter().zip(xv).map(|(g, x)| g * x.cos()).collect(),
                UnaryKind::Cos => g.iter().zip(xv).map(|(g, x)| -g * x.sin()).collect(),
            };
            acc(grads, *x, &dx);
        }
        Op::ClampMin { x, min } => {
            let dx: Vec<f64> = g
                .iter()
                .zip(&nodes[*x].data)
                .map(|(g, x)| if *x >= *min { *g } else { 0.0 })
                .collect();
            acc(grads, *x, &dx);
        }
        Op::Concat { xs, axis } => {
            let out_shape = &nodes[id].shape;
            let inner_len: usize = out_shape[axis + 1..].iter().product();
            let outer: usize = out_shape[..*axis].iter().product();
            let out_axis = out_shape[*axis];
            let mut offset = 0;
            for x in xs {
                let x_axis = nodes[*x].shape[*axis];
                let mut dx = vec![0.0; nodes[*x].data.len()];
                for o in 0..outer {
                    for i in 0..x_axis {
                        let src = (o * out_axis + offset + i) * inner_len;
                        let dst = (o * x_axis + i) * inner_len;
                        dx[dst..dst + inner_len].copy_from_slice(&g[src..src + inner_len]);
                    }
                }
                acc(grads, *x, &dx);
                offset += x_axis;
            }
        }
        Op::Softmax { x, axis } => {
            let y = &nodes[id].data;
            let shape = &nodes[id].shape;
            let (outer, axis_len, inner) = axis_split(shape, *axis);
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |a: usize| (o * axis_len + a) * inner + i;
                    let mut dot = 0.0;
                    for a in 0..axis_len {
                        dot += g[idx(a)] * y[idx(a)];
                    }
                    for a in 0..axis_len {
                        dx[idx(a)] = y[idx(a)] * (g[idx(a)] - dot);
                    }
                }
            }
            acc(grads, *x, &dx);
        }
        Op::ReduceSum { x, axis } => {
            let shape = &nodes[*x].shape;
            let (outer, axis_len, inner) = axis_split(shape, *axis);
            let mut dx = vec![0.0; nodes[*x].data.len()];
            for o in 0..outer {
                for a in 0..axis_len {
                    for i in 0..inner {
                        dx[(o * axis_len + a) * inner + i] = g[o * inner + i];
                    }
                }
            }
            acc(grads, *x, &dx);
        }
        Op::ReduceMean { x, axis } => {
            let shape = &nodes[*x].shape;
            let (outer, axis_len, inner) = axis_split(shape, *axis);
            let scale = 1.0 / axis_len as f64;
            let mut dx = vec![0.0; nodes[*x].data.len()];
            for o in 0..outer {
                for a in 0..axis_len {
                    for i in 0..inner {
                        dx[(o * axis_len + a) * inner + i] = g[o * inner + i] * scale;
                    }
                }
            }
            acc(grads, *x, &dx);
        }
        Op::Element { x, index } => {
            let mut dx = vec![0.0; nodes[*x].data.len()];
            dx[*index] = g[0];
            acc(grads, *x, &dx);
        }
        Op::Reshape { x } => {
            acc(grads, *x, g);
        }
        Op::CrossEntropy { logits, label } => {
            // d/dlogits = softmax(logits) − one_hot(label)
            let p = stable_softmax(&nodes[*logits].data);
            let dx: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(i, p)| g[0] * (p - if i == *label { 1.0 } else { 0.0 }))
                .collect();
            acc(grads, *logits, &dx);
        }
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn stable_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Var {
    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.inner.borrow().nodes[self.id].data.len()
    }

    /// Snapshot of the node's value.
    pub fn value(&self) -> Tensor {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        Tensor::new(node.shape.clone(), node.data.clone()).expect("node data matches shape")
    }

    /// Value of a scalar node.
    pub fn item(&self) -> f64 {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        assert_eq!(node.data.len(), 1, "item() on non-scalar var");
        node.data[0]
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    fn same_tape(&self, other: &Var, op: &'static str) -> Result<(), TensorError> {
        if Rc::ptr_eq(&self.tape.inner, &other.tape.inner) {
            Ok(())
        } else {
            Err(TensorError::TapeMismatch { op })
        }
    }

    fn binary_same_shape(
        &self,
        other: &Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize) -> Op,
    ) -> Result<Var, TensorError> {
        self.same_tape(other, op)?;
        let inner = self.tape.inner.borrow();
        let (a, b) = (&inner.nodes[self.id], &inner.nodes[other.id]);
        if a.shape != b.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let data: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect();
        let shape = a.shape.clone();
        let rg = a.requires_grad || b.requires_grad;
        drop(inner);
        Ok(self.tape.push(shape, data, rg, make(self.id, other.id)))
    }

    pub fn add(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary_same_shape(other, "add", |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary_same_shape(other, "sub", |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary_same_shape(other, "mul", |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn div(&self, other: &Var) -> Result<Var, TensorError> {
        self.binary_same_shape(other, "div", |x, y| x / y, |a, b| Op::Div { a, b })
    }

    /// Multiplication by a compile-time-known constant.
    pub fn scale(&self, c: f64) -> Var {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let data: Vec<f64> = node.data.iter().map(|x| x * c).collect();
        let shape = node.shape.clone();
        let rg = node.requires_grad;
        drop(inner);
        self.tape.push(shape, data, rg, Op::Scale { x: self.id, c })
    }

    /// Multiplication by a scalar (single-element) var; gradients flow to both.
    pub fn scale_by(&self, s: &Var) -> Result<Var, TensorError> {
        self.same_tape(s, "scale_by")?;
        let inner = self.tape.inner.borrow();
        let (x, sn) = (&inner.nodes[self.id], &inner.nodes[s.id]);
        if sn.data.len() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "scale_by",
                lhs: x.shape.clone(),
                rhs: sn.shape.clone(),
            });
        }
        let sv = sn.data[0];
        let data: Vec<f64> = x.data.iter().map(|v| v * sv).collect();
        let shape = x.shape.clone();
        let rg = x.requires_grad || sn.requires_grad;
        drop(inner);
        Ok(self
            .tape
            .push(shape, data, rg, Op::ScaleBy { x: self.id, s: s.id }))
    }

    /// Standard matrix product of 2-D operands.
    pub fn matmul(&self, other: &Var) -> Result<Var, TensorError> {
        self.same_tape(other, "matmul")?;
        let inner = self.tape.inner.borrow();
        let (a, b) = (&inner.nodes[self.id], &inner.nodes[other.id]);
        if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for c in 0..k {
                    s += a.data[i * k + c] * b.data[c * n + j];
                }
                data[i * n + j] = s;
            }
        }
        let rg = a.requires_grad || b.requires_grad;
        drop(inner);
        Ok(self.tape.push(
            vec![m, n],
            data,
            rg,
            Op::Matmul {
                a: self.id,
                b: other.id,
            },
        ))
    }

    /// Matrix–vector product: `self` is `[m×n]`, `v` is `[n]`, result `[m]`.
    pub fn matvec(&self, v: &Var) -> Result<Var, TensorError> {
        let n = v.numel();
        let col = v.reshape(vec![n, 1])?;
        let out = self.matmul(&col)?;
        let m = out.shape()[0];
        out.reshape(vec![m])
    }

    fn unary(&self, kind: UnaryKind) -> Var {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let data: Vec<f64> = node
            .data
            .iter()
            .map(|x| match kind {
                UnaryKind::Relu => x.max(0.0),
                UnaryKind::LeakyRelu(slope) => {
                    if *x > 0.0 {
                        *x
                    } else {
                        x * slope
                    }
                }
                UnaryKind::Sin => x.sin(),
                UnaryKind::Cos => x.cos(),
            })
            .collect();
        let shape = node.shape.clone();
        let rg = node.requires_grad;
        drop(inner);
        self.tape
            .push(shape, data, rg, Op::Unary { x: self.id, kind })
    }

    pub fn relu(&self) -> Var {
        self.unary(UnaryKind::Relu)
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Var, TensorError> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(TensorError::InvalidSlope(slope));
        }
        Ok(self.unary(UnaryKind::LeakyRelu(slope)))
    }

    pub fn sin(&self) -> Var {
        self.unary(UnaryKind::Sin)
    }

    pub fn cos(&self) -> Var {
        self.unary(UnaryKind::Cos)
    }

    /// Elementwise `max(x, min)`; gradient passes where `x >= min`.
    pub fn clamp_min(&self, min: f64) -> Var {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let data: Vec<f64> = node.data.iter().map(|x| x.max(min)).collect();
        let shape = node.shape.clone();
        let rg = node.requires_grad;
        drop(inner);
        self.tape
            .push(shape, data, rg, Op::ClampMin { x: self.id, min })
    }

    /// Exp-normalization along `axis` with max-subtraction; slices sum to 1.
    pub fn softmax(&self, axis: usize) -> Result<Var, TensorError> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        if axis >= node.shape.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "softmax",
                axis,
                shape: node.shape.clone(),
            });
        }
        let (outer, axis_len, inner_len) = axis_split(&node.shape, axis);
        let mut data = vec![0.0; node.data.len()];
        for o in 0..outer {
            for i in 0..inner_len {
                let idx = |a: usize| (o * axis_len + a) * inner_len + i;
                let mut max = f64::NEG_INFINITY;
                for a in 0..axis_len {
                    max = max.max(node.data[idx(a)]);
                }
                let mut sum = 0.0;
                for a in 0..axis_len {
                    let e = (node.data[idx(a)] - max).exp();
                    data[idx(a)] = e;
                    sum += e;
                }
                for a in 0..axis_len {
                    data[idx(a)] /= sum;
                }
            }
        }
        let shape = node.shape.clone();
        let rg = node.requires_grad;
        drop(inner);
        Ok(self
            .tape
            .push(shape, data, rg, Op::Softmax { x: self.id, axis }))
    }

    fn reduce(&self, axis: usize, mean: bool, op: &'static str) -> Result<Var, TensorError> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        if axis >= node.shape.len() {
            return Err(TensorError::AxisOutOfRange {
                op,
                axis,
                shape: node.shape.clone(),
            });
        }
        let (outer, axis_len, inner_len) = axis_split(&node.shape, axis);
        let mut data = vec![0.0; outer * inner_len];
        for o in 0..outer {
            for a in 0..axis_len {
                for i in 0..inner_len {
                    data[o * inner_len + i] += node.data[(o * axis_len + a) * inner_len + i];
                }
            }
        }
        if mean {
            for v in &mut data {
                *v /= axis_len as f64;
            }
        }
        let mut shape: Vec<usize> = node.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = node.requires_grad;
        drop(inner);
        let op = if mean {
            Op::ReduceMean { x: self.id, axis }
        } else {
            Op::ReduceSum { x: self.id, axis }
        };
        Ok(self.tape.push(shape, data, rg, op))
    }

    pub fn reduce_sum(&self, axis: usize) -> Result<Var, TensorError> {
        self.reduce(axis, false, "reduce_sum")
    }

    pub fn reduce_mean(&self, axis: usize) -> Result<Var, TensorError> {
        self.reduce(axis, true, "reduce_mean")
    }

    /// Inner product of two same-shape vars, as a scalar var.
    pub fn dot(&self, other: &Var) -> Result<Var, TensorError> {
        let prod = self.mul(other)?;
        let flat = prod.reshape(vec![prod.numel()])?;
        flat.reduce_sum(0)
    }

    /// Single entry at a flat index, as a scalar var.
    pub fn element(&self, index: usize) -> Result<Var, TensorError> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        if index >= node.data.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "element",
                index,
                len: node.data.len(),
            });
        }
        let data = vec![node.data[index]];
        let rg = node.requires_grad;
        drop(inner);
        Ok(self
            .tape
            .push(vec![1], data, rg, Op::Element { x: self.id, index }))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var, TensorError> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let expected: usize = shape.iter().product();
        if expected != node.data.len() {
            return Err(TensorError::DataLength {
                op: "reshape",
                expected,
                got: node.data.len(),
                shape,
            });
        }
        let data = node.data.clone();
        let rg = node.requires_grad;
        drop(inner);
        Ok(self.tape.push(shape, data, rg, Op::Reshape { x: self.id }))
    }

    /// Negative log softmax probability of `label`.
    pub fn cross_entropy(&self, label: usize) -> Result<Var, TensorError> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        let n_classes = node.data.len();
        if label >= n_classes {
            return Err(TensorError::LabelOutOfRange { label, n_classes });
        }
        let max = node.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = node.data.iter().map(|v| (v - max).exp()).sum();
        let loss = max + sum.ln() - node.data[label];
        let rg = node.requires_grad;
        drop(inner);
        Ok(self.tape.push(
            vec![1],
            vec![loss],
            rg,
            Op::CrossEntropy {
                logits: self.id,
                label,
            },
        ))
    }
}

/// Concatenation along `axis`; all other extents must agree.
pub fn concat(xs: &[Var], axis: usize) -> Result<Var, TensorError> {
    let first = xs.first().ok_or(TensorError::EmptyInput { op: "concat" })?;
    for x in &xs[1..] {
        first.same_tape(x, "concat")?;
    }
    let tape = first.tape.clone();
    let inner = tape.inner.borrow();
    let base_shape = inner.nodes[first.id].shape.clone();
    if axis >= base_shape.len() {
        return Err(TensorError::AxisOutOfRange {
            op: "concat",
            axis,
            shape: base_shape,
        });
    }
    let mut axis_total = 0;
    let mut rg = false;
    for x in xs {
        let node = &inner.nodes[x.id];
        if node.shape.len() != base_shape.len()
            || node
                .shape
                .iter()
                .enumerate()
                .any(|(i, &e)| i != axis && e != base_shape[i])
        {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                lhs: base_shape.clone(),
                rhs: node.shape.clone(),
            });
        }
        axis_total += node.shape[axis];
        rg |= node.requires_grad;
    }
    let mut out_shape = base_shape.clone();
    out_shape[axis] = axis_total;
    let outer: usize = out_shape[..axis].iter().product();
    let inner_len: usize = out_shape[axis + 1..].iter().product();
    let mut data = vec![0.0; outer * axis_total * inner_len];
    let mut offset = 0;
    for x in xs {
        let node = &inner.nodes[x.id];
        let x_axis = node.shape[axis];
        for o in 0..outer {
            for i in 0..x_axis {
                let src = (o * x_axis + i) * inner_len;
                let dst = (o * axis_total + offset + i) * inner_len;
                data[dst..dst + inner_len].copy_from_slice(&node.data[src..src + inner_len]);
            }
        }
        offset += x_axis;
    }
    let ids: Vec<usize> = xs.iter().map(|x| x.id).collect();
    drop(inner);
    Ok(tape.push(out_shape, data, rg, Op::Concat { xs: ids, axis }))
}
