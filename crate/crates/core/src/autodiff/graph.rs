//! Tensor-level reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its forward
//! value and the ids of its inputs. Because nodes are only ever appended,
//! tape order is a topological order and [`Graph::backward`] simply walks it
//! in reverse.
//!
//! Nothing distinguishes "weights" from "activations" here, so the output of
//! one network can be sliced into the weight matrices of another and
//! gradients flow through both.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking the log in [`Graph::cross_entropy`].
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Affine { w: NodeId, b: NodeId, x: NodeId },
    Relu(NodeId),
    Softmax(NodeId),
    CrossEntropy { probs: NodeId, labels: Vec<usize> },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sum(NodeId),
    Scale(NodeId, f64),
    Slice { x: NodeId, start: usize },
    Reshape(NodeId),
    Concat(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    Column { x: NodeId, col: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Takes ownership of a gradient, leaving `None` behind.
    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
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

    /// A trainable input: gradients are accumulated for it.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A fixed input: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Smallest `|x|` fed to any ReLU on the tape, or `None` without ReLUs.
    ///
    /// Finite differences are only meaningful when no perturbation can move
    /// an input across the kink at zero.
    pub fn min_relu_margin(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => self
                    .value(x)
                    .data()
                    .iter()
                    .map(|v| v.abs())
                    .reduce(f64::min),
                _ => None,
            })
            .reduce(f64::min)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// `x W + b` for a single row `x: [m]` or a batch `x: [B, m]`, with `W: [m, n]`, `b: [n]`.
    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId) -> Result<NodeId> {
        let (wv, bv, xv) = (self.value(w), self.value(b), self.value(x));
        if wv.rank() != 2 || bv.rank() != 1 || !(1..=2).contains(&xv.rank()) {
            return Err(Error::shape(
                "affine",
                format!("W {:?}, b {:?}, x {:?}", wv.shape(), bv.shape(), xv.shape()),
            ));
        }
        let (m, n) = (wv.shape()[0], wv.shape()[1]);
        if bv.len() != n || xv.cols() != m {
            return Err(Error::shape(
                "affine",
                format!("W {:?}, b {:?}, x {:?}", wv.shape(), bv.shape(), xv.shape()),
            ));
        }
        let rows = xv.rows();
        let (wd, bd, xd) = (wv.data(), bv.data(), xv.data());
        let mut out = Vec::with_capacity(rows * n);
        for r in 0..rows {
            let mut acc = bd.to_vec();
            for (p, &xp) in xd[r * m..(r + 1) * m].iter().enumerate() {
                if xp == 0.0 {
                    continue;
                }
                for (a, &wpj) in acc.iter_mut().zip(&wd[p * n..(p + 1) * n]) {
                    *a += xp * wpj;
                }
            }
            out.extend_from_slice(&acc);
        }
        let shape = if xv.rank() == 1 {
            vec![n]
        } else {
            vec![rows, n]
        };
        let value = Tensor::new(shape, out)?;
        let rg = self.needs(&[w, b, x]);
        Ok(self.push(value, Op::Affine { w, b, x }, rg))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.needs(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    /// Softmax over the last axis (row-wise for a batch).
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[x]);
        self.push(value, Op::Softmax(x), rg)
    }

    /// Mean negative log-likelihood of `labels` under the rows of `probs`.
    pub fn cross_entropy(&mut self, probs: NodeId, labels: &[usize]) -> Result<NodeId> {
        let pv = self.value(probs);
        if labels.is_empty() {
            return Err(Error::EmptyBatch("cross_entropy"));
        }
        if pv.rows() != labels.len() {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} probability rows, {} labels", pv.rows(), labels.len()),
            ));
        }
        let classes = pv.cols();
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::shape(
                    "cross_entropy",
                    format!("label {label} out of range for {classes} classes"),
                ));
            }
            total -= pv.get(r, label).max(LOG_CLAMP).ln();
        }
        let value = Tensor::scalar(total / labels.len() as f64);
        let rg = self.needs(&[probs]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(value, Op::Sum(x), rg)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.needs(&[x]);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Adds a list of same-shaped nodes.
    pub fn add_all(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::shape("add_all", "no terms"))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// The flat range `start..start + prod(shape)` of `x`, viewed with `shape`.
    pub fn slice(&mut self, x: NodeId, start: usize, shape: &[usize]) -> Result<NodeId> {
        let len: usize = shape.iter().product();
        let xv = self.value(x);
        if start + len > xv.len() {
            return Err(Error::shape(
                "slice",
                format!(
                    "range {start}..{} exceeds {} entries",
                    start + len,
                    xv.len()
                ),
            ));
        }
        let value = Tensor::new(shape.to_vec(), xv.data()[start..start + len].to_vec())?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Slice { x, start }, rg))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Flattens and concatenates the inputs into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().to_vec())
            .collect();
        let rg = self.needs(parts);
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), rg)
    }

    /// Concatenates `[B, c_i]` matrices along the column axis.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let rows = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 2 || v.rows() != rows {
                return Err(Error::shape(
                    "concat_cols",
                    format!("expected [{rows}, _], got {:?}", v.shape()),
                ));
            }
            total += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::matrix(rows, total, data)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Column `col` of a `[B, c]` matrix, as `[B, 1]`.
    pub fn column(&mut self, x: NodeId, col: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.rank() != 2 || col >= xv.cols() {
            return Err(Error::shape(
                "column",
                format!("column {col} of {:?}", xv.shape()),
            ));
        }
        let value = Tensor::matrix(xv.rows(), 1, xv.column(col))?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Column { x, col }, rg))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Every leaf created before `loss` gets a gradient; leaves with no path
    /// to the loss get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, contribution: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&contribution),
            slot => *slot = Some(contribution),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Affine { w, b, x } => {
                let (wv, xv) = (self.value(*w), self.value(*x));
                let (m, n) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.rows();
                let (gd, wd, xd) = (g.data(), wv.data(), xv.data());
                if self.nodes[w.0].requires_grad {
                    let mut dw = vec![0.0; m * n];
                    for r in 0..rows {
                        let g_row = &gd[r * n..(r + 1) * n];
                        for (p, &xp) in xd[r * m..(r + 1) * m].iter().enumerate() {
                            if xp == 0.0 {
                                continue;
                            }
                            for (d, &gj) in dw[p * n..(p + 1) * n].iter_mut().zip(g_row) {
                                *d += xp * gj;
                            }
                        }
                    }
                    self.accumulate(grads, *w, Tensor::new(vec![m, n], dw).expect("W shape"));
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; n];
                    for g_row in gd.chunks(n) {
                        for (d, &gj) in db.iter_mut().zip(g_row) {
                            *d += gj;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::vector(db));
                }
                if self.nodes[x.0].requires_grad {
                    let mut dx = vec![0.0; rows * m];
                    for r in 0..rows {
                        let g_row = &gd[r * n..(r + 1) * n];
                        for p in 0..m {
                            dx[r * m + p] = wd[p * n..(p + 1) * n]
                                .iter()
                                .zip(g_row)
                                .map(|(a, b)| a * b)
                                .sum();
                        }
                    }
                    let t = Tensor::new(xv.shape().to_vec(), dx).expect("x shape");
                    self.accumulate(grads, *x, t);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                self.accumulate(
                    grads,
                    *x,
                    Tensor::new(xv.shape().to_vec(), data).expect("shape"),
                );
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let cols = y.cols();
                let mut data = Vec::with_capacity(y.len());
                for (y_row, g_row) in y.data().chunks(cols).zip(g.data().chunks(cols)) {
                    let dot: f64 = y_row.iter().zip(g_row).map(|(a, b)| a * b).sum();
                    data.extend(y_row.iter().zip(g_row).map(|(&yi, &gi)| yi * (gi - dot)));
                }
                self.accumulate(
                    grads,
                    *x,
                    Tensor::new(y.shape().to_vec(), data).expect("shape"),
                );
            }
            Op::CrossEntropy { probs, labels } => {
                let pv = self.value(*probs);
                let scale = g.item() / labels.len() as f64;
                let mut dp = Tensor::zeros(pv.shape());
                for (r, &label) in labels.iter().enumerate() {
                    let p = pv.get(r, label);
                    if p > LOG_CLAMP {
                        dp.set(r, label, -scale / p);
                    }
                }
                self.accumulate(grads, *probs, dp);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                let db = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                self.accumulate(
                    grads,
                    *a,
                    Tensor::new(av.shape().to_vec(), da).expect("shape"),
                );
                self.accumulate(
                    grads,
                    *b,
                    Tensor::new(bv.shape().to_vec(), db).expect("shape"),
                );
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, Tensor::full(xv.shape(), g.item()));
            }
            Op::Scale(x, factor) => {
                self.accumulate(grads, *x, g.map(|v| v * factor));
            }
            Op::Slice { x, start } => {
                let mut dx = Tensor::zeros(self.value(*x).shape());
                dx.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *x, dx);
            }
            Op::Reshape(x) => {
                let t = g
                    .clone()
                    .reshape(self.value(*x).shape())
                    .expect("reshape back");
                self.accumulate(grads, *x, t);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let t = Tensor::new(
                        pv.shape().to_vec(),
                        g.data()[offset..offset + pv.len()].to_vec(),
                    )
                    .expect("shape");
                    offset += pv.len();
                    self.accumulate(grads, p, t);
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let c = pv.cols();
                    let mut data = Vec::with_capacity(pv.len());
                    for g_row in g.data().chunks(total) {
                        data.extend_from_slice(&g_row[offset..offset + c]);
                    }
                    offset += c;
                    self.accumulate(
                        grads,
                        p,
                        Tensor::new(pv.shape().to_vec(), data).expect("shape"),
                    );
                }
            }
            Op::Column { x, col } => {
                let mut dx = Tensor::zeros(self.value(*x).shape());
                for (r, &gi) in g.data().iter().enumerate() {
                    dx.set(r, *col, gi);
                }
                self.accumulate(grads, *x, dx);
            }
        }
    }
}
