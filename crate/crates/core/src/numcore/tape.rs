//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every forward operation appends a [`TapeNode`] holding its output value and
//! the ids of its parents. Parents always precede children, so the node list
//! is already a topological order and [`Tape::backward`] is one reverse sweep.
//! Gradients of leaves that are used several times accumulate additively.

use std::sync::Arc;

use super::gemm::{gemm, Layout};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum OpKind {
    Leaf,
    Constant,
    /// `a · b`
    MatMul,
    /// `a · bᵀ`
    MatMulTransB,
    Add,
    Sub,
    Mul,
    /// `scale · a + shift`
    Affine { scale: f64, shift: f64 },
    /// Adds a length-`c` vector to every row of an `r × c` matrix.
    AddRowBias,
    Sigmoid,
    Tanh,
    Relu,
    SoftmaxRows,
    Sum,
    Mean,
    Reshape,
    ConcatCols,
    Column(usize),
    /// Multiplies row `i` of an `r × c` matrix by entry `i` of an `r × 1` column.
    ScaleRows,
    /// Left-multiplies every `n × f` slab of a `[B, n, f]` tensor by a fixed matrix.
    GraphPropagate(Arc<Tensor>),
}

#[derive(Clone, Debug)]
pub struct TapeNode {
    pub op: OpKind,
    pub parents: Vec<usize>,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => (0, 0),
    }
}

fn check_finite(op: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
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

    pub fn nodes(&self) -> &[TapeNode] {
        &self.nodes
    }

    fn node(&self, v: Var) -> &TapeNode {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape nodes are well formed")
    }

    /// Gradient of a leaf after [`Tape::backward`]; `None` if it received none.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, op: OpKind, parents: Vec<usize>, shape: Vec<usize>, value: Vec<f64>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let requires_grad = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(TapeNode {
            op,
            parents,
            shape,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a copy of `t`; gradients flow to it iff `t.grad_enabled()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let v = self.push(OpKind::Leaf, vec![], t.shape().to_vec(), t.data().to_vec());
        self.nodes[v.0].requires_grad = t.grad_enabled();
        v
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(OpKind::Constant, vec![], shape, t.into_data())
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::shape(op, other, &[0, 0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), Layout::Plain, self.value(b), Layout::Plain, 0.0, &mut out);
        Ok(self.push(OpKind::MatMul, vec![a.0, b.0], vec![m, n], out))
    }

    /// `x · wᵀ` for `x: [m, k]`, `w: [n, k]`; the dense-layer product with
    /// weights stored as `[out, in]`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let (m, k) = self.matrix(x, "matmul_t")?;
        let (n, k2) = self.matrix(w, "matmul_t")?;
        if k != k2 {
            return Err(Error::shape("matmul_t", self.shape(x), self.shape(w)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(x), Layout::Plain, self.value(w), Layout::Transposed, 0.0, &mut out);
        Ok(self.push(OpKind::MatMulTransB, vec![x.0, w.0], vec![m, n], out))
    }

    fn binary(&mut self, a: Var, b: Var, op: OpKind, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        check_finite(name, self.value(a))?;
        check_finite(name, self.value(b))?;
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(op, vec![a.0, b.0], shape, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, OpKind::Add, "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, OpKind::Sub, "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, OpKind::Mul, "mul", |x, y| x * y)
    }

    fn unary(&mut self, a: Var, op: OpKind, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var> {
        check_finite(name, self.value(a))?;
        let out: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(op, vec![a.0], shape, out))
    }

    /// `scale · a + shift`, the only scalar-with-tensor broadcast.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary(a, OpKind::Affine { scale, shift }, "affine", |x| scale * x + shift)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Result<Var> {
        self.affine(a, scale, 0.0)
    }

    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.affine(a, -1.0, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, OpKind::Sigmoid, "sigmoid", sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, OpKind::Tanh, "tanh", f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, OpKind::Relu, "relu", |x| x.max(0.0))
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.matrix(x, "add_row_bias")?;
        if self.shape(bias) != [c] {
            return Err(Error::shape("add_row_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(c) {
            add_into(row, b);
        }
        Ok(self.push(OpKind::AddRowBias, vec![x.0, bias.0], vec![r, c], out))
    }

    /// Softmax of a vector, or of every row of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (r, c) = rows_cols(&shape);
        if r == 0 {
            return Err(Error::shape("softmax", &shape, &[0]));
        }
        check_finite("softmax", self.value(a))?;
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(c) {
            softmax_in_place(row);
        }
        Ok(self.push(OpKind::SoftmaxRows, vec![a.0], shape, out))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        Ok(self.push(OpKind::Sum, vec![a.0], vec![1], vec![s]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let vals = self.value(a);
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        Ok(self.push(OpKind::Mean, vec![a.0], vec![1], vec![m]))
    }

    /// Mean of squared differences, as a scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(a), shape));
        }
        let out = self.value(a).to_vec();
        Ok(self.push(OpKind::Reshape, vec![a.0], shape.to_vec(), out))
    }

    /// Concatenates `[r, c_k]` matrices along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_cols"))?;
        let (r, _) = self.matrix(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.matrix(p, "concat_cols")?;
            if pr != r {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; r * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let vals = self.value(p);
            for i in 0..r {
                out[i * total + offset..i * total + offset + w].copy_from_slice(&vals[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        Ok(self.push(OpKind::ConcatCols, parts.iter().map(|p| p.0).collect(), vec![r, total], out))
    }

    /// Column `j` of an `[r, c]` matrix as `[r, 1]`.
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        let (r, c) = self.matrix(a, "column")?;
        if j >= c {
            return Err(Error::invalid(format!("column {j} out of range for width {c}")));
        }
        let vals = self.value(a);
        let out: Vec<f64> = (0..r).map(|i| vals[i * c + j]).collect();
        Ok(self.push(OpKind::Column(j), vec![a.0], vec![r, 1], out))
    }

    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (r, c) = self.matrix(x, "scale_rows")?;
        if self.shape(s) != [r, 1] {
            return Err(Error::shape("scale_rows", self.shape(x), self.shape(s)));
        }
        let sv = self.value(s);
        let mut out = self.value(x).to_vec();
        for (row, &k) in out.chunks_exact_mut(c).zip(sv) {
            row.iter_mut().for_each(|v| *v *= k);
        }
        Ok(self.push(OpKind::ScaleRows, vec![x.0, s.0], vec![r, c], out))
    }

    /// `out[b] = adj · x[b]` for `x: [B, n, f]` and a fixed `adj: [n, n]`.
    pub fn graph_propagate(&mut self, adj: &Arc<Tensor>, x: Var) -> Result<Var> {
        let (bsz, n, f) = match self.shape(x) {
            [b, n, f] => (*b, *n, *f),
            other => return Err(Error::shape("graph_propagate", other, adj.shape())),
        };
        if adj.shape() != [n, n] {
            return Err(Error::shape("graph_propagate", self.shape(x), adj.shape()));
        }
        let xv = self.value(x);
        let mut out = vec![0.0; bsz * n * f];
        for b in 0..bsz {
            let span = b * n * f..(b + 1) * n * f;
            gemm(n, n, f, adj.data(), Layout::Plain, &xv[span.clone()], Layout::Plain, 0.0, &mut out[span]);
        }
        Ok(self.push(OpKind::GraphPropagate(Arc::clone(adj)), vec![x.0], vec![bsz, n, f], out))
    }

    /// Clears all gradients so that [`Tape::backward`] may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Propagates d`loss`/d(node) back to every leaf that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.node(loss).value.len() != 1 {
            return Err(Error::NotScalar(self.node(loss).shape.clone()));
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let grads = &mut self.grads;

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            if node.parents.is_empty() {
                grads[i] = Some(dy);
                continue;
            }
            backprop_node(nodes, grads, node, &dy);
        }
        Ok(())
    }
}

fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[TapeNode], p: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[p].requires_grad {
        return None;
    }
    Some(grads[p].get_or_insert_with(|| vec![0.0; nodes[p].value.len()]))
}

fn backprop_node(nodes: &[TapeNode], grads: &mut [Option<Vec<f64>>], node: &TapeNode, dy: &[f64]) {
    let ps = &node.parents;
    let y = &node.value;
    match &node.op {
        OpKind::Leaf | OpKind::Constant => {}
        OpKind::MatMul => {
            let (a, b) = (&nodes[ps[0]], &nodes[ps[1]]);
            let (m, k) = (a.shape[0], a.shape[1]);
            let n = b.shape[1];
            if let Some(ga) = slot(grads, nodes, ps[0]) {
                gemm(m, n, k, dy, Layout::Plain, &b.value, Layout::Transposed, 1.0, ga);
            }
            if let Some(gb) = slot(grads, nodes, ps[1]) {
                gemm(k, m, n, &a.value, Layout::Transposed, dy, Layout::Plain, 1.0, gb);
            }
        }
        OpKind::MatMulTransB => {
            let (x, w) = (&nodes[ps[0]], &nodes[ps[1]]);
            let (m, k) = (x.shape[0], x.shape[1]);
            let n = w.shape[0];
            if let Some(gx) = slot(grads, nodes, ps[0]) {
                gemm(m, n, k, dy, Layout::Plain, &w.value, Layout::Plain, 1.0, gx);
            }
            if let Some(gw) = slot(grads, nodes, ps[1]) {
                gemm(n, m, k, dy, Layout::Transposed, &x.value, Layout::Plain, 1.0, gw);
            }
        }
        OpKind::Add => {
            for &p in ps {
                if let Some(g) = slot(grads, nodes, p) {
                    add_into(g, dy);
                }
            }
        }
        OpKind::Sub => {
            if let Some(g) = slot(grads, nodes, ps[0]) {
                add_into(g, dy);
            }
            if let Some(g) = slot(grads, nodes, ps[1]) {
                g.iter_mut().zip(dy).for_each(|(g, d)| *g -= d);
            }
        }
        OpKind::Mul => {
            let (a, b) = (&nodes[ps[0]].value, &nodes[ps[1]].value);
            if let Some(g) = slot(grads, nodes, ps[0]) {
                for ((g, d), bv) in g.iter_mut().zip(dy).zip(b) {
                    *g += d * bv;
                }
            }
            if let Some(g) = slot(grads, nodes, ps[1]) {
                for ((g, d), av) in g.iter_mut().zip(dy).zip(a) {
                    *g += d * av;
                }
            }
        }
        OpKind::Affine { scale, .. } => {
            if let Some(g) = slot(grads, nodes, ps[0]) {
                g.iter_mut().zip(dy).for_each(|(g, d)| *g += scale * d);
            }
        }
        OpKind::AddRowBias => {
            let c = node.shape[1];
            if let Some(g) = slot(grads, nodes, ps[0]) {
                add_into(g, dy);
            }
            if let Some(g) = slot(grads, nodes, ps[1]) {
                for row in dy.chunks_exact(c) {
                    add_into(g, row);
                }
            }
        }
        OpKind::Sigmoid => {
            if let Some(g) = slot(grads, nodes, ps[0]) {
                for ((g, d), s) in g.iter_mut().zip(dy).zip(y) {
                    *g += d * s * (1.0 - s);
                }
            }
        }
        OpKind::Tanh => {
            if let Some(g) = slot(grads, nodes, ps[0]) {
                for ((g, d), t) in g.iter_mut().zip(dy).zip(y) {
                    *g += d * (1.0 - t * t);
                }
            }
        }
        OpKind::Relu => {
            let x = &nodes[ps[0]].value;
            if let Some(g) = slot(grads, nodes, ps[0]) {
                for ((g, d), xv) in g.iter_mut().zip(dy).zip(x) {
                    if *xv > 0.0 {
                        *g += d;
                    }
                }
            }
        }
        OpKind::SoftmaxRows => {
            let (_, c) = rows_cols(&node.shape);
            if let Some(g) = slot(grads, nodes, ps[0]) {
                for ((g_row, d_row), y_row) in g.chunks_exact_mut(c).zip(dy.chunks_exact(c)).zip(y.chunks_exact(c)) {
                    let dot: f64 = d_row.iter().zip(y_row).map(|(d, s)| d * s).sum();
                    for ((g, d), s) in g_row.iter_mut().zip(d_row).zip(y_row) {
                        *g += s * (d - dot);
                    }
                }
            }
        }
        OpKind::Sum => {
            if let Some(g) = slot(grads, nodes, ps[0]) {
                g.iter_mut().for_each(|g| *g += dy[0]);
            }
        }
        OpKind::Mean => {
            if let Some(g) = slot(grads, nodes, ps[0]) {
                let scale = dy[0] / g.len() as f64;
                g.iter_mut().for_each(|g| *g += scale);
            }
        }
        OpKind::Reshape => {
            if let Some(g) = slot(grads, nodes, ps[0]) {
                add_into(g, dy);
            }
        }
        OpKind::ConcatCols => {
            let total = node.shape[1];
            let mut offset = 0;
            for &p in ps {
                let w = nodes[p].shape[1];
                if let Some(g) = slot(grads, nodes, p) {
                    for (g_row, d_row) in g.chunks_exact_mut(w).zip(dy.chunks_exact(total)) {
                        add_into(g_row, &d_row[offset..offset + w]);
                    }
                }
                offset += w;
            }
        }
        OpKind::Column(j) => {
            let c = nodes[ps[0]].shape[1];
            if let Some(g) = slot(grads, nodes, ps[0]) {
                for (i, d) in dy.iter().enumerate() {
                    g[i * c + j] += d;
                }
            }
        }
        OpKind::ScaleRows => {
            let c = node.shape[1];
            let (x, s) = (&nodes[ps[0]].value, &nodes[ps[1]].value);
            if let Some(g) = slot(grads, nodes, ps[0]) {
                for ((g_row, d_row), k) in g.chunks_exact_mut(c).zip(dy.chunks_exact(c)).zip(s) {
                    g_row.iter_mut().zip(d_row).for_each(|(g, d)| *g += d * k);
                }
            }
            if let Some(g) = slot(grads, nodes, ps[1]) {
                for ((g, d_row), x_row) in g.iter_mut().zip(dy.chunks_exact(c)).zip(x.chunks_exact(c)) {
                    *g += d_row.iter().zip(x_row).map(|(d, x)| d * x).sum::<f64>();
                }
            }
        }
        OpKind::GraphPropagate(adj) => {
            let (bsz, n, f) = (node.shape[0], node.shape[1], node.shape[2]);
            if let Some(g) = slot(grads, nodes, ps[0]) {
                for b in 0..bsz {
                    let span = b * n * f..(b + 1) * n * f;
                    gemm(n, n, f, adj.data(), Layout::Transposed, &dy[span.clone()], Layout::Plain, 1.0, &mut g[span]);
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax; the shift keeps `exp` from overflowing.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
