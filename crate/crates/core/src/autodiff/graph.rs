use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{ParamId, ParamStore, Real, Tensor};

/// Label value excluded from the cross-entropy loss.
pub const IGNORE_INDEX: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Param(ParamId),
    MatMul { a: NodeId, b: NodeId, transpose_b: bool },
    Add { a: NodeId, b: NodeId, broadcast: bool },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, factor: F },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Sum(NodeId),
    Concat { parts: Vec<NodeId>, axis: usize },
    Slice { a: NodeId, axis: usize, start: usize },
    Gather { table: NodeId, indices: Vec<usize> },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<i64>,
        probs: Vec<F>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// A single-use tape. Nodes are appended in evaluation order, so the
/// recorded graph is acyclic and already topologically sorted.
#[derive(Debug)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    param_nodes: HashMap<ParamId, NodeId>,
    check_finite: bool,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        other => (other[0], other[1..].iter().product()),
    }
}

// out[m×n] += a[m×k] · b[k×n]
fn mm_nn<F: Real>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

// out[m×n] += a[m×k] · b[n×k]ᵀ
fn mm_nt<F: Real>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * n + j] += acc;
        }
    }
}

// out[k×n] += a[m×k]ᵀ · b[m×n]
fn mm_tn<F: Real>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            check_finite: false,
        }
    }

    /// Verification mode: every op output is checked for NaN/inf.
    pub fn with_finite_checks() -> Self {
        Graph {
            check_finite: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        dims2(self.shape(id))
    }

    fn data(&self, id: NodeId) -> &[F] {
        self.nodes[id.0].value.data()
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor<F>, node_op: Op<F>, requires_grad: bool) -> Result<NodeId> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::Numeric(format!("{op} produced a non-finite value")));
        }
        self.nodes.push(Node {
            value,
            op: node_op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor<F>) -> Result<NodeId> {
        self.push("constant", value, Op::Leaf, false)
    }

    /// Trainable leaf. Repeated calls with the same id return the same node
    /// so gradients from every use accumulate.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Result<NodeId> {
        if let Some(&node) = self.param_nodes.get(&id) {
            return Ok(node);
        }
        let value = store.get(id).value.clone();
        let node = self.push("param", value, Op::Param(id), true)?;
        self.param_nodes.insert(id, node);
        Ok(node)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let mut out = vec![F::zero(); m * n];
        mm_nn(self.data(a), self.data(b), &mut out, m, k, n);
        let rg = self.needs(a) || self.needs(b);
        self.push(
            "matmul",
            Tensor::matrix(m, n, out)?,
            Op::MatMul { a, b, transpose_b: false },
            rg,
        )
    }

    /// `a · bᵀ`, for weights stored as `[out, in]`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::shape(
                "matmul_t",
                format!("{:?} x {:?}ᵀ", self.shape(a), self.shape(b)),
            ));
        }
        let mut out = vec![F::zero(); m * n];
        mm_nt(self.data(a), self.data(b), &mut out, m, k, n);
        let rg = self.needs(a) || self.needs(b);
        self.push(
            "matmul_t",
            Tensor::matrix(m, n, out)?,
            Op::MatMul { a, b, transpose_b: true },
            rg,
        )
    }

    /// Elementwise sum. `b` may also be a single row broadcast over `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, n) = self.dims(a);
        let (bm, bn) = self.dims(b);
        let broadcast = if (bm, bn) == (m, n) {
            false
        } else if bm == 1 && bn == n {
            true
        } else {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", self.shape(a), self.shape(b)),
            ));
        };
        let ad = self.data(a);
        let bd = self.data(b);
        let out: Vec<F> = if broadcast {
            ad.iter()
                .enumerate()
                .map(|(i, &x)| x + bd[i % n])
                .collect()
        } else {
            ad.iter().zip(bd).map(|(&x, &y)| x + y).collect()
        };
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a) || self.needs(b);
        self.push("add", Tensor::new(shape, out)?, Op::Add { a, b, broadcast }, rg)
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x - y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a) || self.needs(b);
        self.push("sub", Tensor::new(shape, out)?, Op::Sub { a, b }, rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a) || self.needs(b);
        self.push("mul", Tensor::new(shape, out)?, Op::Mul { a, b }, rg)
    }

    pub fn scale(&mut self, a: NodeId, factor: F) -> Result<NodeId> {
        let out = self.data(a).iter().map(|&x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a);
        self.push("scale", Tensor::new(shape, out)?, Op::Scale { a, factor }, rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.data(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a);
        self.push("sigmoid", Tensor::new(shape, out)?, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.data(a).iter().map(|&x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a);
        self.push("tanh", Tensor::new(shape, out)?, Op::Tanh(a), rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let total: F = self.data(a).iter().copied().sum();
        let rg = self.needs(a);
        self.push("sum", Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Concatenate matrices along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat", "no inputs"));
        };
        if axis > 1 {
            return Err(Error::shape("concat", format!("axis {axis} unsupported")));
        }
        let (r0, c0) = self.dims(first);
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.dims(p)).collect();
        let out = if axis == 0 {
            if dims.iter().any(|&(_, c)| c != c0) {
                return Err(Error::shape("concat", format!("column counts {dims:?}")));
            }
            let rows: usize = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * c0);
            for &p in parts {
                data.extend_from_slice(self.data(p));
            }
            Tensor::matrix(rows, c0, data)?
        } else {
            if dims.iter().any(|&(r, _)| r != r0) {
                return Err(Error::shape("concat", format!("row counts {dims:?}")));
            }
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for r in 0..r0 {
                for (&p, &(_, c)) in parts.iter().zip(&dims) {
                    data.extend_from_slice(&self.data(p)[r * c..(r + 1) * c]);
                }
            }
            Tensor::matrix(r0, cols, data)?
        };
        let rg = parts.iter().any(|&p| self.needs(p));
        self.push(
            "concat",
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        )
    }

    /// Contiguous block of rows (`axis = 0`) or columns (`axis = 1`).
    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.dims(a);
        let extent = match axis {
            0 => r,
            1 => c,
            _ => return Err(Error::shape("slice", format!("axis {axis} unsupported"))),
        };
        if len == 0 || start + len > extent {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) out of 0..{extent}", start + len),
            ));
        }
        let src = self.data(a);
        let out = if axis == 0 {
            Tensor::matrix(len, c, src[start * c..(start + len) * c].to_vec())?
        } else {
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&src[i * c + start..i * c + start + len]);
            }
            Tensor::matrix(r, len, data)?
        };
        let rg = self.needs(a);
        self.push("slice", out, Op::Slice { a, axis, start }, rg)
    }

    /// Row lookup: output row `i` is `table[indices[i]]`.
    pub fn gather(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (rows, cols) = self.dims(table);
        if indices.is_empty() {
            return Err(Error::shape("gather", "no indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(
                "gather",
                format!("index {bad} out of range for {rows} rows"),
            ));
        }
        let src = self.data(table);
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let out = Tensor::matrix(indices.len(), cols, data)?;
        let rg = self.needs(table);
        self.push(
            "gather",
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            rg,
        )
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits`. Rows labelled [`IGNORE_INDEX`] contribute neither loss nor
    /// gradient and are excluded from the mean; an all-ignored batch has loss 0.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[i64]) -> Result<NodeId> {
        let (n, k) = self.dims(logits);
        if labels.len() != n {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{n} rows but {} labels", labels.len()),
            ));
        }
        if let Some(&bad) = labels
            .iter()
            .find(|&&l| l != IGNORE_INDEX && (l < 0 || l as usize >= k))
        {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("label {bad} out of range for {k} classes"),
            ));
        }
        let src = self.data(logits);
        let mut probs = vec![F::zero(); n * k];
        let mut total = F::zero();
        let mut count = 0usize;
        for i in 0..n {
            let row = &src[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut denom = F::zero();
            for (p, &x) in probs[i * k..(i + 1) * k].iter_mut().zip(row) {
                *p = (x - max).exp();
                denom += *p;
            }
            for p in &mut probs[i * k..(i + 1) * k] {
                *p /= denom;
            }
            if labels[i] != IGNORE_INDEX {
                let y = labels[i] as usize;
                total += denom.ln() - (row[y] - max);
                count += 1;
            }
        }
        let loss = if count == 0 {
            F::zero()
        } else {
            total / F::from_usize(count).unwrap()
        };
        let rg = self.needs(logits);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
                count,
            },
            rg,
        )
    }

    /// Back-propagates from the scalar `loss` and adds the resulting
    /// parameter gradients into `store`.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<F>) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.value(loss).is_finite() {
            return Err(Error::Numeric("loss is not finite".into()));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![F::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => {
                    let param = store.get_mut(*pid);
                    let cols = param.value.dims2().1;
                    for (o, v) in param.grad.data_mut().iter_mut().zip(&g) {
                        *o += *v;
                    }
                    for &row in &param.frozen_rows {
                        param.grad.data_mut()[row * cols..(row + 1) * cols].fill(F::zero());
                    }
                }
                Op::MatMul { a, b, transpose_b } => {
                    let (m, k) = self.dims(*a);
                    let n = node.value.dims2().1;
                    if self.needs(*a) {
                        let mut ga = vec![F::zero(); m * k];
                        if *transpose_b {
                            // C = A·Bᵀ, B is [n×k]: dA = dC·B
                            mm_nn(&g, self.data(*b), &mut ga, m, n, k);
                        } else {
                            // B is [k×n]: dA = dC·Bᵀ
                            mm_nt(&g, self.data(*b), &mut ga, m, n, k);
                        }
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = if *transpose_b {
                            // dB = dCᵀ·A  ([n×k])
                            let mut gb = vec![F::zero(); n * k];
                            mm_tn(&g, self.data(*a), &mut gb, m, n, k);
                            gb
                        } else {
                            // dB = Aᵀ·dC  ([k×n])
                            let mut gb = vec![F::zero(); k * n];
                            mm_tn(self.data(*a), &g, &mut gb, m, k, n);
                            gb
                        };
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add { a, b, broadcast } => {
                    if self.needs(*b) {
                        let gb = if *broadcast {
                            let n = self.dims(*b).1;
                            let mut gb = vec![F::zero(); n];
                            for (i, v) in g.iter().enumerate() {
                                gb[i % n] += *v;
                            }
                            gb
                        } else {
                            g.clone()
                        };
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Sub { a, b } => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.iter().map(|&v| -v).collect());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul { a, b } => {
                    if self.needs(*a) {
                        let ga = g.iter().zip(self.data(*b)).map(|(&v, &y)| v * y).collect();
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = g.iter().zip(self.data(*a)).map(|(&v, &x)| v * x).collect();
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Scale { a, factor } => {
                    accumulate(&mut grads, *a, g.iter().map(|&v| v * *factor).collect());
                }
                Op::Sigmoid(a) => {
                    let ga = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(&v, &s)| v * s * (F::one() - s))
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(&v, &t)| v * (F::one() - t * t))
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).numel();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::Concat { parts, axis } => {
                    let out_cols = node.value.dims2().1;
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.dims(p);
                        if self.needs(p) {
                            let gp = if *axis == 0 {
                                g[offset * c..(offset + r) * c].to_vec()
                            } else {
                                let mut gp = Vec::with_capacity(r * c);
                                for i in 0..r {
                                    let base = i * out_cols + offset;
                                    gp.extend_from_slice(&g[base..base + c]);
                                }
                                gp
                            };
                            accumulate(&mut grads, p, gp);
                        }
                        offset += if *axis == 0 { r } else { c };
                    }
                }
                Op::Slice { a, axis, start } => {
                    let (r, c) = self.dims(*a);
                    let mut ga = vec![F::zero(); r * c];
                    if *axis == 0 {
                        ga[start * c..start * c + g.len()].copy_from_slice(&g);
                    } else {
                        let len = node.value.dims2().1;
                        for i in 0..r {
                            ga[i * c + start..i * c + start + len]
                                .copy_from_slice(&g[i * len..(i + 1) * len]);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gather { table, indices } => {
                    let (r, c) = self.dims(*table);
                    let mut gt = vec![F::zero(); r * c];
                    for (i, &row) in indices.iter().enumerate() {
                        for (o, &v) in gt[row * c..(row + 1) * c]
                            .iter_mut()
                            .zip(&g[i * c..(i + 1) * c])
                        {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                    count,
                } => {
                    let (n, k) = self.dims(*logits);
                    let mut gl = vec![F::zero(); n * k];
                    if *count > 0 {
                        let w = g[0] / F::from_usize(*count).unwrap();
                        for (i, &label) in labels.iter().enumerate() {
                            if label == IGNORE_INDEX {
                                continue;
                            }
                            for j in 0..k {
                                gl[i * k + j] = w * probs[i * k + j];
                            }
                            gl[i * k + label as usize] -= w;
                        }
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Vec<F>>], id: NodeId, contribution: Vec<F>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}
