use crate::{Scalar, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    SliceCols { input: Var, start: usize },
    Embedding { table: Var, ids: Vec<usize> },
    Softmax(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<T>, probs: Tensor<T> },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Concat(_) => "concat",
            Op::SliceCols { .. } => "slice",
            Op::Embedding { .. } => "embedding",
            Op::Softmax(_) => "softmax",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a valid topological order;
/// [`Graph::backward`] walks them in exact reverse. Nodes that depend on no
/// parameter are skipped during the backward pass.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Binary broadcasting: the right operand may be `[m,n]`, `[1,n]`, `[m,1]` or `[1,1]`.
#[derive(Clone, Copy)]
struct Broadcast {
    rows: usize,
    cols: usize,
    b_rows: usize,
    b_cols: usize,
}

impl Broadcast {
    fn new(a: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>, op: &str) -> Self {
        let (rows, cols) = a.dims2();
        let (b_rows, b_cols) = b.dims2();
        assert!(
            (b_rows == rows || b_rows == 1) && (b_cols == cols || b_cols == 1),
            "{op}: cannot broadcast {:?} onto {:?}",
            b.shape(),
            a.shape()
        );
        Broadcast { rows, cols, b_rows, b_cols }
    }

    #[inline]
    fn b_index(&self, i: usize, j: usize) -> usize {
        let r = if self.b_rows == 1 { 0 } else { i };
        let c = if self.b_cols == 1 { 0 } else { j };
        r * self.b_cols + c
    }

    fn same(&self) -> bool {
        self.rows == self.b_rows && self.cols == self.b_cols
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn parameter(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    fn broadcast_binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let av = self.value(a);
        let bv = self.value(b);
        let bc = Broadcast::new(av, bv, name);
        let ad = av.data();
        let bd = bv.data();
        let data: Vec<T> = if bc.same() {
            ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let mut out = Vec::with_capacity(ad.len());
            for i in 0..bc.rows {
                for j in 0..bc.cols {
                    out.push(f(ad[i * bc.cols + j], bd[bc.b_index(i, j)]));
                }
            }
            out
        };
        Tensor::from_rows(bc.rows, bc.cols, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.broadcast_binary(a, b, "add", |x, y| x + y);
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.broadcast_binary(a, b, "sub", |x, y| x - y);
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.broadcast_binary(a, b, "mul", |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        let ng = self.needs(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.needs(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    /// Concatenates along columns; all inputs must have equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.value(p).dims2();
                assert_eq!(r, rows, "concat: row counts differ");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::from_rows(rows, total, data), Op::Concat(parts.to_vec()), ng)
    }

    /// Columns `start..end` of a rank-2 value.
    pub fn slice_cols(&mut self, input: Var, start: usize, end: usize) -> Var {
        let (rows, cols) = self.value(input).dims2();
        assert!(start < end && end <= cols, "slice {start}..{end} out of {cols} columns");
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(rows * (end - start));
        for i in 0..rows {
            data.extend_from_slice(&src[i * cols + start..i * cols + end]);
        }
        let ng = self.needs(input);
        self.push(Tensor::from_rows(rows, end - start, data), Op::SliceCols { input, start }, ng)
    }

    /// Gathers rows of `table` by id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let (vocab, dim) = self.value(table).dims2();
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            assert!(id < vocab, "embedding id {id} out of range {vocab}");
            data.extend_from_slice(&src[id * dim..(id + 1) * dim]);
        }
        let ng = self.needs(table);
        self.push(
            Tensor::from_rows(ids.len(), dim, data),
            Op::Embedding { table, ids: ids.to_vec() },
            ng,
        )
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, input: Var) -> Var {
        let (rows, cols) = self.value(input).dims2();
        let src = self.value(input).data();
        let mut data = vec![T::zero(); rows * cols];
        for i in 0..rows {
            softmax_into(&src[i * cols..(i + 1) * cols], &mut data[i * cols..(i + 1) * cols]);
        }
        let ng = self.needs(input);
        self.push(Tensor::from_rows(rows, cols, data), Op::Softmax(input), ng)
    }

    /// Weighted sum over rows of `-log softmax(logits_i)[targets_i]`, as a `[1,1]` value.
    ///
    /// A zero weight removes the row from both the loss and the gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[T]) -> Var {
        let (rows, cols) = self.value(logits).dims2();
        assert_eq!(targets.len(), rows, "cross_entropy: one target per row");
        assert_eq!(weights.len(), rows, "cross_entropy: one weight per row");
        let src = self.value(logits).data();
        let mut probs = vec![T::zero(); rows * cols];
        let mut loss = T::zero();
        for i in 0..rows {
            let row = &src[i * cols..(i + 1) * cols];
            let t = targets[i];
            assert!(t < cols, "cross_entropy: target {t} out of range {cols}");
            let lse = softmax_into(row, &mut probs[i * cols..(i + 1) * cols]);
            if weights[i] != T::zero() {
                loss += weights[i] * (lse - row[t]);
            }
        }
        let ng = self.needs(logits);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs: Tensor::from_rows(rows, cols, probs),
            },
            ng,
        )
    }

    /// Name of the earliest op whose output contains NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.nodes.iter().find(|n| !n.value.is_finite()).map(|n| n.op.name())
    }

    /// Reverse pass from a `[1,1]` output, seeding its gradient with `seed`.
    pub fn backward(&self, output: Var, seed: T) -> Gradients<T> {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(seed));

        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(grad) = grads[idx].take() else { continue };
            self.propagate(idx, &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        Gradients { grads }
    }

    fn accumulate<'a>(&self, grads: &'a mut [Option<Tensor<T>>], v: Var) -> Option<&'a mut [T]> {
        if !self.needs(v) {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(v).shape()));
        }
        slot.as_mut().map(|t| t.data_mut())
    }

    fn reduce_broadcast(&self, grads: &mut [Option<Tensor<T>>], a: Var, b: Var, g: &[T], scale_b: impl Fn(usize, usize) -> T, scale_a: impl Fn(usize, usize) -> T) {
        let bc = Broadcast::new(self.value(a), self.value(b), "backward");
        if let Some(ga) = self.accumulate(grads, a) {
            for i in 0..bc.rows {
                for j in 0..bc.cols {
                    let k = i * bc.cols + j;
                    ga[k] += g[k] * scale_a(k, bc.b_index(i, j));
                }
            }
        }
        if let Some(gb) = self.accumulate(grads, b) {
            for i in 0..bc.rows {
                for j in 0..bc.cols {
                    let k = i * bc.cols + j;
                    let bi = bc.b_index(i, j);
                    gb[bi] += g[k] * scale_b(k, bi);
                }
            }
        }
    }

    fn propagate(&self, idx: usize, grad: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let g = grad.data();
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).cols();
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if let Some(ga) = self.accumulate(grads, *a) {
                    // dA = dC · Bᵀ
                    T::gemm(m, n, k, T::one(), g, (n as isize, 1), bv, (1, n as isize), T::one(), ga, (k as isize, 1));
                }
                if let Some(gb) = self.accumulate(grads, *b) {
                    // dB = Aᵀ · dC
                    T::gemm(k, m, n, T::one(), av, (1, k as isize), g, (n as isize, 1), T::one(), gb, (n as isize, 1));
                }
            }
            Op::Add(a, b) => self.reduce_broadcast(grads, *a, *b, g, |_, _| T::one(), |_, _| T::one()),
            Op::Sub(a, b) => self.reduce_broadcast(grads, *a, *b, g, |_, _| -T::one(), |_, _| T::one()),
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.reduce_broadcast(grads, *a, *b, g, |k, _| av[k], |_, bi| bv[bi]);
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.accumulate(grads, *a) {
                    for ((d, &y), &gy) in ga.iter_mut().zip(out.data()).zip(g) {
                        *d += gy * (T::one() - y * y);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.accumulate(grads, *a) {
                    for ((d, &y), &gy) in ga.iter_mut().zip(out.data()).zip(g) {
                        *d += gy * y * (T::one() - y);
                    }
                }
            }
            Op::Concat(parts) => {
                let (rows, total) = out.dims2();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if let Some(gp) = self.accumulate(grads, p) {
                        for i in 0..rows {
                            for j in 0..w {
                                gp[i * w + j] += g[i * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols { input, start } => {
                let (rows, w) = out.dims2();
                let cols = self.value(*input).cols();
                if let Some(gi) = self.accumulate(grads, *input) {
                    for i in 0..rows {
                        for j in 0..w {
                            gi[i * cols + start + j] += g[i * w + j];
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let dim = out.cols();
                if let Some(gt) = self.accumulate(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..dim {
                            gt[id * dim + j] += g[r * dim + j];
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let (rows, cols) = out.dims2();
                let y = out.data();
                if let Some(ga) = self.accumulate(grads, *a) {
                    for i in 0..rows {
                        let r = i * cols..(i + 1) * cols;
                        let dot: T = y[r.clone()].iter().zip(&g[r.clone()]).map(|(&p, &q)| p * q).sum();
                        for k in r {
                            ga[k] += y[k] * (g[k] - dot);
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, targets, weights, probs } => {
                let (rows, cols) = probs.dims2();
                let p = probs.data();
                let upstream = g[0];
                if let Some(gl) = self.accumulate(grads, *logits) {
                    for i in 0..rows {
                        let w = weights[i];
                        if w == T::zero() {
                            continue;
                        }
                        let scale = upstream * w;
                        for j in 0..cols {
                            gl[i * cols + j] += scale * p[i * cols + j];
                        }
                        gl[i * cols + targets[i]] -= scale;
                    }
                }
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a node, or `None` if the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Writes `softmax(row)` into `out` and returns log-sum-exp of `row`.
pub(crate) fn softmax_into<T: Scalar>(row: &[T], out: &mut [T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &x) in out.iter_mut().zip(row) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    let inv = T::one() / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
    max + sum.ln()
}
