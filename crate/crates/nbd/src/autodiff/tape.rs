//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! Values are 2-D buffers (`rows x cols`, row-major) in a flat arena; a
//! scalar is a `1 x 1` buffer and a vector a `1 x d` or `r x 1` buffer.
//! Recording an operation evaluates it eagerly and appends a node, so the
//! tape order is already a topological order and the backward pass is a
//! single reverse sweep that visits each node exactly once.
//!
//! A tape is built and consumed by one thread ("single-writer"); distinct
//! tapes are independent and may run concurrently.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{NbdError, Result};
use crate::linalg::{self, Mat};

static TAPE_STAMP: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId {
    idx: u32,
    stamp: u32,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Neg(TensorId),
    Exp(TensorId),
    Log(TensorId),
    Softplus(TensorId),
    Sigmoid(TensorId),
    Square(TensorId),
    /// max(x, c) elementwise.
    MaxConst(TensorId, f64),
    // The constant is baked into the forward value; backward is identity.
    AddConst(TensorId, #[allow(dead_code)] f64),
    Scale(TensorId, f64),
    /// x: r x n, w: m x n -> x w^T: r x m.
    Linear(TensorId, TensorId),
    /// x: r x m, w: m x n -> x w: r x n (transposed application).
    LinearT(TensorId, TensorId),
    /// x: r x c plus a 1 x c row broadcast over rows.
    AddRow(TensorId, TensorId),
    /// x: r x c plus an r x 1 column broadcast over columns.
    AddCol(TensorId, TensorId),
    /// Row-wise dot product of two r x d values -> r x 1.
    RowDot(TensorId, TensorId),
    /// Row sums: r x d -> r x 1.
    RowSum(TensorId),
    /// Sum of all entries -> 1 x 1.
    SumAll(TensorId),
    /// Fixed-coefficient sum of all entries -> 1 x 1.
    WeightedSum(TensorId, Vec<f64>),
    Transpose(TensorId),
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    off: usize,
}

impl Node {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// A recorded computation graph.
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<f64>,
    stamp: u32,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            vals: Vec::new(),
            stamp: TAPE_STAMP.fetch_add(1, Ordering::Relaxed),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize) -> TensorId {
        let off = self.vals.len();
        self.vals.resize(off + rows * cols, 0.0);
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node { op, rows, cols, off });
        TensorId { idx, stamp: self.stamp }
    }

    #[inline]
    fn node(&self, id: TensorId) -> &Node {
        assert_eq!(id.stamp, self.stamp, "TensorId used on a different tape");
        &self.nodes[id.idx as usize]
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = self.node(id);
        (n.rows, n.cols)
    }

    /// Forward value of a node.
    pub fn value(&self, id: TensorId) -> &[f64] {
        let n = self.node(id);
        &self.vals[n.off..n.off + n.len()]
    }

    pub fn value_scalar(&self, id: TensorId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "value_scalar on non-scalar node");
        v[0]
    }

    pub fn value_mat(&self, id: TensorId) -> Mat {
        let (r, c) = self.shape(id);
        Mat::from_vec(r, c, self.value(id).to_vec())
    }

    // ---- leaves -------------------------------------------------------

    pub fn leaf(&mut self, data: &[f64], rows: usize, cols: usize) -> TensorId {
        assert_eq!(data.len(), rows * cols, "leaf shape mismatch");
        let id = self.push(Op::Leaf, rows, cols);
        let n = self.nodes.last().unwrap();
        self.vals[n.off..n.off + data.len()].copy_from_slice(data);
        id
    }

    pub fn leaf_mat(&mut self, m: &Mat) -> TensorId {
        self.leaf(m.data(), m.rows(), m.cols())
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.leaf(&[v], 1, 1)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> TensorId {
        self.push(Op::Leaf, rows, cols)
    }

    // ---- elementwise --------------------------------------------------

    fn binary_same_shape(&mut self, a: TensorId, b: TensorId, op: fn(TensorId, TensorId) -> Op, f: fn(f64, f64) -> f64) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!((r, c), self.shape(b), "shape mismatch in elementwise op");
        let out = self.push(op(a, b), r, c);
        let (ao, bo, oo) = (self.node(a).off, self.node(b).off, self.node(out).off);
        for i in 0..r * c {
            self.vals[oo + i] = f(self.vals[ao + i], self.vals[bo + i]);
        }
        out
    }

    fn unary(&mut self, x: TensorId, op: impl FnOnce(TensorId) -> Op, f: impl Fn(f64) -> f64) -> TensorId {
        let (r, c) = self.shape(x);
        let out = self.push(op(x), r, c);
        let (xo, oo) = (self.node(x).off, self.node(out).off);
        for i in 0..r * c {
            self.vals[oo + i] = f(self.vals[xo + i]);
        }
        out
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_same_shape(a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_same_shape(a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_same_shape(a, b, Op::Mul, |x, y| x * y)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_same_shape(a, b, Op::Div, |x, y| x / y)
    }

    pub fn neg(&mut self, x: TensorId) -> TensorId {
        self.unary(x, Op::Neg, |v| -v)
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        self.unary(x, Op::Exp, f64::exp)
    }

    pub fn log(&mut self, x: TensorId) -> TensorId {
        self.unary(x, Op::Log, f64::ln)
    }

    pub fn softplus(&mut self, x: TensorId) -> TensorId {
        self.unary(x, Op::Softplus, softplus)
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        self.unary(x, Op::Sigmoid, sigmoid)
    }

    pub fn square(&mut self, x: TensorId) -> TensorId {
        self.unary(x, Op::Square, |v| v * v)
    }

    pub fn max_const(&mut self, x: TensorId, c: f64) -> TensorId {
        self.unary(x, |t| Op::MaxConst(t, c), |v| v.max(c))
    }

    pub fn add_const(&mut self, x: TensorId, c: f64) -> TensorId {
        self.unary(x, |t| Op::AddConst(t, c), |v| v + c)
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> TensorId {
        self.unary(x, |t| Op::Scale(t, c), |v| v * c)
    }

    // ---- linear maps and reductions ------------------------------------

    /// `x w^T` with `x: r x n` and weight `w: m x n`; returns `r x m`.
    pub fn linear(&mut self, x: TensorId, w: TensorId) -> TensorId {
        let (r, n) = self.shape(x);
        let (m, wn) = self.shape(w);
        assert_eq!(n, wn, "linear: input dim {n} vs weight dim {wn}");
        let out = self.push(Op::Linear(x, w), r, m);
        let mut wt = vec![0.0; n * m];
        let (xo, wo, oo) = (self.node(x).off, self.node(w).off, self.node(out).off);
        linalg::transpose_into(&mut wt, &self.vals[wo..wo + m * n], m, n);
        let (vals_in, vals_out) = self.vals.split_at_mut(oo);
        linalg::matmul_acc(&mut vals_out[..r * m], &vals_in[xo..xo + r * n], &wt, r, n, m);
        out
    }

    /// `x w` with `x: r x m` and weight `w: m x n`; returns `r x n`.
    pub fn linear_t(&mut self, x: TensorId, w: TensorId) -> TensorId {
        let (r, m) = self.shape(x);
        let (wm, n) = self.shape(w);
        assert_eq!(m, wm, "linear_t: input dim {m} vs weight rows {wm}");
        let out = self.push(Op::LinearT(x, w), r, n);
        let (xo, wo, oo) = (self.node(x).off, self.node(w).off, self.node(out).off);
        let (vals_in, vals_out) = self.vals.split_at_mut(oo);
        linalg::matmul_acc(&mut vals_out[..r * n], &vals_in[xo..xo + r * m], &vals_in[wo..wo + m * n], r, m, n);
        out
    }

    /// Add a `1 x c` row vector to every row of `x: r x c`.
    pub fn add_row(&mut self, x: TensorId, row: TensorId) -> TensorId {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(row), (1, c), "add_row shape mismatch");
        let out = self.push(Op::AddRow(x, row), r, c);
        let (xo, ro, oo) = (self.node(x).off, self.node(row).off, self.node(out).off);
        for i in 0..r {
            for j in 0..c {
                self.vals[oo + i * c + j] = self.vals[xo + i * c + j] + self.vals[ro + j];
            }
        }
        out
    }

    /// Add an `r x 1` column vector to every column of `x: r x c`.
    pub fn add_col(&mut self, x: TensorId, col: TensorId) -> TensorId {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(col), (r, 1), "add_col shape mismatch");
        let out = self.push(Op::AddCol(x, col), r, c);
        let (xo, co, oo) = (self.node(x).off, self.node(col).off, self.node(out).off);
        for i in 0..r {
            for j in 0..c {
                self.vals[oo + i * c + j] = self.vals[xo + i * c + j] + self.vals[co + i];
            }
        }
        out
    }

    /// Row-wise dot product: two `r x d` values -> `r x 1`.
    pub fn row_dot(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (r, d) = self.shape(a);
        assert_eq!((r, d), self.shape(b), "row_dot shape mismatch");
        let out = self.push(Op::RowDot(a, b), r, 1);
        let (ao, bo, oo) = (self.node(a).off, self.node(b).off, self.node(out).off);
        for i in 0..r {
            let av = &self.vals[ao + i * d..ao + (i + 1) * d];
            let bv = &self.vals[bo + i * d..bo + (i + 1) * d];
            self.vals[oo + i] = linalg::dot(av, bv);
        }
        out
    }

    /// Row sums: `r x d` -> `r x 1`.
    pub fn row_sum(&mut self, x: TensorId) -> TensorId {
        let (r, d) = self.shape(x);
        let out = self.push(Op::RowSum(x), r, 1);
        let (xo, oo) = (self.node(x).off, self.node(out).off);
        for i in 0..r {
            self.vals[oo + i] = self.vals[xo + i * d..xo + (i + 1) * d].iter().sum();
        }
        out
    }

    /// Sum of every entry -> `1 x 1`.
    pub fn sum_all(&mut self, x: TensorId) -> TensorId {
        let n = self.node(x).len();
        let out = self.push(Op::SumAll(x), 1, 1);
        let (xo, oo) = (self.node(x).off, self.node(out).off);
        self.vals[oo] = self.vals[xo..xo + n].iter().sum();
        out
    }

    /// Fixed-coefficient linear combination of every entry of `x` -> `1 x 1`.
    pub fn weighted_sum(&mut self, x: TensorId, weights: Vec<f64>) -> TensorId {
        let n = self.node(x).len();
        assert_eq!(weights.len(), n, "weighted_sum coefficient count mismatch");
        let xo = self.node(x).off;
        let s = linalg::dot(&self.vals[xo..xo + n], &weights);
        let out = self.push(Op::WeightedSum(x, weights), 1, 1);
        let oo = self.node(out).off;
        self.vals[oo] = s;
        out
    }

    pub fn transpose(&mut self, x: TensorId) -> TensorId {
        let (r, c) = self.shape(x);
        let out = self.push(Op::Transpose(x), c, r);
        let (xo, oo) = (self.node(x).off, self.node(out).off);
        let (vals_in, vals_out) = self.vals.split_at_mut(oo);
        linalg::transpose_into(&mut vals_out[..r * c], &vals_in[xo..xo + r * c], r, c);
        out
    }

    // ---- convenience compositions --------------------------------------

    /// sqrt(x) composed from supported primitives as exp(0.5 ln x); callers
    /// must keep x strictly positive.
    pub fn sqrt_positive(&mut self, x: TensorId) -> TensorId {
        let l = self.log(x);
        let h = self.scale(l, 0.5);
        self.exp(h)
    }

    /// Mean of all entries -> `1 x 1`.
    pub fn mean_all(&mut self, x: TensorId) -> TensorId {
        let n = self.node(x).len();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    // ---- backward -------------------------------------------------------

    /// Reverse sweep from a scalar root. Returns the gradient of the root
    /// with respect to every node on the tape.
    pub fn backward(&self, root: TensorId) -> Result<Gradients<'_>> {
        let rn = self.node(root);
        if rn.len() != 1 {
            return Err(NbdError::DimensionMismatch { expected: 1, got: rn.len() });
        }
        let mut g = vec![0.0; self.vals.len()];
        g[rn.off] = 1.0;

        for node in self.nodes.iter().rev() {
            // Parents were recorded before this node, so their gradient
            // slices live strictly below `node.off` and the split is safe.
            let (gp, go) = g.split_at_mut(node.off);
            let go = &go[..node.len()];
            self.accumulate(node, go, gp);
        }
        Ok(Gradients { tape: self, g })
    }

    fn accumulate(&self, node: &Node, go: &[f64], gp: &mut [f64]) {
        let val = |id: TensorId| {
            let n = self.node(id);
            &self.vals[n.off..n.off + n.len()]
        };
        let span = |id: TensorId| {
            let n = self.node(id);
            (n.off, n.len())
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let (ao, _) = span(*a);
                for (i, &gv) in go.iter().enumerate() {
                    gp[ao + i] += gv;
                }
                let (bo, _) = span(*b);
                for (i, &gv) in go.iter().enumerate() {
                    gp[bo + i] += gv;
                }
            }
            Op::Sub(a, b) => {
                let (ao, _) = span(*a);
                for (i, &gv) in go.iter().enumerate() {
                    gp[ao + i] += gv;
                }
                let (bo, _) = span(*b);
                for (i, &gv) in go.iter().enumerate() {
                    gp[bo + i] -= gv;
                }
            }
            Op::Mul(a, b) => {
                let (ao, _) = span(*a);
                let bv = val(*b);
                for (i, &gv) in go.iter().enumerate() {
                    gp[ao + i] += gv * bv[i];
                }
                let (bo, _) = span(*b);
                let av = val(*a);
                for (i, &gv) in go.iter().enumerate() {
                    gp[bo + i] += gv * av[i];
                }
            }
            Op::Div(a, b) => {
                let av = val(*a);
                let bv = val(*b);
                let (ao, _) = span(*a);
                for (i, &gv) in go.iter().enumerate() {
                    gp[ao + i] += gv / bv[i];
                }
                let (bo, _) = span(*b);
                for (i, &gv) in go.iter().enumerate() {
                    gp[bo + i] -= gv * av[i] / (bv[i] * bv[i]);
                }
            }
            Op::Neg(x) => {
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] -= gv;
                }
            }
            Op::Exp(x) => {
                let ov = &self.vals[node.off..node.off + node.len()];
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv * ov[i];
                }
            }
            Op::Log(x) => {
                let xv = val(*x);
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv / xv[i];
                }
            }
            Op::Softplus(x) => {
                let xv = val(*x);
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv * sigmoid(xv[i]);
                }
            }
            Op::Sigmoid(x) => {
                let ov = &self.vals[node.off..node.off + node.len()];
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv * ov[i] * (1.0 - ov[i]);
                }
            }
            Op::Square(x) => {
                let xv = val(*x);
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv * 2.0 * xv[i];
                }
            }
            Op::MaxConst(x, c) => {
                let xv = val(*x);
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    if xv[i] > *c {
                        gp[xo + i] += gv;
                    }
                }
            }
            Op::AddConst(x, _) => {
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv;
                }
            }
            Op::Scale(x, c) => {
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv * c;
                }
            }
            Op::Linear(x, w) => {
                // out = x w^T;  d_x += g w;  d_w += g^T x.
                let (r, n) = {
                    let nx = self.node(*x);
                    (nx.rows, nx.cols)
                };
                let m = self.node(*w).rows;
                let wv = val(*w).to_vec();
                let xv = val(*x).to_vec();
                let (xo, _) = span(*x);
                linalg::matmul_acc(&mut gp[xo..xo + r * n], go, &wv, r, m, n);
                let (wo, _) = span(*w);
                linalg::matmul_tn_acc(&mut gp[wo..wo + m * n], go, &xv, r, m, n);
            }
            Op::LinearT(x, w) => {
                // out = x w;  d_x += g w^T;  d_w += x^T g.
                let (r, m) = {
                    let nx = self.node(*x);
                    (nx.rows, nx.cols)
                };
                let n = self.node(*w).cols;
                let wv = val(*w);
                let mut wt = vec![0.0; m * n];
                linalg::transpose_into(&mut wt, wv, m, n);
                let xv = val(*x).to_vec();
                let (xo, _) = span(*x);
                linalg::matmul_acc(&mut gp[xo..xo + r * m], go, &wt, r, n, m);
                let (wo, _) = span(*w);
                linalg::matmul_tn_acc(&mut gp[wo..wo + m * n], &xv, go, r, m, n);
            }
            Op::AddRow(x, row) => {
                let (r, c) = (node.rows, node.cols);
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv;
                }
                let (ro, _) = span(*row);
                for i in 0..r {
                    for j in 0..c {
                        gp[ro + j] += go[i * c + j];
                    }
                }
            }
            Op::AddCol(x, col) => {
                let (r, c) = (node.rows, node.cols);
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    gp[xo + i] += gv;
                }
                let (co, _) = span(*col);
                for i in 0..r {
                    for j in 0..c {
                        gp[co + i] += go[i * c + j];
                    }
                }
            }
            Op::RowDot(a, b) => {
                let d = self.node(*a).cols;
                let bv = val(*b);
                let (ao, _) = span(*a);
                for (i, &gv) in go.iter().enumerate() {
                    let dst = &mut gp[ao + i * d..ao + (i + 1) * d];
                    for (g, &x) in dst.iter_mut().zip(&bv[i * d..(i + 1) * d]) {
                        *g += gv * x;
                    }
                }
                let av = val(*a);
                let (bo, _) = span(*b);
                for (i, &gv) in go.iter().enumerate() {
                    let dst = &mut gp[bo + i * d..bo + (i + 1) * d];
                    for (g, &x) in dst.iter_mut().zip(&av[i * d..(i + 1) * d]) {
                        *g += gv * x;
                    }
                }
            }
            Op::RowSum(x) => {
                let d = self.node(*x).cols;
                let (xo, _) = span(*x);
                for (i, &gv) in go.iter().enumerate() {
                    for g in &mut gp[xo + i * d..xo + (i + 1) * d] {
                        *g += gv;
                    }
                }
            }
            Op::SumAll(x) => {
                let (xo, len) = span(*x);
                let gv = go[0];
                for g in &mut gp[xo..xo + len] {
                    *g += gv;
                }
            }
            Op::WeightedSum(x, wts) => {
                let (xo, len) = span(*x);
                let gv = go[0];
                for (g, &w) in gp[xo..xo + len].iter_mut().zip(wts) {
                    *g += gv * w;
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (node.rows, node.cols);
                let (xo, _) = span(*x);
                for i in 0..r {
                    for j in 0..c {
                        gp[xo + j * r + i] += go[i * c + j];
                    }
                }
            }
        }
    }
}

/// Gradients of a scalar root with respect to every node on the tape.
pub struct Gradients<'t> {
    tape: &'t Tape,
    g: Vec<f64>,
}

impl Gradients<'_> {
    /// Gradient slice for a node; panics if the id belongs to another tape.
    pub fn get(&self, id: TensorId) -> &[f64] {
        let n = self.tape.node(id);
        &self.g[n.off..n.off + n.len()]
    }

    pub fn try_get(&self, id: TensorId) -> Option<&[f64]> {
        if id.stamp != self.tape.stamp || (id.idx as usize) >= self.tape.nodes.len() {
            return None;
        }
        Some(self.get(id))
    }
}

/// Overflow-safe softplus: max(x, 0) + ln(1 + exp(-|x|)).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Overflow-safe logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus: ln(exp(y) - 1) for y > 0.
pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0, "softplus_inverse needs a positive argument");
    // ln(e^y - 1) = y + ln(1 - e^-y), stable for large y.
    y + (-((-y).exp())).ln_1p()
}
