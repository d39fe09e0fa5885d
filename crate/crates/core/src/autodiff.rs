//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Graph`] records operations in construction order; [`Node::backward`]
//! walks the records once in reverse, accumulating gradients into every
//! consumer's inputs. Graph construction is single-threaded; node values are
//! immutable once created.
//!
//! Every operation checks its output for NaN/Inf and fails loudly instead of
//! propagating poison. Reductions whose axis can be permuted by clip
//! shuffling (`softmax_rows`, `logsumexp_rows`, `mix_rows`, `mean_rows`,
//! `sum_rows`, `sum_all`) use correctly rounded summation from
//! [`crate::tensor`], so their outputs do not depend on row order.

use crate::error::{CoreError, Result};
use crate::tensor::{ensure_finite_slice, exact_sum, ExactSum, Tensor};
use std::cell::RefCell;
use std::rc::Rc;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// Attention mixing `weights[m,t] @ values[t,n]` with exact inner sums.
    MixRows(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Broadcast a `[1,n]` row onto every row of `[m,n]`.
    AddRow(usize, usize),
    Scale(usize, f64),
    /// Multiply elementwise by a `[1,1]` scalar node.
    ScaleBy(usize, usize),
    Recip(usize),
    Sqrt(usize),
    Relu(usize),
    Transpose(usize),
    SoftmaxRows(usize),
    LogSumExpRows(usize),
    SumAll(usize),
    SumRows(usize),
    MeanRows(usize),
    TakeDiag(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows(usize, usize, usize),
    SliceCols(usize, usize, usize),
    GatherRows(usize, Vec<usize>),
}

struct NodeRec {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    op: Op,
}

#[derive(Default)]
struct GraphInner {
    nodes: Vec<NodeRec>,
}

/// Tape of recorded operations. Cheap to clone (shared `Rc`).
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn node_count(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// Insert a tensor as a leaf; `requires_grad` is taken from the tensor.
    pub fn leaf(&self, t: Tensor) -> Result<Node> {
        let (rows, cols) = t.dims2()?;
        let needs = t.requires_grad();
        self.push(rows, cols, t.data().to_vec(), needs, Op::Leaf)
    }

    /// Insert a tensor as a constant (never receives gradient).
    pub fn constant(&self, t: Tensor) -> Result<Node> {
        let (rows, cols) = t.dims2()?;
        self.push(rows, cols, t.data().to_vec(), false, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Result<Node> {
        self.push(1, 1, vec![v], false, Op::Leaf)
    }

    fn push(
        &self,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        needs_grad: bool,
        op: Op,
    ) -> Result<Node> {
        let opname = op_name(&op);
        ensure_finite_slice(&data, opname)?;
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(NodeRec {
            rows,
            cols,
            data,
            grad: None,
            needs_grad,
            op,
        });
        Ok(Node {
            graph: self.clone(),
            id,
        })
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::MixRows(..) => "mix_rows",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::Scale(..) => "scale",
        Op::ScaleBy(..) => "scale_by",
        Op::Recip(..) => "recip",
        Op::Sqrt(..) => "sqrt",
        Op::Relu(..) => "relu",
        Op::Transpose(..) => "transpose",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::LogSumExpRows(..) => "logsumexp_rows",
        Op::SumAll(..) => "sum_all",
        Op::SumRows(..) => "sum_rows",
        Op::MeanRows(..) => "mean_rows",
        Op::TakeDiag(..) => "take_diag",
        Op::ConcatRows(..) => "concat_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceRows(..) => "slice_rows",
        Op::SliceCols(..) => "slice_cols",
        Op::GatherRows(..) => "gather_rows",
    }
}

/// Handle to one value in a [`Graph`].
#[derive(Clone)]
pub struct Node {
    graph: Graph,
    id: usize,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (rows, cols) = self.dims();
        write!(f, "Node#{} [{rows}x{cols}]", self.id)
    }
}

macro_rules! shape_err {
    ($op:expr, $($arg:tt)*) => {
        CoreError::Shape { op: $op, msg: format!($($arg)*) }
    };
}

impl Node {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn dims(&self) -> (usize, usize) {
        let inner = self.graph.inner.borrow();
        let rec = &inner.nodes[self.id];
        (rec.rows, rec.cols)
    }

    pub fn value(&self) -> Tensor {
        let inner = self.graph.inner.borrow();
        let rec = &inner.nodes[self.id];
        Tensor::matrix(rec.rows, rec.cols, rec.data.clone()).expect("node value is valid")
    }

    /// Scalar value of a `[1,1]` node.
    pub fn scalar_value(&self) -> f64 {
        let inner = self.graph.inner.borrow();
        let rec = &inner.nodes[self.id];
        debug_assert_eq!(rec.data.len(), 1);
        rec.data[0]
    }

    pub fn grad(&self) -> Option<Tensor> {
        let inner = self.graph.inner.borrow();
        let rec = &inner.nodes[self.id];
        rec.grad
            .as_ref()
            .map(|g| Tensor::matrix(rec.rows, rec.cols, g.clone()).expect("grad shape valid"))
    }

    fn same_graph(&self, other: &Node, op: &'static str) -> Result<()> {
        if Rc::ptr_eq(&self.graph.inner, &other.graph.inner) {
            Ok(())
        } else {
            Err(CoreError::Usage(format!("{op}: nodes from different graphs")))
        }
    }

    fn rec<R>(&self, f: impl FnOnce(&NodeRec) -> R) -> R {
        let inner = self.graph.inner.borrow();
        f(&inner.nodes[self.id])
    }

    pub fn matmul(&self, rhs: &Node) -> Result<Node> {
        self.same_graph(rhs, "matmul")?;
        let ((m, k), (k2, n)) = (self.dims(), rhs.dims());
        if k != k2 {
            return Err(shape_err!("matmul", "inner dims disagree: [{m}x{k}] x [{k2}x{n}]"));
        }
        let out = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id].data;
            let b = &inner.nodes[rhs.id].data;
            matmul_raw(a, m, k, b, n)
        };
        let needs = self.needs_grad() || rhs.needs_grad();
        self.graph.push(m, n, out, needs, Op::MatMul(self.id, rhs.id))
    }

    /// `weights[m,t] @ values[t,n]` with exact (order-independent) inner sums.
    pub fn mix_rows(&self, values: &Node) -> Result<Node> {
        self.same_graph(values, "mix_rows")?;
        let ((m, t), (t2, n)) = (self.dims(), values.dims());
        if t != t2 {
            return Err(shape_err!("mix_rows", "inner dims disagree: [{m}x{t}] x [{t2}x{n}]"));
        }
        let out = {
            let inner = self.graph.inner.borrow();
            let w = &inner.nodes[self.id].data;
            let v = &inner.nodes[values.id].data;
            let mut out = vec![0.0; m * n];
            let mut acc = ExactSum::new();
            for i in 0..m {
                for j in 0..n {
                    acc.reset();
                    for p in 0..t {
                        acc.add(w[i * t + p] * v[p * n + j]);
                    }
                    out[i * n + j] = acc.value();
                }
            }
            out
        };
        let needs = self.needs_grad() || values.needs_grad();
        self.graph
            .push(m, n, out, needs, Op::MixRows(self.id, values.id))
    }

    pub fn add(&self, rhs: &Node) -> Result<Node> {
        self.binary_elementwise(rhs, "add", |a, b| a + b, Op::Add(self.id, rhs.id))
    }

    pub fn sub(&self, rhs: &Node) -> Result<Node> {
        self.binary_elementwise(rhs, "sub", |a, b| a - b, Op::Sub(self.id, rhs.id))
    }

    pub fn mul(&self, rhs: &Node) -> Result<Node> {
        self.binary_elementwise(rhs, "mul", |a, b| a * b, Op::Mul(self.id, rhs.id))
    }

    fn binary_elementwise(
        &self,
        rhs: &Node,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Node> {
        self.same_graph(rhs, name)?;
        let (d1, d2) = (self.dims(), rhs.dims());
        if d1 != d2 {
            return Err(shape_err!(name, "shape mismatch: {d1:?} vs {d2:?}"));
        }
        let out = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id].data;
            let b = &inner.nodes[rhs.id].data;
            a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
        };
        let needs = self.needs_grad() || rhs.needs_grad();
        self.graph.push(d1.0, d1.1, out, needs, op)
    }

    /// Add a `[1,n]` row vector to every row.
    pub fn add_row(&self, row: &Node) -> Result<Node> {
        self.same_graph(row, "add_row")?;
        let ((m, n), (r, n2)) = (self.dims(), row.dims());
        if r != 1 || n != n2 {
            return Err(shape_err!("add_row", "[{m}x{n}] + [{r}x{n2}]"));
        }
        let out = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id].data;
            let b = &inner.nodes[row.id].data;
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    out.push(a[i * n + j] + b[j]);
                }
            }
            out
        };
        let needs = self.needs_grad() || row.needs_grad();
        self.graph.push(m, n, out, needs, Op::AddRow(self.id, row.id))
    }

    pub fn scale(&self, c: f64) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| r.data.iter().map(|&x| x * c).collect());
        self.graph
            .push(m, n, out, self.needs_grad(), Op::Scale(self.id, c))
    }

    pub fn neg(&self) -> Result<Node> {
        self.scale(-1.0)
    }

    /// Multiply elementwise by a `[1,1]` scalar node.
    pub fn scale_by(&self, s: &Node) -> Result<Node> {
        self.same_graph(s, "scale_by")?;
        if s.dims() != (1, 1) {
            return Err(shape_err!("scale_by", "scalar operand must be [1x1], got {:?}", s.dims()));
        }
        let (m, n) = self.dims();
        let out = {
            let inner = self.graph.inner.borrow();
            let sv = inner.nodes[s.id].data[0];
            inner.nodes[self.id].data.iter().map(|&x| x * sv).collect()
        };
        let needs = self.needs_grad() || s.needs_grad();
        self.graph.push(m, n, out, needs, Op::ScaleBy(self.id, s.id))
    }

    pub fn recip(&self) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| r.data.iter().map(|&x| 1.0 / x).collect());
        self.graph
            .push(m, n, out, self.needs_grad(), Op::Recip(self.id))
    }

    pub fn sqrt(&self) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| r.data.iter().map(|&x| x.sqrt()).collect());
        self.graph
            .push(m, n, out, self.needs_grad(), Op::Sqrt(self.id))
    }

    pub fn relu(&self) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| r.data.iter().map(|&x| x.max(0.0)).collect());
        self.graph
            .push(m, n, out, self.needs_grad(), Op::Relu(self.id))
    }

    pub fn transpose(&self) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| {
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[j * m + i] = r.data[i * n + j];
                }
            }
            out
        });
        self.graph
            .push(n, m, out, self.needs_grad(), Op::Transpose(self.id))
    }

    /// Row-wise softmax (max-subtraction, exact denominator).
    pub fn softmax_rows(&self) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| {
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                out.extend(crate::tensor::softmax_slice(&r.data[i * n..(i + 1) * n]));
            }
            out
        });
        self.graph
            .push(m, n, out, self.needs_grad(), Op::SoftmaxRows(self.id))
    }

    /// Row-wise log-sum-exp, returns `[m,1]`.
    pub fn logsumexp_rows(&self) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| {
            (0..m)
                .map(|i| crate::tensor::logsumexp_slice(&r.data[i * n..(i + 1) * n]))
                .collect()
        });
        self.graph
            .push(m, 1, out, self.needs_grad(), Op::LogSumExpRows(self.id))
    }

    /// Sum of all elements, returns `[1,1]`.
    pub fn sum_all(&self) -> Result<Node> {
        let out = self.rec(|r| vec![exact_sum(r.data.iter().copied())]);
        self.graph
            .push(1, 1, out, self.needs_grad(), Op::SumAll(self.id))
    }

    pub fn mean_all(&self) -> Result<Node> {
        let n = {
            let (m, c) = self.dims();
            (m * c) as f64
        };
        self.sum_all()?.scale(1.0 / n)
    }

    /// Row sums, returns `[m,1]`.
    pub fn sum_rows(&self) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| {
            (0..m)
                .map(|i| exact_sum(r.data[i * n..(i + 1) * n].iter().copied()))
                .collect()
        });
        self.graph
            .push(m, 1, out, self.needs_grad(), Op::SumRows(self.id))
    }

    /// Mean over rows (pooling along the clip/token axis), returns `[1,n]`.
    pub fn mean_rows(&self) -> Result<Node> {
        let (m, n) = self.dims();
        let out = self.rec(|r| {
            let mut out = Vec::with_capacity(n);
            let mut acc = ExactSum::new();
            for j in 0..n {
                acc.reset();
                for i in 0..m {
                    acc.add(r.data[i * n + j]);
                }
                out.push(acc.value() / m as f64);
            }
            out
        });
        self.graph
            .push(1, n, out, self.needs_grad(), Op::MeanRows(self.id))
    }

    /// Diagonal of a square matrix, returns `[m,1]`.
    pub fn take_diag(&self) -> Result<Node> {
        let (m, n) = self.dims();
        if m != n {
            return Err(shape_err!("take_diag", "matrix not square: [{m}x{n}]"));
        }
        let out = self.rec(|r| (0..m).map(|i| r.data[i * n + i]).collect());
        self.graph
            .push(m, 1, out, self.needs_grad(), Op::TakeDiag(self.id))
    }

    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Node> {
        let (m, n) = self.dims();
        if count == 0 || start + count > m {
            return Err(shape_err!("slice_rows", "rows {start}..{} of [{m}x{n}]", start + count));
        }
        let out = self.rec(|r| r.data[start * n..(start + count) * n].to_vec());
        self.graph.push(
            count,
            n,
            out,
            self.needs_grad(),
            Op::SliceRows(self.id, start, count),
        )
    }

    pub fn slice_cols(&self, start: usize, count: usize) -> Result<Node> {
        let (m, n) = self.dims();
        if count == 0 || start + count > n {
            return Err(shape_err!("slice_cols", "cols {start}..{} of [{m}x{n}]", start + count));
        }
        let out = self.rec(|r| {
            let mut out = Vec::with_capacity(m * count);
            for i in 0..m {
                out.extend_from_slice(&r.data[i * n + start..i * n + start + count]);
            }
            out
        });
        self.graph.push(
            m,
            count,
            out,
            self.needs_grad(),
            Op::SliceCols(self.id, start, count),
        )
    }

    /// Row lookup (embedding gather). Repeated ids accumulate gradient.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Node> {
        let (m, n) = self.dims();
        if ids.is_empty() {
            return Err(CoreError::Usage("gather_rows: empty id list".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= m) {
            return Err(CoreError::Usage(format!(
                "gather_rows: id {bad} out of range for {m} rows"
            )));
        }
        let out = self.rec(|r| {
            let mut out = Vec::with_capacity(ids.len() * n);
            for &i in ids {
                out.extend_from_slice(&r.data[i * n..(i + 1) * n]);
            }
            out
        });
        self.graph.push(
            ids.len(),
            n,
            out,
            self.needs_grad(),
            Op::GatherRows(self.id, ids.to_vec()),
        )
    }

    /// Dot product of two `[1,d]` rows, returns `[1,1]`.
    pub fn dot_row(&self, rhs: &Node) -> Result<Node> {
        self.matmul(&rhs.transpose()?)
    }

    /// Stack nodes vertically (all must share column count).
    pub fn concat_rows(parts: &[Node]) -> Result<Node> {
        concat(parts, true)
    }

    /// Stack nodes horizontally (all must share row count).
    pub fn concat_cols(parts: &[Node]) -> Result<Node> {
        concat(parts, false)
    }

    fn needs_grad(&self) -> bool {
        self.rec(|r| r.needs_grad)
    }

    /// Reverse pass from a scalar root. Gradients are written onto the graph
    /// nodes and can be read with [`Node::grad`]; a repeat call recomputes
    /// them from scratch.
    pub fn backward(&self) -> Result<()> {
        let mut inner = self.graph.inner.borrow_mut();
        let nodes = &mut inner.nodes;
        let root = self.id;
        if nodes[root].data.len() != 1 {
            return Err(CoreError::Usage(format!(
                "backward root must be a scalar, got [{}x{}]",
                nodes[root].rows, nodes[root].cols
            )));
        }
        let n = nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n)
            .map(|i| {
                if nodes[i].needs_grad {
                    Some(vec![0.0; nodes[i].data.len()])
                } else {
                    None
                }
            })
            .collect();
        if let Some(g) = grads[root].as_mut() {
            g[0] = 1.0;
        }

        // Visit every node exactly once, in reverse construction order.
        for id in (0..=root).rev() {
            if grads[id].is_none() {
                continue;
            }
            let g = grads[id].take().unwrap();
            backprop_one(nodes, id, &g, &mut grads)?;
            grads[id] = Some(g);
        }

        for (id, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                ensure_finite_slice(&g, &format!("gradient of node {id} ({})", op_name(&nodes[id].op)))
                    .map_err(|_| CoreError::NonFinite {
                        context: format!("backward pass (node {id}, op {})", op_name(&nodes[id].op)),
                    })?;
                nodes[id].grad = Some(g);
            }
        }
        Ok(())
    }
}

fn concat(parts: &[Node], by_rows: bool) -> Result<Node> {
    let name: &'static str = if by_rows { "concat_rows" } else { "concat_cols" };
    if parts.is_empty() {
        return Err(CoreError::Usage(format!("{name}: no parts")));
    }
    let graph = parts[0].graph.clone();
    for p in &parts[1..] {
        parts[0].same_graph(p, name)?;
    }
    let dims: Vec<(usize, usize)> = parts.iter().map(|p| p.dims()).collect();
    let needs = parts.iter().any(|p| p.needs_grad());
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    if by_rows {
        let cols = dims[0].1;
        if dims.iter().any(|d| d.1 != cols) {
            return Err(shape_err!("concat_rows", "column counts differ: {dims:?}"));
        }
        let rows: usize = dims.iter().map(|d| d.0).sum();
        let out = {
            let inner = graph.inner.borrow();
            let mut out = Vec::with_capacity(rows * cols);
            for &id in &ids {
                out.extend_from_slice(&inner.nodes[id].data);
            }
            out
        };
        graph.push(rows, cols, out, needs, Op::ConcatRows(ids))
    } else {
        let rows = dims[0].0;
        if dims.iter().any(|d| d.0 != rows) {
            return Err(shape_err!("concat_cols", "row counts differ: {dims:?}"));
        }
        let cols: usize = dims.iter().map(|d| d.1).sum();
        let out = {
            let inner = graph.inner.borrow();
            let mut out = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for (&id, d) in ids.iter().zip(&dims) {
                    let w = d.1;
                    out.extend_from_slice(&inner.nodes[id].data[i * w..(i + 1) * w]);
                }
            }
            out
        };
        graph.push(rows, cols, out, needs, Op::ConcatCols(ids))
    }
}

fn matmul_raw(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            for j in 0..n {
                out[i * n + j] += av * b[p * n + j];
            }
        }
    }
    out
}

fn add_into(dst: &mut Option<Vec<f64>>, f: impl FnOnce(&mut Vec<f64>)) {
    if let Some(d) = dst.as_mut() {
        f(d);
    }
}

fn backprop_one(
    nodes: &[NodeRec],
    id: usize,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) -> Result<()> {
    let rec = &nodes[id];
    match &rec.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, n) = (rec.rows, rec.cols);
            let k = nodes[*a].cols;
            // dA = G . B^T
            add_into(&mut grads[*a], |da| {
                let bd = &nodes[*b].data;
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bd[p * n + j];
                        }
                        da[i * k + p] += s;
                    }
                }
            });
            // dB = A^T . G
            add_into(&mut grads[*b], |db| {
                let ad = &nodes[*a].data;
                for p in 0..k {
                    for i in 0..m {
                        let av = ad[i * k + p];
                        for j in 0..n {
                            db[p * n + j] += av * g[i * n + j];
                        }
                    }
                }
            });
        }
        Op::MixRows(w, v) => {
            let (m, n) = (rec.rows, rec.cols);
            let t = nodes[*w].cols;
            add_into(&mut grads[*w], |dw| {
                let vd = &nodes[*v].data;
                for i in 0..m {
                    for p in 0..t {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * vd[p * n + j];
                        }
                        dw[i * t + p] += s;
                    }
                }
            });
            add_into(&mut grads[*v], |dv| {
                let wd = &nodes[*w].data;
                for p in 0..t {
                    for i in 0..m {
                        let wv = wd[i * t + p];
                        for j in 0..n {
                            dv[p * n + j] += wv * g[i * n + j];
                        }
                    }
                }
            });
        }
        Op::Add(a, b) => {
            add_into(&mut grads[*a], |da| {
                for (d, &x) in da.iter_mut().zip(g) {
                    *d += x;
                }
            });
            add_into(&mut grads[*b], |db| {
                for (d, &x) in db.iter_mut().zip(g) {
                    *d += x;
                }
            });
        }
        Op::Sub(a, b) => {
            add_into(&mut grads[*a], |da| {
                for (d, &x) in da.iter_mut().zip(g) {
                    *d += x;
                }
            });
            add_into(&mut grads[*b], |db| {
                for (d, &x) in db.iter_mut().zip(g) {
                    *d -= x;
                }
            });
        }
        Op::Mul(a, b) => {
            add_into(&mut grads[*a], |da| {
                let bd = &nodes[*b].data;
                for i in 0..da.len() {
                    da[i] += g[i] * bd[i];
                }
            });
            add_into(&mut grads[*b], |db| {
                let ad = &nodes[*a].data;
                for i in 0..db.len() {
                    db[i] += g[i] * ad[i];
                }
            });
        }
        Op::AddRow(a, r) => {
            let (m, n) = (rec.rows, rec.cols);
            add_into(&mut grads[*a], |da| {
                for (d, &x) in da.iter_mut().zip(g) {
                    *d += x;
                }
            });
            add_into(&mut grads[*r], |dr| {
                for i in 0..m {
                    for j in 0..n {
                        dr[j] += g[i * n + j];
                    }
                }
            });
        }
        Op::Scale(a, c) => {
            add_into(&mut grads[*a], |da| {
                for (d, &x) in da.iter_mut().zip(g) {
                    *d += c * x;
                }
            });
        }
        Op::ScaleBy(a, s) => {
            let sv = nodes[*s].data[0];
            add_into(&mut grads[*a], |da| {
                for (d, &x) in da.iter_mut().zip(g) {
                    *d += sv * x;
                }
            });
            add_into(&mut grads[*s], |ds| {
                let ad = &nodes[*a].data;
                let mut s = 0.0;
                for i in 0..ad.len() {
                    s += g[i] * ad[i];
                }
                ds[0] += s;
            });
        }
        Op::Recip(a) => {
            add_into(&mut grads[*a], |da| {
                let ad = &nodes[*a].data;
                for i in 0..da.len() {
                    da[i] -= g[i] / (ad[i] * ad[i]);
                }
            });
        }
        Op::Sqrt(a) => {
            let out = &rec.data;
            add_into(&mut grads[*a], |da| {
                for i in 0..da.len() {
                    da[i] += g[i] / (2.0 * out[i]);
                }
            });
        }
        Op::Relu(a) => {
            add_into(&mut grads[*a], |da| {
                let ad = &nodes[*a].data;
                for i in 0..da.len() {
                    if ad[i] > 0.0 {
                        da[i] += g[i];
                    }
                }
            });
        }
        Op::Transpose(a) => {
            let (m, n) = (rec.rows, rec.cols); // output is [m x n] = input [n x m] transposed
            add_into(&mut grads[*a], |da| {
                for i in 0..m {
                    for j in 0..n {
                        da[j * m + i] += g[i * n + j];
                    }
                }
            });
        }
        Op::SoftmaxRows(a) => {
            let (m, n) = (rec.rows, rec.cols);
            let y = &rec.data;
            add_into(&mut grads[*a], |da| {
                for i in 0..m {
                    let row = i * n;
                    let mut dot = 0.0;
                    for j in 0..n {
                        dot += g[row + j] * y[row + j];
                    }
                    for j in 0..n {
                        da[row + j] += y[row + j] * (g[row + j] - dot);
                    }
                }
            });
        }
        Op::LogSumExpRows(a) => {
            let m = rec.rows;
            let n = nodes[*a].cols;
            add_into(&mut grads[*a], |da| {
                let ad = &nodes[*a].data;
                for i in 0..m {
                    let p = crate::tensor::softmax_slice(&ad[i * n..(i + 1) * n]);
                    for j in 0..n {
                        da[i * n + j] += g[i] * p[j];
                    }
                }
            });
        }
        Op::SumAll(a) => {
            add_into(&mut grads[*a], |da| {
                for d in da.iter_mut() {
                    *d += g[0];
                }
            });
        }
        Op::SumRows(a) => {
            let m = rec.rows;
            let n = nodes[*a].cols;
            add_into(&mut grads[*a], |da| {
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] += g[i];
                    }
                }
            });
        }
        Op::MeanRows(a) => {
            let m = nodes[*a].rows;
            let n = rec.cols;
            let inv = 1.0 / m as f64;
            add_into(&mut grads[*a], |da| {
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] += g[j] * inv;
                    }
                }
            });
        }
        Op::TakeDiag(a) => {
            let m = rec.rows;
            let n = nodes[*a].cols;
            add_into(&mut grads[*a], |da| {
                for i in 0..m {
                    da[i * n + i] += g[i];
                }
            });
        }
        Op::ConcatRows(parts) => {
            let cols = rec.cols;
            let mut offset = 0;
            for &p in parts {
                let rows = nodes[p].rows;
                let len = rows * cols;
                add_into(&mut grads[p], |dp| {
                    for i in 0..len {
                        dp[i] += g[offset + i];
                    }
                });
                offset += len;
            }
        }
        Op::ConcatCols(parts) => {
            let rows = rec.rows;
            let total = rec.cols;
            let mut start = 0;
            for &p in parts {
                let w = nodes[p].cols;
                add_into(&mut grads[p], |dp| {
                    for i in 0..rows {
                        for j in 0..w {
                            dp[i * w + j] += g[i * total + start + j];
                        }
                    }
                });
                start += w;
            }
        }
        Op::SliceRows(a, start, count) => {
            let n = rec.cols;
            add_into(&mut grads[*a], |da| {
                for i in 0..*count {
                    for j in 0..n {
                        da[(start + i) * n + j] += g[i * n + j];
                    }
                }
            });
        }
        Op::SliceCols(a, start, count) => {
            let m = rec.rows;
            let n = nodes[*a].cols;
            add_into(&mut grads[*a], |da| {
                for i in 0..m {
                    for j in 0..*count {
                        da[i * n + start + j] += g[i * *count + j];
                    }
                }
            });
        }
        Op::GatherRows(a, ids) => {
            let n = rec.cols;
            add_into(&mut grads[*a], |da| {
                for (out_i, &src) in ids.iter().enumerate() {
                    for j in 0..n {
                        da[src * n + j] += g[out_i * n + j];
                    }
                }
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(g: &Graph, rows: usize, cols: usize, data: Vec<f64>) -> Node {
        g.leaf(
            Tensor::matrix(rows, cols, data)
                .unwrap()
                .with_requires_grad(true),
        )
        .unwrap()
    }

    #[test]
    fn matmul_identity() {
        let g = Graph::new();
        let i2 = g
            .constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        let a = g
            .constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let c = i2.matmul(&a).unwrap();
        assert_eq!(c.value().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_orthogonal_rows() {
        let g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap()).unwrap();
        let b = g.constant(Tensor::matrix(2, 1, vec![0.0, 5.0]).unwrap()).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.value().data(), &[0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = Tensor::randn(3, 4, 1.0, &mut rng);
        let b = Tensor::randn(4, 2, 1.0, &mut rng);
        let g = Graph::new();
        let an = g.constant(a.clone()).unwrap();
        let bn = g.constant(b.clone()).unwrap();
        let c = an.matmul(&bn).unwrap().value();
        // independent element-wise triple loop
        for i in 0..3 {
            for j in 0..2 {
                let mut want = 0.0;
                for p in 0..4 {
                    want += a.get2(i, p) * b.get2(p, j);
                }
                assert!((c.get2(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_is_dimension_error() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(vec![2, 3])).unwrap();
        match a.matmul(&b) {
            Err(CoreError::Shape { op, .. }) => assert_eq!(op, "matmul"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_uniform_input() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![0.0; 5]).unwrap()).unwrap();
        let y = x.softmax_rows().unwrap().value();
        for &v in y.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_inputs_do_not_overflow() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![1000.0, 0.0]).unwrap()).unwrap();
        let y = x.softmax_rows().unwrap().value();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-300);
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let y = x.softmax_rows().unwrap().value();
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (i, &v) in y.data().iter().enumerate() {
            let want = ((i + 1) as f64).exp() / denom;
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let g = Graph::new();
        let x = leaf(&g, 2, 3, vec![1.0, -2.0, 0.5, 4.0, 0.0, 3.0]);
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_of_square_is_two_x() {
        let g = Graph::new();
        let x = leaf(&g, 1, 1, vec![3.0]);
        let loss = x.mul(&x).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let g = Graph::new();
        let x = leaf(&g, 1, 3, vec![1.0, 2.0, 3.0]);
        match x.backward() {
            Err(CoreError::Usage(_)) => {}
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn leaf_grad_sums_contributions_from_all_consumers() {
        // y = sum(x) + sum(x*x): dy/dx = 1 + 2x
        let g = Graph::new();
        let x = leaf(&g, 1, 2, vec![2.0, -3.0]);
        let a = x.sum_all().unwrap();
        let b = x.mul(&x).unwrap().sum_all().unwrap();
        let loss = a.add(&b).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[5.0, -5.0]);
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let g = Graph::new();
        let x = g.constant(Tensor::row(vec![0.0]).unwrap()).unwrap();
        assert!(matches!(x.recip(), Err(CoreError::NonFinite { .. })));
    }

    #[test]
    fn gather_rows_accumulates_repeats() {
        let g = Graph::new();
        let table = leaf(&g, 3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let picked = table.gather_rows(&[1, 1, 0]).unwrap();
        let loss = picked.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(table.grad().unwrap().data(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn mix_rows_matches_matmul_values() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let w = Tensor::randn(3, 4, 1.0, &mut rng);
        let v = Tensor::randn(4, 2, 1.0, &mut rng);
        let g = Graph::new();
        let wn = g.constant(w).unwrap();
        let vn = g.constant(v).unwrap();
        let exact = wn.mix_rows(&vn).unwrap().value();
        let plain = wn.matmul(&vn).unwrap().value();
        for (a, b) in exact.data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn logsumexp_rows_value() {
        let g = Graph::new();
        let x = g
            .constant(Tensor::matrix(2, 2, vec![0.0, 0.0, 1.0, 3.0]).unwrap())
            .unwrap();
        let l = x.logsumexp_rows().unwrap().value();
        assert!((l.data()[0] - 2f64.ln()).abs() < 1e-14);
        assert!((l.data()[1] - (1f64.exp() + 3f64.exp()).ln()).abs() < 1e-12);
    }
}
