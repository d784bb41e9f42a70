use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Boolean exclusion mask for [`Tape::logsumexp_rows_masked`]; `true` entries
/// are left out of the row reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMask {
    rows: usize,
    cols: usize,
    excluded: Vec<bool>,
}

impl RowMask {
    pub fn none(rows: usize, cols: usize) -> Self {
        RowMask {
            rows,
            cols,
            excluded: vec![false; rows * cols],
        }
    }

    /// Excludes the listed columns of each row.
    pub fn from_row_indices(rows: usize, cols: usize, idx: &[Vec<usize>]) -> Self {
        let mut m = RowMask::none(rows, cols);
        for (r, cols_r) in idx.iter().enumerate() {
            for &c in cols_r {
                m.exclude(r, c);
            }
        }
        m
    }

    pub fn exclude(&mut self, r: usize, c: usize) {
        self.excluded[r * self.cols + c] = true;
    }

    pub fn is_excluded(&self, r: usize, c: usize) -> bool {
        self.excluded[r * self.cols + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Vector-Jacobian product of a user-supplied unary op:
/// `(input, output, output_grad) -> input_grad`.
pub type CustomVjp = Arc<dyn Fn(&Mat, &Mat, &Mat) -> Mat + Send + Sync>;

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    RowL2Normalize { a: Var, norms: Vec<f64>, eps: f64 },
    SoftmaxRows(Var),
    LogSumExpRowsMasked { a: Var, weights: Mat },
    MeanSelectedRows { a: Var, idx: Arc<Vec<Vec<usize>>> },
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Sum(Var),
    FrobeniusSq(Var),
    GatherRows { a: Var, idx: Vec<usize> },
    ScaleCols { a: Var, v: Var },
    RightMulConst { a: Var, k: Arc<Mat> },
    LeftMulConst { k: Arc<Mat>, a: Var },
    Custom { a: Var, vjp: CustomVjp },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::Scale(..) => "scale",
            Op::RowL2Normalize { .. } => "row_l2_normalize",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::LogSumExpRowsMasked { .. } => "logsumexp_rows_masked",
            Op::MeanSelectedRows { .. } => "mean_topk_rows",
            Op::Relu(..) => "relu",
            Op::Softplus(..) => "softplus",
            Op::Exp(..) => "exp",
            Op::Sum(..) => "sum",
            Op::FrobeniusSq(..) => "frobenius_sq",
            Op::GatherRows { .. } => "gather_rows",
            Op::ScaleCols { .. } => "scale_cols",
            Op::RightMulConst { .. } => "right_mul_const",
            Op::LeftMulConst { .. } => "left_mul_const",
            Op::Custom { .. } => "custom",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Mat,
    grad: Option<Mat>,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass of dense-matrix operations and replays it in
/// reverse to accumulate gradients on leaves.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order of the graph. Every op checks shapes up front and
/// rejects non-finite results.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn top_p_indices(row: impl Iterator<Item = f64>, p: usize) -> Vec<usize> {
    let vals: Vec<f64> = row.collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    // descending value, lower index first on ties
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    order.truncate(p);
    order
}

/// Column indices of the `p` largest entries of each row, in descending
/// order of value; ties go to the lower column index.
pub fn topk_rows(m: &Mat, p: usize) -> Vec<Vec<usize>> {
    (0..m.nrows())
        .map(|r| top_p_indices(m.row(r).iter().copied(), p))
        .collect()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node; outstanding `Var`s become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// A trainable input.
    pub fn leaf(&mut self, value: Mat) -> Result<Var> {
        self.push_checked("leaf", value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Mat) -> Result<Var> {
        self.push_checked("constant", value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    /// Accumulated gradient of a leaf, if `backward` has reached it.
    pub fn grad(&self, v: Var) -> Option<&Mat> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push_checked(&mut self, name: &str, value: Mat, op: Op, requires_grad: bool) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: name.to_string() });
        }
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push(&mut self, value: Mat, op: Op, parents: &[Var]) -> Result<Var> {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let name = format!("{op:?}");
        self.push_checked(&name, value, op, requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
        }
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let v = self.value(a).component_mul(self.value(b));
        self.push(v, Op::Hadamard(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c), &[a])
    }

    /// Divides each row by `max(||row||, eps)`.
    pub fn row_l2_normalize(&mut self, a: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::invalid("row_l2_normalize needs eps > 0"));
        }
        let x = self.value(a);
        let norms: Vec<f64> = x.row_iter().map(|r| r.norm()).collect();
        let mut v = x.clone();
        for (i, &n) in norms.iter().enumerate() {
            v.row_mut(i).scale_mut(1.0 / n.max(eps));
        }
        self.push(v, Op::RowL2Normalize { a, norms, eps }, &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        for mut row in v.row_iter_mut() {
            let m = row.max();
            row.apply(|x| *x = (*x - m).exp());
            let s = row.sum();
            row /= s;
        }
        self.push(v, Op::SoftmaxRows(a), &[a])
    }

    /// Max-shifted `log sum exp` over the non-excluded entries of each row;
    /// returns a column vector.
    pub fn logsumexp_rows_masked(&mut self, a: Var, mask: &RowMask) -> Result<Var> {
        let x = self.value(a);
        if mask.shape() != x.shape() {
            return Err(Error::ShapeMismatch {
                op: "logsumexp_rows_masked",
                lhs: x.shape(),
                rhs: mask.shape(),
            });
        }
        let (rows, cols) = x.shape();
        let mut out = Mat::zeros(rows, 1);
        let mut weights = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut m = f64::NEG_INFINITY;
            for c in 0..cols {
                if !mask.is_excluded(r, c) {
                    m = m.max(x[(r, c)]);
                }
            }
            if m == f64::NEG_INFINITY {
                return Err(Error::invalid(format!(
                    "logsumexp_rows_masked: row {r} is fully masked"
                )));
            }
            let mut s = 0.0;
            for c in 0..cols {
                if !mask.is_excluded(r, c) {
                    let e = (x[(r, c)] - m).exp();
                    weights[(r, c)] = e;
                    s += e;
                }
            }
            for c in 0..cols {
                weights[(r, c)] /= s;
            }
            out[(r, 0)] = m + s.ln();
        }
        self.push(out, Op::LogSumExpRowsMasked { a, weights }, &[a])
    }

    /// Mean of each row's `p` largest entries, as a column vector. The
    /// selection is treated as constant by `backward`.
    pub fn mean_topk_rows(&mut self, a: Var, p: usize) -> Result<Var> {
        let cols = self.shape(a).1;
        if p == 0 || p > cols {
            return Err(Error::invalid(format!("mean_topk_rows: p = {p} with {cols} columns")));
        }
        let idx = topk_rows(self.value(a), p);
        self.mean_selected_rows(a, Arc::new(idx))
    }

    /// Mean over the given column indices of each row, as a column vector.
    pub fn mean_selected_rows(&mut self, a: Var, idx: Arc<Vec<Vec<usize>>>) -> Result<Var> {
        let x = self.value(a);
        if idx.len() != x.nrows() {
            return Err(Error::ShapeMismatch {
                op: "mean_topk_rows",
                lhs: x.shape(),
                rhs: (idx.len(), 0),
            });
        }
        let mut out = Mat::zeros(x.nrows(), 1);
        for (r, cols) in idx.iter().enumerate() {
            if cols.is_empty() || cols.iter().any(|&c| c >= x.ncols()) {
                return Err(Error::invalid(format!("mean_topk_rows: bad selection in row {r}")));
            }
            out[(r, 0)] = cols.iter().map(|&c| x[(r, c)]).sum::<f64>() / cols.len() as f64;
        }
        self.push(out, Op::MeanSelectedRows { a, idx }, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Mat::from_element(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var> {
        let v = Mat::from_element(1, 1, self.value(a).norm_squared());
        self.push(v, Op::FrobeniusSq(a), &[a])
    }

    /// Row `r` of the result is row `idx[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.nrows()) {
            return Err(Error::invalid(format!("gather_rows: row {bad} of {}", x.nrows())));
        }
        let v = Mat::from_fn(idx.len(), x.ncols(), |r, c| x[(idx[r], c)]);
        self.push(v, Op::GatherRows { a, idx: idx.to_vec() }, &[a])
    }

    /// Multiplies column `j` of `a` by entry `j` of the `1 x cols` row `v`.
    pub fn scale_cols(&mut self, a: Var, v: Var) -> Result<Var> {
        let (sa, sv) = (self.shape(a), self.shape(v));
        if sv != (1, sa.1) {
            return Err(Error::ShapeMismatch { op: "scale_cols", lhs: sa, rhs: sv });
        }
        let mut out = self.value(a).clone();
        let s = self.value(v);
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= s[(0, j)];
        }
        self.push(out, Op::ScaleCols { a, v }, &[a, v])
    }

    /// `a * k` for a constant `k`.
    pub fn right_mul_const(&mut self, a: Var, k: Arc<Mat>) -> Result<Var> {
        let sa = self.shape(a);
        if sa.1 != k.nrows() {
            return Err(Error::ShapeMismatch { op: "right_mul_const", lhs: sa, rhs: k.shape() });
        }
        let v = self.value(a) * &*k;
        self.push(v, Op::RightMulConst { a, k }, &[a])
    }

    /// `k * a` for a constant `k`.
    pub fn left_mul_const(&mut self, k: Arc<Mat>, a: Var) -> Result<Var> {
        let sa = self.shape(a);
        if k.ncols() != sa.0 {
            return Err(Error::ShapeMismatch { op: "left_mul_const", lhs: k.shape(), rhs: sa });
        }
        let v = &*k * self.value(a);
        self.push(v, Op::LeftMulConst { k, a }, &[a])
    }

    /// Unary op with caller-supplied forward value and vector-Jacobian product.
    pub fn custom(&mut self, a: Var, forward: impl Fn(&Mat) -> Mat, vjp: CustomVjp) -> Result<Var> {
        let v = forward(self.value(a));
        self.push(v, Op::Custom { a, vjp }, &[a])
    }

    /// Propagates `d root / d node` to every leaf that requires a gradient.
    ///
    /// Leaf gradients accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.shape(root),
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Mat>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Mat::from_element(1, 1, 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let slot = &mut self.nodes[i].grad;
                match slot {
                    Some(acc) => *acc += &g,
                    None => *slot = Some(g),
                }
                continue;
            }
            for (parent, contrib) in self.vjp(i, &g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                if contrib.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        op: format!("backward of {:?}", self.nodes[i].op),
                    });
                }
                match &mut grads[parent.0] {
                    Some(acc) => *acc += contrib,
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn vjp(&self, i: usize, g: &Mat) -> Vec<(Var, Mat)> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if needs(*a) {
                    out.push((*a, g * val(*b).transpose()));
                }
                if needs(*b) {
                    out.push((*b, val(*a).transpose() * g));
                }
                out
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, -g)],
            Op::Hadamard(a, b) => vec![
                (*a, g.component_mul(val(*b))),
                (*b, g.component_mul(val(*a))),
            ],
            Op::Scale(a, c) => vec![(*a, g * *c)],
            Op::RowL2Normalize { a, norms, eps } => {
                let y = &node.value;
                let mut d = g.clone();
                for (r, &n) in norms.iter().enumerate() {
                    if n > *eps {
                        let proj = y.row(r).dot(&g.row(r));
                        let yr = y.row(r).into_owned();
                        let mut dr = d.row_mut(r);
                        dr -= yr * proj;
                        dr /= n;
                    } else {
                        d.row_mut(r).scale_mut(1.0 / eps);
                    }
                }
                vec![(*a, d)]
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = g.component_mul(y);
                for r in 0..d.nrows() {
                    let s = d.row(r).sum();
                    let yr = y.row(r).into_owned();
                    let mut dr = d.row_mut(r);
                    dr -= yr * s;
                }
                vec![(*a, d)]
            }
            Op::LogSumExpRowsMasked { a, weights } => {
                let mut d = weights.clone();
                for r in 0..d.nrows() {
                    d.row_mut(r).scale_mut(g[(r, 0)]);
                }
                vec![(*a, d)]
            }
            Op::MeanSelectedRows { a, idx } => {
                let mut d = Mat::zeros(val(*a).nrows(), val(*a).ncols());
                for (r, cols) in idx.iter().enumerate() {
                    let w = g[(r, 0)] / cols.len() as f64;
                    for &c in cols {
                        d[(r, c)] += w;
                    }
                }
                vec![(*a, d)]
            }
            Op::Relu(a) => {
                let x = val(*a);
                vec![(*a, g.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 }))]
            }
            Op::Softplus(a) => vec![(*a, g.zip_map(val(*a), |g, x| g * sigmoid(x)))],
            Op::Exp(a) => vec![(*a, g.component_mul(&node.value))],
            Op::Sum(a) => {
                let x = val(*a);
                vec![(*a, Mat::from_element(x.nrows(), x.ncols(), g[(0, 0)]))]
            }
            Op::FrobeniusSq(a) => vec![(*a, val(*a) * (2.0 * g[(0, 0)]))],
            Op::GatherRows { a, idx } => {
                let x = val(*a);
                let mut d = Mat::zeros(x.nrows(), x.ncols());
                for (r, &src) in idx.iter().enumerate() {
                    let gr = g.row(r);
                    let mut dr = d.row_mut(src);
                    dr += gr;
                }
                vec![(*a, d)]
            }
            Op::ScaleCols { a, v } => {
                let x = val(*a);
                let s = val(*v);
                let mut out = Vec::with_capacity(2);
                if needs(*a) {
                    let mut d = g.clone();
                    for (j, mut col) in d.column_iter_mut().enumerate() {
                        col *= s[(0, j)];
                    }
                    out.push((*a, d));
                }
                if needs(*v) {
                    let dv = Mat::from_fn(1, x.ncols(), |_, j| g.column(j).dot(&x.column(j)));
                    out.push((*v, dv));
                }
                out
            }
            Op::RightMulConst { a, k } => vec![(*a, g * k.transpose())],
            Op::LeftMulConst { k, a } => vec![(*a, k.transpose() * g)],
            Op::Custom { a, vjp } => vec![(*a, vjp(val(*a), &node.value, g))],
        }
    }
}
