//! Recorded computation graph with reverse-mode gradient propagation.
//!
//! A [`Graph`] is an append-only list of nodes. Every forward op pushes a
//! node holding its output value plus whatever it needs for the backward
//! pass; inputs always precede outputs, so a reverse sweep over the node
//! list is a valid topological order.

use super::matrix::{dot, Matrix};
use super::DiffError;

/// Rows whose Euclidean norm falls below this are rejected by
/// [`Graph::l2_normalize_rows`].
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

impl Tensor {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Detach,
    MatMul(Tensor, Tensor),
    MatMulNt(Tensor, Tensor),
    AddRowBias(Tensor, Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Relu(Tensor),
    Scale(Tensor, f64),
    AddScalar(Tensor),
    GatherRows(Tensor, Vec<usize>),
    ConcatRows(Vec<Tensor>),
    Sum(Tensor),
    Mean(Tensor),
    L2NormalizeRows { input: Tensor, norms: Vec<f64> },
    MaskedRowLse { input: Tensor, probs: Matrix },
    WeightedSum { input: Tensor, weights: Matrix },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

/// Append-only record of forward operations.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn check_shape(op: &'static str, a: (usize, usize), b: (usize, usize), ok: bool) -> Result<(), DiffError> {
    if ok {
        Ok(())
    } else {
        Err(DiffError::ShapeMismatch { op, left: a, right: b })
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

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Tensor {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tensor(self.nodes.len() - 1)
    }

    fn rg(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Inserts a leaf. Gradients are accumulated into it if `requires_grad`.
    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Tensor {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn param(&mut self, value: Matrix) -> Tensor {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Tensor {
        self.leaf(value, false)
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        self.nodes[t.0].value.shape()
    }

    /// Accumulated gradient, if backward reached this node.
    pub fn grad(&self, t: Tensor) -> Option<&Matrix> {
        self.nodes[t.0].grad.as_ref()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.rg(t)
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Identity in the forward direction; no gradient crosses it.
    pub fn detach(&mut self, x: Tensor) -> Tensor {
        let value = self.nodes[x.0].value.clone();
        self.push(value, false, Op::Detach)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check_shape("matmul", sa, sb, sa.1 == sb.0)?;
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check_shape("matmul_nt", sa, sb, sa.1 == sb.1)?;
        let value = self.value(a).matmul_nt(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::MatMulNt(a, b)))
    }

    /// Adds the 1×cols row `bias` to every row of `x`.
    pub fn add_row_bias(&mut self, x: Tensor, bias: Tensor) -> Result<Tensor, DiffError> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        check_shape("add_row_bias", sx, sb, sb.0 == 1 && sb.1 == sx.1)?;
        let mut value = self.value(x).clone();
        let b = self.value(bias).as_slice().to_vec();
        for r in 0..sx.0 {
            for (v, bv) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bv;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, rg, Op::AddRowBias(x, bias)))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check_shape("add", sa, sb, sa == sb)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check_shape("sub", sa, sb, sa == sb)?;
        let mut value = self.value(a).clone();
        for (v, w) in value.as_mut_slice().iter_mut().zip(self.value(b).as_slice()) {
            *v -= w;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, rg, Op::Sub(a, b)))
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(x);
        self.push(value, rg, Op::Relu(x))
    }

    pub fn scale(&mut self, x: Tensor, c: f64) -> Tensor {
        let value = self.value(x).map(|v| v * c);
        let rg = self.rg(x);
        self.push(value, rg, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Tensor, c: f64) -> Tensor {
        let value = self.value(x).map(|v| v + c);
        let rg = self.rg(x);
        self.push(value, rg, Op::AddScalar(x))
    }

    pub fn gather_rows(&mut self, x: Tensor, indices: &[usize]) -> Result<Tensor, DiffError> {
        let rows = self.shape(x).0;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(DiffError::IndexOutOfRange { index: bad, len: rows });
        }
        let value = self.value(x).select_rows(indices);
        let rg = self.rg(x);
        Ok(self.push(value, rg, Op::GatherRows(x, indices.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Tensor]) -> Result<Tensor, DiffError> {
        let Some(&first) = parts.first() else {
            return Err(DiffError::Empty("concat_rows"));
        };
        let cols = self.shape(first).1;
        for &p in parts {
            check_shape("concat_rows", self.shape(first), self.shape(p), self.shape(p).1 == cols)?;
        }
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::vstack(&mats);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, rg, Op::ConcatRows(parts.to_vec())))
    }

    pub fn sum(&mut self, x: Tensor) -> Tensor {
        let value = Matrix::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, rg, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Tensor) -> Result<Tensor, DiffError> {
        let m = self.value(x);
        if m.is_empty() {
            return Err(DiffError::Empty("mean"));
        }
        let value = Matrix::scalar(m.sum() / m.len() as f64);
        let rg = self.rg(x);
        Ok(self.push(value, rg, Op::Mean(x)))
    }

    /// Divides every row by its Euclidean norm.
    pub fn l2_normalize_rows(&mut self, x: Tensor) -> Result<Tensor, DiffError> {
        let input = self.value(x);
        let mut value = input.clone();
        let mut norms = Vec::with_capacity(input.rows());
        for r in 0..input.rows() {
            let n = dot(input.row(r), input.row(r)).sqrt();
            if !(n >= NORM_EPS) {
                return Err(DiffError::DegenerateRow { row: r, norm: n });
            }
            for v in value.row_mut(r) {
                *v /= n;
            }
            norms.push(n);
        }
        let rg = self.rg(x);
        Ok(self.push(value, rg, Op::L2NormalizeRows { input: x, norms }))
    }

    /// Per-row log-sum-exp over the entries where `mask` is set; output is
    /// rows×1. Rows with no selected entry produce 0 and pass no gradient.
    pub fn masked_row_lse(&mut self, x: Tensor, mask: &[bool]) -> Result<Tensor, DiffError> {
        let m = self.value(x);
        if mask.len() != m.len() {
            return Err(DiffError::ShapeMismatch {
                op: "masked_row_lse",
                left: m.shape(),
                right: (mask.len(), 1),
            });
        }
        let (rows, cols) = m.shape();
        let mut value = Matrix::zeros(rows, 1);
        let mut probs = Matrix::zeros(rows, cols);
        let mut buf = Vec::with_capacity(cols);
        for r in 0..rows {
            buf.clear();
            let row = m.row(r);
            let row_mask = &mask[r * cols..(r + 1) * cols];
            buf.extend(row.iter().zip(row_mask).filter(|(_, &k)| k).map(|(&v, _)| v));
            if buf.is_empty() {
                continue;
            }
            let lse = log_sum_exp(&buf)?;
            value.set(r, 0, lse);
            let p = probs.row_mut(r);
            for c in 0..cols {
                if row_mask[c] {
                    p[c] = (row[c] - lse).exp();
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(value, rg, Op::MaskedRowLse { input: x, probs }))
    }

    /// Scalar `Σ weights ⊙ x` with constant weights.
    pub fn weighted_sum(&mut self, x: Tensor, weights: Matrix) -> Result<Tensor, DiffError> {
        let sx = self.shape(x);
        check_shape("weighted_sum", sx, weights.shape(), sx == weights.shape())?;
        let v = dot(self.value(x).as_slice(), weights.as_slice());
        let rg = self.rg(x);
        Ok(self.push(Matrix::scalar(v), rg, Op::WeightedSum { input: x, weights }))
    }

    /// Propagates d`loss`/d(node) into every node that requires a gradient.
    /// Gradients accumulate across calls until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Tensor) -> Result<(), DiffError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(DiffError::NonScalarLoss { shape });
        }
        if !self.rg(loss) {
            return Ok(());
        }
        // Seed lives in a fresh buffer so earlier accumulations are not lost.
        let mut pending: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        pending[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = pending[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let contributions = self.input_grads(&node.op, &node.value, &g);
            for (t, dg) in contributions {
                if !self.nodes[t.0].requires_grad {
                    continue;
                }
                match &mut pending[t.0] {
                    Some(acc) => acc.add_assign(&dg),
                    slot @ None => *slot = Some(dg),
                }
            }
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn input_grads(&self, op: &Op, out: &Matrix, g: &Matrix) -> Vec<(Tensor, Matrix)> {
        let val = |t: Tensor| &self.nodes[t.0].value;
        let rg = |t: Tensor| self.nodes[t.0].requires_grad;
        match op {
            Op::Leaf | Op::Detach => vec![],
            Op::MatMul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if rg(*a) {
                    v.push((*a, g.matmul_nt(val(*b))));
                }
                if rg(*b) {
                    v.push((*b, val(*a).matmul_tn(g)));
                }
                v
            }
            Op::MatMulNt(a, b) => {
                // out = a bᵀ: da = g b, db = gᵀ a
                let mut v = Vec::with_capacity(2);
                if rg(*a) {
                    v.push((*a, g.matmul(val(*b))));
                }
                if rg(*b) {
                    v.push((*b, g.matmul_tn(val(*a))));
                }
                v
            }
            Op::AddRowBias(x, b) => {
                let mut db = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (acc, v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *acc += v;
                    }
                }
                vec![(*x, g.clone()), (*b, db)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Relu(x) => {
                let mut d = g.clone();
                for (dv, &o) in d.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    if o <= 0.0 {
                        *dv = 0.0;
                    }
                }
                vec![(*x, d)]
            }
            Op::Scale(x, c) => vec![(*x, g.map(|v| v * c))],
            Op::AddScalar(x) => vec![(*x, g.clone())],
            Op::GatherRows(x, indices) => {
                let src = val(*x);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (k, &i) in indices.iter().enumerate() {
                    for (acc, v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *acc += v;
                    }
                }
                vec![(*x, d)]
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let mut v = Vec::with_capacity(parts.len());
                for &p in parts {
                    let rows = val(p).rows();
                    let idx: Vec<usize> = (offset..offset + rows).collect();
                    v.push((p, g.select_rows(&idx)));
                    offset += rows;
                }
                v
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                vec![(*x, Matrix::filled(r, c, g.item()))]
            }
            Op::Mean(x) => {
                let (r, c) = val(*x).shape();
                vec![(*x, Matrix::filled(r, c, g.item() / (r * c) as f64))]
            }
            Op::L2NormalizeRows { input, norms } => {
                // d(x/|x|) = (g - y (y·g)) / |x|
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let yg = dot(y, gr);
                    let n = norms[r];
                    for ((dv, &yv), &gv) in d.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *dv = (gv - yv * yg) / n;
                    }
                }
                vec![(*input, d)]
            }
            Op::MaskedRowLse { input, probs } => {
                let mut d = probs.clone();
                for r in 0..d.rows() {
                    let gr = g.get(r, 0);
                    for v in d.row_mut(r) {
                        *v *= gr;
                    }
                }
                vec![(*input, d)]
            }
            Op::WeightedSum { input, weights } => {
                let s = g.item();
                vec![(*input, weights.map(|w| w * s))]
            }
        }
    }
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp(v: &[f64]) -> Result<f64, DiffError> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v.is_empty() {
        return Err(DiffError::Empty("log_sum_exp"));
    }
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    Ok(max + s.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::from_rows(&[[3.0, 4.0]]));
        let y = g.l2_normalize_rows(x).unwrap();
        let v = g.value(y);
        assert!((v.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((v.get(0, 1) - 0.8).abs() < 1e-15);

        let x = g.constant(Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]));
        let y = g.l2_normalize_rows(x).unwrap();
        assert_eq!(g.value(y), &Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]));
    }

    #[test]
    fn normalize_rejects_degenerate_row() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]));
        match g.l2_normalize_rows(x) {
            Err(DiffError::DegenerateRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected degenerate row error, got {other:?}"),
        }
    }

    #[test]
    fn lse_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(matches!(log_sum_exp(&[]), Err(DiffError::Empty(_))));
        assert!(log_sum_exp(&[1e4, -1e4]).unwrap().is_finite());
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut g = Graph::new();
        let xv = Matrix::from_rows(&[[1.5, -2.0], [0.25, 3.0]]);
        let x = g.param(xv.clone());
        let w = g.param(Matrix::from_rows(&[[0.5, 1.0], [2.0, -1.0]]));
        let xd = g.detach(x);
        assert_eq!(g.value(xd), &xv);
        let w_t = w;
        // Σ detach(x) ⊙ w
        let loss = g.weighted_sum(w_t, xv.clone()).unwrap();
        let other = g.weighted_sum(xd, Matrix::filled(2, 2, 1.0)).unwrap();
        let total = g.add(loss, other).unwrap();
        g.backward(total).unwrap();
        assert!(g.grad(x).is_none());
        assert_eq!(g.grad(w).unwrap(), &xv);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Matrix::zeros(2, 2));
        assert!(matches!(g.backward(x), Err(DiffError::NonScalarLoss { shape: (2, 2) })));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.param(Matrix::from_rows(&[[0.0, 1.0, -1.0]]));
        let y = g.relu(x);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &Matrix::from_rows(&[[0.0, 1.0, 0.0]]));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut g = Graph::new();
        let a = g.constant(Matrix::zeros(2, 3));
        let b = g.constant(Matrix::zeros(2, 3));
        assert!(matches!(g.matmul(a, b), Err(DiffError::ShapeMismatch { op: "matmul", .. })));
    }

    #[test]
    fn masked_lse_matches_scalar_helper() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::from_rows(&[[0.3, -1.2, 2.7], [5.0, 6.0, 7.0]]));
        let y = g.masked_row_lse(x, &[true, true, true, false, true, false]).unwrap();
        let v = g.value(y);
        assert_eq!(v.get(0, 0), log_sum_exp(&[0.3, -1.2, 2.7]).unwrap());
        assert_eq!(v.get(1, 0), 6.0);
    }
}
