//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every primitive appends one node to the [`Tape`]. A node whose inputs all
//! lack gradient tracking is stored as a constant, so inference passes keep
//! no backward bookkeeping. [`Tape::backward`] walks the tape once in reverse.

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Softmax(usize),
    RowNorm(usize),
    Sum(usize),
    Mean(usize),
    MeanRows(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize, usize),
    GatherRows(usize, Vec<usize>),
    Reshape(usize, Vec<usize>),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Softmax(a)
            | Op::RowNorm(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MeanRows(a)
            | Op::SliceCols(a, _, _)
            | Op::GatherRows(a, _)
            | Op::Reshape(a, _) => vec![*a],
            Op::ConcatCols(v) | Op::ConcatRows(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive operations. Inputs always precede outputs.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every tracked node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `var`; `None` only for untracked (constant) nodes.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tracked input (a parameter or anything to differentiate against).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copy of `v`'s value as an untracked node.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let value = self.eval(&op)?;
        let requires_grad = op.inputs().iter().any(|&i| self.nodes[i].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub(a.0, b.0))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul(a.0, b.0))
    }

    /// Adds a length-`n` vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.record(Op::AddRow(a.0, row.0))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.record(Op::Scale(a.0, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Relu(a.0))
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Softmax(a.0))
    }

    /// L2 norm of each row: `[r, n] -> [r]`, `[n] -> []`.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        self.record(Op::RowNorm(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Mean(a.0))
    }

    /// Mean over rows: `[r, n] -> [n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.record(Op::MeanRows(a.0))
    }

    /// Concatenates along the trailing axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.record(Op::ConcatCols(parts.iter().map(|v| v.0).collect()))
    }

    /// Stacks rows; vectors count as single rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        self.record(Op::ConcatRows(parts.iter().map(|v| v.0).collect()))
    }

    /// Columns `start..end` of the trailing axis.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.record(Op::SliceCols(a.0, start, end))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        self.record(Op::GatherRows(a.0, rows.to_vec()))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.record(Op::Reshape(a.0, shape.to_vec()))
    }

    fn eval(&self, op: &Op) -> Result<Tensor<T>> {
        let val = |i: usize| &self.nodes[i].value;
        match op {
            Op::Leaf => unreachable!("leaves are pushed directly"),
            Op::MatMul(a, b) => {
                let (a, b) = (val(*a), val(*b));
                if a.rank() > 2 || b.rank() != 2 || a.cols() != b.shape()[0] {
                    return Err(shape_err("matmul", a.shape(), b.shape()));
                }
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                let mut out = vec![T::zero(); m * n];
                T::gemm(
                    m,
                    k,
                    n,
                    a.data(),
                    (k as isize, 1),
                    b.data(),
                    (n as isize, 1),
                    &mut out,
                    false,
                );
                let shape = if a.rank() == 1 { vec![n] } else { vec![m, n] };
                Tensor::new(shape, out)
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                if x.shape() != y.shape() {
                    let name = match op {
                        Op::Add(..) => "add",
                        Op::Sub(..) => "sub",
                        _ => "mul",
                    };
                    return Err(shape_err(name, x.shape(), y.shape()));
                }
                let f: fn(T, T) -> T = match op {
                    Op::Add(..) => |p, q| p + q,
                    Op::Sub(..) => |p, q| p - q,
                    _ => |p, q| p * q,
                };
                let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            Op::AddRow(a, r) => {
                let (x, r) = (val(*a), val(*r));
                if r.len() != x.cols() {
                    return Err(shape_err("add_row", x.shape(), r.shape()));
                }
                let n = x.cols();
                let data = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v + r.data()[i % n])
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            Op::Scale(a, c) => {
                let c = T::of(*c);
                Ok(val(*a).map(|v| v * c))
            }
            Op::Sigmoid(a) => Ok(val(*a).map(sigmoid)),
            Op::Tanh(a) => Ok(val(*a).map(|v| v.tanh())),
            Op::Relu(a) => Ok(val(*a).map(|v| if v > T::zero() { v } else { T::zero() })),
            Op::Softmax(a) => {
                let x = val(*a);
                let n = x.cols();
                let mut data = x.data().to_vec();
                if n > 0 {
                    for row in data.chunks_mut(n) {
                        softmax_in_place(row);
                    }
                }
                Tensor::new(x.shape().to_vec(), data)
            }
            Op::RowNorm(a) => {
                let x = val(*a);
                let n = x.cols();
                let data: Vec<T> = (0..x.rows())
                    .map(|r| {
                        let row = &x.data()[r * n..(r + 1) * n];
                        T::of(row.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt())
                    })
                    .collect();
                let shape = if x.rank() <= 1 {
                    vec![]
                } else {
                    x.shape()[..x.rank() - 1].to_vec()
                };
                Tensor::new(shape, data)
            }
            Op::Sum(a) => Ok(Tensor::scalar(val(*a).sum())),
            Op::Mean(a) => {
                let x = val(*a);
                if x.is_empty() {
                    return Err(Error::invalid("mean of an empty tensor"));
                }
                Ok(Tensor::scalar(T::of(x.sum().as_f64() / x.len() as f64)))
            }
            Op::MeanRows(a) => {
                let x = val(*a);
                let (r, n) = (x.rows(), x.cols());
                if r == 0 {
                    return Err(Error::invalid("mean_rows of a tensor with no rows"));
                }
                let mut acc = vec![0f64; n];
                for i in 0..r {
                    for (j, v) in x.row(i).iter().enumerate() {
                        acc[j] += v.as_f64();
                    }
                }
                Ok(Tensor::vector(
                    acc.into_iter().map(|s| T::of(s / r as f64)).collect(),
                ))
            }
            Op::ConcatCols(parts) => {
                let first = val(parts[0]);
                let r = first.rows();
                let rank = first.rank().max(1);
                let mut total = 0;
                for &p in parts {
                    let t = val(p);
                    if t.rows() != r || t.rank().max(1) != rank {
                        return Err(shape_err("concat_cols", first.shape(), t.shape()));
                    }
                    total += t.cols();
                }
                let mut data = Vec::with_capacity(r * total);
                for i in 0..r {
                    for &p in parts {
                        data.extend_from_slice(val(p).row(i));
                    }
                }
                let mut shape = first.shape().to_vec();
                if shape.is_empty() {
                    shape.push(total);
                } else {
                    *shape.last_mut().unwrap() = total;
                }
                Tensor::new(shape, data)
            }
            Op::ConcatRows(parts) => {
                let first = val(parts[0]);
                let n = first.cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = val(p);
                    if t.cols() != n || t.rank() > 2 {
                        return Err(shape_err("concat_rows", first.shape(), t.shape()));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::new(vec![rows, n], data)
            }
            Op::SliceCols(a, s, e) => {
                let x = val(*a);
                if s > e || *e > x.cols() {
                    return Err(shape_err("slice_cols", x.shape(), &[*s, *e]));
                }
                let mut data = Vec::with_capacity(x.rows() * (e - s));
                for i in 0..x.rows() {
                    data.extend_from_slice(&x.row(i)[*s..*e]);
                }
                let mut shape = x.shape().to_vec();
                *shape.last_mut().unwrap() = e - s;
                Tensor::new(shape, data)
            }
            Op::GatherRows(a, rows) => {
                let x = val(*a);
                if x.rank() != 2 {
                    return Err(shape_err("gather_rows", x.shape(), &[rows.len()]));
                }
                if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
                    return Err(shape_err("gather_rows", x.shape(), &[bad]));
                }
                Ok(x.select_rows(rows))
            }
            Op::Reshape(a, shape) => val(*a).clone().reshape(shape.clone()),
        }
    }

    /// Recomputes every recorded operation from the leaves.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>> {
        let mut fresh = Tape {
            nodes: Vec::with_capacity(self.nodes.len()),
        };
        for node in &self.nodes {
            let value = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => fresh.eval(op)?,
            };
            fresh.nodes.push(Node {
                value,
                op: node.op.clone(),
                requires_grad: node.requires_grad,
            });
        }
        Ok(fresh.nodes.into_iter().map(|n| n.value).collect())
    }

    /// Gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::filled(loss_value.shape().to_vec(), T::one()));
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
            if !node.requires_grad {
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let val = |i: usize| &self.nodes[i].value;
        let tracked = |i: usize| self.nodes[i].requires_grad;
        let mut acc = |i: usize, delta: Vec<T>| {
            if !self.nodes[i].requires_grad {
                return;
            }
            match &mut grads[i] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(delta) {
                        *e = *e + d;
                    }
                }
                slot @ None => {
                    *slot = Some(
                        Tensor::new(self.nodes[i].value.shape().to_vec(), delta)
                            .expect("gradient shape matches its node"),
                    );
                }
            }
        };
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, w) = (val(*a), val(*b));
                let (m, k, n) = (x.rows(), x.cols(), w.cols());
                if tracked(*a) {
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(m, n, k, gd, (n as isize, 1), w.data(), (1, n as isize), &mut da, false);
                    acc(*a, da);
                }
                if tracked(*b) {
                    let mut db = vec![T::zero(); k * n];
                    T::gemm(k, m, n, x.data(), (1, k as isize), gd, (n as isize, 1), &mut db, false);
                    acc(*b, db);
                }
            }
            Op::Add(a, b) => {
                acc(*a, gd.to_vec());
                acc(*b, gd.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, gd.to_vec());
                acc(*b, gd.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                if tracked(*a) {
                    acc(*a, gd.iter().zip(y.data()).map(|(&g, &y)| g * y).collect());
                }
                if tracked(*b) {
                    acc(*b, gd.iter().zip(x.data()).map(|(&g, &x)| g * x).collect());
                }
            }
            Op::AddRow(a, r) => {
                acc(*a, gd.to_vec());
                if tracked(*r) {
                    let n = val(*r).len();
                    let mut dr = vec![T::zero(); n];
                    for (i, &v) in gd.iter().enumerate() {
                        dr[i % n] = dr[i % n] + v;
                    }
                    acc(*r, dr);
                }
            }
            Op::Scale(a, c) => {
                let c = T::of(*c);
                acc(*a, gd.iter().map(|&v| v * c).collect());
            }
            Op::Sigmoid(a) => {
                let one = T::one();
                acc(*a, gd.iter().zip(out.data()).map(|(&g, &y)| g * y * (one - y)).collect());
            }
            Op::Tanh(a) => {
                let one = T::one();
                acc(*a, gd.iter().zip(out.data()).map(|(&g, &y)| g * (one - y * y)).collect());
            }
            Op::Relu(a) => {
                let x = val(*a);
                acc(
                    *a,
                    gd.iter()
                        .zip(x.data())
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect(),
                );
            }
            Op::Softmax(a) => {
                let n = out.cols();
                let mut dx = vec![T::zero(); out.len()];
                if n > 0 {
                    for ((dxr, yr), gr) in dx.chunks_mut(n).zip(out.data().chunks(n)).zip(gd.chunks(n)) {
                        let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&y, &g)| s + y * g);
                        for j in 0..n {
                            dxr[j] = yr[j] * (gr[j] - dot);
                        }
                    }
                }
                acc(*a, dx);
            }
            Op::RowNorm(a) => {
                let x = val(*a);
                let n = x.cols();
                let mut dx = vec![T::zero(); x.len()];
                for r in 0..x.rows() {
                    let norm = out.data()[r];
                    if norm > T::zero() {
                        let scale = gd[r] / norm;
                        for j in 0..n {
                            dx[r * n + j] = x.data()[r * n + j] * scale;
                        }
                    }
                }
                acc(*a, dx);
            }
            Op::Sum(a) => acc(*a, vec![gd[0]; val(*a).len()]),
            Op::Mean(a) => {
                let len = val(*a).len();
                acc(*a, vec![gd[0] / T::of(len as f64); len]);
            }
            Op::MeanRows(a) => {
                let x = val(*a);
                let (r, n) = (x.rows(), x.cols());
                let inv = T::of(1.0 / r as f64);
                let mut dx = Vec::with_capacity(r * n);
                for _ in 0..r {
                    dx.extend(gd.iter().map(|&v| v * inv));
                }
                acc(*a, dx);
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let t = val(p);
                    let w = t.cols();
                    if tracked(p) {
                        let mut dp = Vec::with_capacity(t.len());
                        for i in 0..t.rows() {
                            dp.extend_from_slice(&gd[i * total + offset..i * total + offset + w]);
                        }
                        acc(p, dp);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    acc(p, gd[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::SliceCols(a, s, e) => {
                let x = val(*a);
                let n = x.cols();
                let w = e - s;
                let mut dx = vec![T::zero(); x.len()];
                for i in 0..x.rows() {
                    dx[i * n + s..i * n + e].copy_from_slice(&gd[i * w..(i + 1) * w]);
                }
                acc(*a, dx);
            }
            Op::GatherRows(a, rows) => {
                let x = val(*a);
                let n = x.cols();
                let mut dx = vec![T::zero(); x.len()];
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..n {
                        dx[r * n + j] = dx[r * n + j] + gd[k * n + j];
                    }
                }
                acc(*a, dx);
            }
            Op::Reshape(a, _) => acc(*a, gd.to_vec()),
        }
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Max-subtracted softmax over a slice.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = 0f64;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += v.as_f64();
    }
    let inv = T::of(1.0 / total);
    for v in row.iter_mut() {
        *v = *v * inv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn primitive_examples() {
        let mut tape = Tape::<f32>::new();
        let z = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let s = tape.softmax(z).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);

        let zero = tape.constant(Tensor::scalar(0.0));
        let sg = tape.sigmoid(zero).unwrap();
        assert_eq!(tape.value(sg).item(), 0.5);

        let r = tape.constant(Tensor::vector(vec![-1.0, 2.0]));
        let r = tape.relu(r).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![2, 3]));
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
        let c = tape.constant(Tensor::zeros(vec![3]));
        let msg = tape.add(a, c).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn square_derivative() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.sigmoid(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 0.25);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unreachable_leaf_has_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let unused = tape.leaf(t(&[2, 2], &[1.0; 4]));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(unused).unwrap(), &Tensor::zeros(vec![2, 2]));
    }

    #[test]
    fn constants_are_not_tracked() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::scalar(1.0));
        let b = tape.sigmoid(a).unwrap();
        assert!(!tape.requires_grad(b));
        let x = tape.leaf(Tensor::scalar(1.0));
        let c = tape.add(a, x).unwrap();
        assert!(tape.requires_grad(c));
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::matrix(2, 3, vec![0.1, -0.4, 0.9, 1.3, -2.0, 0.25]).unwrap());
        let w = tape.leaf(Tensor::matrix(3, 2, vec![0.3, 0.1, -0.7, 0.2, 0.5, 0.5]).unwrap());
        let h = tape.matmul(x, w).unwrap();
        let h = tape.tanh(h).unwrap();
        let s = tape.softmax(h).unwrap();
        let n = tape.row_norm(s).unwrap();
        let _ = tape.mean(n).unwrap();
        let replayed = tape.replay().unwrap();
        for (i, v) in replayed.iter().enumerate() {
            assert_eq!(v.data(), tape.value(Var(i)).data());
        }
    }
}
