//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! Nodes only ever reference earlier nodes, so a single reverse sweep in
//! [`Tape::backward`] visits them in a valid topological order. The tape is
//! built fresh for every training step and differentiated once.
//!
//! ```
//! use dara::numerics::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::from_rows(&[&[1.0, -2.0]]));
//! let loss = tape.frobenius_sq(x);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &Matrix::from_rows(&[&[2.0, -4.0]]));
//! ```

use crate::error::{DaraError, Result};
use crate::numerics::{Cholesky, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// Reduction axes for [`Tape::mean_over`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Average over rows, producing `1 x cols`.
    Rows,
    /// Average over columns, producing `rows x 1`.
    Cols,
    /// Average over everything, producing `1 x 1`.
    All,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    ScaleBy(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Powf(usize, f64),
    RowSoftmax(usize),
    RowLogSoftmax(usize),
    FrobeniusSq(usize),
    Sum(usize),
    Cosine(usize, usize),
    Mean(usize, Axis),
    Solve { a: usize, b: usize, chol: Cholesky },
    VStack(Vec<usize>),
    HStack(Vec<usize>),
    SliceRows(usize, usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Operation record for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros when the loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var) -> Matrix {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(var.rows, var.cols))
    }

    pub fn take(&mut self, var: Var) -> Option<Matrix> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

fn same_shape(op: &'static str, a: Var, b: Var) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(DaraError::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for i in 0..m.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    out
}

fn softmax_row(input: &[f64], out: &mut [f64]) {
    let max = input.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(input) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.id].value
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        let (rows, cols) = value.shape();
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var {
            id: self.nodes.len() - 1,
            rows,
            cols,
        }
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.id].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a.id, b.id), value, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(Op::Transpose(a.id), value, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a.id, b.id), value, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a.id, b.id), value, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a.id, b.id), value, rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(Op::Scale(a.id, s), value, rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|v| v + s);
        let rg = self.rg(a);
        self.push(Op::AddScalar(a.id), value, rg)
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(DaraError::shape("add_row", a.shape(), row.shape()));
        }
        let r = self.value(row).clone();
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(r.data()) {
                *v += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Op::AddRow(a.id, row.id), value, rg))
    }

    /// Multiplies every row of `a` elementwise by a `1 x cols` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(DaraError::shape("mul_row", a.shape(), row.shape()));
        }
        let r = self.value(row).clone();
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(r.data()) {
                *v *= b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Op::MulRow(a.id, row.id), value, rg))
    }

    /// Scales `a` by the value of a `1 x 1` node.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if s.shape() != (1, 1) {
            return Err(DaraError::shape("scale_by", a.shape(), s.shape()));
        }
        let value = self.value(a).scale(self.value(s).item());
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(Op::ScaleBy(a.id, s.id), value, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(Op::Relu(a.id), value, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a.id), value, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(Op::Exp(a.id), value, rg)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(Op::Ln(a.id), value, rg)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let value = self.value(a).map(|v| v.powf(p));
        let rg = self.rg(a);
        self.push(Op::Powf(a.id, p), value, rg)
    }

    /// Softmax of every row, with per-row max subtraction.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let value = row_softmax(self.value(a));
        let rg = self.rg(a);
        self.push(Op::RowSoftmax(a.id), value, rg)
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Var {
        let input = self.value(a);
        let mut value = input.clone();
        for i in 0..input.rows() {
            let row = input.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in value.row_mut(i) {
                *v -= lse;
            }
        }
        let rg = self.rg(a);
        self.push(Op::RowLogSoftmax(a.id), value, rg)
    }

    /// Sum of squared entries, as `1 x 1`.
    pub fn frobenius_sq(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).frobenius_sq());
        let rg = self.rg(a);
        self.push(Op::FrobeniusSq(a.id), value, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(Op::Sum(a.id), value, rg)
    }

    /// Cosine similarity of two equally shaped nodes, treated as flat vectors.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("cosine", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let dot: f64 = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).sum();
        let value = Matrix::scalar(dot / (va.frobenius_sq() * vb.frobenius_sq()).sqrt());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Cosine(a.id, b.id), value, rg))
    }

    pub fn mean_over(&mut self, a: Var, axis: Axis) -> Var {
        let value = mean_over(self.value(a), axis);
        let rg = self.rg(a);
        self.push(Op::Mean(a.id, axis), value, rg)
    }

    /// `x = a^{-1} b` for SPD `a`, via Cholesky. The forward value is the
    /// same computation as [`crate::numerics::solve_spd`].
    pub fn solve_through(&mut self, a: Var, b: Var) -> Result<Var> {
        let chol = Cholesky::factor(self.value(a))?;
        let value = chol.solve(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Op::Solve {
                a: a.id,
                b: b.id,
                chol,
            },
            value,
            rg,
        ))
    }

    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|p| self.value(*p)).collect();
        let value = Matrix::vstack(&mats)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Op::VStack(parts.iter().map(|p| p.id).collect()), value, rg))
    }

    pub fn hstack(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(DaraError::shape("hstack", (rows, 0), bad.shape()));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let m = self.value(*p);
            for i in 0..rows {
                value.row_mut(i)[offset..offset + p.cols].copy_from_slice(m.row(i));
            }
            offset += p.cols;
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Op::HStack(parts.iter().map(|p| p.id).collect()), value, rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > a.rows {
            return Err(DaraError::shape("slice_rows", a.shape(), (start + len, a.cols)));
        }
        let value = self.value(a).slice_rows(start, len);
        let rg = self.rg(a);
        Ok(self.push(Op::SliceRows(a.id, start), value, rg))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).reshape(rows, cols)?;
        let rg = self.rg(a);
        Ok(self.push(Op::Reshape(a.id), value, rg))
    }

    /// Reverse sweep from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.shape() != (1, 1) {
            return Err(DaraError::NonScalarLoss {
                rows: loss.rows,
                cols: loss.cols,
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Matrix::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let y = &node.value;
            let acc = |target: usize, delta: Matrix, grads: &mut Vec<Option<Matrix>>| {
                if !self.nodes[target].requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(existing) => existing.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            let val = |i: usize| &self.nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.nodes[*a].requires_grad {
                        acc(*a, g.matmul_t(val(*b))?, &mut grads);
                    }
                    if self.nodes[*b].requires_grad {
                        acc(*b, val(*a).t_matmul(&g)?, &mut grads);
                    }
                }
                Op::Transpose(a) => acc(*a, g.transpose(), &mut grads),
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.scale(-1.0), &mut grads);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.hadamard(val(*b))?, &mut grads);
                    acc(*b, g.hadamard(val(*a))?, &mut grads);
                }
                Op::Scale(a, s) => acc(*a, g.scale(*s), &mut grads),
                Op::AddScalar(a) => acc(*a, g, &mut grads),
                Op::AddRow(a, row) => {
                    acc(*row, column_sums(&g), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::MulRow(a, row) => {
                    if self.nodes[*row].requires_grad {
                        acc(*row, column_sums(&g.hadamard(val(*a))?), &mut grads);
                    }
                    let r = val(*row);
                    let mut ga = g;
                    for i in 0..ga.rows() {
                        for (v, b) in ga.row_mut(i).iter_mut().zip(r.data()) {
                            *v *= b;
                        }
                    }
                    acc(*a, ga, &mut grads);
                }
                Op::ScaleBy(a, s) => {
                    if self.nodes[*s].requires_grad {
                        let ds = g.hadamard(val(*a))?.sum();
                        acc(*s, Matrix::scalar(ds), &mut grads);
                    }
                    acc(*a, g.scale(val(*s).item()), &mut grads);
                }
                Op::Relu(a) => {
                    let d = g.zip_map(val(*a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                    acc(*a, d, &mut grads);
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_map(y, "sigmoid", |g, s| g * s * (1.0 - s))?;
                    acc(*a, d, &mut grads);
                }
                Op::Exp(a) => acc(*a, g.hadamard(y)?, &mut grads),
                Op::Ln(a) => {
                    let d = g.zip_map(val(*a), "ln", |g, x| g / x)?;
                    acc(*a, d, &mut grads);
                }
                Op::Powf(a, p) => {
                    let p = *p;
                    let d = g.zip_map(val(*a), "powf", |g, x| g * p * x.powf(p - 1.0))?;
                    acc(*a, d, &mut grads);
                }
                Op::RowSoftmax(a) => {
                    let mut d = g;
                    for i in 0..d.rows() {
                        let yi = y.row(i);
                        let dot: f64 = d.row(i).iter().zip(yi).map(|(g, s)| g * s).sum();
                        for (v, s) in d.row_mut(i).iter_mut().zip(yi) {
                            *v = s * (*v - dot);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::RowLogSoftmax(a) => {
                    let mut d = g;
                    for i in 0..d.rows() {
                        let total: f64 = d.row(i).iter().sum();
                        for (v, lp) in d.row_mut(i).iter_mut().zip(y.row(i)) {
                            *v -= lp.exp() * total;
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::FrobeniusSq(a) => acc(*a, val(*a).scale(2.0 * g.item()), &mut grads),
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Matrix::filled(r, c, g.item()), &mut grads);
                }
                Op::Cosine(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    let (na, nb) = (va.frobenius_sq().sqrt(), vb.frobenius_sq().sqrt());
                    let c = y.item();
                    let gs = g.item();
                    let da = vb
                        .scale(1.0 / (na * nb))
                        .sub(&va.scale(c / (na * na)))?
                        .scale(gs);
                    let db = va
                        .scale(1.0 / (na * nb))
                        .sub(&vb.scale(c / (nb * nb)))?
                        .scale(gs);
                    acc(*a, da, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::Mean(a, axis) => {
                    let (r, c) = val(*a).shape();
                    let d = match axis {
                        Axis::Rows => Matrix::from_fn(r, c, |_, j| g[(0, j)] / r as f64),
                        Axis::Cols => Matrix::from_fn(r, c, |i, _| g[(i, 0)] / c as f64),
                        Axis::All => Matrix::filled(r, c, g.item() / (r * c) as f64),
                    };
                    acc(*a, d, &mut grads);
                }
                Op::Solve { a, b, chol } => {
                    // grad_b = a^{-1} g ; grad_a = -grad_b x^T, symmetrized
                    let gb = chol.solve(&g)?;
                    if self.nodes[*a].requires_grad {
                        let outer = gb.matmul_t(y)?;
                        let ga = outer.add(&outer.transpose())?.scale(-0.5);
                        acc(*a, ga, &mut grads);
                    }
                    acc(*b, gb, &mut grads);
                }
                Op::VStack(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = val(*p).rows();
                        acc(*p, g.slice_rows(offset, rows), &mut grads);
                        offset += rows;
                    }
                }
                Op::HStack(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = val(*p).shape();
                        let piece = Matrix::from_fn(rows, cols, |i, j| g[(i, offset + j)]);
                        acc(*p, piece, &mut grads);
                        offset += cols;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = val(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..g.rows() {
                        d.row_mut(start + i).copy_from_slice(g.row(i));
                    }
                    acc(*a, d, &mut grads);
                }
                Op::Reshape(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, g.reshape(r, c)?, &mut grads);
                }
            }
        }
        Ok(Gradients { grads })
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

/// Row-wise softmax with max subtraction.
pub fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..m.rows() {
        softmax_row(m.row(i), out.row_mut(i));
    }
    out
}

pub fn mean_over(m: &Matrix, axis: Axis) -> Matrix {
    let (r, c) = m.shape();
    match axis {
        Axis::Rows => column_sums(m).scale(1.0 / r as f64),
        Axis::Cols => Matrix::from_fn(r, 1, |i, _| m.row(i).iter().sum::<f64>() / c as f64),
        Axis::All => Matrix::scalar(m.sum() / (r * c) as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_row() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::from_rows(&[&[0.0, 0.0]]));
        let s = t.row_softmax(x);
        assert_eq!(t.value(s), &Matrix::from_rows(&[&[0.5, 0.5]]));
    }

    #[test]
    fn cosine_identical() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::from_rows(&[&[1.0, 0.0]]));
        let b = t.constant(Matrix::from_rows(&[&[1.0, 0.0]]));
        let c = t.cosine(a, b).unwrap();
        assert_eq!(t.value(c).item(), 1.0);
    }

    #[test]
    fn frobenius_value() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 0.0]]));
        let f = t.frobenius_sq(a);
        assert_eq!(t.value(f).item(), 9.0);
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(2.0));
        let y = t.param(Matrix::scalar(3.0));
        let z = t.mul(x, y).unwrap();
        let g = t.backward(z).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 3.0);
        assert_eq!(g.get(y).unwrap().item(), 2.0);
    }

    #[test]
    fn frobenius_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_rows(&[&[1.0, -2.0]]));
        let f = t.frobenius_sq(x);
        let g = t.backward(f).unwrap();
        assert_eq!(g.get(x).unwrap(), &Matrix::from_rows(&[&[2.0, -4.0]]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.param(Matrix::zeros(2, 2));
        assert!(matches!(
            t.backward(x),
            Err(DaraError::NonScalarLoss { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(2.0));
        let c = t.constant(Matrix::scalar(5.0));
        let z = t.mul(x, c).unwrap();
        let g = t.backward(z).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().item(), 5.0);
    }

    #[test]
    fn shape_mismatch_names_dimensions() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 3));
        let b = t.param(Matrix::zeros(3, 2));
        let err = t.add(a, b).unwrap_err();
        assert!(matches!(
            err,
            DaraError::ShapeMismatch { op: "add", lhs: (2, 3), rhs: (3, 2) }
        ));
    }
}
