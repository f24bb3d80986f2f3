//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records nodes in creation order; a node's parents always have
//! smaller ids, so walking the ids backwards is a valid reverse topological
//! order. Besides the usual primitives, [`Tape::custom`] lets a layer
//! install its own vector-Jacobian product. The prox layers in this crate
//! use it to plug hand-derived backward passes into the graph.
//!
//! ```
//! use proxnet::{Matrix, tape::Tape};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Matrix::column(&[1.0, -2.0]));
//! let y = x.scale(2.0).sum();
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x).unwrap().as_slice(), &[2.0, 2.0]);
//! ```

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Maps the upstream adjoint of a node to one adjoint per parent.
pub type BackwardFn = Box<dyn Fn(&Matrix) -> Result<Vec<Matrix>>>;

struct Node {
    value: Matrix,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    label: &'static str,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    backward_done: bool,
}

#[derive(Default)]
pub struct Tape {
    inner: RefCell<TapeInner>,
}

/// Handle to a node on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, parents: Vec<usize>, backward: Option<BackwardFn>, label: &'static str) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        debug_assert!(parents.iter().all(|p| *p < id));
        inner.nodes.push(Node { value, parents, backward, label });
        inner.grads.push(None);
        Var { tape: self, id }
    }

    /// Input or parameter node.
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        self.push(value, Vec::new(), None, "leaf")
    }

    /// Node with a caller-supplied backward pass. `backward` must return one
    /// adjoint per input, each shaped like that input's value.
    pub fn custom<'t>(
        &'t self,
        inputs: &[Var<'t>],
        value: Matrix,
        label: &'static str,
        backward: impl Fn(&Matrix) -> Result<Vec<Matrix>> + 'static,
    ) -> Var<'t> {
        let parents = inputs.iter().map(|v| v.id).collect();
        self.push(value, parents, Some(Box::new(backward)), label)
    }

    pub fn value(&self, v: Var<'_>) -> Matrix {
        self.inner.borrow().nodes[v.id].value.clone()
    }

    /// Accumulated adjoint; `None` for nodes the root does not depend on or
    /// before [`Tape::backward`] ran.
    pub fn grad(&self, v: Var<'_>) -> Option<Matrix> {
        self.inner.borrow().grads[v.id].clone()
    }

    /// Propagates adjoints from a 1x1 root, seeded with 1. A tape supports a
    /// single backward pass.
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        let mut guard = self.inner.borrow_mut();
        let inner = &mut *guard;
        if inner.backward_done {
            return Err(Error::Tape("backward already ran on this tape".into()));
        }
        let shape = inner.nodes[root.id].value.shape();
        if shape != (1, 1) {
            return Err(Error::Tape(format!("root must be 1x1, got {shape:?}")));
        }
        inner.backward_done = true;
        inner.grads[root.id] = Some(Matrix::filled(1, 1, 1.0));
        for id in (0..=root.id).rev() {
            let Some(upstream) = inner.grads[id].take() else {
                continue;
            };
            let node = &inner.nodes[id];
            if let Some(backward) = &node.backward {
                let adjoints = backward(&upstream)?;
                if adjoints.len() != node.parents.len() {
                    return Err(Error::Tape(format!(
                        "node {id} ({}) returned {} adjoints for {} inputs",
                        node.label,
                        adjoints.len(),
                        node.parents.len()
                    )));
                }
                for (adj, &p) in adjoints.iter().zip(&node.parents) {
                    let expected = inner.nodes[p].value.shape();
                    if adj.shape() != expected {
                        return Err(Error::Tape(format!(
                            "node {id} ({}): adjoint shape {:?} for input {p} of shape {expected:?}",
                            node.label,
                            adj.shape()
                        )));
                    }
                    match &mut inner.grads[p] {
                        Some(g) => g.axpy(1.0, adj),
                        slot @ None => *slot = Some(adj.clone()),
                    }
                }
            }
            inner.grads[id] = Some(upstream);
        }
        Ok(())
    }
}

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch { op, left: a.shape(), right: b.shape() });
    }
    Ok(())
}

fn column_softmax(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for j in 0..x.cols() {
        let col = x.col(j);
        let m = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = col.iter().map(|v| (v - m).exp()).sum();
        for (i, v) in col.iter().enumerate() {
            out[(i, j)] = (v - m).exp() / z;
        }
    }
    out
}

fn column_log_softmax(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for j in 0..x.cols() {
        let col = x.col(j);
        let m = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + col.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (i, v) in col.iter().enumerate() {
            out[(i, j)] = v - lse;
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Matrix {
        self.tape.value(*self)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.inner.borrow().nodes[self.id].value.shape()
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self) -> f64 {
        self.tape.inner.borrow().nodes[self.id].value[(0, 0)]
    }

    fn unary(&self, value: Matrix, label: &'static str, backward: impl Fn(&Matrix) -> Matrix + 'static) -> Var<'t> {
        self.tape.push(value, vec![self.id], Some(Box::new(move |g| Ok(vec![backward(g)]))), label)
    }

    fn binary(
        &self,
        other: Var<'t>,
        value: Matrix,
        label: &'static str,
        backward: impl Fn(&Matrix) -> (Matrix, Matrix) + 'static,
    ) -> Var<'t> {
        self.tape.push(
            value,
            vec![self.id, other.id],
            Some(Box::new(move |g| {
                let (a, b) = backward(g);
                Ok(vec![a, b])
            })),
            label,
        )
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        check_same("add", &a, &b)?;
        Ok(self.binary(other, &a + &b, "add", |g| (g.clone(), g.clone())))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        check_same("sub", &a, &b)?;
        Ok(self.binary(other, &a - &b, "sub", |g| (g.clone(), -g)))
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.rows() {
            return Err(Error::ShapeMismatch { op: "matmul", left: a.shape(), right: b.shape() });
        }
        let value = a.matmul(&b);
        Ok(self.binary(other, value, "matmul", move |g| (g.matmul_t(&b), a.t_matmul(g))))
    }

    pub fn hadamard(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        check_same("hadamard", &a, &b)?;
        let value = a.hadamard(&b);
        Ok(self.binary(other, value, "hadamard", move |g| (g.hadamard(&b), g.hadamard(&a))))
    }

    pub fn transpose(&self) -> Var<'t> {
        self.unary(self.value().transpose(), "transpose", |g| g.transpose())
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        self.unary(self.value().scale(s), "scale", move |g| g.scale(s))
    }

    pub fn sum(&self) -> Var<'t> {
        let (r, c) = self.shape();
        let total = self.value().sum();
        self.unary(Matrix::filled(1, 1, total), "sum", move |g| Matrix::filled(r, c, g[(0, 0)]))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        let y = self.value().map(sigmoid);
        let yc = y.clone();
        self.unary(y, "sigmoid", move |g| g.zip_map(&yc, |g, y| g * y * (1.0 - y)))
    }

    pub fn tanh(&self) -> Var<'t> {
        let y = self.value().map(f64::tanh);
        let yc = y.clone();
        self.unary(y, "tanh", move |g| g.zip_map(&yc, |g, y| g * (1.0 - y * y)))
    }

    pub fn relu(&self) -> Var<'t> {
        let x = self.value();
        let y = x.map(|v| v.max(0.0));
        self.unary(y, "relu", move |g| g.zip_map(&x, |g, x| if x > 0.0 { g } else { 0.0 }))
    }

    /// Log-softmax of every column.
    pub fn log_softmax(&self) -> Var<'t> {
        let x = self.value();
        let y = column_log_softmax(&x);
        let p = column_softmax(&x);
        self.unary(y, "log_softmax", move |g| {
            let mut out = g.clone();
            for j in 0..g.cols() {
                let total: f64 = g.col(j).iter().sum();
                for i in 0..g.rows() {
                    out[(i, j)] -= p[(i, j)] * total;
                }
            }
            out
        })
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&self, target: &Matrix) -> Result<Var<'t>> {
        let x = self.value();
        check_same("mse_loss", &x, target)?;
        let diff = &x - target;
        let n = diff.len() as f64;
        let value = Matrix::filled(1, 1, diff.frobenius_sq() / n);
        Ok(self.unary(value, "mse_loss", move |g| diff.scale(2.0 * g[(0, 0)] / n)))
    }

    /// Mean cross-entropy of column-wise logits (classes x samples) against
    /// integer labels.
    pub fn cross_entropy_loss(&self, labels: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        if labels.len() != x.cols() {
            return Err(Error::ShapeMismatch { op: "cross_entropy_loss", left: x.shape(), right: (1, labels.len()) });
        }
        if let Some(bad) = labels.iter().find(|l| **l >= x.rows()) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {} classes", x.rows())));
        }
        let logp = column_log_softmax(&x);
        let n = labels.len() as f64;
        let loss = -labels.iter().enumerate().map(|(j, &l)| logp[(l, j)]).sum::<f64>() / n;
        let mut delta = column_softmax(&x);
        for (j, &l) in labels.iter().enumerate() {
            delta[(l, j)] -= 1.0;
        }
        Ok(self.unary(Matrix::filled(1, 1, loss), "cross_entropy", move |g| delta.scale(g[(0, 0)] / n)))
    }

    /// Adds a column vector to every column.
    pub fn add_col(&self, bias: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), bias.value());
        if b.shape() != (a.rows(), 1) {
            return Err(Error::ShapeMismatch { op: "add_col", left: a.shape(), right: b.shape() });
        }
        let value = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] + b[(i, 0)]);
        Ok(self.binary(bias, value, "add_col", |g| {
            let sums: Vec<f64> = (0..g.rows()).map(|i| g.row(i).iter().sum()).collect();
            (g.clone(), Matrix::column(&sums))
        }))
    }

    /// Subtracts each row's mean (right-multiplication by the centering matrix).
    pub fn center(&self) -> Var<'t> {
        self.unary(self.value().center_columns(), "center", |g| g.center_columns())
    }

    /// Rows `start..end`.
    pub fn rows(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let x = self.value();
        if start > end || end > x.rows() {
            return Err(Error::InvalidArgument(format!("row range {start}..{end} of {} rows", x.rows())));
        }
        let (r, c) = x.shape();
        Ok(self.unary(x.row_block(start, end), "rows", move |g| {
            let mut out = Matrix::zeros(r, c);
            for i in start..end {
                for j in 0..c {
                    out[(i, j)] = g[(i - start, j)];
                }
            }
            out
        }))
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

/// Central-difference gradient of a scalar function.
pub fn numeric_gradient(mut f: impl FnMut(&Matrix) -> Result<f64>, x: &Matrix, h: f64) -> Result<Matrix> {
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let up = f(&probe)?;
        probe.as_mut_slice()[k] = orig - h;
        let down = f(&probe)?;
        probe.as_mut_slice()[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("finite-difference probe".into()));
        }
        grad.as_mut_slice()[k] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// `max_i |a_i - b_i| / max(1, |a_i|)`
pub fn max_rel_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Compares the tape gradient of `f` at `x` with central differences and
/// returns the largest relative error.
pub fn finite_diff_check<F>(f: F, x: &Matrix, h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    if !(1e-8..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!("step {h} outside [1e-8, 1e-3]")));
    }
    let tape = Tape::new();
    let input = tape.leaf(x.clone());
    let root = f(&tape, input)?;
    if !root.scalar().is_finite() {
        return Err(Error::NonFinite("function value".into()));
    }
    tape.backward(root)?;
    let analytic = tape.grad(input).unwrap_or_else(|| Matrix::zeros(x.rows(), x.cols()));
    let numeric = numeric_gradient(
        |p| {
            let t = Tape::new();
            let v = t.leaf(p.clone());
            Ok(f(&t, v)?.scalar())
        },
        x,
        h,
    )?;
    Ok(max_rel_error(&analytic, &numeric))
}
