//! Reverse-mode gradient tape over dense matrices.
//!
//! Every primitive appends one node holding its forward value and the
//! indices of its operands. [`Tape::backward`] walks the nodes in reverse
//! insertion order exactly once, accumulating adjoints additively, so a
//! leaf used by several operations (shared block weights) receives the sum
//! of all its contributions.

use std::borrow::Cow;

use crate::autodiff::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Guard below which a metric denominator is treated as zero.
pub const DENOMINATOR_GUARD: f64 = 1e-8;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-row forecasting loss evaluated by a fused tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Smape,
    Mape,
    Mase,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sum(Var),
    Loss {
        pred: Var,
        kind: LossKind,
        target: Matrix<T>,
        /// Per-row MASE denominators; rows at or below the guard are masked.
        row_scale: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::Sum(..) => "sum",
            Op::Loss { .. } => "loss",
        }
    }
}

#[derive(Debug)]
struct Node<'a, T: Clone> {
    value: Cow<'a, Matrix<T>>,
    op: Op<T>,
}

/// Ordered record of primitive operations.
///
/// Leaves may borrow their values (model parameters) for the lifetime of
/// the tape, so recording a forward pass never copies weights.
#[derive(Debug, Default)]
pub struct Tape<'a, T: Clone> {
    nodes: Vec<Node<'a, T>>,
}

/// Adjoints produced by one backward pass, indexed by [`Var`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root w.r.t. `var`; `None` if `var` does not
    /// influence the root.
    pub fn get(&self, var: Var) -> Option<&Matrix<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `var` or a zero matrix of `shape`.
    pub fn get_or_zeros(&self, var: Var, shape: (usize, usize)) -> Matrix<T> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Matrix<T> {
        &self.nodes[var.0].value
    }

    /// Names of the recorded primitives in insertion order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    fn push(&mut self, value: Cow<'a, Matrix<T>>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that owns its value.
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf)
    }

    /// Records a leaf borrowing its value, e.g. a model parameter.
    pub fn leaf_ref(&mut self, value: &'a Matrix<T>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Cow::Owned(v), Op::MatMul(a, b)))
    }

    /// `a · bᵀ`; with `b` a weight stored `out x in` this is a batched
    /// dense layer over the rows of `a`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(Cow::Owned(v), Op::MatMulNt(a, b)))
    }

    /// Adds the `1 x n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Shape {
                op: "add_row",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let mut out = av.clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(bv.as_slice()) {
                *o = *o + b;
            }
        }
        Ok(self.push(Cow::Owned(out), Op::AddRow(a, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Cow::Owned(v), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Cow::Owned(v), Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let v = self.value(a).scale(factor);
        self.push(Cow::Owned(v), Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(Cow::Owned(v), Op::Relu(a))
    }

    /// Reduces all entries to a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().copied().sum();
        self.push(Cow::Owned(Matrix::filled(1, 1, s)), Op::Sum(a))
    }

    /// Mean over rows of a per-row forecasting loss.
    ///
    /// `pred` and `target` are `B x H`. For [`LossKind::Mase`] `row_scale`
    /// holds one in-sample seasonal-difference denominator per row; rows
    /// whose denominator is below the guard contribute zero. The other
    /// kinds ignore `row_scale`.
    pub fn loss(
        &mut self,
        kind: LossKind,
        pred: Var,
        target: Matrix<T>,
        row_scale: Vec<T>,
    ) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::Shape {
                op: "loss",
                left: p.shape(),
                right: target.shape(),
            });
        }
        if kind == LossKind::Mase && row_scale.len() != p.rows() {
            return Err(Error::Length {
                op: "loss row_scale",
                left: row_scale.len(),
                right: p.rows(),
            });
        }
        let (value, _) = loss_terms(kind, p, &target, &row_scale, false);
        Ok(self.push(
            Cow::Owned(Matrix::filled(1, 1, value)),
            Op::Loss {
                pred,
                kind,
                target,
                row_scale,
            },
        ))
    }

    /// Gradients of the `1 x 1` node `root`, scaled by `seed`.
    pub fn backward(&self, root: Var, seed: T) -> Result<Gradients<T>> {
        if root.0 >= self.nodes.len() {
            return Err(Error::BackwardBeforeForward);
        }
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarRoot(shape));
        }
        self.backward_with(root, Matrix::filled(1, 1, seed))
    }

    /// Vector-Jacobian product: propagates an arbitrary adjoint `seed`
    /// (same shape as `root`) back through the tape.
    pub fn backward_with(&self, root: Var, seed: Matrix<T>) -> Result<Gradients<T>> {
        if root.0 >= self.nodes.len() {
            return Err(Error::BackwardBeforeForward);
        }
        let root_shape = self.value(root).shape();
        if seed.shape() != root_shape {
            return Err(Error::Shape {
                op: "backward seed",
                left: seed.shape(),
                right: root_shape,
            });
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(seed);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b))?;
                    let db = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::MatMulNt(a, b) => {
                    let da = g.matmul(self.value(*b))?;
                    let db = g.matmul_tn(self.value(*a))?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::AddRow(a, bias) => {
                    let db = g.column_sums();
                    accumulate(&mut grads, *bias, db)?;
                    accumulate(&mut grads, *a, g.clone())?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone())?;
                    accumulate(&mut grads, *a, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-T::one()))?;
                    accumulate(&mut grads, *a, g.clone())?;
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads, *a, g.scale(*factor))?;
                }
                Op::Relu(a) => {
                    let out = &node.value;
                    let mut da = g.clone();
                    for (d, &y) in da.as_mut_slice().iter_mut().zip(out.as_slice()) {
                        if y <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)))?;
                }
                Op::Loss {
                    pred,
                    kind,
                    target,
                    row_scale,
                } => {
                    let (_, dp) = loss_terms(*kind, self.value(*pred), target, row_scale, true);
                    let dp = dp.expect("gradient requested").scale(g.get(0, 0));
                    accumulate(&mut grads, *pred, dp)?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], var: Var, delta: Matrix<T>) -> Result<()> {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Batch-mean loss value and, optionally, its gradient w.r.t. `pred`.
fn loss_terms<T: Scalar>(
    kind: LossKind,
    pred: &Matrix<T>,
    target: &Matrix<T>,
    row_scale: &[T],
    want_grad: bool,
) -> (T, Option<Matrix<T>>) {
    let (rows, h) = pred.shape();
    let guard = T::of(DENOMINATOR_GUARD);
    let batch = T::from_usize(rows.max(1)).unwrap();
    let horizon = T::from_usize(h.max(1)).unwrap();
    let mut grad = want_grad.then(|| Matrix::zeros(rows, h));
    let mut total = T::zero();
    for r in 0..rows {
        let p = pred.row(r);
        let y = target.row(r);
        let mut row_total = T::zero();
        match kind {
            LossKind::Smape => {
                let c = T::of(200.0) / horizon;
                for i in 0..h {
                    let d = y[i].abs() + p[i].abs();
                    if d < guard {
                        continue;
                    }
                    let n = (y[i] - p[i]).abs();
                    row_total = row_total + c * n / d;
                    if let Some(g) = grad.as_mut() {
                        let dv = (sign(p[i] - y[i]) * d - n * sign(p[i])) / (d * d);
                        g.set(r, i, c * dv / batch);
                    }
                }
            }
            LossKind::Mape => {
                let c = T::of(100.0) / horizon;
                for i in 0..h {
                    let d = y[i].abs();
                    if d < guard {
                        continue;
                    }
                    row_total = row_total + c * (y[i] - p[i]).abs() / d;
                    if let Some(g) = grad.as_mut() {
                        g.set(r, i, c * sign(p[i] - y[i]) / d / batch);
                    }
                }
            }
            LossKind::Mase => {
                let s = row_scale[r];
                if s < guard {
                    continue;
                }
                for i in 0..h {
                    row_total = row_total + (y[i] - p[i]).abs() / (horizon * s);
                    if let Some(g) = grad.as_mut() {
                        g.set(r, i, sign(p[i] - y[i]) / (horizon * s) / batch);
                    }
                }
            }
        }
        total = total + row_total;
    }
    (total / batch, grad)
}
