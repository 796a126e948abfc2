//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! Every forward operation appends a node to the [`Tape`] holding its value
//! and the handles of its inputs. [`Tape::backward`] walks the nodes in
//! exact reverse recording order and accumulates adjoints, so a tensor
//! used twice receives the sum of both contributions.
//!
//! Only the operations needed by the recurrent encoder, the bilinear
//! discriminators and the BCE-style objectives are provided. Broadcasting
//! is limited to adding a `1 x c` row to every row of an `r x c` matrix.

use nalgebra::DMatrix;
use thiserror::Error;

pub type Matrix = DMatrix<f64>;

/// Floor applied inside [`Tape::log`]; values below it are clamped and
/// receive zero gradient.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalar((usize, usize)),
    #[error("concat_rows needs at least one input")]
    EmptyConcat,
    #[error("row {row} out of range for a tensor with {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    Row(Var, usize),
    Scale(Var, f64),
    Log(Var),
    Sum(Var),
    Transpose(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape(m: &Matrix) -> (usize, usize) {
    m.shape()
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
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` tensor.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (l, r) = (shape(self.value(a)), shape(self.value(b)));
        if l != r {
            return Err(AutodiffError::Shape { op, left: l, right: r });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (l, r) = (shape(self.value(a)), shape(self.value(b)));
        if l.1 != r.0 {
            return Err(AutodiffError::Shape { op: "matmul", left: l, right: r });
        }
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds the `1 x c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (l, r) = (shape(self.value(a)), shape(self.value(b)));
        if r.0 != 1 || l.1 != r.1 {
            return Err(AutodiffError::Shape { op: "add_row", left: l, right: r });
        }
        let mut value = self.value(a).clone();
        let row = self.value(b).row(0).clone_owned();
        for mut rv in value.row_iter_mut() {
            rv += &row;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::AddRow(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).component_mul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    /// Stacks tensors with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = *parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let cols = self.value(first).ncols();
        let mut rows = 0;
        for &p in parts {
            let s = shape(self.value(p));
            if s.1 != cols {
                return Err(AutodiffError::Shape {
                    op: "concat_rows",
                    left: shape(self.value(first)),
                    right: s,
                });
            }
            rows += s.0;
        }
        let mut value = Matrix::zeros(rows, cols);
        let mut at = 0;
        for &p in parts {
            let m = self.value(p);
            value.rows_mut(at, m.nrows()).copy_from(m);
            at += m.nrows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Column-wise mean, giving a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let n = m.nrows().max(1) as f64;
        let value = Matrix::from_fn(1, m.ncols(), |_, c| m.column(c).sum() / n);
        let rg = self.rg(a);
        self.push(value, Op::MeanRows(a), rg)
    }

    /// Row `row` of `a` as a `1 x c` tensor.
    pub fn row(&mut self, a: Var, row: usize) -> Result<Var, AutodiffError> {
        let m = self.value(a);
        if row >= m.nrows() {
            return Err(AutodiffError::RowOutOfRange { row, rows: m.nrows() });
        }
        let value = m.rows(row, 1).clone_owned();
        let rg = self.rg(a);
        Ok(self.push(value, Op::Row(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a) * s;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    /// Elementwise `ln(max(x, LOG_FLOOR))`.
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        let rg = self.rg(a);
        self.push(value, Op::Log(a), rg)
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::from_element(1, 1, self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// `ln σ(a)`, elementwise.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let s = self.sigmoid(a);
        self.log(s)
    }

    /// Propagates adjoints from the scalar `loss` back to every tensor that
    /// requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let s = shape(self.value(loss));
        if s != (1, 1) {
            return Err(AutodiffError::NonScalar(s));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::from_element(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let ga = &g * self.value(*b).transpose();
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let gb = self.value(*a).transpose() * &g;
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::AddRow(a, b) => {
                    if self.rg(*b) {
                        let gb = Matrix::from_fn(1, g.ncols(), |_, c| g.column(c).sum());
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, -&g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.component_mul(self.value(*b)));
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.component_mul(self.value(*a)));
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = g.zip_map(y, |gi, yi| gi * yi * (1.0 - yi));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = g.zip_map(y, |gi, yi| gi * (1.0 - yi * yi));
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let r = self.value(*p).nrows();
                        if self.rg(*p) {
                            accumulate(&mut grads, *p, g.rows(at, r).clone_owned());
                        }
                        at += r;
                    }
                }
                Op::MeanRows(a) => {
                    let r = self.value(*a).nrows();
                    let ga = Matrix::from_fn(r, g.ncols(), |_, c| g[(0, c)] / r as f64);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Row(a, row) => {
                    let (r, c) = shape(self.value(*a));
                    let mut ga = Matrix::zeros(r, c);
                    ga.rows_mut(*row, 1).copy_from(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, &g * *s),
                Op::Log(a) => {
                    let x = self.value(*a);
                    let ga = g.zip_map(x, |gi, xi| if xi > LOG_FLOOR { gi / xi } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = shape(self.value(*a));
                    accumulate(&mut grads, *a, Matrix::from_element(r, c, g[(0, 0)]));
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => *acc += g,
        slot @ None => *slot = Some(g),
    }
}

/// Adjoints of the leaves of one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a leaf, `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of a leaf with the given shape, zero if unreachable.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols))
    }
}

/// Compares tape gradients of `f` at `params` against central differences.
///
/// Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, params: &[Matrix], eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let eval = |ps: &[Matrix]| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Matrix> = params.to_vec();
    for (i, p) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], p.nrows(), p.ncols());
        for j in 0..p.len() {
            let orig = work[i][j];
            work[i][j] = orig + eps;
            let plus = eval(&work)?;
            work[i][j] = orig - eps;
            let minus = eval(&work)?;
            work[i][j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
