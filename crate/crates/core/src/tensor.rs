//! Dense row-major matrices with a tape-based reverse-mode autodiff.
//!
//! Every operation on a [`Tape`] records its inputs and the values it needs for the
//! backward pass. [`Tape::backward`] replays the record in reverse and accumulates the
//! gradient of a scalar loss into the [`ParamSet`] that supplied the parameter leaves.
//!
//! All values are `f64`. Broadcasting is limited to a row vector against a matrix
//! ([`Tape::add_row`]) and a per-row scale ([`Tape::scale_rows`]).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract("tensor dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "new",
                left: [rows, cols],
                right: [data.len(), 1],
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn row(values: &[f64]) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::contract("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Scalar value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Plain matrix product `a · b`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(matmul_raw(a, b))
}

fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n, p) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let orow = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a.data[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * p..(k + 1) * p];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Tensor {
        rows: m,
        cols: p,
        data: out,
    }
}

// a · bᵀ
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n, p) = (a.rows, a.cols, b.rows);
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let arow = &a.data[i * n..(i + 1) * n];
        for j in 0..p {
            let brow = &b.data[j * n..(j + 1) * n];
            out[i * p + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor {
        rows: m,
        cols: p,
        data: out,
    }
}

// aᵀ · b
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, p) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * p];
    for k in 0..n {
        let brow = &b.data[k * p..(k + 1) * p];
        for i in 0..m {
            let aki = a.data[k * m + i];
            if aki == 0.0 {
                continue;
            }
            let orow = &mut out[i * p..(i + 1) * p];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aki * bv;
            }
        }
    }
    Tensor {
        rows: m,
        cols: p,
        data: out,
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Row-wise softmax where every row carries `n_null` extra zero logits whose
/// probabilities are dropped from the output. `n_null = 0` is the plain softmax.
pub fn softmax_rows_with_null(x: &Tensor, n_null: usize) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows {
        let row = &mut out.data[r * x.cols..(r + 1) * x.cols];
        let mut max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if n_null > 0 && max < 0.0 {
            max = 0.0;
        }
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            z += *v;
        }
        if n_null > 0 {
            z += n_null as f64 * libm::exp(-max);
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

pub fn softmax_rows(x: &Tensor) -> Tensor {
    softmax_rows_with_null(x, 0)
}

/// A named trainable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its slot.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::contract(alloc::format!(
                "duplicate parameter name {name}"
            )));
        }
        let grad = Tensor::zeros(value.rows, value.cols);
        self.params.push(Parameter { name, value, grad });
        Ok(self.params.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> core::slice::IterMut<'_, Parameter> {
        self.params.iter_mut()
    }

    pub fn slot(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn slot_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.params[idx]
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Vec<f64>),
    MulConst(Var, Tensor),
    AddRow(Var, Var),
    Swish(Var),
    Abs(Var),
    Softmax(Var),
    ColSum(Var),
    ColMax(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    Pinball {
        pred: Var,
        target: f64,
        taus: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for later differentiation.
///
/// A tape is single-use: [`Tape::backward`] may run once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Leaf for parameter slot `idx` of `params`.
    pub fn param(&mut self, params: &ParamSet, idx: usize) -> Var {
        self.push(params.params[idx].value.clone(), Op::Param(idx), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols != tb.cols {
            return Err(Error::Shape {
                op: "matmul_t",
                left: ta.shape(),
                right: tb.shape(),
            });
        }
        let value = matmul_nt(ta, tb);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMulNT(a, b), ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let mut value = self.value(a).clone();
        for (x, y) in value.data.iter_mut().zip(&self.nodes[b.0].value.data) {
            *x -= y;
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|x| *x *= s);
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    /// Multiplies row `i` by `scales[i]`.
    pub fn scale_rows(&mut self, a: Var, scales: Vec<f64>) -> Result<Var> {
        let t = self.value(a);
        if scales.len() != t.rows {
            return Err(Error::Shape {
                op: "scale_rows",
                left: t.shape(),
                right: [scales.len(), 1],
            });
        }
        let mut value = t.clone();
        let cols = value.cols;
        for (r, s) in scales.iter().enumerate() {
            value.data[r * cols..(r + 1) * cols]
                .iter_mut()
                .for_each(|x| *x *= s);
        }
        let ng = self.ng(a);
        Ok(self.push(value, Op::ScaleRows(a, scales), ng))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        if self.shape(a) != c.shape() {
            return Err(Error::Shape {
                op: "mul_const",
                left: self.shape(a),
                right: c.shape(),
            });
        }
        let mut value = self.value(a).clone();
        for (x, y) in value.data.iter_mut().zip(&c.data) {
            *x *= y;
        }
        let ng = self.ng(a);
        Ok(self.push(value, Op::MulConst(a, c), ng))
    }

    /// Adds a `1×n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows != 1 || tr.cols != ta.cols {
            return Err(Error::Shape {
                op: "add_row",
                left: ta.shape(),
                right: tr.shape(),
            });
        }
        let mut value = ta.clone();
        let cols = value.cols;
        for r in 0..value.rows {
            for (x, b) in value.data[r * cols..(r + 1) * cols].iter_mut().zip(&tr.data) {
                *x += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(value, Op::AddRow(a, row), ng))
    }

    pub fn swish(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|x| *x = swish(*x));
        let ng = self.ng(a);
        self.push(value, Op::Swish(a), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|x| *x = x.abs());
        let ng = self.ng(a);
        self.push(value, Op::Abs(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        self.softmax_rows_with_null(a, 0)
    }

    /// Softmax over each row extended by `n_null` zero logits; see
    /// [`softmax_rows_with_null`].
    pub fn softmax_rows_with_null(&mut self, a: Var, n_null: usize) -> Var {
        let value = softmax_rows_with_null(self.value(a), n_null);
        let ng = self.ng(a);
        self.push(value, Op::Softmax(a), ng)
    }

    /// Column sums as a `1×n` row.
    pub fn col_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = Tensor::zeros(1, t.cols);
        for r in 0..t.rows {
            for (o, x) in value.data.iter_mut().zip(t.row_slice(r)) {
                *o += x;
            }
        }
        let ng = self.ng(a);
        self.push(value, Op::ColSum(a), ng)
    }

    /// Column maxima as a `1×n` row. Ties resolve to the first row.
    pub fn col_max(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = Tensor::row(t.row_slice(0));
        let mut arg = vec![0usize; t.cols];
        for r in 1..t.rows {
            for (c, x) in t.row_slice(r).iter().enumerate() {
                if *x > value.data[c] {
                    value.data[c] = *x;
                    arg[c] = r;
                }
            }
        }
        let ng = self.ng(a);
        self.push(value, Op::ColMax(a, arg), ng)
    }

    /// Places row `i` of `a` at row `rows[i]` of a `total × n` zero matrix.
    pub fn scatter_rows(&mut self, a: Var, rows: Vec<usize>, total: usize) -> Result<Var> {
        let t = self.value(a);
        if rows.len() != t.rows || rows.iter().any(|&r| r >= total) {
            return Err(Error::contract("scatter_rows index out of range"));
        }
        let mut value = Tensor::zeros(total, t.cols);
        for (i, &r) in rows.iter().enumerate() {
            value.data[r * t.cols..(r + 1) * t.cols].copy_from_slice(t.row_slice(i));
        }
        let ng = self.ng(a);
        Ok(self.push(value, Op::ScatterRows(a, rows), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&v) => self.value(v).rows,
            None => return Err(Error::contract("concat of nothing")),
        };
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: [rows, cols],
                    right: t.shape(),
                });
            }
            cols += t.cols;
        }
        let mut value = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let t = &self.nodes[p.0].value;
                value.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row_slice(r));
                off += t.cols;
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Mean pinball loss of a `1×q` prediction row against one target.
    pub fn pinball_mean(&mut self, pred: Var, target: f64, taus: &[f64]) -> Result<Var> {
        let t = self.value(pred);
        if t.rows != 1 || t.cols != taus.len() {
            return Err(Error::Shape {
                op: "pinball_mean",
                left: t.shape(),
                right: [1, taus.len()],
            });
        }
        let total: f64 = t
            .data
            .iter()
            .zip(taus)
            .map(|(&yhat, &tau)| pinball_value(target, yhat, tau))
            .sum();
        let value = Tensor::scalar(total / taus.len() as f64);
        let ng = self.ng(pred);
        Ok(self.push(
            value,
            Op::Pinball {
                pred,
                target,
                taus: taus.to_vec(),
            },
            ng,
        ))
    }

    /// Reverse pass from a scalar `loss`, accumulating into `params[..].grad`.
    ///
    /// Gradients accumulate across tapes until [`ParamSet::zero_grad`]. Calling
    /// `backward` twice on one tape is an error.
    pub fn backward(&mut self, loss: Var, params: &mut ParamSet) -> Result<()> {
        if self.consumed {
            return Err(Error::contract("backward called twice on the same tape"));
        }
        if self.shape(loss) != [1, 1] {
            return Err(Error::contract("backward requires a scalar loss"));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(idx) => {
                    let p = params
                        .params
                        .get_mut(*idx)
                        .ok_or_else(|| Error::contract("tape/parameter set mismatch"))?;
                    if p.grad.shape() != g.shape() {
                        return Err(Error::contract("tape/parameter set mismatch"));
                    }
                    p.grad.add_assign(&g);
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.ng(a) {
                        let ga = matmul_nt(&g, self.value(b));
                        accumulate(&mut grads, a, ga);
                    }
                    if self.ng(b) {
                        let gb = matmul_tn(self.value(a), &g);
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::MatMulNT(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.ng(a) {
                        let ga = matmul_raw(&g, self.value(b));
                        accumulate(&mut grads, a, ga);
                    }
                    if self.ng(b) {
                        let gb = matmul_tn(&g, self.value(a));
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.ng(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.ng(b) {
                        accumulate(&mut grads, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.ng(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.ng(b) {
                        let mut gb = g;
                        gb.data.iter_mut().for_each(|x| *x = -*x);
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.data.iter_mut().for_each(|x| *x *= s);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ScaleRows(a, scales) => {
                    let mut ga = g;
                    let cols = ga.cols;
                    for (r, s) in scales.iter().enumerate() {
                        ga.data[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .for_each(|x| *x *= s);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MulConst(a, c) => {
                    let mut ga = g;
                    for (x, y) in ga.data.iter_mut().zip(&c.data) {
                        *x *= y;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::AddRow(a, row) => {
                    let (a, row) = (*a, *row);
                    if self.ng(row) {
                        let mut gr = Tensor::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (o, x) in gr.data.iter_mut().zip(g.row_slice(r)) {
                                *o += x;
                            }
                        }
                        accumulate(&mut grads, row, gr);
                    }
                    if self.ng(a) {
                        accumulate(&mut grads, a, g);
                    }
                }
                Op::Swish(a) => {
                    let x = self.value(*a);
                    let mut ga = g;
                    for (gv, &xv) in ga.data.iter_mut().zip(&x.data) {
                        let s = sigmoid(xv);
                        *gv *= s * (1.0 + xv * (1.0 - s));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let x = self.value(*a);
                    let mut ga = g;
                    for (gv, &xv) in ga.data.iter_mut().zip(&x.data) {
                        *gv *= if xv > 0.0 {
                            1.0
                        } else if xv < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    // dx_j = y_j (g_j - Σ_k y_k g_k); null entries carry no upstream gradient.
                    let y = &node.value;
                    let mut ga = g;
                    let cols = y.cols;
                    for r in 0..y.rows {
                        let yr = y.row_slice(r);
                        let gr = &mut ga.data[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                        for (gv, yv) in gr.iter_mut().zip(yr) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ColSum(a) => {
                    let [rows, cols] = self.shape(*a);
                    let mut ga = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        ga.data[r * cols..(r + 1) * cols].copy_from_slice(&g.data);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ColMax(a, arg) => {
                    let [rows, cols] = self.shape(*a);
                    let mut ga = Tensor::zeros(rows, cols);
                    for (c, &r) in arg.iter().enumerate() {
                        ga.data[r * cols + c] = g.data[c];
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ScatterRows(a, rows) => {
                    let cols = g.cols;
                    let mut ga = Tensor::zeros(rows.len(), cols);
                    for (i, &r) in rows.iter().enumerate() {
                        ga.data[i * cols..(i + 1) * cols].copy_from_slice(g.row_slice(r));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    let parts = parts.clone();
                    for p in parts {
                        let [rows, cols] = self.shape(p);
                        if self.ng(p) {
                            let mut gp = Tensor::zeros(rows, cols);
                            for r in 0..rows {
                                gp.data[r * cols..(r + 1) * cols].copy_from_slice(
                                    &g.data[r * g.cols + off..r * g.cols + off + cols],
                                );
                            }
                            accumulate(&mut grads, p, gp);
                        }
                        off += cols;
                    }
                }
                Op::Pinball { pred, target, taus } => {
                    let x = self.value(*pred);
                    let scale = g.item() / taus.len() as f64;
                    let mut gp = Tensor::zeros(1, taus.len());
                    for (c, &tau) in taus.iter().enumerate() {
                        let d = if *target >= x.data[c] { -tau } else { 1.0 - tau };
                        gp.data[c] = d * scale;
                    }
                    accumulate(&mut grads, *pred, gp);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

/// Pinball loss of a single forecast.
#[inline]
pub(crate) fn pinball_value(y: f64, yhat: f64, tau: f64) -> f64 {
    if y >= yhat {
        tau * (y - yhat)
    } else {
        (1.0 - tau) * (yhat - y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &a).unwrap(), a);
        let six = matmul(&Tensor::scalar(2.0), &Tensor::scalar(3.0)).unwrap();
        assert_eq!(six.item(), 6.0);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 4, 3);
        let b = random(&mut rng, 3, 5);
        let c = matmul(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((c.get(i, j) - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let err = matmul(&Tensor::zeros(2, 3), &Tensor::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Shape { op: "matmul", .. }));
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&Tensor::row(&[0.0, 0.0]));
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::row(&[1000.0, 1000.0, 1000.0]));
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() <= 1e-12);
        }
        // exp(-2), exp(-1), 1 normalised; values from a 50-digit evaluation
        let s = softmax_rows(&Tensor::row(&[1.0, 2.0, 3.0]));
        let expect = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_64,
            0.665_240_955_774_821_9,
        ];
        for (v, e) in s.data().iter().zip(expect) {
            assert!((v - e).abs() <= 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn softmax_null_entries_match_explicit_zero_columns() {
        let x = Tensor::row(&[0.3, -1.2]);
        let with_null = softmax_rows_with_null(&x, 3);
        let explicit = softmax_rows(&Tensor::row(&[0.3, -1.2, 0.0, 0.0, 0.0]));
        for c in 0..2 {
            assert!((with_null.get(0, c) - explicit.get(0, c)).abs() < 1e-15);
        }
    }

    #[test]
    fn swish_cases() {
        assert_eq!(swish(0.0), 0.0);
        assert!((swish(50.0) - 50.0).abs() <= 1e-9);
        // 1 / (1 + e^-1), 50-digit evaluation
        assert!((swish(1.0) - 0.731_058_578_630_004_9).abs() <= 1e-12);
    }

    #[test]
    fn linear_map_gradient_is_input_structure() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Tensor::from_rows(&[&[0.5, -1.0, 2.0]]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let wv = tape.param(&ps, w);
        let x = tape.constant(Tensor::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
        let y = tape.matmul(wv, x).unwrap();
        let loss = tape.col_sum(y);
        tape.backward(loss, &mut ps).unwrap();
        assert_eq!(ps.slot(w).grad.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn disconnected_parameter_gets_zero_gradient() {
        let mut ps = ParamSet::new();
        let a = ps.add("a", Tensor::scalar(2.0)).unwrap();
        let b = ps.add("b", Tensor::scalar(5.0)).unwrap();
        let mut tape = Tape::new();
        let av = tape.param(&ps, a);
        let _bv = tape.param(&ps, b);
        let loss = tape.scale(av, 3.0);
        tape.backward(loss, &mut ps).unwrap();
        assert_eq!(ps.slot(a).grad.item(), 3.0);
        assert_eq!(ps.slot(b).grad.item(), 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar_and_reuse() {
        let mut ps = ParamSet::new();
        let a = ps.add("a", Tensor::zeros(2, 2)).unwrap();
        let mut tape = Tape::new();
        let av = tape.param(&ps, a);
        assert!(matches!(tape.backward(av, &mut ps), Err(Error::Contract(_))));
        let s = tape.col_sum(av);
        let s = tape.matmul_t(s, s).unwrap();
        tape.backward(s, &mut ps).unwrap();
        assert!(matches!(tape.backward(s, &mut ps), Err(Error::Contract(_))));
    }

    #[test]
    fn duplicate_parameter_names_rejected() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::scalar(1.0)).unwrap();
        assert!(ps.add("w", Tensor::scalar(1.0)).is_err());
    }

    /// Builds a loss touching every op and compares analytic gradients with
    /// central differences.
    fn composite_loss(tape: &mut Tape, ps: &ParamSet) -> Var {
        let a = tape.param(ps, 0);
        let b = tape.param(ps, 1);
        let bias = tape.param(ps, 2);
        let h = tape.matmul(a, b).unwrap();
        let h = tape.add_row(h, bias).unwrap();
        let h = tape.swish(h);
        let logits = tape.matmul_t(h, h).unwrap();
        let att = tape.softmax_rows_with_null(logits, 2);
        let ctx = tape.matmul(att, h).unwrap();
        let ctx = tape.scale_rows(ctx, vec![1.0, 0.3, 0.7, 1.0]).unwrap();
        let mixed = tape.sub(ctx, h).unwrap();
        let mixed = tape.add(mixed, h).unwrap();
        let mixed = tape.mul_const(mixed, Tensor::new(4, 2, vec![1.0, 2.0, 0.5, 1.0, 1.0, 1.0, 3.0, 1.0]).unwrap()).unwrap();
        let full = tape.scatter_rows(mixed, vec![0, 2, 3, 5], 6).unwrap();
        let mx = tape.col_max(full);
        let sm = tape.col_sum(mixed);
        let sm = tape.scale(sm, 0.25);
        let both = tape.concat_cols(&[mx, sm]).unwrap();
        let both = tape.abs(both);
        tape.pinball_mean(both, 0.4, &[0.1, 0.5, 0.7, 0.9]).unwrap()
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut ps = ParamSet::new();
            ps.add("a", random(&mut rng, 4, 3)).unwrap();
            ps.add("b", random(&mut rng, 3, 2)).unwrap();
            ps.add("bias", random(&mut rng, 1, 2)).unwrap();
            let mut tape = Tape::new();
            let loss = composite_loss(&mut tape, &ps);
            tape.backward(loss, &mut ps).unwrap();
            let h = 1e-5;
            for slot in 0..ps.len() {
                for k in 0..ps.slot(slot).value.data().len() {
                    let eval = |delta: f64| {
                        let mut p2 = ps.clone();
                        p2.slot_mut(slot).value.data_mut()[k] += delta;
                        let mut t = Tape::new();
                        let l = composite_loss(&mut t, &p2);
                        t.value(l).item()
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = ps.slot(slot).grad.data()[k];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                    assert!(rel <= 1e-4 || (fd - an).abs() < 1e-9, "slot {slot}[{k}]: fd {fd} an {an}");
                }
            }
        }
    }
}
