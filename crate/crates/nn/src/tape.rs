//! Reverse-mode automatic differentiation over 2-D `f64` arrays.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParamStore`] rather than copied. `backward` walks the
//! tape in reverse and accumulates gradients of trainable parameters.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::params::{Grads, ParamId, ParamStore};

pub type Mat = Array2<f64>;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Broadcast a `1 x n` row over the rows of `a`.
    AddRow(Var, Var),
    MulRow(Var, Var),
    /// `mul * a + add`; only the slope matters for the gradient.
    Affine(Var, f64),
    Gelu(Var),
    Silu(Var),
    LayerNorm(Var),
    SoftmaxRows(Var),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    MeanSquare(Var),
}

struct Node {
    op: Op,
    value: Option<Mat>,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    flops: u64,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn layer_norm(x: ArrayView2<f64>) -> Mat {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

fn softmax_rows(x: ArrayView2<f64>) -> Mat {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::with_capacity(512), flops: 0 }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    /// Matrix-multiply FLOPs (`2 m n k` each) executed so far.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> ArrayView2<'_, f64> {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.params.value(*id).view(),
            _ => self.nodes[v.0].value.as_ref().expect("non-param nodes store values").view(),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    fn push(&mut self, op: Op, value: Mat, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value: Some(value), needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant input (no gradient).
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(Op::Input, value, false)
    }

    pub fn param_id(&mut self, id: ParamId) -> Var {
        let needs = self.params.is_trainable(id);
        self.nodes.push(Node { op: Op::Param(id), value: None, needs_grad: needs });
        Var(self.nodes.len() - 1)
    }

    /// Looks a parameter up by name.
    ///
    /// # Panics
    /// If the store has no parameter of that name.
    pub fn param(&mut self, name: &str) -> Var {
        let id = self.params.id(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        self.param_id(id)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dims");
        self.flops += 2 * (m * n * k) as u64;
        let v = self.value(a).dot(&self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::MatMul(a, b), v, ng)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t inner dims");
        self.flops += 2 * (m * n * k) as u64;
        let v = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::MatMulT(a, b), v, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let v = &self.value(a) + &self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Add(a, b), v, ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shapes");
        let v = &self.value(a) - &self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Sub(a, b), v, ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes");
        let v = &self.value(a) * &self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Mul(a, b), v, ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "add_row shapes");
        let v = &self.value(a) + &self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(Op::AddRow(a, row), v, ng)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "mul_row shapes");
        let v = &self.value(a) * &self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(Op::MulRow(a, row), v, ng)
    }

    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let v = self.value(a).mapv(|x| mul * x + add);
        let ng = self.ng(a);
        self.push(Op::Affine(a, mul), v, ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        let ng = self.ng(a);
        self.push(Op::Gelu(a), v, ng)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * sigmoid(x));
        let ng = self.ng(a);
        self.push(Op::Silu(a), v, ng)
    }

    /// Per-row normalization to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let v = layer_norm(self.value(a));
        let ng = self.ng(a);
        self.push(Op::LayerNorm(a), v, ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        let ng = self.ng(a);
        self.push(Op::SoftmaxRows(a), v, ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.ng(a);
        self.push(Op::SliceCols(a, start, len), v, ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        let ng = self.ng(a);
        self.push(Op::SliceRows(a, start, len), v, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols: equal row counts");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Op::ConcatCols(parts.to_vec()), v, ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows: equal column counts");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Op::ConcatRows(parts.to_vec()), v, ng)
    }

    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Var {
        let t = self.value(table);
        let v = t.select(Axis(0), rows);
        let ng = self.ng(table);
        self.push(Op::GatherRows(table, rows.to_vec()), v, ng)
    }

    /// Mean of squared entries, as a `1 x 1` value.
    pub fn mean_square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let ng = self.ng(a);
        self.push(Op::MeanSquare(a), Array2::from_elem((1, 1), v), ng)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// Backpropagates `seed * d(out)` and adds parameter gradients into `grads`.
    pub fn backward(&self, out: Var, seed: Mat, grads: &mut Grads) {
        let mut g: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        assert_eq!(seed.dim(), self.shape(out), "seed shape");
        g[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = g[i].take() else { continue };
            let mut acc = |v: Var, d: Mat| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut g[v.0] {
                    Some(existing) => *existing += &d,
                    slot @ None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads.accumulate(*id, &dy),
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        acc(*a, dy.dot(&self.value(*b).t()));
                    }
                    if self.ng(*b) {
                        acc(*b, self.value(*a).t().dot(&dy));
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.ng(*a) {
                        acc(*a, dy.dot(&self.value(*b)));
                    }
                    if self.ng(*b) {
                        acc(*b, dy.t().dot(&self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        acc(*b, dy.clone());
                    }
                    acc(*a, dy);
                }
                Op::Sub(a, b) => {
                    if self.ng(*b) {
                        acc(*b, -&dy);
                    }
                    acc(*a, dy);
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        acc(*a, &dy * &self.value(*b));
                    }
                    if self.ng(*b) {
                        acc(*b, &dy * &self.value(*a));
                    }
                }
                Op::AddRow(a, row) => {
                    if self.ng(*row) {
                        acc(*row, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    acc(*a, dy);
                }
                Op::MulRow(a, row) => {
                    if self.ng(*row) {
                        let d = (&dy * &self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc(*row, d);
                    }
                    if self.ng(*a) {
                        acc(*a, &dy * &self.value(*row));
                    }
                }
                Op::Affine(a, mul) => acc(*a, dy.mapv(|d| d * mul)),
                Op::Gelu(a) => {
                    let mut d = dy;
                    Zip::from(&mut d).and(&self.value(*a)).for_each(|d, &x| *d *= gelu_grad(x));
                    acc(*a, d);
                }
                Op::Silu(a) => {
                    let mut d = dy;
                    Zip::from(&mut d).and(&self.value(*a)).for_each(|d, &x| {
                        let s = sigmoid(x);
                        *d *= s * (1.0 + x * (1.0 - s));
                    });
                    acc(*a, d);
                }
                Op::LayerNorm(a) => {
                    let x = self.value(*a);
                    let y = node.value.as_ref().expect("stored");
                    let mut d = dy;
                    for ((mut drow, yrow), xrow) in d.rows_mut().into_iter().zip(y.rows()).zip(x.rows()) {
                        let n = xrow.len() as f64;
                        let mean = xrow.sum() / n;
                        let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let mdy = drow.sum() / n;
                        let mdyy = drow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                        Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv = inv * (*dv - mdy - yv * mdyy));
                    }
                    acc(*a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().expect("stored");
                    let mut d = dy;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let dot = drow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum::<f64>();
                        Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv = yv * (*dv - dot));
                    }
                    acc(*a, d);
                }
                Op::SliceCols(a, start, len) => {
                    let mut d = Mat::zeros(self.shape(*a));
                    d.slice_mut(s![.., *start..*start + *len]).assign(&dy);
                    acc(*a, d);
                }
                Op::SliceRows(a, start, len) => {
                    let mut d = Mat::zeros(self.shape(*a));
                    d.slice_mut(s![*start..*start + *len, ..]).assign(&dy);
                    acc(*a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        if self.ng(*p) {
                            acc(*p, dy.slice(s![.., off..off + w]).to_owned());
                        }
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let h = self.shape(*p).0;
                        if self.ng(*p) {
                            acc(*p, dy.slice(s![off..off + h, ..]).to_owned());
                        }
                        off += h;
                    }
                }
                Op::GatherRows(table, rows) => {
                    let mut d = Mat::zeros(self.shape(*table));
                    for (k, &r) in rows.iter().enumerate() {
                        let mut dst = d.row_mut(r);
                        dst += &dy.row(k);
                    }
                    acc(*table, d);
                }
                Op::MeanSquare(a) => {
                    let x = self.value(*a);
                    let c = 2.0 * dy[[0, 0]] / x.len() as f64;
                    acc(*a, x.mapv(|v| c * v));
                }
            }
        }
    }
}
