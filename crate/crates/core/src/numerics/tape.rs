//! Reverse-mode tape over [`Tensor`] values.
//!
//! Every primitive appends one node; [`Tape::backward`] walks the nodes in
//! reverse and accumulates input gradients. Binary elementwise ops accept a
//! right operand that is either the same shape, a `[1×n]` row broadcast over
//! the rows of the left operand, or a single element.

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{NumericsError, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Scalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize, Bcast),
    Sub(usize, usize, Bcast),
    Mul(usize, usize, Bcast),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Ln(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize },
    Conv1d { input: usize, weight: usize },
    WindowMax { input: usize, argmax: Vec<usize> },
    Gather { table: usize, ids: Vec<usize> },
    Scale(usize, f64),
    Sum(usize),
    Mean(usize),
    SqErr(usize, usize),
    Transpose(usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradient of `v`, or zeros when `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var) -> Tensor {
        self.get(v).unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

fn log_softmax_row(x: &[f64], out: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

/// Row-wise softmax of a rank-2 tensor, outside any tape.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = Tensor::zeros(x.shape());
    for (xr, or) in x.data().chunks(c).zip(out.data_mut().chunks_mut(c)) {
        softmax_row(xr, or);
    }
    out
}

/// Row-wise log-softmax of a rank-2 tensor, outside any tape.
pub fn log_softmax_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = Tensor::zeros(x.shape());
    for (xr, or) in x.data().chunks(c).zip(out.data_mut().chunks_mut(c)) {
        log_softmax_row(xr, or);
    }
    out
}

fn same_pad_left(width: usize) -> usize {
    (width - 1) / 2
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: usize) -> bool {
        self.nodes[v].needs_grad
    }

    /// A differentiable leaf (model parameter or checked input).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn rank2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let t = &self.nodes[v.0].value;
        if t.shape().len() != 2 {
            return Err(mismatch(op, t, t));
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.rank2("matmul", a)?;
        let (k2, n) = self.rank2("matmul", b)?;
        if k != k2 {
            return Err(mismatch("matmul", self.value(a), self.value(b)));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a.0, b.0), ng))
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(Bcast::Same)
        } else if tb.len() == 1 {
            Ok(Bcast::Scalar)
        } else if ta.shape().len() == 2 && tb.shape() == [1, ta.shape()[1]] {
            Ok(Bcast::Row)
        } else {
            Err(mismatch(op, ta, tb))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        mk: fn(usize, usize, Bcast) -> Op,
    ) -> Result<Var> {
        let bc = self.bcast(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b).data();
        let cols = ta.cols().max(1);
        let data: Vec<f64> = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match bc {
                    Bcast::Same => tb[i],
                    Bcast::Row => tb[i % cols],
                    Bcast::Scalar => tb[0],
                };
                f(x, y)
            })
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(value, mk(a.0, b.0, bc), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
            .expect("unary shape");
        let ng = self.ng(a.0);
        self.push(value, op, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a.0))
    }

    /// Elementwise natural logarithm.
    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a.0))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a.0, s))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.rank2("softmax", a)?;
        let value = softmax_rows(self.value(a));
        let ng = self.ng(a.0);
        Ok(self.push(value, Op::Softmax(a.0), ng))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.rank2("log_softmax", a)?;
        let value = log_softmax_rows(self.value(a));
        let ng = self.ng(a.0);
        Ok(self.push(value, Op::LogSoftmax(a.0), ng))
    }

    /// Concatenate rank-2 tensors along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        assert!(!inputs.is_empty(), "concat of nothing");
        assert!(axis < 2, "concat axis must be 0 or 1");
        let first = self.rank2("concat", inputs[0])?;
        let mut rows = 0;
        let mut cols = 0;
        for &v in inputs {
            let (r, c) = self.rank2("concat", v)?;
            let ok = if axis == 0 { c == first.1 } else { r == first.0 };
            if !ok {
                return Err(mismatch("concat", self.value(inputs[0]), self.value(v)));
            }
            if axis == 0 {
                rows += r;
                cols = c;
            } else {
                rows = r;
                cols += c;
            }
        }
        let mut data = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &v in inputs {
                data.extend_from_slice(self.value(v).data());
            }
        } else {
            for r in 0..rows {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row(r));
                }
            }
        }
        let ng = inputs.iter().any(|v| self.ng(v.0));
        let op = Op::Concat {
            inputs: inputs.iter().map(|v| v.0).collect(),
            axis,
        };
        Ok(self.push(Tensor::matrix(rows, cols, data), op, ng))
    }

    /// Half-open slice `[start, end)` of a rank-2 tensor along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.rank2("slice", a)?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start >= end || end > extent {
            return Err(NumericsError::ShapeMismatch {
                op: "slice",
                left: vec![r, c],
                right: vec![axis, start, end],
            });
        }
        let t = self.value(a);
        let value = if axis == 0 {
            Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec())
        } else {
            let mut data = Vec::with_capacity(r * (end - start));
            for row in 0..r {
                data.extend_from_slice(&t.row(row)[start..end]);
            }
            Tensor::matrix(r, end - start, data)
        };
        let ng = self.ng(a.0);
        Ok(self.push(value, Op::Slice { input: a.0, axis, start }, ng))
    }

    /// Same-padded 1-D convolution over time.
    /// `input`: [T×Cin], `weight`: [width×Cin×Cout] → [T×Cout].
    /// Output row t reads input rows `t - (width-1)/2 ..= t + width/2`.
    pub fn conv1d(&mut self, input: Var, weight: Var) -> Result<Var> {
        let (t_len, cin) = self.rank2("conv1d", input)?;
        let ws = self.value(weight).shape().to_vec();
        if ws.len() != 3 || ws[1] != cin {
            return Err(mismatch("conv1d", self.value(input), self.value(weight)));
        }
        let (width, cout) = (ws[0], ws[2]);
        let left = same_pad_left(width) as isize;
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let mut out = vec![0.0; t_len * cout];
        for t in 0..t_len {
            for k in 0..width {
                let src = t as isize + k as isize - left;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let src = src as usize;
                matmul_acc(
                    &x[src * cin..(src + 1) * cin],
                    &w[k * cin * cout..(k + 1) * cin * cout],
                    &mut out[t * cout..(t + 1) * cout],
                    1,
                    cin,
                    cout,
                );
            }
        }
        let ng = self.ng(input.0) || self.ng(weight.0);
        Ok(self.push(
            Tensor::matrix(t_len, cout, out),
            Op::Conv1d {
                input: input.0,
                weight: weight.0,
            },
            ng,
        ))
    }

    /// Same-padded max over a sliding window of `width` rows, stride 1.
    /// Ties resolve to the earliest row.
    pub fn window_max(&mut self, a: Var, width: usize) -> Result<Var> {
        let (t_len, c) = self.rank2("window_max", a)?;
        assert!(width >= 1, "window width must be positive");
        let left = same_pad_left(width) as isize;
        let x = self.value(a).data();
        let mut out = vec![0.0; t_len * c];
        let mut argmax = vec![0usize; t_len * c];
        for t in 0..t_len {
            let lo = (t as isize - left).max(0) as usize;
            let hi = ((t as isize - left + width as isize) as usize).min(t_len);
            for ch in 0..c {
                let mut best = lo;
                for s in lo + 1..hi {
                    if x[s * c + ch] > x[best * c + ch] {
                        best = s;
                    }
                }
                out[t * c + ch] = x[best * c + ch];
                argmax[t * c + ch] = best * c + ch;
            }
        }
        let ng = self.ng(a.0);
        Ok(self.push(
            Tensor::matrix(t_len, c, out),
            Op::WindowMax { input: a.0, argmax },
            ng,
        ))
    }

    /// Row lookup: `table[ids[i]]` for each id.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, e) = self.rank2("gather", table)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(NumericsError::ShapeMismatch {
                op: "gather",
                left: vec![v, e],
                right: vec![bad],
            });
        }
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let ng = self.ng(table.0);
        Ok(self.push(
            Tensor::matrix(ids.len(), e, data),
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a.0);
        self.push(Tensor::scalar(s), Op::Sum(a.0), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let ng = self.ng(a.0);
        self.push(Tensor::scalar(s), Op::Mean(a.0), ng)
    }

    /// `Σ (a - b)²` as a `[1×1]` scalar.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(mismatch("squared_error", self.value(a), self.value(b)));
        }
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(Tensor::scalar(s), Op::SqErr(a.0, b.0), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.rank2("transpose", a)?;
        let x = self.value(a).data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = x[i * c + j];
            }
        }
        let ng = self.ng(a.0);
        Ok(self.push(Tensor::matrix(c, r, data), Op::Transpose(a.0), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        let ng = self.ng(a.0);
        Ok(self.push(value, Op::Reshape(a.0), ng))
    }

    /// Backpropagate from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        let seed = Tensor::filled(self.value(output).shape(), 1.0);
        self.backward_with(output, &seed)
    }

    /// Backpropagate an externally computed gradient `seed` = ∂L/∂output.
    pub fn backward_with(&self, output: Var, seed: &Tensor) -> Gradients {
        assert_eq!(
            seed.shape(),
            self.value(output).shape(),
            "seed gradient shape"
        );
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[output.0] = Some(seed.data().to_vec());
        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match &self.nodes[i].op {
                Op::Leaf | Op::Constant => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.propagate(i, &g, &mut grads);
        }
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        }
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: usize) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v].needs_grad {
            return None;
        }
        let len = self.nodes[v].value.len();
        Some(grads[v].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_bt_acc(g, tb.data(), ga, m, k, n);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_at_acc(ta.data(), g, gb, m, k, n);
                }
            }
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = self.acc(grads, *a) {
                    for (x, &gv) in ga.iter_mut().zip(g) {
                        *x += gv;
                    }
                }
                let cols = node.value.cols().max(1);
                if let Some(gb) = self.acc(grads, *b) {
                    for (idx, &gv) in g.iter().enumerate() {
                        let j = match bc {
                            Bcast::Same => idx,
                            Bcast::Row => idx % cols,
                            Bcast::Scalar => 0,
                        };
                        gb[j] += sign * gv;
                    }
                }
            }
            Op::Mul(a, b, bc) => {
                let (xa, xb) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                let cols = node.value.cols().max(1);
                let bidx = |idx: usize| match bc {
                    Bcast::Same => idx,
                    Bcast::Row => idx % cols,
                    Bcast::Scalar => 0,
                };
                if let Some(ga) = self.acc(grads, *a) {
                    for (idx, &gv) in g.iter().enumerate() {
                        ga[idx] += gv * xb[bidx(idx)];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (idx, &gv) in g.iter().enumerate() {
                        gb[bidx(idx)] += gv * xa[idx];
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((x, &gv), &yv) in ga.iter_mut().zip(g).zip(y) {
                        *x += gv * (1.0 - yv * yv);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((x, &gv), &yv) in ga.iter_mut().zip(g).zip(y) {
                        *x += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::Relu(a) => {
                let xa = self.nodes[*a].value.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((x, &gv), &xv) in ga.iter_mut().zip(g).zip(xa) {
                        if xv > 0.0 {
                            *x += gv;
                        }
                    }
                }
            }
            Op::Ln(a) => {
                let xa = self.nodes[*a].value.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((x, &gv), &xv) in ga.iter_mut().zip(g).zip(xa) {
                        *x += gv / xv;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (x, &gv) in ga.iter_mut().zip(g) {
                        *x += gv * s;
                    }
                }
            }
            Op::Softmax(a) => {
                let c = node.value.cols();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((gr, yr), xr) in g.chunks(c).zip(y.chunks(c)).zip(ga.chunks_mut(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((x, &gv), &yv) in xr.iter_mut().zip(gr).zip(yr) {
                            *x += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let c = node.value.cols();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((gr, yr), xr) in g.chunks(c).zip(y.chunks(c)).zip(ga.chunks_mut(c)) {
                        let gs: f64 = gr.iter().sum();
                        for ((x, &gv), &yv) in xr.iter_mut().zip(gr).zip(yr) {
                            *x += gv - yv.exp() * gs;
                        }
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let total_cols = node.value.cols();
                let mut offset = 0;
                for &inp in inputs {
                    let t = &self.nodes[inp].value;
                    let (r, c) = (t.shape()[0], t.shape()[1]);
                    if let Some(ga) = self.acc(grads, inp) {
                        if *axis == 0 {
                            for (x, &gv) in ga.iter_mut().zip(&g[offset * c..(offset + r) * c]) {
                                *x += gv;
                            }
                        } else {
                            for row in 0..r {
                                let src = &g[row * total_cols + offset..row * total_cols + offset + c];
                                for (x, &gv) in ga[row * c..(row + 1) * c].iter_mut().zip(src) {
                                    *x += gv;
                                }
                            }
                        }
                    }
                    offset += if *axis == 0 { r } else { c };
                }
            }
            Op::Slice { input, axis, start } => {
                let t = &self.nodes[*input].value;
                let in_cols = t.shape()[1];
                let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
                if let Some(ga) = self.acc(grads, *input) {
                    for row in 0..r {
                        for col in 0..c {
                            let dst = if *axis == 0 {
                                (row + start) * in_cols + col
                            } else {
                                row * in_cols + col + start
                            };
                            ga[dst] += g[row * c + col];
                        }
                    }
                }
            }
            Op::Conv1d { input, weight } => {
                let x = &self.nodes[*input].value;
                let w = &self.nodes[*weight].value;
                let (t_len, cin) = (x.shape()[0], x.shape()[1]);
                let (width, cout) = (w.shape()[0], w.shape()[2]);
                let left = same_pad_left(width) as isize;
                let valid = |t: usize, k: usize| {
                    let src = t as isize + k as isize - left;
                    (src >= 0 && src < t_len as isize).then_some(src as usize)
                };
                if let Some(gx) = self.acc(grads, *input) {
                    for t in 0..t_len {
                        for k in 0..width {
                            if let Some(src) = valid(t, k) {
                                matmul_bt_acc(
                                    &g[t * cout..(t + 1) * cout],
                                    &w.data()[k * cin * cout..(k + 1) * cin * cout],
                                    &mut gx[src * cin..(src + 1) * cin],
                                    1,
                                    cin,
                                    cout,
                                );
                            }
                        }
                    }
                }
                if let Some(gw) = self.acc(grads, *weight) {
                    for t in 0..t_len {
                        for k in 0..width {
                            if let Some(src) = valid(t, k) {
                                matmul_at_acc(
                                    &x.data()[src * cin..(src + 1) * cin],
                                    &g[t * cout..(t + 1) * cout],
                                    &mut gw[k * cin * cout..(k + 1) * cin * cout],
                                    1,
                                    cin,
                                    cout,
                                );
                            }
                        }
                    }
                }
            }
            Op::WindowMax { input, argmax } => {
                if let Some(ga) = self.acc(grads, *input) {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        ga[src] += gv;
                    }
                }
            }
            Op::Gather { table, ids } => {
                let e = self.nodes[*table].value.shape()[1];
                if let Some(gt) = self.acc(grads, *table) {
                    for (row, &id) in ids.iter().enumerate() {
                        for (x, &gv) in gt[id * e..(id + 1) * e].iter_mut().zip(&g[row * e..(row + 1) * e]) {
                            *x += gv;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                }
            }
            Op::Mean(a) => {
                let n = self.nodes[*a].value.len() as f64;
                if let Some(ga) = self.acc(grads, *a) {
                    for x in ga.iter_mut() {
                        *x += g[0] / n;
                    }
                }
            }
            Op::SqErr(a, b) => {
                let (xa, xb) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                if let Some(ga) = self.acc(grads, *a) {
                    for ((x, &p), &q) in ga.iter_mut().zip(xa).zip(xb) {
                        *x += 2.0 * (p - q) * g[0];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((x, &p), &q) in gb.iter_mut().zip(xa).zip(xb) {
                        *x -= 2.0 * (p - q) * g[0];
                    }
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
                if let Some(ga) = self.acc(grads, *a) {
                    // node is [r×c], input is [c×r]
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (x, &gv) in ga.iter_mut().zip(g) {
                        *x += gv;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Prng};

    const H: f64 = 1e-5;

    fn randn(shape: &[usize], seed: u64) -> Tensor {
        Tensor::randn(shape, 1.0, &mut Prng::new(seed))
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2]));
        let y = tape.softmax_rows(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let a = randn(&[2, 3], 1);
        let i = tape.constant(Tensor::identity(2));
        let av = tape.constant(a.clone());
        let y = tape.matmul(i, av).unwrap();
        assert_eq!(tape.value(y), &a);
    }

    #[test]
    fn tanh_derivative_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0));
        let y = tape.tanh(x);
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(NumericsError::ShapeMismatch { .. })));
        let c = tape.constant(Tensor::zeros(&[3, 3]));
        assert!(tape.add(a, c).is_err());
    }

    #[test]
    fn window_max_same_padding() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(3, 1, vec![1.0, 3.0, 2.0]));
        let y = tape.window_max(x, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 3.0, 2.0]);
    }

    fn check(f: impl Fn(&mut Tape, &[Var]) -> Result<Var>, inputs: Vec<Tensor>, tol: f64) {
        let err = grad_check(f, &inputs, H).unwrap();
        assert!(err <= tol, "relative error {err:e} > {tol:e}");
    }

    #[test]
    fn primitive_gradients() {
        let tol = 1e-6;
        let sum_of = |t: &mut Tape, v: Var| {
            // weight the output so every element gets a distinct sensitivity
            let n = t.value(v).len();
            let shape = t.value(v).shape().to_vec();
            let w = t.constant(
                Tensor::new(shape, (0..n).map(|i| 0.3 + 0.1 * i as f64).collect()).unwrap(),
            );
            let m = t.mul(v, w)?;
            Ok(t.sum(m))
        };
        check(|t, v| { let y = t.matmul(v[0], v[1])?; sum_of(t, y) }, vec![randn(&[3, 4], 1), randn(&[4, 2], 2)], tol);
        check(|t, v| { let y = t.add(v[0], v[1])?; sum_of(t, y) }, vec![randn(&[3, 4], 1), randn(&[1, 4], 2)], tol);
        check(|t, v| { let y = t.sub(v[0], v[1])?; sum_of(t, y) }, vec![randn(&[3, 4], 1), randn(&[3, 4], 2)], tol);
        check(|t, v| { let y = t.mul(v[0], v[1])?; sum_of(t, y) }, vec![randn(&[3, 4], 1), randn(&[1, 4], 2)], tol);
        check(|t, v| { let y = t.mul(v[0], v[1])?; sum_of(t, y) }, vec![randn(&[3, 4], 1), randn(&[1, 1], 2)], tol);
        check(|t, v| { let y = t.tanh(v[0]); sum_of(t, y) }, vec![randn(&[3, 4], 3)], tol);
        check(|t, v| { let y = t.sigmoid(v[0]); sum_of(t, y) }, vec![randn(&[3, 4], 4)], tol);
        let mut away = randn(&[3, 4], 5);
        for x in away.data_mut() {
            if x.abs() < 0.1 {
                *x += 0.5;
            }
        }
        check(|t, v| { let y = t.relu(v[0]); sum_of(t, y) }, vec![away], tol);
        let mut pos = randn(&[2, 3], 6);
        for x in pos.data_mut() {
            *x = x.abs() + 0.5;
        }
        check(|t, v| { let y = t.ln(v[0]); sum_of(t, y) }, vec![pos], tol);
        check(|t, v| { let y = t.softmax_rows(v[0])?; sum_of(t, y) }, vec![randn(&[3, 4], 7)], tol);
        check(|t, v| { let y = t.log_softmax_rows(v[0])?; sum_of(t, y) }, vec![randn(&[3, 4], 8)], tol);
        check(|t, v| { let y = t.concat(&[v[0], v[1]], 0)?; sum_of(t, y) }, vec![randn(&[2, 3], 9), randn(&[1, 3], 10)], tol);
        check(|t, v| { let y = t.concat(&[v[0], v[1]], 1)?; sum_of(t, y) }, vec![randn(&[2, 3], 9), randn(&[2, 2], 10)], tol);
        check(|t, v| { let y = t.slice(v[0], 1, 1, 3)?; sum_of(t, y) }, vec![randn(&[3, 4], 11)], tol);
        check(|t, v| { let y = t.slice(v[0], 0, 1, 3)?; sum_of(t, y) }, vec![randn(&[3, 4], 11)], tol);
        check(|t, v| { let y = t.conv1d(v[0], v[1])?; sum_of(t, y) }, vec![randn(&[5, 3], 12), randn(&[3, 3, 2], 13)], tol);
        check(|t, v| { let y = t.conv1d(v[0], v[1])?; sum_of(t, y) }, vec![randn(&[5, 3], 12), randn(&[4, 3, 2], 14)], tol);
        check(|t, v| { let y = t.window_max(v[0], 2)?; sum_of(t, y) }, vec![randn(&[5, 3], 15)], tol);
        check(|t, v| { let y = t.gather(v[0], &[2, 0, 2])?; sum_of(t, y) }, vec![randn(&[4, 3], 16)], tol);
        check(|t, v| { let y = t.scale(v[0], -1.7); sum_of(t, y) }, vec![randn(&[2, 2], 17)], tol);
        check(|t, v| Ok(t.mean(v[0])), vec![randn(&[2, 5], 18)], tol);
        check(|t, v| t.squared_error(v[0], v[1]), vec![randn(&[2, 3], 19), randn(&[2, 3], 20)], tol);
        check(|t, v| { let y = t.transpose(v[0])?; sum_of(t, y) }, vec![randn(&[2, 3], 21)], tol);
        check(|t, v| { let y = t.reshape(v[0], &[3, 2])?; sum_of(t, y) }, vec![randn(&[2, 3], 22)], tol);
    }

    #[test]
    fn composed_three_layer_graph() {
        for seed in 0..5 {
            let inputs = vec![
                randn(&[2, 4], seed * 10 + 1),
                randn(&[4, 5], seed * 10 + 2),
                randn(&[5, 3], seed * 10 + 3),
                randn(&[3, 2], seed * 10 + 4),
            ];
            check(
                |t, v| {
                    let h1 = t.matmul(v[0], v[1])?;
                    let h1 = t.tanh(h1);
                    let h2 = t.matmul(h1, v[2])?;
                    let h2 = t.sigmoid(h2);
                    let h3 = t.matmul(h2, v[3])?;
                    let y = t.log_softmax_rows(h3)?;
                    let y = t.slice(y, 1, 0, 1)?;
                    Ok(t.sum(y))
                },
                inputs,
                1e-5,
            );
        }
    }

    #[test]
    fn reused_input_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }
}
