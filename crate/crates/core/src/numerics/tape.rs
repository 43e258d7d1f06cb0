//! Define-by-run reverse-mode differentiation.
//!
//! Every forward pass records onto a fresh [`Tape`]; values live in the tape
//! arena and are addressed by [`Var`] handles. `backward` walks the arena in
//! reverse and accumulates adjoints in that fixed order, so gradients are
//! bitwise reproducible.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Neg,
    Sigmoid,
    Tanh,
    Relu,
    Log,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    Shift(Var),
    AddRow(Var, Var),
    RepeatRows(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Concat(Vec<Var>, usize),
    Reshape(Var),
    Row(Var, usize),
    Slice(Var, usize),
    Pick(Var, usize),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Vec<f64>>>>,
}

/// (outer, len, inner) strides for iterating along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
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

    /// Trainable leaf: receives a gradient in `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Constant input: no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &str) -> Result<Var> {
        if self.grads.is_some() {
            return Err(Error::State(
                "tape already differentiated; record a new forward pass".into(),
            ));
        }
        if !value.all_finite() {
            return Err(Error::NumericDomain(format!(
                "{name} produced a non-finite value"
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    /// Matrix product. `a` may be a rank-1 vector, read as a single row.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, p) = match sa.len() {
            1 => (1, sa[0]),
            2 => (sa[0], sa[1]),
            _ => return Err(Error::Dimension(format!("matmul lhs {sa:?} is not a matrix"))),
        };
        if sb.len() != 2 || sb[0] != p {
            return Err(Error::Dimension(format!(
                "matmul shapes {sa:?} and {sb:?} do not align"
            )));
        }
        let q = sb[1];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * q];
        for i in 0..m {
            let row = &mut out[i * q..(i + 1) * q];
            for k in 0..p {
                let aik = ad[i * p + k];
                if aik == 0.0 {
                    continue;
                }
                for (o, &bkj) in row.iter_mut().zip(&bd[k * q..(k + 1) * q]) {
                    *o += aik * bkj;
                }
            }
        }
        let shape = if sa.len() == 1 { vec![q] } else { vec![m, q] };
        self.push(Tensor::new(shape, out)?, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn unary(&mut self, kind: Unary, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if kind == Unary::Log && xv.data().iter().any(|&v| v <= 0.0) {
            return Err(Error::NumericDomain("log of a non-positive value".into()));
        }
        let f: fn(f64) -> f64 = match kind {
            Unary::Neg => |v| -v,
            Unary::Sigmoid => sigmoid,
            Unary::Tanh => f64::tanh,
            Unary::Relu => |v| if v > 0.0 { v } else { 0.0 },
            Unary::Log => f64::ln,
            Unary::Exp => f64::exp,
        };
        let out = xv.map(f);
        self.push(out, Op::Unary(kind, x), &[x], &format!("{kind:?}"))
    }

    /// Elementwise binary op. Shapes must match, except that either side may
    /// be a one-element tensor, which is broadcast.
    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let f: fn(f64, f64) -> f64 = match kind {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
            Binary::Div => |x, y| x / y,
        };
        if kind == Binary::Div && vb.data().iter().any(|&v| v == 0.0) {
            return Err(Error::NumericDomain("division by zero".into()));
        }
        let out = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(va.shape().to_vec(), data)?
        } else if vb.is_scalar() {
            let y = vb.item();
            va.map(|x| f(x, y))
        } else if va.is_scalar() {
            let x = va.item();
            vb.map(|y| f(x, y))
        } else {
            return Err(Error::Dimension(format!(
                "{kind:?} shapes {:?} and {:?} differ",
                va.shape(),
                vb.shape()
            )));
        };
        self.push(out, Op::Binary(kind, a, b), &[a, b], &format!("{kind:?}"))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Neg, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Tanh, x)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Relu, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Log, x)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(Unary::Exp, x)
    }

    /// `c * x` for a constant `c`.
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c), &[x], "scale")
    }

    /// `x + c` for a constant `c`.
    pub fn shift(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v + c);
        self.push(out, Op::Shift(x), &[x], "shift")
    }

    /// Adds the vector `b` (length q) to every row of the matrix `x` (m×q).
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if xv.rank() != 2 || bv.rank() != 1 || xv.shape()[1] != bv.numel() {
            return Err(Error::Dimension(format!(
                "add_row shapes {:?} and {:?} do not align",
                xv.shape(),
                bv.shape()
            )));
        }
        let q = bv.numel();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv.data()[i % q])
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::AddRow(x, b), &[x, b], "add_row")
    }

    /// Stacks `n` copies of the vector `x` into an n×q matrix.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 1 || n == 0 {
            return Err(Error::Dimension(format!(
                "repeat_rows needs a vector and n > 0, got {:?} x{n}",
                xv.shape()
            )));
        }
        let q = xv.numel();
        let out = Tensor::new(vec![n, q], xv.data().repeat(n))?;
        self.push(out, Op::RepeatRows(x), &[x], "repeat_rows")
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = softmax_along(self.value(x), axis, false)?;
        self.push(out, Op::Softmax(x, axis), &[x], "softmax")
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = softmax_along(self.value(x), axis, true)?;
        self.push(out, Op::LogSoftmax(x, axis), &[x], "log_softmax")
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = match xs.first() {
            Some(&v) => self.shape(v).to_vec(),
            None => return Err(Error::Dimension("concat of zero tensors".into())),
        };
        if axis >= first.len() {
            return Err(Error::Dimension(format!(
                "concat axis {axis} out of range for {first:?}"
            )));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::Dimension(format!(
                    "concat along {axis}: {:?} vs {first:?}",
                    s
                )));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in xs {
                let t = self.value(v);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::Concat(xs.to_vec(), axis), xs, "concat")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        self.push(out, Op::Reshape(x), &[x], "reshape")
    }

    /// Row `i` of a matrix as a vector; the gradient scatters into that row.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::Dimension(format!("row of non-matrix {:?}", xv.shape())));
        }
        if i >= xv.shape()[0] {
            return Err(Error::Index(format!(
                "row {i} of a matrix with {} rows",
                xv.shape()[0]
            )));
        }
        let out = Tensor::vector(xv.row(i).to_vec());
        self.push(out, Op::Row(x, i), &[x], "row")
    }

    /// Elements [start, start + len) of a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 1 || len == 0 || start + len > xv.numel() {
            return Err(Error::Index(format!(
                "slice [{start}, {}) of shape {:?}",
                start + len,
                xv.shape()
            )));
        }
        let out = Tensor::vector(xv.data()[start..start + len].to_vec());
        self.push(out, Op::Slice(x, start), &[x], "slice")
    }

    /// Element `i` (flat index) as a scalar.
    pub fn pick(&mut self, x: Var, i: usize) -> Result<Var> {
        let xv = self.value(x);
        if i >= xv.numel() {
            return Err(Error::Index(format!("element {i} of {} values", xv.numel())));
        }
        let out = Tensor::scalar(xv.data()[i]);
        self.push(out, Op::Pick(x, i), &[x], "pick")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x], "sum")
    }

    /// Sum of several scalars, left to right.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs
            .split_first()
            .ok_or_else(|| Error::Contract("add_all of nothing".into()))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// Populates adjoints of every node reachable from the scalar `root`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::State(
                "backward already ran on this tape; record a new forward pass".into(),
            ));
        }
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if self.nodes[idx].requires_grad {
                self.propagate(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// dRoot/dv after `backward`; zeros when `v` did not influence the root.
    pub fn grad(&self, v: Var) -> Result<Tensor> {
        let grads = self
            .grads
            .as_ref()
            .ok_or_else(|| Error::State("backward has not run".into()))?;
        let shape = self.shape(v).to_vec();
        match &grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()),
            None => Ok(Tensor::zeros(&shape)),
        }
    }

    fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(contrib).for_each(|(a, c)| *a += c),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let (p, q) = (bv.shape()[0], bv.shape()[1]);
                let m = av.numel() / p;
                if self.wants(a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * p];
                    for i in 0..m {
                        let gi = &g[i * q..(i + 1) * q];
                        for k in 0..p {
                            let brow = &bv.data()[k * q..(k + 1) * q];
                            da[i * p + k] = gi.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    Self::accumulate(grads, a, da);
                }
                if self.wants(b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; p * q];
                    for i in 0..m {
                        let gi = &g[i * q..(i + 1) * q];
                        for k in 0..p {
                            let aik = av.data()[i * p + k];
                            for (d, &gv) in db[k * q..(k + 1) * q].iter_mut().zip(gi) {
                                *d += aik * gv;
                            }
                        }
                    }
                    Self::accumulate(grads, b, db);
                }
            }
            &Op::Unary(kind, x) => {
                let xv = self.value(x).data();
                let dx = g
                    .iter()
                    .zip(xv)
                    .zip(out)
                    .map(|((&gv, &xi), &yi)| {
                        gv * match kind {
                            Unary::Neg => -1.0,
                            Unary::Sigmoid => yi * (1.0 - yi),
                            Unary::Tanh => 1.0 - yi * yi,
                            Unary::Relu => {
                                if xi > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Log => 1.0 / xi,
                            Unary::Exp => yi,
                        }
                    })
                    .collect();
                Self::accumulate(grads, x, dx);
            }
            &Op::Binary(kind, a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let n = out.len();
                let at = |i: usize| if av.is_scalar() { av.data()[0] } else { av.data()[i] };
                let bt = |i: usize| if bv.is_scalar() { bv.data()[0] } else { bv.data()[i] };
                // Partial derivatives of the output w.r.t. each operand.
                let (da, db): (Vec<f64>, Vec<f64>) = (0..n)
                    .map(|i| {
                        let (x, y) = (at(i), bt(i));
                        match kind {
                            Binary::Add => (g[i], g[i]),
                            Binary::Sub => (g[i], -g[i]),
                            Binary::Mul => (g[i] * y, g[i] * x),
                            Binary::Div => (g[i] / y, -g[i] * x / (y * y)),
                        }
                    })
                    .unzip();
                let reduce = |d: Vec<f64>, t: &Tensor| {
                    if t.numel() == n {
                        d
                    } else {
                        vec![d.iter().sum()]
                    }
                };
                if self.wants(a) {
                    Self::accumulate(grads, a, reduce(da, av));
                }
                if self.wants(b) {
                    Self::accumulate(grads, b, reduce(db, bv));
                }
            }
            &Op::Scale(x, c) => Self::accumulate(grads, x, g.iter().map(|v| v * c).collect()),
            &Op::Shift(x) | &Op::Reshape(x) => Self::accumulate(grads, x, g.to_vec()),
            &Op::AddRow(x, b) => {
                if self.wants(x) {
                    Self::accumulate(grads, x, g.to_vec());
                }
                if self.wants(b) {
                    let q = self.value(b).numel();
                    let mut db = vec![0.0; q];
                    for row in g.chunks(q) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    Self::accumulate(grads, b, db);
                }
            }
            &Op::RepeatRows(x) => {
                let q = self.value(x).numel();
                let mut dx = vec![0.0; q];
                for row in g.chunks(q) {
                    dx.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                Self::accumulate(grads, x, dx);
            }
            &Op::Softmax(x, axis) | &Op::LogSoftmax(x, axis) => {
                let log = matches!(node.op, Op::LogSoftmax(..));
                let (outer, len, inner) = axis_split(node.value.shape(), axis);
                let mut dx = vec![0.0; out.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        if log {
                            let gsum: f64 = (0..len).map(|j| g[at(j)]).sum();
                            for j in 0..len {
                                dx[at(j)] = g[at(j)] - out[at(j)].exp() * gsum;
                            }
                        } else {
                            let dot: f64 = (0..len).map(|j| g[at(j)] * out[at(j)]).sum();
                            for j in 0..len {
                                dx[at(j)] = out[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                }
                Self::accumulate(grads, x, dx);
            }
            Op::Concat(xs, axis) => {
                let (outer, _, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                let total_block = node.value.shape()[*axis] * inner;
                for &v in xs {
                    let block = self.value(v).shape()[*axis] * inner;
                    if self.wants(v) {
                        let mut dv = Vec::with_capacity(outer * block);
                        for o in 0..outer {
                            let start = o * total_block + offset;
                            dv.extend_from_slice(&g[start..start + block]);
                        }
                        Self::accumulate(grads, v, dv);
                    }
                    offset += block;
                }
            }
            &Op::Row(x, i) => {
                let xv = self.value(x);
                let q = xv.shape()[1];
                let mut dx = vec![0.0; xv.numel()];
                dx[i * q..(i + 1) * q].copy_from_slice(g);
                Self::accumulate(grads, x, dx);
            }
            &Op::Slice(x, start) => {
                let mut dx = vec![0.0; self.value(x).numel()];
                dx[start..start + g.len()].copy_from_slice(g);
                Self::accumulate(grads, x, dx);
            }
            &Op::Pick(x, i) => {
                let mut dx = vec![0.0; self.value(x).numel()];
                dx[i] = g[0];
                Self::accumulate(grads, x, dx);
            }
            &Op::Sum(x) => Self::accumulate(grads, x, vec![g[0]; self.value(x).numel()]),
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted (log-)softmax of `t` along `axis`.
pub fn softmax_along(t: &Tensor, axis: usize, log: bool) -> Result<Tensor> {
    if axis >= t.rank().max(1) {
        return Err(Error::Dimension(format!(
            "softmax axis {axis} out of range for {:?}",
            t.shape()
        )));
    }
    let shape = if t.rank() == 0 { vec![1] } else { t.shape().to_vec() };
    let (outer, len, inner) = axis_split(&shape, axis);
    let x = t.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..len).map(|j| (x[at(j)] - max).exp()).sum();
            let log_z = z.ln();
            for j in 0..len {
                out[at(j)] = if log {
                    x[at(j)] - max - log_z
                } else {
                    (x[at(j)] - max).exp() / z
                };
            }
        }
    }
    Tensor::new(t.shape().to_vec(), out)
}
