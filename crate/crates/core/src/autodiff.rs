//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar replays the backward rules in reverse
//! recording order, populating gradients for every variable that requires
//! them. A tape can be consumed once; a second `backward` is an error rather
//! than a silent double accumulation.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Layout, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Silu,
    Tanh,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Unary(Unary, Var),
    Scale(Var, f32),
    AddBias(Var, Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Mse(Var, Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn live(&self) -> Result<()> {
        if self.consumed {
            return Err(Error::Contract("tape already consumed by backward".into()));
        }
        Ok(())
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Records a detached leaf; no gradient ever flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f32>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(a).sub(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        self.live()?;
        let out = match kind {
            Unary::Silu => self.value(a).map(silu),
            Unary::Tanh => self.value(a).map(f32::tanh),
        };
        let rg = self.rg(&[a]);
        Ok(self.push(out, rg, Op::Unary(kind, a)))
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Silu, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Result<Var> {
        self.live()?;
        let out = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        Ok(self.push(out, rg, Op::Scale(a, s)))
    }

    /// Adds a bias vector of width `n` to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.live()?;
        let (x, b) = (self.value(a), self.value(bias));
        if x.shape().len() != 2 || b.len() != x.shape()[1] {
            return Err(Error::shape("add_bias", x.shape(), b.shape()));
        }
        let n = b.len();
        let mut out = x.clone();
        for row in out.data_mut().chunks_exact_mut(n) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        let rg = self.rg(&[a, bias]);
        Ok(self.push(out, rg, Op::AddBias(a, bias)))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.live()?;
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let rows = self.value(*first).rows();
        let mut width = 0;
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.rows() != rows {
                return Err(Error::shape("concat_cols", self.value(*first).shape(), t.shape()));
            }
            width += t.cols();
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, width], data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// Selects rows of a table by index (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        self.live()?;
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(Error::shape("gather_rows", t.shape(), &[indices.len()]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of range for {} rows",
                t.rows()
            )));
        }
        if indices.is_empty() {
            return Err(Error::Contract("gather with no indices".into()));
        }
        let w = t.cols();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(vec![indices.len(), w], data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(out, rg, Op::GatherRows(table, indices.to_vec())))
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.live()?;
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::shape("mse_loss", p.shape(), t.shape()));
        }
        let sum: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| {
                let d = (a - b) as f64;
                d * d
            })
            .sum();
        let out = Tensor::scalar((sum / p.len() as f64) as f32);
        let rg = self.rg(&[pred, target]);
        Ok(self.push(out, rg, Op::Mse(pred, target)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.live()?;
        let out = Tensor::scalar(self.value(a).sum() as f32);
        let rg = self.rg(&[a]);
        Ok(self.push(out, rg, Op::Sum(a)))
    }

    /// Back-propagates from a scalar `loss`, consuming the tape.
    ///
    /// Afterwards every variable that requires a gradient has one (zeros if it
    /// did not influence the loss).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.live()?;
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        for (id, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && grads[id].is_none() {
                grads[id] = Some(vec![0.0; node.value.len()]);
            }
            if !node.requires_grad {
                grads[id] = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].requires_grad;
        match &nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if needs(*a) {
                    let ga = slot(grads, *a, m * k);
                    gemm(m, n, k, g, Layout::Normal, bv.data(), Layout::Transposed, ga, true);
                }
                if needs(*b) {
                    let gb = slot(grads, *b, k * n);
                    gemm(k, m, n, av.data(), Layout::Transposed, g, Layout::Normal, gb, true);
                }
            }
            Op::Add(a, b) => {
                for (v, sign) in [(*a, 1.0), (*b, 1.0)] {
                    if needs(v) {
                        accumulate(slot(grads, v, g.len()), g.iter().map(|&x| sign * x));
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                    if needs(v) {
                        accumulate(slot(grads, v, g.len()), g.iter().map(|&x| sign * x));
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if needs(*a) {
                    accumulate(slot(grads, *a, g.len()), g.iter().zip(bv).map(|(&x, &y)| x * y));
                }
                if needs(*b) {
                    accumulate(slot(grads, *b, g.len()), g.iter().zip(av).map(|(&x, &y)| x * y));
                }
            }
            Op::Unary(kind, a) => {
                let x = nodes[a.0].value.data();
                let out = nodes[id].value.data();
                let gs = slot(grads, *a, g.len());
                match kind {
                    Unary::Silu => accumulate(gs, g.iter().zip(x).map(|(&d, &x)| d * silu_grad(x))),
                    Unary::Tanh => {
                        accumulate(gs, g.iter().zip(out).map(|(&d, &y)| d * (1.0 - y * y)))
                    }
                }
            }
            Op::Scale(a, s) => {
                accumulate(slot(grads, *a, g.len()), g.iter().map(|&x| s * x));
            }
            Op::AddBias(a, bias) => {
                if needs(*a) {
                    accumulate(slot(grads, *a, g.len()), g.iter().copied());
                }
                if needs(*bias) {
                    let n = nodes[bias.0].value.len();
                    let gb = slot(grads, *bias, n);
                    for row in g.chunks_exact(n) {
                        for (o, &d) in gb.iter_mut().zip(row) {
                            *o += d;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let rows = nodes[id].value.rows();
                let width = nodes[id].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p.0].value.cols();
                    if needs(p) {
                        let gp = slot(grads, p, rows * w);
                        for r in 0..rows {
                            let src = &g[r * width + offset..r * width + offset + w];
                            for (o, &d) in gp[r * w..(r + 1) * w].iter_mut().zip(src) {
                                *o += d;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::GatherRows(table, indices) => {
                let t = &nodes[table.0].value;
                let w = t.cols();
                let gt = slot(grads, *table, t.len());
                for (r, &i) in indices.iter().enumerate() {
                    for (o, &d) in gt[i * w..(i + 1) * w].iter_mut().zip(&g[r * w..(r + 1) * w]) {
                        *o += d;
                    }
                }
            }
            Op::Mse(pred, target) => {
                let (p, t) = (nodes[pred.0].value.data(), nodes[target.0].value.data());
                let c = 2.0 * g[0] / p.len() as f32;
                if needs(*pred) {
                    accumulate(slot(grads, *pred, p.len()), p.iter().zip(t).map(|(&a, &b)| c * (a - b)));
                }
                if needs(*target) {
                    accumulate(slot(grads, *target, p.len()), p.iter().zip(t).map(|(&a, &b)| c * (b - a)));
                }
            }
            Op::Sum(a) => {
                let n = nodes[a.0].value.len();
                accumulate(slot(grads, *a, n), std::iter::repeat_n(g[0], n));
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f32>>], v: Var, len: usize) -> &mut [f32] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(dst: &mut [f32], src: impl Iterator<Item = f32>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

fn silu_grad(x: f32) -> f32 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}
