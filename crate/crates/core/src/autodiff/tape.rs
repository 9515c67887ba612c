use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the input `x` and output `y`. Relu'(0) is 0.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `x` (n×k) plus a 1×k row broadcast over every row.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Activation(Var, Activation),
    ConcatCols(Vec<Var>),
    /// Each row multiplied by a constant factor.
    ScaleRows(Var, Vec<f64>),
    /// Constant offset already folded into the value.
    AddConst(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of a forward pass. Rebuilt for every pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of `v`, zeros if nothing has flowed into it.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        let t = &self.nodes[v.0].value;
        t.grad()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; t.len()])
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(Error::Shape {
                op: "add_row",
                lhs: xv.shape(),
                rhs: rv.shape(),
            });
        }
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            for (d, b) in chunk.iter_mut().zip(rv.data()) {
                *d += b;
            }
        }
        let out = Tensor::new(xv.rows(), cols, data)?;
        let rg = self.needs(x) || self.needs(row);
        Ok(self.push(out, Op::AddRow(x, row), rg))
    }

    fn zip_same(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op: op_name,
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let out = Tensor::new(xv.rows(), xv.cols(), data).expect("same shape as input");
        let rg = self.needs(x);
        self.push(out, Op::Activation(x, kind), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let rows = self.value(*first).rows();
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.value(*first).shape(),
                    rhs: self.value(*p).shape(),
                });
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Multiplies row `i` by `factors[i]`.
    pub fn scale_rows(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let xv = self.value(x);
        if factors.len() != xv.rows() {
            return Err(Error::Shape {
                op: "scale_rows",
                lhs: xv.shape(),
                rhs: (factors.len(), 1),
            });
        }
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for (chunk, f) in data.chunks_mut(cols).zip(&factors) {
            for d in chunk {
                *d *= f;
            }
        }
        let out = Tensor::new(xv.rows(), cols, data)?;
        let rg = self.needs(x);
        Ok(self.push(out, Op::ScaleRows(x, factors), rg))
    }

    /// Adds a constant tensor; the gradient passes through unchanged.
    pub fn add_const(&mut self, x: Var, offset: &Tensor) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != offset.shape() {
            return Err(Error::Shape {
                op: "add_const",
                lhs: xv.shape(),
                rhs: offset.shape(),
            });
        }
        let data = xv
            .data()
            .iter()
            .zip(offset.data())
            .map(|(a, b)| a + b)
            .collect();
        let out = Tensor::new(xv.rows(), xv.cols(), data)?;
        let rg = self.needs(x);
        Ok(self.push(out, Op::AddConst(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s: f64 = xv.data().iter().sum();
        let m = s / xv.len() as f64;
        let rg = self.needs(x);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v * v).collect();
        let out = Tensor::new(xv.rows(), xv.cols(), data).expect("same shape as input");
        let rg = self.needs(x);
        self.push(out, Op::Square(x), rg)
    }

    /// Mean squared error between two same-shaped tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = self.sub(pred, target)?;
        let sq = self.square(diff);
        Ok(self.mean(sq))
    }

    /// Reverse pass from a scalar `loss`. Gradients are added to whatever
    /// each recorded tensor already holds.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            self.nodes[i].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut send = |v: Var, delta: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let gt = Tensor::new(out.rows(), out.cols(), g.to_vec()).expect("grad shape");
                if self.nodes[a.0].requires_grad {
                    let da = gt.matmul(&bv.transpose()).expect("grad shape");
                    send(*a, da.into_data());
                }
                if self.nodes[b.0].requires_grad {
                    let db = av.transpose().matmul(&gt).expect("grad shape");
                    send(*b, db.into_data());
                }
            }
            Op::AddRow(x, row) => {
                send(*x, g.to_vec());
                let cols = out.cols();
                let mut dr = vec![0.0; cols];
                for chunk in g.chunks(cols) {
                    for (d, v) in dr.iter_mut().zip(chunk) {
                        *d += v;
                    }
                }
                send(*row, dr);
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                send(*a, g.iter().zip(bv).map(|(g, y)| g * y).collect());
                send(*b, g.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::Activation(x, kind) => {
                let xv = self.value(*x).data();
                let d = g
                    .iter()
                    .zip(xv)
                    .zip(out.data())
                    .map(|((g, &x), &y)| g * kind.derivative(x, y))
                    .collect();
                send(*x, d);
            }
            Op::ConcatCols(parts) => {
                let rows = out.rows();
                let total = out.cols();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    let mut d = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        d.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                    }
                    send(*p, d);
                    offset += c;
                }
            }
            Op::ScaleRows(x, factors) => {
                let cols = out.cols();
                let d = g
                    .chunks(cols)
                    .zip(factors)
                    .flat_map(|(chunk, f)| chunk.iter().map(move |v| v * f))
                    .collect();
                send(*x, d);
            }
            Op::AddConst(x) => send(*x, g.to_vec()),
            Op::Sum(x) => {
                let n = self.value(*x).len();
                send(*x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                send(*x, vec![g[0] / n as f64; n]);
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                send(*x, g.iter().zip(xv).map(|(g, x)| 2.0 * g * x).collect());
            }
        }
    }
}
