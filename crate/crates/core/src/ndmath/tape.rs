//! Reverse-mode automatic differentiation over batched tensors.
//!
//! A [`Tape`] records every primitive in evaluation order. Values are
//! computed eagerly when a node is pushed, so the node list is always in
//! topological order and `backward` is a single reverse sweep.

use std::f64::consts::PI;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifier of a trainable parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    SliceCols(Var, usize, usize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    adjoints: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

/// Gradients keyed by parameter id.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradients for ids `0..n`, in order. Missing ids are an error.
    pub fn ordered(&self, n: usize) -> Result<Vec<&Tensor>> {
        (0..n)
            .map(|i| {
                self.get(ParamId(i))
                    .ok_or_else(|| Error::Contract(format!("no gradient for parameter {i}")))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Adjoint recorded by the last `backward` call.
    pub fn adjoint(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value, false)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        let v = self.push(Op::Param, value, true);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::MatMul(a, b), value, ng))
    }

    /// `a + bias` with `bias` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(bias))?;
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(Op::AddRow(a, bias), value, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::Add(a, b), value, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::Sub(a, b), value, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::Mul(a, b), value, ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let ng = self.ng(a);
        self.push(Op::Scale(a, s), value, ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        let ng = self.ng(a);
        self.push(Op::AddScalar(a), value, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(Op::Tanh(a), value, ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let ng = self.ng(a);
        self.push(Op::Exp(a), value, ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let ng = self.ng(a);
        self.push(Op::Log(a), value, ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let ng = self.ng(a);
        self.push(Op::Square(a), value, ng)
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(Op::Sum(a), value, ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let src = self.value(a);
        if start > end || end > src.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{end} of {}", src.cols()),
            ));
        }
        let value = src.slice_cols(start, end);
        let ng = self.ng(a);
        Ok(self.push(Op::SliceCols(a, start, end), value, ng))
    }

    /// `Σ log N(x | mean, variance·I)` over every entry, with a fixed scalar
    /// variance.
    pub fn gaussian_log_density(&mut self, x: Var, mean: Var, variance: f64) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let diff = self.sub(x, mean)?;
        let sq = self.square(diff);
        let total = self.sum(sq);
        let scaled = self.scale(total, -0.5 / variance);
        Ok(self.add_scalar(scaled, -0.5 * n * (2.0 * PI * variance).ln()))
    }

    /// Reverse sweep from a scalar node. Parameters that the loss does not
    /// depend on receive zero gradients.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node has shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                adj[i] = Some(g);
                continue;
            }
            let node = &self.nodes[i];
            let send = |v: Var, t: Tensor, adj: &mut Vec<Option<Tensor>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match node.op {
                Op::Constant | Op::Param => {}
                Op::MatMul(a, b) => {
                    if self.ng(a) {
                        send(a, g.matmul_nt(self.value(b))?, &mut adj);
                    }
                    if self.ng(b) {
                        send(b, self.value(a).matmul_tn(&g)?, &mut adj);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.ng(bias) {
                        let shape = self.value(bias).shape().to_vec();
                        send(bias, g.sum_rows().reshape(shape)?, &mut adj);
                    }
                    send(a, g.clone(), &mut adj);
                }
                Op::Add(a, b) => {
                    send(a, g.clone(), &mut adj);
                    send(b, g.clone(), &mut adj);
                }
                Op::Sub(a, b) => {
                    send(a, g.clone(), &mut adj);
                    send(b, g.scale(-1.0), &mut adj);
                }
                Op::Mul(a, b) => {
                    if self.ng(a) {
                        send(a, g.mul(self.value(b))?, &mut adj);
                    }
                    if self.ng(b) {
                        send(b, g.mul(self.value(a))?, &mut adj);
                    }
                }
                Op::Scale(a, s) => send(a, g.scale(s), &mut adj),
                Op::AddScalar(a) => send(a, g.clone(), &mut adj),
                Op::Tanh(a) => {
                    let d = g.zip_map(&node.value, |g, y| g * (1.0 - y * y))?;
                    send(a, d, &mut adj);
                }
                Op::Exp(a) => send(a, g.mul(&node.value)?, &mut adj),
                Op::Log(a) => {
                    let d = g.zip_map(self.value(a), |g, x| g / x)?;
                    send(a, d, &mut adj);
                }
                Op::Square(a) => {
                    let d = g.zip_map(self.value(a), |g, x| 2.0 * g * x)?;
                    send(a, d, &mut adj);
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    send(a, Tensor::filled(self.value(a).shape(), s), &mut adj);
                }
                Op::SliceCols(a, start, end) => {
                    let src = self.value(a);
                    let mut d = Tensor::zeros(src.shape());
                    for r in 0..src.rows() {
                        d.row_mut(r)[start..end].copy_from_slice(g.row(r));
                    }
                    send(a, d, &mut adj);
                }
            }
            adj[i] = Some(g);
        }

        let mut grads = Gradients::default();
        for &(id, v) in &self.params {
            if grads.grads.len() <= id.0 {
                grads.grads.resize(id.0 + 1, None);
            }
            let g = adj[v.0]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
            match &mut grads.grads[id.0] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        self.adjoints = adj;
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_parameters_has_unit_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(ParamId(0), t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap().data(), &[1.0; 4]);
        assert_eq!(tape.adjoint(s).unwrap().data(), &[1.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let mut tape = Tape::new();
        let _p = tape.param(ParamId(0), t(&[3], &[1.0, 2.0, 3.0]));
        let c = tape.constant(t(&[2], &[4.0, 5.0]));
        let s = tape.sum(c);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let p = tape.param(ParamId(0), t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn elementwise_chain_matches_hand_derivative() {
        // f(x) = sum(log(exp(x)^2) * tanh(x)) = sum(2x tanh x)
        let xs = [0.3, -1.2, 2.0];
        let mut tape = Tape::new();
        let x = tape.param(ParamId(0), t(&[3], &xs));
        let e = tape.exp(x);
        let sq = tape.square(e);
        let l = tape.log(sq);
        let th = tape.tanh(x);
        let m = tape.mul(l, th).unwrap();
        let s = tape.sum(m);
        let g = tape.backward(s).unwrap();
        for (gi, &xi) in g.get(ParamId(0)).unwrap().data().iter().zip(&xs) {
            let th: f64 = xi.tanh();
            let expected = 2.0 * th + 2.0 * xi * (1.0 - th * th);
            assert!((gi - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_and_matmul_gradients() {
        // loss = sum(A[:, 1..2] ) where A = X W; d/dW[k, j] = sum_i X[i,k] for j == 1
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let w = tape.param(ParamId(0), t(&[2, 3], &[0.1; 6]));
        let a = tape.matmul(x, w).unwrap();
        let s = tape.slice_cols(a, 1, 2).unwrap();
        let l = tape.sum(s);
        let g = tape.backward(l).unwrap();
        assert_eq!(
            g.get(ParamId(0)).unwrap().data(),
            &[0.0, 4.0, 0.0, 0.0, 6.0, 0.0]
        );
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut tape = Tape::new();
        let p = tape.param(ParamId(0), t(&[1], &[3.0]));
        let q = tape.mul(p, p).unwrap();
        let r = tape.add(q, p).unwrap();
        let s = tape.sum(r);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap().data(), &[7.0]);
    }
}
