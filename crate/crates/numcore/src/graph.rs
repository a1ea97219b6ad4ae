use crate::error::{Error, Result};
use crate::ops::conv::ConvGeom;
use crate::ops::pool::PoolGeom;
use crate::{ops, Scalar, Tensor};

/// Handle to a node of a [`Graph`]. Only meaningful for the graph that
/// created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    MatMul(Var, Var),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        xs: [usize; 4],
        ws: [usize; 4],
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    WeightNorm {
        v: Var,
        g: Var,
        norms: Vec<T>,
    },
    Elu {
        x: Var,
        alpha: T,
    },
    Relu(Var),
    Log {
        x: Var,
        floor: T,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    MeanPool {
        x: Var,
        geom: PoolGeom,
        in_len: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    Nll {
        x: Var,
        targets: Vec<usize>,
    },
    Reshape(Var),
    SliceLast {
        x: Var,
        start: usize,
        in_len: usize,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) grad: Option<Vec<T>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
}

/// Arena of executed operations in execution (= topological) order.
pub struct Graph<T: Scalar> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input or parameter. Gradients are only tracked through
    /// nodes that (transitively) depend on a leaf with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`, if `v` was
    /// reachable from it through differentiable nodes.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::from_parts(node.value.shape().to_vec(), g.clone()))
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Reverse sweep from a scalar loss. Previously computed gradients are
    /// cleared first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss).to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(gout) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.adjoint(i, &gout);
            self.nodes[i].grad = Some(gout);
            for (v, g) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut self.nodes[v.0].grad {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            *a = *a + *b;
                        }
                    }
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn adjoint(&self, i: usize, gout: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let out = node.value.data();
        let mut res = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        res.push((v, gout.to_vec()));
                    }
                }
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                if self.wants(*a) {
                    res.push((*a, gout.iter().zip(db).map(|(&g, &y)| g * y).collect()));
                }
                if self.wants(*b) {
                    res.push((*b, gout.iter().zip(da).map(|(&g, &x)| g * x).collect()));
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                res.push((*x, vec![gout[0]; n]));
            }
            Op::MatMul(a, b) => {
                let (ga, gb) = ops::matmul::backward(self, *a, *b, gout);
                if let Some(ga) = ga {
                    res.push((*a, ga));
                }
                if let Some(gb) = gb {
                    res.push((*b, gb));
                }
            }
            Op::Conv {
                x,
                w,
                b,
                geom,
                xs,
                ws,
            } => {
                let grads = ops::conv::backward(
                    self.data(*x),
                    *xs,
                    self.data(*w),
                    *ws,
                    geom,
                    gout,
                    self.wants(*x),
                    self.wants(*w),
                    b.map(|b| self.wants(b)).unwrap_or(false),
                );
                if let Some(gx) = grads.x {
                    res.push((*x, gx));
                }
                if let Some(gw) = grads.w {
                    res.push((*w, gw));
                }
                if let (Some(b), Some(gb)) = (b, grads.b) {
                    res.push((*b, gb));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let shape = self.shape(*x);
                let (gx, gg, gb) =
                    ops::norm::bn_backward(shape, self.data(*gamma), xhat, inv_std, *train, gout);
                if self.wants(*x) {
                    res.push((*x, gx));
                }
                if self.wants(*gamma) {
                    res.push((*gamma, gg));
                }
                if self.wants(*beta) {
                    res.push((*beta, gb));
                }
            }
            Op::WeightNorm { v, g, norms } => {
                let (gv, gg) = ops::norm::wn_backward(self.data(*v), self.data(*g), norms, gout);
                if self.wants(*v) {
                    res.push((*v, gv));
                }
                if self.wants(*g) {
                    res.push((*g, gg));
                }
            }
            Op::Elu { x, alpha } => {
                let xd = self.data(*x);
                let gx = gout
                    .iter()
                    .zip(xd.iter().zip(out))
                    .map(|(&g, (&xi, &yi))| if xi > T::zero() { g } else { g * (yi + *alpha) })
                    .collect();
                res.push((*x, gx));
            }
            Op::Relu(x) => {
                let xd = self.data(*x);
                let gx = gout
                    .iter()
                    .zip(xd)
                    .map(|(&g, &xi)| if xi > T::zero() { g } else { T::zero() })
                    .collect();
                res.push((*x, gx));
            }
            Op::Log { x, floor } => {
                let xd = self.data(*x);
                let gx = gout
                    .iter()
                    .zip(xd)
                    .map(|(&g, &xi)| if xi > *floor { g / xi } else { T::zero() })
                    .collect();
                res.push((*x, gx));
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![T::zero(); self.value(*x).numel()];
                for (&g, &src) in gout.iter().zip(argmax) {
                    gx[src] = gx[src] + g;
                }
                res.push((*x, gx));
            }
            Op::MeanPool { x, geom, in_len } => {
                res.push((*x, ops::pool::mean_backward(geom, *in_len, gout)));
            }
            Op::Dropout { x, mask } => {
                res.push((*x, gout.iter().zip(mask).map(|(&g, &m)| g * m).collect()));
            }
            Op::Softmax(x) => {
                let shape = self.shape(*x);
                res.push((*x, ops::softmax::softmax_backward(shape, out, gout)));
            }
            Op::LogSoftmax(x) => {
                let shape = self.shape(*x);
                res.push((*x, ops::softmax::log_softmax_backward(shape, out, gout)));
            }
            Op::Nll { x, targets } => {
                let shape = self.shape(*x);
                res.push((*x, ops::softmax::nll_backward(shape, targets, gout[0])));
            }
            Op::Reshape(x) => res.push((*x, gout.to_vec())),
            Op::SliceLast { x, start, in_len } => {
                let len = node.value.shape().last().copied().unwrap_or(1);
                let rows = gout.len() / len;
                let mut gx = vec![T::zero(); rows * in_len];
                for r in 0..rows {
                    gx[r * in_len + start..r * in_len + start + len]
                        .copy_from_slice(&gout[r * len..(r + 1) * len]);
                }
                res.push((*x, gx));
            }
        }
        res.retain(|(v, _)| self.wants(*v));
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![2], vec![1.0, -2.0]).unwrap(), true);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn detached_leaf_has_no_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let c = g.leaf(Tensor::from_vec(vec![2], vec![3.0, 4.0]).unwrap(), false);
        let p = g.mul(x, c).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[3]), true);
        assert_eq!(g.backward(x), Err(Error::NonScalarLoss(vec![3])));
    }

    #[test]
    fn fan_out_accumulates_adjoints() {
        // y = x*x + x  =>  dy/dx = 2x + 1
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(vec![1], vec![3.0]).unwrap(), true);
        let sq = g.mul(x, x).unwrap();
        let y = g.add(sq, x).unwrap();
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[7.0]);
        // running backward again replaces rather than accumulates
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[7.0]);
    }
}
