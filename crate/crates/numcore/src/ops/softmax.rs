//! Softmax family over the class axis (axis 1) of `[batch, classes, ...]`.

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::{Scalar, Tensor};

fn class_view(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2..].iter().product())
}

fn check(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(shape_err(
            op,
            format!("need [batch, classes, ...], got {shape:?}"),
        ));
    }
    Ok(class_view(shape))
}

fn log_softmax_values<T: Scalar>(x: &[T], (n, k, p): (usize, usize, usize)) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for pos in 0..p {
            let at = |c: usize| (b * k + c) * p + pos;
            let m = (0..k).map(|c| x[at(c)]).fold(T::neg_infinity(), T::max);
            let lse = m + (0..k).map(|c| (x[at(c)] - m).exp()).sum::<T>().ln();
            for c in 0..k {
                out[at(c)] = x[at(c)] - lse;
            }
        }
    }
    out
}

impl<T: Scalar> Graph<T> {
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let dims = check("softmax", self.shape(x))?;
        let out = log_softmax_values(self.data(x), dims)
            .into_iter()
            .map(|v| v.exp())
            .collect();
        let t = Tensor::from_parts(self.shape(x).to_vec(), out);
        Ok(self.push(t, Op::Softmax(x), &[x]))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let dims = check("log_softmax", self.shape(x))?;
        let out = log_softmax_values(self.data(x), dims);
        let t = Tensor::from_parts(self.shape(x).to_vec(), out);
        Ok(self.push(t, Op::LogSoftmax(x), &[x]))
    }

    /// Negative log-likelihood of log-probabilities `[batch, classes, ...]`,
    /// averaged over the batch and all trailing (dense prediction) positions.
    /// Each sample's target applies to all of its positions.
    pub fn nll_loss(&mut self, log_probs: Var, targets: &[usize]) -> Result<Var> {
        let (n, k, p) = check("nll_loss", self.shape(log_probs))?;
        if targets.len() != n {
            return Err(shape_err(
                "nll_loss",
                format!("{} targets for batch {n}", targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(shape_err(
                "nll_loss",
                format!("target {bad} out of {k} classes"),
            ));
        }
        let x = self.data(log_probs);
        let mut s = T::zero();
        for (b, &t) in targets.iter().enumerate() {
            for pos in 0..p {
                s = s + x[(b * k + t) * p + pos];
            }
        }
        let loss = -s / T::from_usize(n * p).unwrap();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Nll {
                x: log_probs,
                targets: targets.to_vec(),
            },
            &[log_probs],
        ))
    }

    /// Mean categorical cross-entropy of raw logits.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lp = self.log_softmax(logits)?;
        self.nll_loss(lp, targets)
    }
}

pub(crate) fn softmax_backward<T: Scalar>(shape: &[usize], y: &[T], gout: &[T]) -> Vec<T> {
    let (n, k, p) = class_view(shape);
    let mut gx = vec![T::zero(); y.len()];
    for b in 0..n {
        for pos in 0..p {
            let at = |c: usize| (b * k + c) * p + pos;
            let dotv = (0..k).map(|c| gout[at(c)] * y[at(c)]).sum::<T>();
            for c in 0..k {
                gx[at(c)] = y[at(c)] * (gout[at(c)] - dotv);
            }
        }
    }
    gx
}

pub(crate) fn log_softmax_backward<T: Scalar>(shape: &[usize], y: &[T], gout: &[T]) -> Vec<T> {
    let (n, k, p) = class_view(shape);
    let mut gx = vec![T::zero(); y.len()];
    for b in 0..n {
        for pos in 0..p {
            let at = |c: usize| (b * k + c) * p + pos;
            let s = (0..k).map(|c| gout[at(c)]).sum::<T>();
            for c in 0..k {
                gx[at(c)] = gout[at(c)] - y[at(c)].exp() * s;
            }
        }
    }
    gx
}

pub(crate) fn nll_backward<T: Scalar>(shape: &[usize], targets: &[usize], g: T) -> Vec<T> {
    let (n, k, p) = class_view(shape);
    let mut gx = vec![T::zero(); n * k * p];
    let v = -g / T::from_usize(n * p).unwrap();
    for (b, &t) in targets.iter().enumerate() {
        for pos in 0..p {
            gx[(b * k + t) * p + pos] = v;
        }
    }
    gx
}
