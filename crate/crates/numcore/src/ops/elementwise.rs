use rand::Rng;

use crate::error::{hyper_err, shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::{Scalar, Tensor};

impl<T: Scalar> Graph<T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::from_parts(self.shape(a).to_vec(), data);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product; `mul(x, x)` is the square.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::from_parts(self.shape(a).to_vec(), data);
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = crate::kernels::sum(self.data(x));
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let alpha = T::one();
        let data = self
            .data(x)
            .iter()
            .map(|&v| {
                if v > T::zero() {
                    v
                } else {
                    alpha * (v.exp() - T::one())
                }
            })
            .collect();
        let t = Tensor::from_parts(self.shape(x).to_vec(), data);
        self.push(t, Op::Elu { x, alpha }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self.data(x).iter().map(|&v| v.max(T::zero())).collect();
        let t = Tensor::from_parts(self.shape(x).to_vec(), data);
        self.push(t, Op::Relu(x), &[x])
    }

    /// Natural log of `max(x, floor)`; the gradient is zero where the floor is
    /// active. `floor = 0` gives the plain logarithm.
    pub fn log(&mut self, x: Var, floor: T) -> Var {
        let data = self.data(x).iter().map(|&v| v.max(floor).ln()).collect();
        let t = Tensor::from_parts(self.shape(x).to_vec(), data);
        self.push(t, Op::Log { x, floor }, &[x])
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - p)` so that the
    /// eval path is the identity. With `train == false` or `p == 0` the input
    /// handle is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(hyper_err(
                "dropout",
                format!("p must lie in [0, 1), got {p}"),
            ));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let scale = T::from_f64_lossy(1.0 / (1.0 - p));
        let n = self.value(x).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < p {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        let data = self
            .data(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let t = Tensor::from_parts(self.shape(x).to_vec(), data);
        Ok(self.push(t, Op::Dropout { x, mask }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).numel() {
            return Err(shape_err(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape(x)),
            ));
        }
        let t = Tensor::from_parts(shape.to_vec(), self.data(x).to_vec());
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Keep positions `start..start + len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let in_len = *shape.last().unwrap_or(&1);
        if len == 0 || start + len > in_len {
            return Err(shape_err(
                "slice_last",
                format!(
                    "range {start}..{} outside axis of length {in_len}",
                    start + len
                ),
            ));
        }
        let rows = self.value(x).numel() / in_len;
        let src = self.data(x);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * in_len + start..r * in_len + start + len]);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        let t = Tensor::from_parts(out_shape, data);
        Ok(self.push(t, Op::SliceLast { x, start, in_len }, &[x]))
    }
}
