use crate::error::{hyper_err, shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::{Scalar, Tensor};

/// Pooling window over the last axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeom {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl PoolGeom {
    pub fn new(kernel: usize, stride: usize, dilation: usize) -> Self {
        Self {
            kernel,
            stride,
            dilation,
        }
    }

    pub fn out_len(&self, len: usize) -> Option<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        (len >= span).then(|| (len - span) / self.stride + 1)
    }

    fn check(&self, op: &'static str, len: usize) -> Result<usize> {
        if self.kernel < 1 || self.stride < 1 || self.dilation < 1 {
            return Err(hyper_err(op, format!("{self:?}")));
        }
        self.out_len(len)
            .ok_or_else(|| shape_err(op, format!("window {self:?} longer than axis {len}")))
    }
}

fn rows_and_len(shape: &[usize]) -> (usize, usize) {
    let len = *shape.last().unwrap_or(&1);
    (shape.iter().product::<usize>() / len, len)
}

impl<T: Scalar> Graph<T> {
    pub fn max_pool1d(&mut self, x: Var, geom: PoolGeom) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (rows, len) = rows_and_len(&shape);
        let out_len = geom.check("max_pool1d", len)?;
        let xd = self.data(x);
        let mut out = Vec::with_capacity(rows * out_len);
        let mut argmax = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            let row = &xd[r * len..(r + 1) * len];
            for o in 0..out_len {
                let start = o * geom.stride;
                let mut best = start;
                for k in 1..geom.kernel {
                    let i = start + k * geom.dilation;
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                out.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        let mut os = shape;
        *os.last_mut().unwrap() = out_len;
        Ok(self.push(Tensor::from_parts(os, out), Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn mean_pool1d(&mut self, x: Var, geom: PoolGeom) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (rows, len) = rows_and_len(&shape);
        let out_len = geom.check("mean_pool1d", len)?;
        let inv = T::one() / T::from_usize(geom.kernel).unwrap();
        let xd = self.data(x);
        let mut out = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            let row = &xd[r * len..(r + 1) * len];
            if geom.stride == 1 && geom.dilation == 1 {
                // running window sum, recomputed per row to bound drift
                let mut acc: T = row[..geom.kernel].iter().copied().sum();
                out.push(acc * inv);
                for o in 1..out_len {
                    acc = acc + row[o + geom.kernel - 1] - row[o - 1];
                    out.push(acc * inv);
                }
            } else {
                for o in 0..out_len {
                    let start = o * geom.stride;
                    let s: T = (0..geom.kernel)
                        .map(|k| row[start + k * geom.dilation])
                        .sum();
                    out.push(s * inv);
                }
            }
        }
        let mut os = shape;
        *os.last_mut().unwrap() = out_len;
        Ok(self.push(
            Tensor::from_parts(os, out),
            Op::MeanPool {
                x,
                geom,
                in_len: len,
            },
            &[x],
        ))
    }
}

pub(crate) fn mean_backward<T: Scalar>(geom: &PoolGeom, in_len: usize, gout: &[T]) -> Vec<T> {
    let out_len = geom.out_len(in_len).unwrap();
    let rows = gout.len() / out_len;
    let inv = T::one() / T::from_usize(geom.kernel).unwrap();
    let mut gx = vec![T::zero(); rows * in_len];
    for r in 0..rows {
        let grow = &gout[r * out_len..(r + 1) * out_len];
        let xrow = &mut gx[r * in_len..(r + 1) * in_len];
        for (o, &g) in grow.iter().enumerate() {
            let v = g * inv;
            let start = o * geom.stride;
            for k in 0..geom.kernel {
                let i = start + k * geom.dilation;
                xrow[i] = xrow[i] + v;
            }
        }
    }
    gx
}
