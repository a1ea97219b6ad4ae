use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch statistics produced by a train-mode batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased (n - 1) variance, as folded into the running estimate.
    pub var_unbiased: Vec<T>,
}

impl<T: Scalar> BatchStats<T> {
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn update_running(&self, running_mean: &mut [T], running_var: &mut [T], momentum: f64) {
        let m = T::from_f64_lossy(momentum);
        let keep = T::one() - m;
        for (r, &b) in running_mean.iter_mut().zip(&self.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in running_var.iter_mut().zip(&self.var_unbiased) {
            *r = keep * *r + m * b;
        }
    }
}

/// `(outer, channels, inner)` view of a `[batch, channels, ...]` tensor.
fn channel_view(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(shape_err(
            op,
            format!("need [batch, channels, ...], got {shape:?}"),
        ));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

impl<T: Scalar> Graph<T> {
    fn check_affine(&self, op: &'static str, c: usize, gamma: Var, beta: Var) -> Result<()> {
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(shape_err(
                op,
                format!(
                    "affine params {:?}/{:?} for {c} channels",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            ));
        }
        Ok(())
    }

    /// Batch norm with statistics of the current batch over every axis but
    /// the channel axis (axis 1).
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
    ) -> Result<(Var, BatchStats<T>)> {
        let (outer, c, inner) = channel_view("batch_norm", self.shape(x))?;
        self.check_affine("batch_norm", c, gamma, beta)?;
        let n = outer * inner;
        let xd = self.data(x);
        let (gd, bd) = (self.data(gamma), self.data(beta));
        let mut out = vec![T::zero(); xd.len()];
        let mut xhat = vec![T::zero(); xd.len()];
        let mut inv_std = Vec::with_capacity(c);
        let mut stats = BatchStats {
            mean: Vec::with_capacity(c),
            var_unbiased: Vec::with_capacity(c),
        };
        for ch in 0..c {
            let idx = |o: usize| (o * c + ch) * inner;
            let mut s = 0.0f64;
            for o in 0..outer {
                s += xd[idx(o)..idx(o) + inner]
                    .iter()
                    .map(|v| v.as_f64())
                    .sum::<f64>();
            }
            let mean = s / n as f64;
            let mut ss = 0.0f64;
            for o in 0..outer {
                ss += xd[idx(o)..idx(o) + inner]
                    .iter()
                    .map(|v| (v.as_f64() - mean).powi(2))
                    .sum::<f64>();
            }
            let var = ss / n as f64;
            let istd = 1.0 / (var + BN_EPS).sqrt();
            let (m_t, is_t) = (T::from_f64_lossy(mean), T::from_f64_lossy(istd));
            for o in 0..outer {
                for i in idx(o)..idx(o) + inner {
                    let h = (xd[i] - m_t) * is_t;
                    xhat[i] = h;
                    out[i] = gd[ch] * h + bd[ch];
                }
            }
            inv_std.push(is_t);
            stats.mean.push(m_t);
            let unbiased = if n > 1 { ss / (n - 1) as f64 } else { var };
            stats.var_unbiased.push(T::from_f64_lossy(unbiased));
        }
        let t = Tensor::from_parts(self.shape(x).to_vec(), out);
        let v = self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: true,
            },
            &[x, gamma, beta],
        );
        Ok((v, stats))
    }

    /// Batch norm as a fixed affine map using running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
    ) -> Result<Var> {
        let (outer, c, inner) = channel_view("batch_norm", self.shape(x))?;
        self.check_affine("batch_norm", c, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(shape_err("batch_norm", "running statistics length"));
        }
        let eps = T::from_f64_lossy(BN_EPS);
        let inv_std: Vec<T> = running_var
            .iter()
            .map(|&v| T::one() / (v + eps).sqrt())
            .collect();
        let xd = self.data(x);
        let (gd, bd) = (self.data(gamma), self.data(beta));
        let mut out = vec![T::zero(); xd.len()];
        let mut xhat = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for ch in 0..c {
                let base = (o * c + ch) * inner;
                for i in base..base + inner {
                    let h = (xd[i] - running_mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = gd[ch] * h + bd[ch];
                }
            }
        }
        let t = Tensor::from_parts(self.shape(x).to_vec(), out);
        Ok(self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: false,
            },
            &[x, gamma, beta],
        ))
    }

    /// Weight-norm reparameterization `w = g * v / ||v||`, one norm per output
    /// filter (axis 0 of `v`).
    pub fn weight_norm(&mut self, v: Var, g: Var) -> Result<Var> {
        let vs = self.shape(v).to_vec();
        if vs.is_empty() || self.shape(g) != [vs[0]] {
            return Err(shape_err(
                "weight_norm",
                format!("v {vs:?}, g {:?}", self.shape(g)),
            ));
        }
        let per = self.value(v).numel() / vs[0];
        let (vd, gd) = (self.data(v), self.data(g));
        let mut out = Vec::with_capacity(vd.len());
        let mut norms = Vec::with_capacity(vs[0]);
        for (o, chunk) in vd.chunks(per).enumerate() {
            let norm = chunk.iter().map(|&a| a * a).sum::<T>().sqrt();
            norms.push(norm);
            let scale = gd[o] / norm;
            out.extend(chunk.iter().map(|&a| a * scale));
        }
        let t = Tensor::from_parts(vs, out);
        Ok(self.push(t, Op::WeightNorm { v, g, norms }, &[v, g]))
    }
}

pub(crate) fn bn_backward<T: Scalar>(
    shape: &[usize],
    gamma: &[T],
    xhat: &[T],
    inv_std: &[T],
    train: bool,
    gout: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (outer, c, inner) = (shape[0], shape[1], shape[2..].iter().product::<usize>());
    let n = T::from_usize(outer * inner).unwrap();
    let mut gx = vec![T::zero(); gout.len()];
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    for ch in 0..c {
        let range = |o: usize| (o * c + ch) * inner..(o * c + ch + 1) * inner;
        let (mut sdy, mut sdyx) = (T::zero(), T::zero());
        for o in 0..outer {
            for i in range(o) {
                sdy = sdy + gout[i];
                sdyx = sdyx + gout[i] * xhat[i];
            }
        }
        gg[ch] = sdyx;
        gb[ch] = sdy;
        let k = gamma[ch] * inv_std[ch];
        for o in 0..outer {
            for i in range(o) {
                gx[i] = if train {
                    k * (gout[i] - (sdy + xhat[i] * sdyx) / n)
                } else {
                    k * gout[i]
                };
            }
        }
    }
    (gx, gg, gb)
}

pub(crate) fn wn_backward<T: Scalar>(
    v: &[T],
    g: &[T],
    norms: &[T],
    gout: &[T],
) -> (Vec<T>, Vec<T>) {
    let per = v.len() / g.len();
    let mut gv = Vec::with_capacity(v.len());
    let mut gg = Vec::with_capacity(g.len());
    for o in 0..g.len() {
        let vs = &v[o * per..(o + 1) * per];
        let dw = &gout[o * per..(o + 1) * per];
        let norm = norms[o];
        let proj = dw.iter().zip(vs).map(|(&a, &b)| a * b).sum::<T>();
        gg.push(proj / norm);
        let s = g[o] / norm;
        let r = proj / (norm * norm);
        gv.extend(dw.iter().zip(vs).map(|(&d, &x)| s * (d - r * x)));
    }
    (gv, gg)
}
