use crate::error::{hyper_err, shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::kernels::{axpy, dot, sum};
use crate::{Scalar, Tensor};

/// Temporal geometry of a convolution. Padding, stride and dilation apply to
/// the last (time) axis only; the height axis of `conv2d` is always valid
/// (unpadded, stride 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
}

impl Default for ConvGeom {
    fn default() -> Self {
        Self {
            stride: 1,
            dilation: 1,
            pad_left: 0,
            pad_right: 0,
            groups: 1,
        }
    }
}

impl ConvGeom {
    pub fn dilated(dilation: usize) -> Self {
        Self {
            dilation,
            ..Self::default()
        }
    }

    /// Left-only padding of `dilation * (kernel - 1)`: output length equals
    /// input length and position `t` only sees inputs `<= t`.
    pub fn causal(kernel: usize, dilation: usize) -> Self {
        Self {
            dilation,
            pad_left: dilation * kernel.saturating_sub(1),
            ..Self::default()
        }
    }

    pub fn with_padding(mut self, pad: usize) -> Self {
        self.pad_left = pad;
        self.pad_right = pad;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Output length for an input of `len` samples, `None` if the kernel does
    /// not fit.
    pub fn out_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = len + self.pad_left + self.pad_right;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }

    /// Output positions `lo..hi` for which kernel tap `k` reads a real
    /// (non-padding) input sample.
    #[inline]
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let shift = k * self.dilation;
        let lo = if self.pad_left > shift {
            (self.pad_left - shift).div_ceil(self.stride)
        } else {
            0
        };
        let hi = if len + self.pad_left > shift {
            ((len - 1 + self.pad_left - shift) / self.stride + 1).min(out_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.dilation < 1 {
            return Err(hyper_err(
                op,
                format!("dilation must be >= 1, got {}", self.dilation),
            ));
        }
        if self.stride < 1 {
            return Err(hyper_err(
                op,
                format!("stride must be >= 1, got {}", self.stride),
            ));
        }
        if self.groups < 1 {
            return Err(hyper_err(op, "groups must be >= 1"));
        }
        Ok(())
    }
}

fn check_shapes(
    op: &'static str,
    xs: [usize; 4],
    ws: [usize; 4],
    bias: Option<&[usize]>,
    geom: &ConvGeom,
) -> Result<[usize; 4]> {
    geom.validate(op)?;
    let [bn, cin, h, t] = xs;
    let [cout, cpg, kh, kt] = ws;
    if cin % geom.groups != 0 || cout % geom.groups != 0 {
        return Err(hyper_err(
            op,
            format!(
                "groups {} must divide in {cin} and out {cout} channels",
                geom.groups
            ),
        ));
    }
    if cin / geom.groups != cpg {
        return Err(shape_err(
            op,
            format!(
                "weight expects {cpg} input channels per group, input gives {}",
                cin / geom.groups
            ),
        ));
    }
    if kh > h {
        return Err(shape_err(
            op,
            format!("kernel height {kh} exceeds input height {h}"),
        ));
    }
    if let Some(bs) = bias {
        if bs != [cout] {
            return Err(shape_err(
                op,
                format!("bias shape {bs:?}, expected [{cout}]"),
            ));
        }
    }
    let tout = geom.out_len(t, kt).ok_or_else(|| {
        shape_err(
            op,
            format!(
                "kernel {kt} (dilation {}) longer than input {t}",
                geom.dilation
            ),
        )
    })?;
    Ok([bn, cout, h - kh + 1, tout])
}

pub(crate) fn forward<T: Scalar>(
    x: &[T],
    xs: [usize; 4],
    w: &[T],
    ws: [usize; 4],
    bias: Option<&[T]>,
    geom: &ConvGeom,
    os: [usize; 4],
) -> Vec<T> {
    let [bn, cin, h, t] = xs;
    let [cout, cpg, kh, kt] = ws;
    let [_, _, hout, tout] = os;
    let opg = cout / geom.groups;
    let mut out = vec![T::zero(); bn * cout * hout * tout];
    for b in 0..bn {
        for oc in 0..cout {
            let grp = oc / opg;
            let obase = (b * cout + oc) * hout * tout;
            if let Some(bias) = bias {
                out[obase..obase + hout * tout].fill(bias[oc]);
            }
            for icl in 0..cpg {
                let ic = grp * cpg + icl;
                for dh in 0..kh {
                    for k in 0..kt {
                        let wv = w[((oc * cpg + icl) * kh + dh) * kt + k];
                        let (lo, hi) = geom.valid_range(k, t, tout);
                        if lo >= hi {
                            continue;
                        }
                        for ho in 0..hout {
                            let xrow = &x[((b * cin + ic) * h + ho + dh) * t..][..t];
                            let orow = &mut out[obase + ho * tout..][..tout];
                            let off = lo * geom.stride + k * geom.dilation - geom.pad_left;
                            if geom.stride == 1 {
                                axpy(&mut orow[lo..hi], wv, &xrow[off..off + hi - lo]);
                            } else {
                                for (j, o) in orow[lo..hi].iter_mut().enumerate() {
                                    *o = *o + wv * xrow[off + j * geom.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub x: Option<Vec<T>>,
    pub w: Option<Vec<T>>,
    pub b: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Scalar>(
    x: &[T],
    xs: [usize; 4],
    w: &[T],
    ws: [usize; 4],
    geom: &ConvGeom,
    gout: &[T],
    want_x: bool,
    want_w: bool,
    want_b: bool,
) -> ConvGrads<T> {
    let [bn, cin, h, t] = xs;
    let [cout, cpg, kh, kt] = ws;
    let hout = h - kh + 1;
    let tout = gout.len() / (bn * cout * hout);
    let opg = cout / geom.groups;
    let mut gx = want_x.then(|| vec![T::zero(); x.len()]);
    let mut gw = want_w.then(|| vec![T::zero(); w.len()]);
    let gb = want_b.then(|| {
        (0..cout)
            .map(|oc| {
                (0..bn)
                    .map(|b| sum(&gout[(b * cout + oc) * hout * tout..][..hout * tout]))
                    .fold(T::zero(), |a, v| a + v)
            })
            .collect()
    });
    if gx.is_none() && gw.is_none() {
        return ConvGrads {
            x: None,
            w: None,
            b: gb,
        };
    }
    for b in 0..bn {
        for oc in 0..cout {
            let grp = oc / opg;
            let obase = (b * cout + oc) * hout * tout;
            for icl in 0..cpg {
                let ic = grp * cpg + icl;
                for dh in 0..kh {
                    for k in 0..kt {
                        let widx = ((oc * cpg + icl) * kh + dh) * kt + k;
                        let wv = w[widx];
                        let (lo, hi) = geom.valid_range(k, t, tout);
                        if lo >= hi {
                            continue;
                        }
                        let off = lo * geom.stride + k * geom.dilation - geom.pad_left;
                        let mut acc = T::zero();
                        for ho in 0..hout {
                            let xbase = ((b * cin + ic) * h + ho + dh) * t;
                            let grow = &gout[obase + ho * tout..][..tout];
                            if geom.stride == 1 {
                                let n = hi - lo;
                                if gw.is_some() {
                                    acc =
                                        acc + dot(&grow[lo..hi], &x[xbase + off..xbase + off + n]);
                                }
                                if let Some(gx) = gx.as_mut() {
                                    axpy(&mut gx[xbase + off..xbase + off + n], wv, &grow[lo..hi]);
                                }
                            } else {
                                for (j, &go) in grow[lo..hi].iter().enumerate() {
                                    let xi = xbase + off + j * geom.stride;
                                    acc = acc + go * x[xi];
                                    if let Some(gx) = gx.as_mut() {
                                        gx[xi] = gx[xi] + wv * go;
                                    }
                                }
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[widx] = gw[widx] + acc;
                        }
                    }
                }
            }
        }
    }
    ConvGrads {
        x: gx,
        w: gw,
        b: gb,
    }
}

impl<T: Scalar> Graph<T> {
    /// 2-D convolution over `[batch, channels, height, time]` with weights
    /// `[out, in / groups, kernel_h, kernel_t]`. The height axis is where the
    /// electrodes live for the spatial filters of the ConvNets.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let (xsv, wsv) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xsv.len() != 4 || wsv.len() != 4 {
            return Err(shape_err(
                "conv2d",
                format!("input {xsv:?}, weight {wsv:?} must be 4-D"),
            ));
        }
        let xs = [xsv[0], xsv[1], xsv[2], xsv[3]];
        let ws = [wsv[0], wsv[1], wsv[2], wsv[3]];
        let os = check_shapes("conv2d", xs, ws, bias.map(|b| self.shape(b)), &geom)?;
        let out = forward(
            self.data(x),
            xs,
            self.data(w),
            ws,
            bias.map(|b| self.data(b)),
            &geom,
            os,
        );
        let inputs: Vec<Var> = [Some(x), Some(w), bias].into_iter().flatten().collect();
        let t = Tensor::from_parts(os.to_vec(), out);
        Ok(self.push(
            t,
            Op::Conv {
                x,
                w,
                b: bias,
                geom,
                xs,
                ws,
            },
            &inputs,
        ))
    }

    /// 1-D convolution over `[batch, channels, time]` with weights
    /// `[out, in / groups, kernel]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let (xsv, wsv) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xsv.len() != 3 || wsv.len() != 3 {
            return Err(shape_err(
                "conv1d",
                format!("input {xsv:?}, weight {wsv:?} must be 3-D"),
            ));
        }
        let xs = [xsv[0], xsv[1], 1, xsv[2]];
        let ws = [wsv[0], wsv[1], 1, wsv[2]];
        let os = check_shapes("conv1d", xs, ws, bias.map(|b| self.shape(b)), &geom)?;
        let out = forward(
            self.data(x),
            xs,
            self.data(w),
            ws,
            bias.map(|b| self.data(b)),
            &geom,
            os,
        );
        let inputs: Vec<Var> = [Some(x), Some(w), bias].into_iter().flatten().collect();
        let t = Tensor::from_parts(vec![os[0], os[1], os[3]], out);
        Ok(self.push(
            t,
            Op::Conv {
                x,
                w,
                b: bias,
                geom,
                xs,
                ws,
            },
            &inputs,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition of a 1-D dilated, padded, strided convolution.
    fn reference_conv1d(x: &[f64], k: &[f64], geom: &ConvGeom) -> Vec<f64> {
        let n = geom.out_len(x.len(), k.len()).unwrap();
        (0..n)
            .map(|o| {
                k.iter()
                    .enumerate()
                    .map(|(j, &kv)| {
                        let pos =
                            (o * geom.stride + j * geom.dilation) as isize - geom.pad_left as isize;
                        if pos < 0 || pos as usize >= x.len() {
                            0.0
                        } else {
                            kv * x[pos as usize]
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn causal_dilated_keeps_length() {
        let geom = ConvGeom::causal(3, 2);
        assert_eq!(geom.pad_left, 4);
        assert_eq!(geom.out_len(10, 3), Some(10));
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_fn(&[1, 1, 10], |i| i as f64 + 1.0), false);
        let w = g.leaf(
            Tensor::from_vec(vec![1, 1, 3], vec![1.0, 10.0, 100.0]).unwrap(),
            false,
        );
        let y = g.conv1d(x, w, None, geom).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 10]);
        // output t = x[t-4] + 10 x[t-2] + 100 x[t]
        let out = g.value(y).data();
        assert_eq!(out[0], 100.0);
        assert_eq!(out[2], 10.0 * 1.0 + 100.0 * 3.0);
        assert_eq!(out[9], 6.0 + 10.0 * 8.0 + 100.0 * 10.0);
    }

    #[test]
    fn matches_reference_for_assorted_geometries() {
        let x: Vec<f64> = (0..23).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let k = [0.5, -1.0, 2.0, 0.25];
        for geom in [
            ConvGeom::default(),
            ConvGeom::dilated(3),
            ConvGeom::default().with_stride(2),
            ConvGeom::dilated(2).with_padding(3).with_stride(3),
            ConvGeom::causal(4, 2),
        ] {
            let mut g = Graph::<f64>::new();
            let xv = g.leaf(Tensor::from_vec(vec![1, 1, 23], x.clone()).unwrap(), false);
            let wv = g.leaf(Tensor::from_vec(vec![1, 1, 4], k.to_vec()).unwrap(), false);
            let y = g.conv1d(xv, wv, None, geom).unwrap();
            assert_eq!(
                g.value(y).data(),
                reference_conv1d(&x, &k, &geom).as_slice(),
                "{geom:?}"
            );
        }
    }

    #[test]
    fn grouped_equals_per_channel() {
        let c = 3;
        let t = 12;
        let xdata: Vec<f64> = (0..c * t).map(|i| (i as f64 * 0.37).sin()).collect();
        let wdata: Vec<f64> = (0..c * 3).map(|i| i as f64 * 0.1 - 0.4).collect();
        let geom = ConvGeom::dilated(2).with_groups(c);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(
            Tensor::from_vec(vec![1, c, t], xdata.clone()).unwrap(),
            false,
        );
        let w = g.leaf(
            Tensor::from_vec(vec![c, 1, 3], wdata.clone()).unwrap(),
            false,
        );
        let y = g.conv1d(x, w, None, geom).unwrap();
        let out = g.value(y).data().to_vec();
        let tout = out.len() / c;
        for ch in 0..c {
            let r = reference_conv1d(
                &xdata[ch * t..(ch + 1) * t],
                &wdata[ch * 3..ch * 3 + 3],
                &ConvGeom::dilated(2),
            );
            assert_eq!(&out[ch * tout..(ch + 1) * tout], r.as_slice());
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 2, 8]), false);
        let w = g.leaf(Tensor::zeros(&[2, 2, 3]), false);
        let bad = ConvGeom {
            dilation: 0,
            ..ConvGeom::default()
        };
        assert!(matches!(
            g.conv1d(x, w, None, bad),
            Err(crate::Error::InvalidHyperparameter { .. })
        ));
        let long = g.leaf(Tensor::zeros(&[2, 2, 9]), false);
        assert!(matches!(
            g.conv1d(x, long, None, ConvGeom::default()),
            Err(crate::Error::ShapeMismatch { .. })
        ));
        let grouped = ConvGeom::default().with_groups(2);
        assert!(g.conv1d(x, w, None, grouped).is_err());
    }
}
