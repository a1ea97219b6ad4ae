use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::kernels::axpy;
use crate::{Scalar, Tensor};

fn mm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(orow, a[i * k + p], &b[p * n..(p + 1) * n]);
        }
    }
    out
}

fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

impl<T: Scalar> Graph<T> {
    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = mm(self.data(a), self.data(b), m, k, n);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::MatMul(a, b),
            &[a, b],
        ))
    }
}

pub(crate) fn backward<T: Scalar>(
    g: &Graph<T>,
    a: Var,
    b: Var,
    gout: &[T],
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (m, k) = (g.shape(a)[0], g.shape(a)[1]);
    let n = g.shape(b)[1];
    let ga = g.requires_grad(a).then(|| {
        let bt = transpose(g.data(b), k, n);
        mm(gout, &bt, m, n, k)
    });
    let gb = g.requires_grad(b).then(|| {
        let at = transpose(g.data(a), m, k);
        mm(&at, gout, k, m, n)
    });
    (ga, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(
            Tensor::from_vec(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap(),
            false,
        );
        let b = g.leaf(
            Tensor::from_vec(vec![3, 1], vec![1., 0., -1.]).unwrap(),
            false,
        );
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[-2.0, -2.0]);
        assert!(g.matmul(b, b).is_err());
    }
}
