//! Central finite-difference gradient checking in `f64`.
//!
//! The checker only ever evaluates the forward function, so it stays
//! independent of the adjoint code it verifies.

use crate::{Graph, Result, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-5;

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference norm when both
/// vectors are (near) zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of a scalar function of several tensors, with respect
/// to the chosen entries of input `which`.
pub fn numeric_gradient<F>(
    f: F,
    inputs: &[Tensor<f64>],
    which: usize,
    entries: &[usize],
    h: f64,
) -> Vec<f64>
where
    F: Fn(&[Tensor<f64>]) -> f64,
{
    let mut work = inputs.to_vec();
    entries
        .iter()
        .map(|&i| {
            let orig = work[which].data()[i];
            work[which].data_mut()[i] = orig + h;
            let up = f(&work);
            work[which].data_mut()[i] = orig - h;
            let down = f(&work);
            work[which].data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Deterministic pseudo-random weights in `[-1, 1)` (splitmix64), used to
/// project a tensor-valued output onto a scalar.
pub fn projection(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// Check a graph-building function against central differences. The output
/// of `build` is reduced to `sum(out * R)` with a fixed random `R`. Returns
/// the relative error for every input (all entries are probed).
pub fn check<F>(build: F, inputs: &[Tensor<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let scalar = |g: &mut Graph<f64>, vars: &[Var]| -> Result<Var> {
        let out = build(g, vars)?;
        let r = projection(g.value(out).numel(), 0xC0FFEE);
        let rv = g.leaf(Tensor::from_vec(g.shape(out).to_vec(), r)?, false);
        let p = g.mul(out, rv)?;
        Ok(g.sum(p))
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = scalar(&mut g, &vars)?;
    g.backward(loss)?;
    let eval = |ts: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let l = scalar(&mut g, &vars).expect("forward failed during finite differences");
        g.value(l).data()[0]
    };
    inputs
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let analytic = g
                .grad(vars[k])
                .map(|t| t.into_data())
                .unwrap_or_else(|| vec![0.0; t.numel()]);
            let entries: Vec<usize> = (0..t.numel()).collect();
            let numeric = numeric_gradient(eval, inputs, k, &entries, DEFAULT_STEP);
            Ok(relative_error(&analytic, &numeric))
        })
        .collect()
}
