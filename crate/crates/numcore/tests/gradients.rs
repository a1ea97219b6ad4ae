//! Central finite-difference checks (f64, h = 1e-5) for every primitive.

use numcore::gradcheck::{check, projection};
use numcore::{ConvGeom, Graph, PoolGeom, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), projection(n, seed)).unwrap()
}

fn positive_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n = shape.iter().product();
    let v = projection(n, seed)
        .into_iter()
        .map(|x| 0.5 + x.abs())
        .collect();
    Tensor::from_vec(shape.to_vec(), v).unwrap()
}

fn assert_ok(errs: Vec<f64>, what: &str) {
    for (i, e) in errs.iter().enumerate() {
        assert!(*e < TOL, "{what}: input {i} relative error {e:.3e}");
    }
}

#[test]
fn add_mul_sum() {
    let a = rand_tensor(&[3, 4], 1);
    let b = rand_tensor(&[3, 4], 2);
    assert_ok(
        check(|g, v| g.add(v[0], v[1]), &[a.clone(), b.clone()]).unwrap(),
        "add",
    );
    assert_ok(
        check(|g, v| g.mul(v[0], v[1]), &[a.clone(), b]).unwrap(),
        "mul",
    );
    assert_ok(
        check(|g, v| g.mul(v[0], v[0]), std::slice::from_ref(&a)).unwrap(),
        "square",
    );
    assert_ok(check(|g, v| Ok(g.sum(v[0])), &[a]).unwrap(), "sum");
}

#[test]
fn matmul() {
    let a = rand_tensor(&[3, 5], 3);
    let b = rand_tensor(&[5, 2], 4);
    assert_ok(
        check(|g, v| g.matmul(v[0], v[1]), &[a, b]).unwrap(),
        "matmul",
    );
}

#[test]
fn activations_and_log() {
    let x = rand_tensor(&[2, 3, 7], 5);
    assert_ok(
        check(|g, v| Ok(g.elu(v[0])), std::slice::from_ref(&x)).unwrap(),
        "elu",
    );
    assert_ok(check(|g, v| Ok(g.relu(v[0])), &[x]).unwrap(), "relu");
    let p = positive_tensor(&[2, 3, 7], 6);
    assert_ok(
        check(|g, v| Ok(g.log(v[0], 1e-6)), std::slice::from_ref(&p)).unwrap(),
        "log",
    );
    assert_ok(
        check(|g, v| Ok(g.log(v[0], 0.0)), &[p]).unwrap(),
        "log without floor",
    );
}

#[test]
fn softmax_family_and_nll() {
    let x = rand_tensor(&[3, 2, 4], 7).cast::<f64>();
    let scaled =
        Tensor::from_vec(vec![3, 2, 4], x.data().iter().map(|v| v * 4.0).collect()).unwrap();
    assert_ok(
        check(|g, v| g.softmax(v[0]), std::slice::from_ref(&scaled)).unwrap(),
        "softmax",
    );
    assert_ok(
        check(|g, v| g.log_softmax(v[0]), std::slice::from_ref(&scaled)).unwrap(),
        "log_softmax",
    );
    assert_ok(
        check(
            |g, v| g.cross_entropy(v[0], &[0, 1, 1]),
            std::slice::from_ref(&scaled),
        )
        .unwrap(),
        "cross_entropy",
    );
    let lp = rand_tensor(&[3, 2, 4], 8);
    assert_ok(
        check(|g, v| g.nll_loss(v[0], &[1, 0, 1]), &[lp]).unwrap(),
        "nll",
    );
}

#[test]
fn reshape_and_slice() {
    let x = rand_tensor(&[2, 3, 6], 9);
    assert_ok(
        check(|g, v| g.reshape(v[0], &[6, 6]), std::slice::from_ref(&x)).unwrap(),
        "reshape",
    );
    assert_ok(
        check(|g, v| g.slice_last(v[0], 2, 3), &[x]).unwrap(),
        "slice_last",
    );
}

#[test]
fn dropout_with_fixed_mask() {
    let x = rand_tensor(&[4, 10], 10);
    let errs = check(
        |g, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            g.dropout(v[0], 0.3, true, &mut rng)
        },
        &[x],
    )
    .unwrap();
    assert_ok(errs, "dropout");
}

#[test]
fn batch_norm_both_modes() {
    let x = rand_tensor(&[3, 4, 2, 5], 11);
    let gamma = positive_tensor(&[4], 12);
    let beta = rand_tensor(&[4], 13);
    let train = check(
        |g, v| g.batch_norm_train(v[0], v[1], v[2]).map(|(y, _)| y),
        &[x.clone(), gamma.clone(), beta.clone()],
    )
    .unwrap();
    assert_ok(train, "batch_norm train");
    let eval = check(
        |g, v| {
            g.batch_norm_eval(
                v[0],
                v[1],
                v[2],
                &[0.1, -0.2, 0.0, 0.3],
                &[1.0, 0.5, 2.0, 0.7],
            )
        },
        &[x, gamma, beta],
    )
    .unwrap();
    assert_ok(eval, "batch_norm eval");
}

#[test]
fn weight_norm() {
    let v = rand_tensor(&[3, 2, 4], 14);
    let g = positive_tensor(&[3], 15);
    assert_ok(
        check(|gr, vs| gr.weight_norm(vs[0], vs[1]), &[v, g]).unwrap(),
        "weight_norm",
    );
}

#[test]
fn pooling() {
    let x = rand_tensor(&[2, 3, 1, 17], 16);
    for geom in [
        PoolGeom::new(3, 1, 1),
        PoolGeom::new(3, 1, 3),
        PoolGeom::new(4, 2, 1),
        PoolGeom::new(2, 3, 2),
    ] {
        assert_ok(
            check(|g, v| g.max_pool1d(v[0], geom), std::slice::from_ref(&x)).unwrap(),
            "max_pool1d",
        );
        assert_ok(
            check(|g, v| g.mean_pool1d(v[0], geom), std::slice::from_ref(&x)).unwrap(),
            "mean_pool1d",
        );
    }
}

#[test]
fn conv2d_spatial_and_temporal() {
    let x = rand_tensor(&[2, 2, 5, 11], 17);
    // spatial filter spanning all rows
    let w = rand_tensor(&[3, 2, 5, 1], 18);
    let b = rand_tensor(&[3], 19);
    assert_ok(
        check(
            |g, v| g.conv2d(v[0], v[1], Some(v[2]), ConvGeom::default()),
            &[x.clone(), w, b],
        )
        .unwrap(),
        "conv2d spatial",
    );
    // grouped temporal filter with padding and dilation
    let w = rand_tensor(&[4, 1, 1, 3], 20);
    let geom = ConvGeom::dilated(2).with_padding(2).with_groups(2);
    assert_ok(
        check(|g, v| g.conv2d(v[0], v[1], None, geom), &[x, w]).unwrap(),
        "conv2d temporal",
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv1d_random_geometries(
        batch in 1usize..3,
        groups in 1usize..4,
        cpg in 1usize..3,
        opg in 1usize..3,
        kernel in 1usize..5,
        dilation in 1usize..4,
        stride in 1usize..3,
        causal in any::<bool>(),
        pad in 0usize..3,
        extra in 0usize..6,
        seed in 0u64..1000,
    ) {
        let cin = groups * cpg;
        let cout = groups * opg;
        let span = dilation * (kernel - 1) + 1;
        let len = span + extra;
        let geom = if causal {
            ConvGeom { stride, groups, ..ConvGeom::causal(kernel, dilation) }
        } else {
            ConvGeom { stride, groups, ..ConvGeom::dilated(dilation).with_padding(pad) }
        };
        let x = rand_tensor(&[batch, cin, len], seed);
        let w = rand_tensor(&[cout, cpg, kernel], seed + 1);
        let b = rand_tensor(&[cout], seed + 2);
        let errs = check(|g, v| g.conv1d(v[0], v[1], Some(v[2]), geom), &[x, w, b]).unwrap();
        for e in errs {
            prop_assert!(e < TOL, "relative error {e:.3e} for {geom:?}");
        }
    }

    #[test]
    fn grouped_conv_equals_independent_channels(
        c in 1usize..5,
        kernel in 1usize..4,
        dilation in 1usize..3,
        extra in 0usize..5,
        seed in 0u64..1000,
    ) {
        let len = dilation * (kernel - 1) + 1 + extra;
        let x = rand_tensor(&[1, c, len], seed);
        let w = rand_tensor(&[c, 1, kernel], seed + 7);
        let mut g = Graph::<f64>::new();
        let xv = g.leaf(x.clone(), false);
        let wv = g.leaf(w.clone(), false);
        let y = g.conv1d(xv, wv, None, ConvGeom::dilated(dilation).with_groups(c)).unwrap();
        let grouped = g.value(y).data().to_vec();
        let out_len = grouped.len() / c;
        for ch in 0..c {
            let xc = g.leaf(Tensor::from_vec(vec![1, 1, len], x.data()[ch * len..(ch + 1) * len].to_vec()).unwrap(), false);
            let wc = g.leaf(Tensor::from_vec(vec![1, 1, kernel], w.data()[ch * kernel..(ch + 1) * kernel].to_vec()).unwrap(), false);
            let yc = g.conv1d(xc, wc, None, ConvGeom::dilated(dilation)).unwrap();
            prop_assert_eq!(g.value(yc).data(), &grouped[ch * out_len..(ch + 1) * out_len]);
        }
    }

    #[test]
    fn dropout_p_zero_and_eval_are_identity(p in 0.0f64..0.95, train in any::<bool>(), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(rand_tensor(&[3, 8], seed), true);
        prop_assert_eq!(g.dropout(x, 0.0, train, &mut rng).unwrap(), x);
        prop_assert_eq!(g.dropout(x, p, false, &mut rng).unwrap(), x);
    }
}
