use numcore::gradcheck::projection;
use numcore::{Graph, Tensor};

/// -log softmax(z)[t] evaluated directly with a shifted log-sum-exp.
fn naive_nll(z: &[f64], target: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[target]
}

#[test]
fn batch_cross_entropy_is_mean_of_per_sample_losses() {
    for seed in 0..20u64 {
        let batch = 1 + (seed as usize % 7);
        let logits: Vec<f64> = projection(batch * 2, seed)
            .iter()
            .map(|v| v * 6.0)
            .collect();
        let targets: Vec<usize> = projection(batch, seed + 100)
            .iter()
            .map(|v| (*v > 0.0) as usize)
            .collect();
        let mut g = Graph::<f64>::new();
        let x = g.leaf(
            Tensor::from_vec(vec![batch, 2], logits.clone()).unwrap(),
            false,
        );
        let l = g.cross_entropy(x, &targets).unwrap();
        let expected = (0..batch)
            .map(|b| naive_nll(&logits[2 * b..2 * b + 2], targets[b]))
            .sum::<f64>()
            / batch as f64;
        assert!((g.value(l).data()[0] - expected).abs() < 1e-12);
    }
}

#[test]
fn dense_positions_average_like_extra_samples() {
    // [1, 2, 3] with one target equals [3, 2] with the target repeated
    let z = [0.3, -1.2, 2.0, 0.7, 0.1, -0.4];
    let mut g = Graph::<f64>::new();
    let dense = g.leaf(Tensor::from_vec(vec![1, 2, 3], z.to_vec()).unwrap(), false);
    let ld = g.cross_entropy(dense, &[1]).unwrap();
    let flat: Vec<f64> = (0..3).flat_map(|p| [z[p], z[3 + p]]).collect();
    let rows = g.leaf(Tensor::from_vec(vec![3, 2], flat).unwrap(), false);
    let lr = g.cross_entropy(rows, &[1, 1, 1]).unwrap();
    assert!((g.value(ld).data()[0] - g.value(lr).data()[0]).abs() < 1e-12);
}
