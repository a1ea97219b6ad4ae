//! Central finite-difference checks of the four full models in f64.
//!
//! Central differences only verify a gradient where the loss is smooth
//! within ±h. ReLU and max-pool make the loss piecewise smooth, so a probe
//! whose step straddles a switch is recognized (its estimate moves when the
//! step shrinks tenfold) and replaced by a fresh probe. A wrong adjoint is
//! still caught: both step sizes then agree with each other and not with it.

use eegxfer::models::{build, receptive_field, Arch, Model, ModelSpec};
use numcore::gradcheck::{projection, DEFAULT_STEP};
use numcore::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
/// Gradients this small are compared on an absolute scale: the round-off in
/// a central difference of an O(1) loss at h = 1e-5 is around 1e-11.
const SCALE_FLOOR: f64 = 1e-6;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(SCALE_FLOOR)
}

struct Problem {
    model: Model<f64>,
    /// Parameters followed by the input batch.
    inputs: Vec<Tensor<f64>>,
    targets: Vec<usize>,
    train: bool,
}

impl Problem {
    fn new(arch: Arch, batch: usize, extra: usize, train: bool) -> Self {
        let mut spec = ModelSpec::canonical(arch);
        spec.input_window_samples = receptive_field(&spec) + extra;
        let model = build(&spec, 11).unwrap().cast::<f64>();
        let w = spec.input_window_samples;
        let x = Tensor::from_vec(vec![batch, 21, w], projection(batch * 21 * w, 99)).unwrap();
        let mut inputs = model.params().to_vec();
        inputs.push(x);
        Self {
            model,
            inputs,
            targets: (0..batch).map(|i| i % 2).collect(),
            train,
        }
    }

    fn run(&self, inputs: &[Tensor<f64>], grad: bool) -> (f64, Vec<Option<Tensor<f64>>>) {
        let mut g = Graph::new();
        let v: Vec<_> = inputs.iter().map(|t| g.leaf(t.clone(), grad)).collect();
        let n = v.len() - 1;
        // Same seed every call, so dropout masks are identical across evaluations.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = self
            .model
            .forward(&mut g, v[n], &v[..n], self.train, false, &mut rng)
            .unwrap();
        let l = g.cross_entropy(out.logits, &self.targets).unwrap();
        let value = g.value(l).data()[0];
        if !grad {
            return (value, Vec::new());
        }
        g.backward(l).unwrap();
        (value, v.iter().map(|&x| g.grad(x)).collect())
    }

    fn loss_along(&self, which: usize, dir: &[(usize, f64)], h: f64) -> f64 {
        let mut shifted = self.inputs.clone();
        for &(i, d) in dir {
            shifted[which].data_mut()[i] += h * d;
        }
        self.run(&shifted, false).0
    }

    fn central(&self, which: usize, dir: &[(usize, f64)], h: f64) -> f64 {
        (self.loss_along(which, dir, h) - self.loss_along(which, dir, -h)) / (2.0 * h)
    }

    fn name(&self, which: usize) -> String {
        self.model
            .param_names()
            .get(which)
            .cloned()
            .unwrap_or_else(|| "input".to_string())
    }
}

/// Probe `per_tensor` random entries of every parameter tensor and the input.
fn coordinate_checks(p: &Problem, per_tensor: usize, seed: u64) {
    let (_, grads) = p.run(&p.inputs, true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut probes, mut redrawn) = (0usize, 0usize);
    for (which, grad) in grads.iter().enumerate() {
        let grad = grad
            .as_ref()
            .expect("every input is reachable from the loss");
        let numel = p.inputs[which].numel();
        let mut done = 0;
        let mut tries = 0;
        while done < per_tensor.min(numel) {
            tries += 1;
            assert!(
                tries <= 4 * per_tensor + 4,
                "{}: too many non-smooth probes",
                p.name(which)
            );
            let e = rng.random_range(0..numel);
            let analytic = grad.data()[e];
            let numeric = p.central(which, &[(e, 1.0)], DEFAULT_STEP);
            probes += 1;
            if rel(analytic, numeric) >= TOL {
                let finer = p.central(which, &[(e, 1.0)], DEFAULT_STEP / 10.0);
                if rel(numeric, finer) >= TOL {
                    redrawn += 1;
                    continue;
                }
                panic!(
                    "{} [{e}]: analytic {analytic:.8e}, numeric {numeric:.8e} (h/10: {finer:.8e})",
                    p.name(which)
                );
            }
            done += 1;
        }
    }
    assert!(
        redrawn * 5 <= probes,
        "{redrawn} of {probes} probes straddled a switch"
    );
}

/// One random direction per layer group, for the networks without kinks.
fn group_direction_checks(p: &Problem) {
    let (_, grads) = p.run(&p.inputs, true);
    let groups = p.model.group_index_of_params();
    for (gi, (name, _)) in p.model.layer_groups().iter().enumerate() {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == gi).collect();
        let mut shifted_up = p.inputs.clone();
        let mut shifted_down = p.inputs.clone();
        let h = DEFAULT_STEP;
        let mut analytic = 0.0;
        for &i in &members {
            let d = projection(p.inputs[i].numel(), 500 + i as u64);
            let g = grads[i].as_ref().unwrap();
            analytic += g.data().iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
            for (k, dk) in d.iter().enumerate() {
                shifted_up[i].data_mut()[k] += h * dk;
                shifted_down[i].data_mut()[k] -= h * dk;
            }
        }
        let numeric = (p.run(&shifted_up, false).0 - p.run(&shifted_down, false).0) / (2.0 * h);
        assert!(
            rel(analytic, numeric) < TOL,
            "group {name}: analytic {analytic:.8e}, numeric {numeric:.8e}"
        );
    }
}

#[test]
fn eegnet() {
    let train = Problem::new(Arch::EegNet, 2, 3, true);
    coordinate_checks(&train, 4, 1);
    group_direction_checks(&train);
    let eval = Problem::new(Arch::EegNet, 2, 3, false);
    coordinate_checks(&eval, 2, 2);
    group_direction_checks(&eval);
}

#[test]
fn shallownet() {
    let p = Problem::new(Arch::ShallowNet, 2, 4, true);
    coordinate_checks(&p, 4, 3);
    group_direction_checks(&p);
}

#[test]
fn deep4net() {
    coordinate_checks(&Problem::new(Arch::Deep4Net, 2, 2, true), 2, 4);
}

#[test]
fn tcn() {
    coordinate_checks(&Problem::new(Arch::Tcn, 1, 2, true), 2, 5);
}
