use eegxfer::models::{build, receptive_field, stack_out_len, Arch, ArchConfig, ModelSpec, Stage};
use eegxfer::Error;
use numcore::Tensor;
use proptest::prelude::*;

fn spec_with_window(arch: Arch, window: usize) -> ModelSpec {
    let mut s = ModelSpec::canonical(arch);
    s.input_window_samples = window;
    s
}

#[test]
fn trainable_parameter_counts() {
    let expected = [
        (Arch::EegNet, 2018),
        (Arch::ShallowNet, 36722),
        (Arch::Deep4Net, 277052),
        (Arch::Tcn, 456502),
    ];
    for (arch, n) in expected {
        let m = build(&ModelSpec::canonical(arch), 0).unwrap();
        let breakdown = m.param_breakdown();
        assert_eq!(m.n_trainable(), n, "{arch}: {breakdown:#?}");
        assert_eq!(breakdown.iter().map(|l| l.params).sum::<usize>(), n);
    }
}

#[test]
fn per_layer_breakdown_eegnet() {
    let m = build(&ModelSpec::canonical(Arch::EegNet), 0).unwrap();
    let got: Vec<(String, usize)> = m
        .param_breakdown()
        .into_iter()
        .map(|l| (l.layer, l.params))
        .collect();
    let want = [
        ("block0.conv_temporal", 8 * 64),
        ("block0.bn_temporal", 16),
        ("block1.conv_spatial", 16 * 21),
        ("block1.bn_spatial", 32),
        ("block2.conv_depthwise", 16 * 16),
        ("block2.conv_pointwise", 16 * 16),
        ("block2.bn", 32),
        ("classifier.conv", 2 * 16 * 18 + 2),
    ];
    let want: Vec<(String, usize)> = want.iter().map(|(a, b)| (a.to_string(), *b)).collect();
    assert_eq!(got, want);
}

/// Receptive fields recomputed by hand from each family's kernel, padding
/// and dilation schedule.
fn hand_receptive_field(arch: Arch) -> usize {
    match arch {
        // temporal k64 padded 32+32, pool 4, separable k16 at dilation 4
        // padded 8+8, pool 8 at dilation 4, classifier k18 at dilation 32
        Arch::EegNet => 64 + 3 + 15 * 4 + 7 * 4 + 17 * 32 - 2 * 32 - 2 * 8,
        // conv k25, mean pool 75, classifier k25 at dilation 21
        Arch::ShallowNet => 1 + 24 + 74 + 24 * 21,
        // four blocks of conv k10 and pool k7 at dilations 1, 3, 9, 27
        Arch::Deep4Net => 1 + (9 + 6) * (1 + 3 + 9 + 27),
        // five blocks of two causal k16 convs at dilations 1..16
        Arch::Tcn => 1 + 2 * 15 * (1 + 2 + 4 + 8 + 16),
    }
}

#[test]
fn receptive_fields_match_hand_arithmetic_and_ranges() {
    for arch in Arch::ALL {
        let rf = receptive_field(&ModelSpec::canonical(arch));
        assert_eq!(rf, hand_receptive_field(arch), "{arch}");
        let range = if arch == Arch::Tcn {
            810..=990
        } else {
            540..=660
        };
        assert!(range.contains(&rf), "{arch}: {rf}");
    }
    assert_eq!(
        Arch::ALL.map(|a| receptive_field(&ModelSpec::canonical(a))),
        [619, 603, 601, 931]
    );
}

#[test]
fn forward_shapes_follow_window_arithmetic() {
    for arch in Arch::ALL {
        let rf = receptive_field(&ModelSpec::canonical(arch));
        for extra in [0, 5] {
            let w = rf + extra;
            let spec = spec_with_window(arch, w);
            let m = build(&spec, 3).unwrap();
            let x = Tensor::from_fn(&[1, 21, w], |i| ((i % 17) as f32 * 0.1).sin());
            let logits = m.predict_logits(x).unwrap();
            assert_eq!(logits.shape(), &[1, 2, extra + 1], "{arch} at W={w}");
            assert_eq!(spec.n_positions(w), Some(extra + 1));
            assert!(logits.all_finite());
        }
        let m = build(&ModelSpec::canonical(arch), 0).unwrap();
        let short = Tensor::zeros(&[1, 21, rf - 1]);
        assert!(matches!(
            m.predict_logits(short),
            Err(Error::WindowTooShort { .. })
        ));
    }
}

#[test]
fn builds_are_deterministic_and_seed_dependent() {
    for arch in Arch::ALL {
        let spec = ModelSpec::canonical(arch);
        let a = build(&spec, 42).unwrap();
        let b = build(&spec, 42).unwrap();
        let c = build(&spec, 43).unwrap();
        let bits = |m: &eegxfer::models::Model| -> Vec<u32> {
            m.params()
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }
}

#[test]
fn eval_forward_is_deterministic() {
    let spec = spec_with_window(Arch::EegNet, 700);
    let m = build(&spec, 1).unwrap();
    let x = Tensor::from_fn(&[2, 21, 700], |i| (i as f32 * 0.013).cos());
    let a = m.predict_logits(x.clone()).unwrap();
    let b = m.predict_logits(x).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_input_shallownet_is_finite() {
    let spec = ModelSpec::canonical(Arch::ShallowNet);
    let m = build(&spec, 5).unwrap();
    let x = Tensor::zeros(&[2, 21, 1000]);
    let mut g = numcore::Graph::new();
    let params = m.bind(&mut g, false);
    let xv = g.leaf(x, false);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let out = m
        .forward(&mut g, xv, &params, false, true, &mut rng)
        .unwrap();
    for (name, v) in &out.trace {
        assert!(g.value(*v).all_finite(), "{name}");
    }
    assert!(g.value(out.logits).all_finite());
}

#[test]
fn layer_groups_partition_parameters() {
    let expected = [
        (Arch::EegNet, 4),
        (Arch::ShallowNet, 3),
        (Arch::Deep4Net, 5),
        (Arch::Tcn, 6),
    ];
    for (arch, n) in expected {
        let m = build(&ModelSpec::canonical(arch), 0).unwrap();
        let groups = m.layer_groups();
        assert_eq!(groups.len(), n, "{arch}");
        assert_eq!(groups.last().unwrap().0, "classifier");
        let mut flat: Vec<String> = groups.into_iter().flat_map(|(_, v)| v).collect();
        assert_eq!(flat, m.param_names());
        flat.sort();
        flat.dedup();
        assert_eq!(flat.len(), m.param_names().len(), "names unique");
        assert_eq!(m.trace_names().len(), n);
    }
}

#[test]
fn unknown_config_keys_rejected() {
    let j = r#"{"n_channels":21,"n_classes":2,"input_window_samples":1000,"drop_prob":0.25,
               "config":{"arch":"eegnet","f1":8,"bogus":1}}"#;
    assert!(serde_json::from_str::<ModelSpec>(j).is_err());
    let j = r#"{"n_channels":21,"n_classes":2,"input_window_samples":1000,"drop_prob":0.25,
               "config":{"arch":"eegnet","f1":8}}"#;
    let s: ModelSpec = serde_json::from_str(j).unwrap();
    assert_eq!(s.config, ArchConfig::canonical(Arch::EegNet));
}

proptest! {
    #[test]
    fn positions_grow_one_per_sample(
        stages in prop::collection::vec((1usize..8, 1usize..6, 0usize..6), 1..5),
        w in 1usize..400,
    ) {
        let stages: Vec<Stage> = stages.into_iter().map(|(k, d, p)| Stage::new(k, d, p)).collect();
        let a = stack_out_len(&stages, w);
        let b = stack_out_len(&stages, w + 1);
        match (a, b) {
            (Some(a), Some(b)) => prop_assert_eq!(b, a + 1),
            (Some(_), None) => prop_assert!(false, "longer input lost its output"),
            _ => {}
        }
    }

    #[test]
    fn canonical_positions_are_window_minus_rf_plus_one(w in 0usize..3000) {
        for arch in Arch::ALL {
            let spec = ModelSpec::canonical(arch);
            let rf = receptive_field(&spec);
            let expect = (w >= rf).then(|| w - rf + 1);
            prop_assert_eq!(spec.n_positions(w), expect);
        }
    }
}
