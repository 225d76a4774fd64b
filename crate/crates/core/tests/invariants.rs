//! Property tests for the transform set, the policy simplex, and the binary
//! round-trips.

use augmatch_core::image::Image;
use augmatch_core::imgops::{
    apply_transform, mirror, pad_crop_at, OpKind, Transform, TransformTable,
};
use augmatch_core::nnet::{Arch, Checkpoint, Network};
use augmatch_core::policy::PolicyLayer;
use augmatch_core::rng::SeedFork;
use proptest::prelude::*;

fn arb_image() -> impl Strategy<Value = Image> {
    (4usize..12, 4usize..12, prop_oneof![Just(1usize), Just(3usize)], any::<u64>()).prop_map(
        |(h, w, c, seed)| {
            use rand::Rng;
            let mut rng = SeedFork::new(seed).rng();
            let data = (0..h * w * c)
                .map(|_| f64::from(rng.random_range(0u32..256)) / 255.0)
                .collect();
            Image { height: h, width: w, channels: c, data }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Range closure and shape preservation for every transform in the
    // standard table, on arbitrary images and rng states.
    #[test]
    fn standard_table_preserves_range_and_shape(img in arb_image(), idx in 0usize..139, seed in any::<u64>()) {
        let table = TransformTable::standard();
        let mut rng = SeedFork::new(seed).rng();
        let out = apply_transform(&img, &table.entries[idx], &mut rng);
        prop_assert!(out.same_shape(&img));
        prop_assert!(out.in_unit_range());
    }

    #[test]
    fn involutions_and_centered_crop(img in arb_image(), pad in 0usize..5) {
        prop_assert_eq!(mirror(&mirror(&img)), img.clone());
        prop_assert_eq!(pad_crop_at(&img, pad, (pad, pad)).unwrap(), img.clone());
        let mut rng = SeedFork::new(0).rng();
        let inv = Transform { op: OpKind::Invert, level: None, magnitude: None };
        let twice = apply_transform(&apply_transform(&img, &inv, &mut rng), &inv, &mut rng);
        for (a, b) in twice.data.iter().zip(&img.data) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    // Softmax stays on the simplex. Logits are bounded so no exp underflows
    // to literal zero (gap < ~745); searched policies move ~lr per step and
    // stay far inside this range.
    #[test]
    fn layer_probs_form_a_simplex(logits in prop::collection::vec(-300f64..300.0, 1..200)) {
        let layer = PolicyLayer { logits };
        let p = layer.probs().unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| x > 0.0));
    }

    // Checkpoint round-trip is bit-exact for arbitrary weight vectors
    // (covers the flatten/unflatten contract).
    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), hidden in 1usize..12) {
        use rand::Rng;
        let arch = Arch::Mlp { input: 10, hidden, classes: 3 };
        let mut rng = SeedFork::new(seed).rng();
        let weights: Vec<f64> = (0..arch.param_count()).map(|_| rng.random_range(-10.0..10.0)).collect();
        let net = Network { arch, weights };
        let bytes = Checkpoint::from_network(&net).to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap().into_network();
        prop_assert_eq!(net, back);
    }

    // Blend-style ops at the neutral magnitude reproduce the input.
    #[test]
    fn blend_ops_neutral_at_magnitude_one(img in arb_image()) {
        for op in [OpKind::Contrast, OpKind::Color, OpKind::Brightness, OpKind::Sharpness] {
            let t = Transform { op, level: None, magnitude: Some(1.0) };
            let mut rng = SeedFork::new(0).rng();
            let out = apply_transform(&img, &t, &mut rng);
            for (a, b) in out.data.iter().zip(&img.data) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
