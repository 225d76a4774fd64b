use super::*;
use crate::imgops::{build_transform_table, OpSpec, TableConfig};
use crate::nnet::Arch;
use crate::policy::PolicyMeta;
use rand::Rng;

fn deterministic_table() -> TransformTable {
    // identity, invert, equalize: all deterministic
    let cfg = TableConfig {
        levels: 2,
        ops: vec![
            OpSpec { name: "identity".into(), range: None, size: None, pad: None },
            OpSpec { name: "invert".into(), range: None, size: None, pad: None },
            OpSpec { name: "equalize".into(), range: None, size: None, pad: None },
        ],
    };
    build_transform_table(&cfg).unwrap()
}

fn small_net(seed: u64) -> Network {
    Network::init(Arch::Mlp { input: 48, hidden: 9, classes: 3 }, &mut SeedFork::new(seed).rng())
}

fn random_image(seed: u64) -> Image {
    let mut rng = SeedFork::new(seed).rng();
    let data = (0..48).map(|_| f64::from(rng.random_range(0u32..256)) / 255.0).collect();
    Image { height: 4, width: 4, channels: 3, data }
}

fn random_jacobian(dim: usize, cols: usize, seed: u64) -> Jacobian {
    let mut rng = SeedFork::new(seed).rng();
    let columns = (0..cols)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Jacobian { columns }
}

fn random_simplex(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeedFork::new(seed).rng();
    let layer = PolicyLayer { logits: (0..len).map(|_| rng.random_range(-2.0..2.0)).collect() };
    layer.probs().unwrap()
}

// -- cosine ---------------------------------------------------------------

#[test]
fn cosine_basic_identities() {
    let v = vec![0.3, -0.4, 1.2];
    assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
    assert!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap().abs() < 1e-12);
}

#[test]
fn cosine_scale_invariance_and_errors() {
    let v = vec![0.5, 1.5, -2.0, 0.1];
    let g = vec![1.0, -0.3, 0.4, 2.2];
    let scaled: Vec<f64> = g.iter().map(|x| x * 7.25).collect();
    let a = cosine_similarity(&v, &g).unwrap();
    let b = cosine_similarity(&v, &scaled).unwrap();
    assert!((a - b).abs() < 1e-12);
    assert!(cosine_similarity(&v, &[0.0; 4]).is_err());
    assert!(cosine_similarity(&[0.0; 4], &g).is_err());
}

// -- jacobians ------------------------------------------------------------

#[test]
fn analytic_jacobian_single_identity_table() {
    let cfg = TableConfig {
        levels: 2,
        ops: vec![OpSpec { name: "identity".into(), range: None, size: None, pad: None }],
    };
    let table = build_transform_table(&cfg).unwrap();
    let net = small_net(1);
    let img = random_image(2);
    let jac = jacobian_analytic(&net, Sample { image: &img, label: 1 }, &table, SeedFork::new(3)).unwrap();
    assert_eq!(jac.transform_count(), 1);
    let (_, grad) = net.loss_and_grad(&img, 1).unwrap();
    assert_eq!(jac.columns[0], grad);
}

#[test]
fn analytic_jacobian_matches_per_column_recomputation() {
    let table = deterministic_table();
    let net = small_net(5);
    let img = random_image(6);
    let sample = Sample { image: &img, label: 0 };
    let jac = jacobian_analytic(&net, sample, &table, SeedFork::new(9)).unwrap();
    let mut rng = SeedFork::new(1234).rng(); // ops are deterministic; any rng works
    for (n, entry) in table.entries.iter().enumerate() {
        let aug = crate::imgops::apply_transform(&img, entry, &mut rng);
        let (_, grad) = net.loss_and_grad(&aug, 0).unwrap();
        assert_eq!(jac.columns[n], grad, "column {n}");
    }
}

#[test]
fn identity_column_always_equals_plain_gradient() {
    let table = deterministic_table();
    let net = small_net(11);
    let img = random_image(12);
    let sample = Sample { image: &img, label: 2 };
    let jac = jacobian_analytic(&net, sample, &table, SeedFork::new(31)).unwrap();
    let (_, grad) = net.loss_and_grad(&img, 2).unwrap();
    assert_eq!(jac.columns[table.identity_index], grad);
}

#[test]
fn mc_with_empty_prefix_equals_analytic_exactly() {
    let table = deterministic_table();
    let net = small_net(13);
    let img = random_image(14);
    let sample = Sample { image: &img, label: 1 };
    let prefix = PolicyStack::new(table.clone());
    let seed = SeedFork::new(77);
    let a = jacobian_analytic(&net, sample, &table, seed).unwrap();
    let b = jacobian_mc(&net, sample, &prefix, 16, seed).unwrap();
    for (ca, cb) in a.columns.iter().zip(&b.columns) {
        assert_eq!(ca, cb);
    }
    assert!(jacobian_mc(&net, sample, &prefix, 0, seed).is_err());
}

#[test]
fn mc_with_one_hot_deterministic_prefix_matches_analytic_on_transformed_image() {
    let table = deterministic_table();
    let net = small_net(15);
    let img = random_image(16);
    let sample = Sample { image: &img, label: 0 };
    let invert_idx = 1;
    let mut prefix = PolicyStack::new(table.clone());
    let mut logits = vec![0.0; table.len()];
    logits[invert_idx] = 1000.0;
    prefix.layers.push(PolicyLayer { logits });

    let mc = jacobian_mc(&net, sample, &prefix, 5, SeedFork::new(21)).unwrap();
    let mut rng = SeedFork::new(0).rng();
    let inverted = crate::imgops::apply_transform(&img, &table.entries[invert_idx], &mut rng);
    let analytic =
        jacobian_analytic(&net, Sample { image: &inverted, label: 0 }, &table, SeedFork::new(99)).unwrap();
    for (cm, ca) in mc.columns.iter().zip(&analytic.columns) {
        for (a, b) in cm.iter().zip(ca) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}

#[test]
fn mc_converges_to_enumeration_on_uniform_prefix() {
    let table = deterministic_table();
    let net = small_net(17);
    let img = random_image(18);
    let sample = Sample { image: &img, label: 1 };
    let mut prefix = PolicyStack::new(table.clone());
    prefix.layers.push(PolicyLayer::uniform(table.len()));

    // exact enumeration of the depth-2 Jacobian: all 3 chains, weight 1/3
    let mut rng = SeedFork::new(0).rng();
    let mut enumerated = vec![vec![0.0; net.param_count()]; table.len()];
    for first in &table.entries {
        let x1 = crate::imgops::apply_transform(&img, first, &mut rng);
        for (n, second) in table.entries.iter().enumerate() {
            let aug = crate::imgops::apply_transform(&x1, second, &mut rng);
            let (_, grad) = net.loss_and_grad(&aug, 1).unwrap();
            for (e, g) in enumerated[n].iter_mut().zip(&grad) {
                *e += g / 3.0;
            }
        }
    }

    let mc = jacobian_mc(&net, sample, &prefix, 2000, SeedFork::new(400)).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for (cm, ce) in mc.columns.iter().zip(&enumerated) {
        for (a, b) in cm.iter().zip(ce) {
            num += (a - b).powi(2);
            den += b.powi(2);
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}

// -- avg_gradient ----------------------------------------------------------

#[test]
fn avg_gradient_one_hot_and_uniform() {
    let jac = random_jacobian(7, 4, 100);
    let mut p = vec![0.0; 4];
    p[2] = 1.0;
    assert_eq!(avg_gradient(&jac, &p).unwrap(), jac.columns[2]);

    let uniform = vec![0.25; 4];
    let g = avg_gradient(&jac, &uniform).unwrap();
    for i in 0..7 {
        let mean = jac.columns.iter().map(|c| c[i]).sum::<f64>() / 4.0;
        assert!((g[i] - mean).abs() < 1e-12);
    }
}

#[test]
fn avg_gradient_matches_weighted_sum_oracle() {
    let jac = random_jacobian(9, 5, 101);
    let p = random_simplex(5, 102);
    let g = avg_gradient(&jac, &p).unwrap();
    for i in 0..9 {
        let expect: f64 = (0..5).map(|n| p[n] * jac.columns[n][i]).sum();
        assert!((g[i] - expect).abs() < 1e-12);
    }
}

#[test]
fn avg_gradient_rejects_non_simplex() {
    let jac = random_jacobian(3, 3, 103);
    assert!(avg_gradient(&jac, &[0.5, 0.5]).is_err());
    assert!(avg_gradient(&jac, &[0.7, 0.5, 0.3]).is_err());
    assert!(avg_gradient(&jac, &[-0.1, 0.6, 0.5]).is_err());
}

// -- reward ----------------------------------------------------------------

#[test]
fn reward_is_zero_when_all_columns_equal_v() {
    let v: Vec<f64> = vec![0.4, -0.2, 0.9, 0.1];
    let jac = Jacobian { columns: vec![v.clone(), v.clone(), v.clone()] };
    let p = random_simplex(3, 200);
    let out = reward(&jac, &p, &v).unwrap();
    for r in out.reward {
        assert!(r.abs() < 1e-12);
    }
    assert!((out.cos - 1.0).abs() < 1e-12);
}

#[test]
fn reward_two_transform_toy_matches_hand_computation() {
    // columns [1,0] and [0,1], p uniform, v = [1,0]
    // g = [1/2,1/2]; r = [sqrt(2)/2, -sqrt(2)/2]
    let jac = Jacobian { columns: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
    let p = vec![0.5, 0.5];
    let v = vec![1.0, 0.0];
    let out = reward(&jac, &p, &v).unwrap();
    let expect = std::f64::consts::FRAC_1_SQRT_2;
    assert!((out.reward[0] - expect).abs() < 1e-12, "{:?}", out.reward);
    assert!((out.reward[1] + expect).abs() < 1e-12);
    assert!((out.g_norm - expect).abs() < 1e-12);
    assert!((out.cos - expect).abs() < 1e-12);
}

#[test]
fn expected_reward_under_policy_is_zero() {
    for seed in 0..20 {
        let jac = random_jacobian(12, 6, 300 + seed);
        let p = random_simplex(6, 400 + seed);
        let mut v: Vec<f64> = random_jacobian(12, 1, 500 + seed).columns.pop().unwrap();
        v[0] += 0.1; // keep away from zero
        let out = reward(&jac, &p, &v).unwrap();
        let pr = dot(&p, &out.reward);
        let bound = 1e-9 * norm(&p) * norm(&out.reward).max(1e-30);
        assert!(pr.abs() <= bound.max(1e-15), "p.r = {pr}");
    }
}

#[test]
fn reward_errors_on_degenerate_gradient() {
    let jac = Jacobian { columns: vec![vec![0.0, 0.0], vec![0.0, 0.0]] };
    let p = vec![0.5, 0.5];
    let v = vec![1.0, 0.0];
    assert!(matches!(reward(&jac, &p, &v), Err(Error::DegenerateGradient(_))));
}

// -- regularized reward ------------------------------------------------------

#[test]
fn regularized_reward_cases() {
    let r = vec![vec![1.0, -2.0], vec![1.0, -2.0]];
    assert_eq!(regularized_reward(&r, 1.0).unwrap(), vec![1.0, -2.0]);

    let two = vec![vec![1.0, 3.0], vec![3.0, 1.0]];
    assert_eq!(regularized_reward(&two, 0.0).unwrap(), vec![2.0, 2.0]);
    assert_eq!(regularized_reward(&two, 1.0).unwrap(), vec![1.0, 1.0]);

    assert!(regularized_reward(&[], 1.0).is_err());
    assert!(regularized_reward(&two, -0.5).is_err());
}

// -- policy gradient ---------------------------------------------------------

#[test]
fn policy_grad_annihilates_constants() {
    let layer = PolicyLayer { logits: vec![0.1, -0.4, 2.0] };
    let g = policy_grad(&layer, &[3.3, 3.3, 3.3]).unwrap();
    for v in g {
        assert!(v.abs() < 1e-12);
    }
}

#[test]
fn policy_grad_uniform_two_entries() {
    let layer = PolicyLayer::uniform(2);
    let g = policy_grad(&layer, &[1.0, -1.0]).unwrap();
    assert!((g[0] - 0.5).abs() < 1e-12);
    assert!((g[1] + 0.5).abs() < 1e-12);
}

#[test]
fn policy_grad_matches_finite_differences_of_cosine() {
    // analytic d cos(v, G softmax(theta)) / d theta vs central differences
    let dim = 40;
    let cols = 6;
    for seed in 0..5 {
        let jac = random_jacobian(dim, cols, 600 + seed);
        let v: Vec<f64> = random_jacobian(dim, 1, 700 + seed).columns.pop().unwrap();
        let mut rng = SeedFork::new(800 + seed).rng();
        let logits: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.5..1.5)).collect();
        let layer = PolicyLayer { logits: logits.clone() };

        let out = reward(&jac, &layer.probs().unwrap(), &v).unwrap();
        let analytic = policy_grad(&layer, &out.reward).unwrap();

        let eps = 1e-5;
        let cos_at = |theta: &[f64]| -> f64 {
            let l = PolicyLayer { logits: theta.to_vec() };
            let g = avg_gradient(&jac, &l.probs().unwrap()).unwrap();
            cosine_similarity(&v, &g).unwrap()
        };
        let scale = analytic.iter().map(|a| a.abs()).fold(0.0, f64::max);
        for i in 0..cols {
            let mut plus = logits.clone();
            plus[i] += eps;
            let mut minus = logits.clone();
            minus[i] -= eps;
            let numeric = (cos_at(&plus) - cos_at(&minus)) / (2.0 * eps);
            let rel = (analytic[i] - numeric).abs() / scale.max(1e-12);
            assert!(rel < 1e-4, "seed {seed} coord {i}: analytic {} vs numeric {numeric}", analytic[i]);
        }
    }
}

#[test]
fn policy_grad_direction_invariant_to_v_rescaling() {
    let jac = random_jacobian(15, 8, 900);
    let v: Vec<f64> = random_jacobian(15, 1, 901).columns.pop().unwrap();
    let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
    let layer = PolicyLayer { logits: random_simplex(8, 902).iter().map(|p| p.ln()).collect() };
    let p = layer.probs().unwrap();
    let g1 = policy_grad(&layer, &reward(&jac, &p, &v).unwrap().reward).unwrap();
    let g2 = policy_grad(&layer, &reward(&jac, &p, &v2).unwrap().reward).unwrap();
    let argmax = |g: &[f64]| {
        g.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).map(|(i, _)| i)
    };
    assert_eq!(argmax(&g1), argmax(&g2));
    for (a, b) in g1.iter().zip(&g2) {
        assert_eq!(a.signum(), b.signum());
    }
}

// -- image_reward variants -----------------------------------------------------

fn reward_setup() -> (Network, Image, PolicyStack, PolicyLayer, Vec<f64>) {
    let table = deterministic_table();
    let net = small_net(41);
    let img = random_image(42);
    let mut prefix = PolicyStack::new(table.clone());
    prefix.metadata = PolicyMeta::default();
    prefix.layers.push(PolicyLayer { logits: vec![0.3, -0.2, 0.1] });
    let current = PolicyLayer { logits: vec![-0.1, 0.4, 0.0] };
    let v_img = random_image(43);
    let net_v = net.clone();
    let (_, v) = net_v.loss_and_grad(&v_img, 2).unwrap();
    (net, img, prefix, current, v)
}

#[test]
fn streaming_reward_equals_materialized_reward() {
    let (net, img, prefix, current, v) = reward_setup();
    let sample = Sample { image: &img, label: 0 };
    let seed = SeedFork::new(55);
    let stored = image_reward(
        &net,
        sample,
        &prefix,
        &current,
        &v,
        &RewardConfig { n_chains: 8, estimator: RewardEstimator::SharedSample, low_memory: false },
        seed,
    )
    .unwrap();
    let streamed = image_reward(
        &net,
        sample,
        &prefix,
        &current,
        &v,
        &RewardConfig { n_chains: 8, estimator: RewardEstimator::SharedSample, low_memory: true },
        seed,
    )
    .unwrap();
    assert_eq!(stored.reward, streamed.reward);
    assert_eq!(stored.cos, streamed.cos);
    assert_eq!(stored.g_norm, streamed.g_norm);
}

#[test]
fn independent_estimator_runs_and_differs_from_shared() {
    let (net, img, prefix, current, v) = reward_setup();
    let sample = Sample { image: &img, label: 0 };
    let seed = SeedFork::new(66);
    let shared = image_reward(&net, sample, &prefix, &current, &v, &RewardConfig::default(), seed).unwrap();
    let indep = image_reward(
        &net,
        sample,
        &prefix,
        &current,
        &v,
        &RewardConfig {
            n_chains: 4,
            estimator: RewardEstimator::Independent { g_chains: 4 },
            low_memory: false,
        },
        seed,
    )
    .unwrap();
    assert!(indep.reward.iter().all(|r| r.is_finite()));
    // shared-sample form zeroes p.r; the independent form generally does not
    let p = current.probs().unwrap();
    assert!(dot(&p, &shared.reward).abs() < 1e-12 * norm(&shared.reward).max(1e-30));
    assert_ne!(shared.reward, indep.reward);
}

// -- hill-climb sanity ---------------------------------------------------------

#[test]
fn adam_ascent_on_fixed_jacobian_increases_cosine() {
    let dim = 50;
    let cols = 10;
    let trials = 40;
    let mut improved = 0;
    for trial in 0..trials {
        let jac = random_jacobian(dim, cols, 1000 + trial);
        let v: Vec<f64> = random_jacobian(dim, 1, 2000 + trial).columns.pop().unwrap();
        let mut layer = PolicyLayer::uniform(cols);
        let mut state = AdamState::new(cols, 0.025);
        let start = cosine_similarity(&v, &avg_gradient(&jac, &layer.probs().unwrap()).unwrap()).unwrap();
        for _ in 0..512 {
            let out = reward(&jac, &layer.probs().unwrap(), &v).unwrap();
            let grad = policy_grad(&layer, &out.reward).unwrap();
            adam_step(&mut state, &mut layer, &grad).unwrap();
        }
        let end = cosine_similarity(&v, &avg_gradient(&jac, &layer.probs().unwrap()).unwrap()).unwrap();
        if end > start {
            improved += 1;
        }
    }
    assert!(improved * 100 >= trials * 95, "improved in only {improved}/{trials} trials");
}
