//! Built-in oracle suites: finite-difference gradient checks, the
//! Monte-Carlo-vs-enumeration check, and the algebraic reward identities.
//! The CLI `selfcheck` command runs them all; the acceptance tests pin their
//! thresholds.

use crate::error::Result;
use crate::image::Image;
use crate::imgops::{apply_transform, build_transform_table, OpSpec, TableConfig, TransformTable};
use crate::matcher::{
    avg_gradient, cosine_similarity, jacobian_mc, policy_grad, reward, Jacobian, Sample,
};
use crate::nnet::{Arch, Network};
use crate::policy::{PolicyLayer, PolicyStack};
use crate::rng::SeedFork;
use rand::Rng;

/// Outcome of one suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SuiteReport {
    fn new(name: &str, passed: bool, detail: String) -> SuiteReport {
        SuiteReport { name: name.to_string(), passed, detail }
    }
}

/// Run every suite with its standard size.
pub fn run_all() -> Result<Vec<SuiteReport>> {
    Ok(vec![
        net_gradient_check(10, 100, 1e-4, 1e-3, 0.0)?,
        policy_gradient_check(20, 500, 10, 1e-5, 1e-4)?,
        reward_identity_check(100)?,
        mc_enumeration_check(&[100, 1000, 10_000], 8, 0.02, 0.15)?,
    ])
}

fn random_image(h: usize, w: usize, c: usize, rng: &mut impl Rng) -> Image {
    let data = (0..h * w * c).map(|_| rng.random_range(0.05..0.95)).collect();
    Image { height: h, width: w, channels: c, data }
}

/// Analytic `loss_and_grad` against central finite differences on randomly
/// probed coordinates, across MLP and conv instances. `perturbation` is a
/// test hook: a nonzero value is added to one analytic coordinate per
/// instance, which must make the suite fail.
pub fn net_gradient_check(
    instances: usize,
    coords_per_instance: usize,
    eps: f64,
    tol: f64,
    perturbation: f64,
) -> Result<SuiteReport> {
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let mut rng = SeedFork::new(0xbead).fork(&[inst as u64]).rng();
        let (net, img) = if inst % 2 == 0 {
            let arch = Arch::Mlp { input: 48, hidden: 10, classes: 4 };
            (Network::init(arch, &mut rng), random_image(4, 4, 3, &mut rng))
        } else {
            let arch = Arch::Conv { in_channels: 3, side: 8, c1: 4, c2: 5, classes: 4 };
            (Network::init(arch, &mut rng), random_image(8, 8, 3, &mut rng))
        };
        let label = rng.random_range(0..4);
        let (loss0, mut grad) = net.loss_and_grad(&img, label)?;
        if perturbation != 0.0 {
            grad.iter_mut().for_each(|g| *g += perturbation);
        }
        let grad_scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));

        let mut skipped = 0usize;
        for _ in 0..coords_per_instance {
            let i = rng.random_range(0..net.param_count());
            let mut plus = net.clone();
            plus.weights[i] += eps;
            let mut minus = net.clone();
            minus.weights[i] -= eps;
            let (lp, _) = plus.loss_and_grad(&img, label)?;
            let (lm, _) = minus.loss_and_grad(&img, label)?;
            // an eps step across a relu/maxpool kink makes the two one-sided
            // differences disagree; those probe points say nothing about the
            // analytic gradient, so they are skipped (with a cap below)
            let fwd = (lp - loss0) / eps;
            let bwd = (loss0 - lm) / eps;
            let kink_scale = fwd.abs().max(bwd.abs()).max(1e-3 * grad_scale).max(1e-12);
            if (fwd - bwd).abs() > 0.05 * kink_scale {
                skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            // scale-relative error: coordinates near zero are judged against
            // the gradient's overall scale, not their own magnitude
            let denom = grad[i].abs().max(numeric.abs()).max(1e-6 * grad_scale).max(1e-12);
            worst = worst.max((grad[i] - numeric).abs() / denom);
        }
        if skipped * 5 > coords_per_instance {
            return Ok(SuiteReport::new(
                "net-gradient-fd",
                false,
                format!("instance {inst}: {skipped} of {coords_per_instance} probes non-smooth"),
            ));
        }
    }
    Ok(SuiteReport::new(
        "net-gradient-fd",
        worst < tol,
        format!("max relative error {worst:.3e} (tolerance {tol:.0e})"),
    ))
}

/// Analytic policy gradient of the cosine objective against central finite
/// differences over the logits, on random (G, v, theta) instances.
pub fn policy_gradient_check(
    instances: usize,
    dim: usize,
    transforms: usize,
    eps: f64,
    tol: f64,
) -> Result<SuiteReport> {
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let mut rng = SeedFork::new(0x90ad).fork(&[inst as u64]).rng();
        let columns: Vec<Vec<f64>> = (0..transforms)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let jac = Jacobian { columns };
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let logits: Vec<f64> = (0..transforms).map(|_| rng.random_range(-1.5..1.5)).collect();
        let layer = PolicyLayer { logits: logits.clone() };

        let out = reward(&jac, &layer.probs()?, &v)?;
        let analytic = policy_grad(&layer, &out.reward)?;
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));

        for i in 0..transforms {
            let mut plus = logits.clone();
            plus[i] += eps;
            let mut minus = logits.clone();
            minus[i] -= eps;
            let cos_of = |theta: Vec<f64>| -> Result<f64> {
                let l = PolicyLayer { logits: theta };
                let g = avg_gradient(&jac, &l.probs()?)?;
                cosine_similarity(&v, &g)
            };
            let numeric = (cos_of(plus)? - cos_of(minus)?) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6 * scale).max(1e-12);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
    }
    Ok(SuiteReport::new(
        "policy-gradient-fd",
        worst < tol,
        format!("max relative error {worst:.3e} (tolerance {tol:.0e})"),
    ))
}

/// `p . r = 0` for the shared-sample reward on random (G, p, v) instances.
pub fn reward_identity_check(instances: usize) -> Result<SuiteReport> {
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let mut rng = SeedFork::new(0x1de).fork(&[inst as u64]).rng();
        let dim = rng.random_range(5..40);
        let transforms = rng.random_range(2..12);
        let columns: Vec<Vec<f64>> = (0..transforms)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let jac = Jacobian { columns };
        let logits: Vec<f64> = (0..transforms).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = PolicyLayer { logits }.probs()?;
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();

        let out = reward(&jac, &p, &v)?;
        let pr: f64 = p.iter().zip(&out.reward).map(|(a, b)| a * b).sum();
        let p_norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r_norm = out.reward.iter().map(|x| x * x).sum::<f64>().sqrt();
        let bound = 1e-9 * (p_norm * r_norm).max(1e-30);
        worst = worst.max(pr.abs() / bound * 1e-9);
    }
    Ok(SuiteReport::new(
        "zero-expected-reward",
        worst <= 1e-9,
        format!("max |p.r| / (|p||r|) = {worst:.3e} (bound 1e-9)"),
    ))
}

fn deterministic_three_table() -> TransformTable {
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

/// Depth-2 Monte Carlo Jacobian against exact enumeration on a deterministic
/// 3-transform table with a uniform first layer. Checks the error at the
/// largest chain count and the 1/sqrt(n) scaling of the error across chain
/// counts (log-log slope -0.5 within `slope_tol`).
pub fn mc_enumeration_check(
    chain_counts: &[usize],
    seeds: usize,
    err_tol: f64,
    slope_tol: f64,
) -> Result<SuiteReport> {
    let table = deterministic_three_table();
    let mut rng = SeedFork::new(0x3ca1).rng();
    let net = Network::init(Arch::Mlp { input: 48, hidden: 9, classes: 3 }, &mut rng);
    let img = random_image(4, 4, 3, &mut rng);
    let sample = Sample { image: &img, label: 1 };
    let mut prefix = PolicyStack::new(table.clone());
    prefix.layers.push(PolicyLayer::uniform(table.len()));

    // exact enumeration: all 3 first-layer choices, weight 1/3 each
    let mut enumerated = vec![vec![0.0; net.param_count()]; table.len()];
    let mut scratch_rng = SeedFork::new(0).rng();
    for first in &table.entries {
        let x1 = apply_transform(&img, first, &mut scratch_rng);
        for (n, second) in table.entries.iter().enumerate() {
            let aug = apply_transform(&x1, second, &mut scratch_rng);
            let (_, grad) = net.loss_and_grad(&aug, sample.label)?;
            for (e, g) in enumerated[n].iter_mut().zip(&grad) {
                *e += g / 3.0;
            }
        }
    }
    let enum_norm: f64 = enumerated.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();

    let rel_error = |jac: &Jacobian| -> f64 {
        let mut num = 0.0;
        for (cm, ce) in jac.columns.iter().zip(&enumerated) {
            for (a, b) in cm.iter().zip(ce) {
                num += (a - b) * (a - b);
            }
        }
        num.sqrt() / enum_norm
    };

    let mut mean_errors = Vec::with_capacity(chain_counts.len());
    for (ci, &n_chains) in chain_counts.iter().enumerate() {
        let mut total = 0.0;
        for s in 0..seeds {
            let seed = SeedFork::new(0x3c00 + (ci as u64) * 1000 + s as u64);
            let jac = jacobian_mc(&net, sample, &prefix, n_chains, seed)?;
            total += rel_error(&jac);
        }
        mean_errors.push(total / seeds as f64);
    }

    // least-squares slope of ln(err) against ln(n)
    let xs: Vec<f64> = chain_counts.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = mean_errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();

    let final_err = *mean_errors.last().unwrap();
    let passed = final_err < err_tol && (slope + 0.5).abs() <= slope_tol;
    Ok(SuiteReport::new(
        "mc-vs-enumeration",
        passed,
        format!(
            "error at n={} is {final_err:.4} (tolerance {err_tol}); slope {slope:.3} (want -0.5 +/- {slope_tol})",
            chain_counts.last().unwrap()
        ),
    ))
}
