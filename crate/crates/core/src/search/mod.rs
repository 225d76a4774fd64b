//! Progressive policy search.
//!
//! Layers are optimized one at a time: layer k is trained for a fixed
//! iteration budget conditioned on the frozen layers 1..k-1, appended, and
//! the loop stops early once the newest layer concentrates on the identity
//! transform (or the depth cap is reached). Each iteration samples a fresh
//! validation batch and a fresh set of expectation images, computes the
//! regularized per-transform reward, and takes one Adam ascent step.

mod report;

pub use report::{
    improvement_csv, loss_curve_csv, magnitude_distribution_csv, op_distribution_csv, summarize,
    trace_csv,
};

use crate::data::{sample_val_batch, sample_val_batch_conditioned, Dataset};
use crate::error::{Error, Result};
use crate::matcher::{
    adam_step, cosine_similarity, image_reward, policy_grad, regularized_reward, AdamState,
    RewardConfig, RewardEstimator, Sample,
};
use crate::nnet::Network;
use crate::policy::{sample_chain, apply_chain, PolicyLayer, PolicyMeta, PolicyStack};
use crate::rng::{fnv1a64, SeedFork};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use std::time::Instant;

const FORK_LAYER: u64 = 0xA11;
const FORK_VAL: u64 = 0xA12;
const FORK_IMAGES: u64 = 0xA13;
const FORK_REWARD: u64 = 0xA14;
const FORK_STATS: u64 = 0xA15;

/// Settings for one search run.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub iterations_per_layer: usize,
    pub lr: f64,
    /// Std-regularization coefficient of the reward aggregation.
    pub c: f64,
    /// Images per iteration over which the reward expectation is taken.
    pub expectation_images: usize,
    /// Chains per image for the Monte Carlo Jacobian at depth >= 2.
    pub n_chains: usize,
    pub val_batch: usize,
    pub max_layers: usize,
    /// Identity probability at which a layer counts as converged.
    pub identity_threshold: f64,
    pub seed: u64,
    /// Condition each image's validation batch on the image's class.
    pub val_class_conditioned: bool,
    /// Estimate g from independent full-depth chains instead of the
    /// shared-sample form.
    pub independent_g: bool,
    /// Stream Jacobian columns (O(D+|T|) memory, twice the backward passes).
    pub low_memory: bool,
    /// Keep all reductions in a fixed order for bit-identical reruns.
    pub deterministic: bool,
    /// Images for the per-layer gradient-similarity-improvement estimate.
    pub stats_images: usize,
    /// Chains per image when estimating the policy-averaged gradient.
    pub stats_chains: usize,
    /// Compute improvement stats after each layer (costs extra passes).
    pub compute_layer_stats: bool,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig {
            iterations_per_layer: 512,
            lr: 0.025,
            c: 1.0,
            expectation_images: 16,
            n_chains: 16,
            val_batch: 64,
            max_layers: 8,
            identity_threshold: 0.5,
            seed: 0,
            val_class_conditioned: false,
            independent_g: false,
            low_memory: false,
            deterministic: true,
            stats_images: 256,
            stats_chains: 8,
            compute_layer_stats: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("expectation_images", self.expectation_images),
            ("n_chains", self.n_chains),
            ("val_batch", self.val_batch),
            ("max_layers", self.max_layers),
            ("stats_images", self.stats_images),
            ("stats_chains", self.stats_chains),
        ];
        for (name, v) in positives {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.c < 0.0 {
            return Err(Error::InvalidConfig(format!("c must be >= 0, got {}", self.c)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.identity_threshold > 0.0 && self.identity_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "identity threshold must lie in (0, 1], got {}",
                self.identity_threshold
            )));
        }
        Ok(())
    }

    /// Hash of the canonical key=value listing; stored in policy metadata.
    pub fn digest(&self) -> String {
        let text = format!(
            "iters={};lr={};c={};images={};chains={};val={};layers={};thresh={};seed={};cond={};indep={};lowmem={}",
            self.iterations_per_layer,
            self.lr,
            self.c,
            self.expectation_images,
            self.n_chains,
            self.val_batch,
            self.max_layers,
            self.identity_threshold,
            self.seed,
            self.val_class_conditioned,
            self.independent_g,
            self.low_memory,
        );
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }

    fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            n_chains: self.n_chains,
            estimator: if self.independent_g {
                RewardEstimator::Independent { g_chains: self.n_chains }
            } else {
                RewardEstimator::SharedSample
            },
            low_memory: self.low_memory,
        }
    }
}

/// One row per Adam step.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub layer: usize,
    pub iteration: usize,
    /// Mean over the expectation images of cos(v, g(x)).
    pub cosine: f64,
    /// Mean over the expectation images of |g(x)|.
    pub grad_norm: f64,
    /// Entropy of the layer distribution used this iteration.
    pub entropy: f64,
    /// Top-3 transforms by probability, as `label:prob` triples.
    pub top3: String,
    pub elapsed_ms: f64,
}

/// Per-layer summary recorded after the layer's budget completes.
#[derive(Debug, Clone)]
pub struct LayerSummary {
    pub layer: usize,
    pub final_probs: Vec<f64>,
    pub identity_prob: f64,
    pub converged_identity: bool,
    /// (mean, std) of the gradient-similarity improvement at this depth,
    /// when stats were requested.
    pub improvement: Option<(f64, f64)>,
}

/// Everything a search run records.
#[derive(Debug, Clone, Default)]
pub struct SearchTrace {
    pub rows: Vec<TraceRow>,
    pub layers: Vec<LayerSummary>,
}

/// Search outcome: on mid-run errors the partial stack and trace survive for
/// postmortem alongside the error.
#[derive(Debug)]
pub struct SearchOutcome {
    pub stack: PolicyStack,
    pub trace: SearchTrace,
    pub error: Option<Error>,
}

/// True iff the layer's softmax mass on the identity transform reaches the
/// threshold.
pub fn identity_converged(layer: &PolicyLayer, identity_index: usize, threshold: f64) -> Result<bool> {
    let p = layer.probs()?;
    Ok(p[identity_index] >= threshold)
}

/// Optimize the next layer on top of the frozen prefix. Returns the layer and
/// its trace rows.
pub fn search_layer(
    net: &Network,
    prefix: &PolicyStack,
    train: &Dataset,
    val: &Dataset,
    cfg: &SearchConfig,
    trace_out: &mut Vec<TraceRow>,
) -> Result<PolicyLayer> {
    cfg.validate()?;
    let k = prefix.depth() + 1;
    let table_len = prefix.table.len();
    let mut layer = PolicyLayer::uniform(table_len);
    let mut adam = AdamState::new(table_len, cfg.lr);
    let reward_cfg = cfg.reward_config();
    let layer_seed = SeedFork::new(cfg.seed).fork(&[FORK_LAYER, k as u64]);

    if train.len() < cfg.expectation_images {
        return Err(Error::InvalidArgument(format!(
            "train split has {} images, need {} expectation images",
            train.len(),
            cfg.expectation_images
        )));
    }

    for iter in 0..cfg.iterations_per_layer {
        let started = Instant::now();
        let iter_seed = layer_seed.fork(&[iter as u64]);
        let context = |e: Error| match e {
            Error::DegenerateGradient(m) => {
                Error::DegenerateGradient(format!("layer {k}, iteration {iter}: {m}"))
            }
            other => other,
        };

        // fresh validation gradient
        let mut val_rng = iter_seed.fork(&[FORK_VAL]).rng();
        let shared_v = if cfg.val_class_conditioned {
            None
        } else {
            let (imgs, labels) = sample_val_batch(val, cfg.val_batch, &mut val_rng)?;
            Some(net.batch_grad(&imgs, &labels)?)
        };

        // fresh expectation images from the training split
        let mut img_rng = iter_seed.fork(&[FORK_IMAGES]).rng();
        let picked = index_sample(&mut img_rng, train.len(), cfg.expectation_images);

        let mut per_image = Vec::with_capacity(cfg.expectation_images);
        let mut cos_sum = 0.0;
        let mut g_norm_sum = 0.0;
        for (j, idx) in picked.iter().enumerate() {
            let sample = Sample { image: &train.images[idx], label: train.labels[idx] };
            let v = match &shared_v {
                Some(v) => v.clone(),
                None => {
                    let (imgs, labels) =
                        sample_val_batch_conditioned(val, cfg.val_batch, sample.label, &mut val_rng)?;
                    net.batch_grad(&imgs, &labels)?
                }
            };
            let out = image_reward(
                net,
                sample,
                prefix,
                &layer,
                &v,
                &reward_cfg,
                iter_seed.fork(&[FORK_REWARD, j as u64]),
            )
            .map_err(context)?;
            cos_sum += out.cos;
            g_norm_sum += out.g_norm;
            per_image.push(out.reward);
        }

        let r = regularized_reward(&per_image, cfg.c)?;
        let probs = layer.probs()?;
        let grad = policy_grad(&layer, &r)?;
        adam_step(&mut adam, &mut layer, &grad).map_err(context)?;

        let n = cfg.expectation_images as f64;
        trace_out.push(TraceRow {
            layer: k,
            iteration: iter,
            cosine: cos_sum / n,
            grad_norm: g_norm_sum / n,
            entropy: -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>(),
            top3: top3_label(&prefix.table, &probs),
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(layer)
}

fn top3_label(table: &crate::imgops::TransformTable, probs: &[f64]) -> String {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    order
        .iter()
        .take(3)
        .map(|&i| format!("{}:{:.4}", table.entries[i].label(), probs[i]))
        .collect::<Vec<_>>()
        .join(";")
}

/// Build the policy layer by layer until identity convergence or the depth
/// cap. Mid-run errors leave the partial stack and trace in the outcome.
pub fn progressive_search(
    net: &Network,
    train: &Dataset,
    val: &Dataset,
    table: crate::imgops::TransformTable,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("search needs non-empty train and val splits".into()));
    }
    let mut stack = PolicyStack::new(table);
    stack.metadata = PolicyMeta { seed: cfg.seed, config_digest: cfg.digest() };
    let mut trace = SearchTrace::default();

    for k in 1..=cfg.max_layers {
        let layer = match search_layer(net, &stack, train, val, cfg, &mut trace.rows) {
            Ok(layer) => layer,
            Err(e) => return Ok(SearchOutcome { stack, trace, error: Some(e) }),
        };
        let converged = identity_converged(&layer, stack.table.identity_index, cfg.identity_threshold)?;
        let final_probs = layer.probs()?;
        let identity_prob = final_probs[stack.table.identity_index];
        stack.layers.push(layer);

        let improvement = if cfg.compute_layer_stats {
            match similarity_improvement_stats(
                net,
                &stack,
                train,
                val,
                cfg.stats_images,
                cfg.stats_chains,
                cfg.val_batch,
                SeedFork::new(cfg.seed).fork(&[FORK_STATS, k as u64]),
            ) {
                Ok(stats) => stats.last().copied(),
                Err(e) => return Ok(SearchOutcome { stack, trace, error: Some(e) }),
            }
        } else {
            None
        };

        trace.layers.push(LayerSummary {
            layer: k,
            final_probs,
            identity_prob,
            converged_identity: converged,
            improvement,
        });

        if converged {
            stack.terminal_identity = true;
            break;
        }
    }
    Ok(SearchOutcome { stack, trace, error: None })
}

/// Mean and population std, per prefix depth `0..=stack depth`, of the
/// gradient-similarity improvement `cos(v, g_d(x)) - cos(v, grad L(x))` over
/// `n_images` training images. Depth 0 is identically zero by construction.
#[allow(clippy::too_many_arguments)]
pub fn similarity_improvement_stats(
    net: &Network,
    stack: &PolicyStack,
    train: &Dataset,
    val: &Dataset,
    n_images: usize,
    chains_per_image: usize,
    val_batch: usize,
    seed: SeedFork,
) -> Result<Vec<(f64, f64)>> {
    if stack.depth() == 0 {
        return Err(Error::InvalidArgument("stats need a non-empty stack".into()));
    }
    if n_images == 0 || chains_per_image == 0 {
        return Err(Error::InvalidArgument("stats need positive image and chain counts".into()));
    }
    let mut val_rng = seed.fork(&[1]).rng();
    let (imgs, labels) = sample_val_batch(val, val_batch.min(val.len()), &mut val_rng)?;
    let v = net.batch_grad(&imgs, &labels)?;

    let mut img_rng = seed.fork(&[2]).rng();
    let depths = stack.depth() + 1;
    let mut per_depth: Vec<Vec<f64>> = vec![Vec::with_capacity(n_images); depths];
    for i in 0..n_images {
        let idx = img_rng.random_range(0..train.len());
        let sample = Sample { image: &train.images[idx], label: train.labels[idx] };
        let (_, base_grad) = net.loss_and_grad(sample.image, sample.label)?;
        let base_cos = cosine_similarity(&v, &base_grad)?;
        for (d, bucket) in per_depth.iter_mut().enumerate() {
            if d == 0 {
                bucket.push(0.0);
                continue;
            }
            let g = mc_policy_gradient(net, sample, stack, d, chains_per_image, seed.fork(&[3, i as u64, d as u64]))?;
            bucket.push(cosine_similarity(&v, &g)? - base_cos);
        }
    }
    Ok(per_depth
        .into_iter()
        .map(|vals| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect())
}

/// Monte Carlo policy-averaged gradient at prefix depth `d`.
fn mc_policy_gradient(
    net: &Network,
    sample: Sample<'_>,
    stack: &PolicyStack,
    depth: usize,
    chains: usize,
    seed: SeedFork,
) -> Result<Vec<f64>> {
    let chains = if depth == 0 { 1 } else { chains };
    let mut rng = seed.rng();
    let mut acc = vec![0.0; net.param_count()];
    for _ in 0..chains {
        let chain = sample_chain(stack, depth, &mut rng)?;
        let aug = apply_chain(&stack.table, &chain, sample.image, &mut rng);
        let (_, grad) = net.loss_and_grad(&aug, sample.label)?;
        for (a, g) in acc.iter_mut().zip(&grad) {
            *a += g / chains as f64;
        }
    }
    Ok(acc)
}
