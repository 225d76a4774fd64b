//! The gradient-matching core.
//!
//! For a search image x and a candidate layer k, every transform t_n gets a
//! column gradient `col_n = mean over sampled (k-1)-chains of grad L(t_n(chain(x)))`.
//! The policy-averaged gradient is `g = G p`, and the per-transform reward is
//!
//! ```text
//! r = G^T ( v/|g|  -  (v.g/|g|^2) * g/|g| )
//! ```
//!
//! whose p-weighted mean is identically zero when g is formed from the same
//! chain samples (the shared-sample form used by default). Rewards from the
//! expectation images are aggregated as mean minus c times the population
//! standard deviation, and the layer's logits ascend by Adam on
//! `p_i * (r_i - p.r)`, the softmax chain rule for the cosine objective.

mod adam;

pub use adam::{adam_step, AdamState};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::imgops::{apply_transform, TransformTable};
use crate::nnet::Network;
use crate::policy::{apply_chain, sample_chain, sample_categorical, PolicyLayer, PolicyStack};
use crate::rng::SeedFork;
use rayon::prelude::*;

// fork labels for the rng streams inside one jacobian evaluation
const FORK_CHAIN_SAMPLE: u64 = 0x10;
const FORK_CHAIN_APPLY: u64 = 0x20;
const FORK_COLUMN: u64 = 0x30;
const FORK_INDEPENDENT: u64 = 0x40;

/// Norm floor guarding near-degenerate directions.
pub const NORM_FLOOR: f64 = 1e-12;

/// A labeled search image.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub image: &'a Image,
    pub label: usize,
}

/// Cosine similarity between two gradient vectors.
pub fn cosine_similarity(v: &[f64], g: &[f64]) -> Result<f64> {
    if v.len() != g.len() {
        return Err(Error::InvalidArgument(format!(
            "cosine of vectors with lengths {} and {}",
            v.len(),
            g.len()
        )));
    }
    let nv = norm(v);
    let ng = norm(g);
    if nv == 0.0 || ng == 0.0 {
        return Err(Error::DegenerateGradient("cosine of zero-norm vector".into()));
    }
    Ok((dot(v, g) / (nv.max(NORM_FLOOR) * ng.max(NORM_FLOOR))).clamp(-1.0, 1.0))
}

/// Column gradients for every transform in the table, averaged over chains.
#[derive(Debug, Clone)]
pub struct Jacobian {
    /// `columns[n]` is the weight gradient for transform n; all length D.
    pub columns: Vec<Vec<f64>>,
}

impl Jacobian {
    pub fn transform_count(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Column gradients on the image as-is (no prior layers); one rng draw per
/// stochastic column.
pub fn jacobian_analytic(
    net: &Network,
    sample: Sample<'_>,
    table: &TransformTable,
    seed: SeedFork,
) -> Result<Jacobian> {
    jacobian_over_chains(net, sample, table, &[Vec::new()], seed)
}

/// Monte Carlo column gradients for layer `prefix.depth() + 1`: sample
/// `n_chains` chains from the frozen prefix layers, evaluate all columns on
/// each chain-transformed image, and average. With an empty prefix this
/// reduces to [`jacobian_analytic`] exactly (a single empty chain).
pub fn jacobian_mc(
    net: &Network,
    sample: Sample<'_>,
    prefix: &PolicyStack,
    n_chains: usize,
    seed: SeedFork,
) -> Result<Jacobian> {
    if n_chains == 0 {
        return Err(Error::InvalidArgument("n_chains must be positive".into()));
    }
    let chains = sample_prefix_chains(prefix, n_chains, seed)?;
    jacobian_over_chains(net, sample, &prefix.table, &chains, seed)
}

fn sample_prefix_chains(prefix: &PolicyStack, n_chains: usize, seed: SeedFork) -> Result<Vec<Vec<usize>>> {
    if prefix.depth() == 0 {
        // zero-length chains: one empty chain, matching the analytic path
        return Ok(vec![Vec::new()]);
    }
    let mut rng = seed.fork(&[FORK_CHAIN_SAMPLE]).rng();
    (0..n_chains).map(|_| sample_chain(prefix, prefix.depth(), &mut rng)).collect()
}

fn jacobian_over_chains(
    net: &Network,
    sample: Sample<'_>,
    table: &TransformTable,
    chains: &[Vec<usize>],
    seed: SeedFork,
) -> Result<Jacobian> {
    let transformed = chain_images(sample.image, table, chains, seed);
    let scale = 1.0 / chains.len() as f64;
    let columns: Vec<Result<Vec<f64>>> = (0..table.len())
        .into_par_iter()
        .map(|n| {
            let mut col = vec![0.0; net.param_count()];
            for (m, x) in transformed.iter().enumerate() {
                let mut rng = seed.fork(&[FORK_COLUMN, m as u64, n as u64]).rng();
                let aug = apply_transform(x, &table.entries[n], &mut rng);
                let (_, grad) = net.loss_and_grad(&aug, sample.label)?;
                for (c, g) in col.iter_mut().zip(&grad) {
                    *c += g * scale;
                }
            }
            Ok(col)
        })
        .collect();
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Jacobian { columns })
}

fn chain_images(image: &Image, table: &TransformTable, chains: &[Vec<usize>], seed: SeedFork) -> Vec<Image> {
    chains
        .iter()
        .enumerate()
        .map(|(m, chain)| {
            let mut rng = seed.fork(&[FORK_CHAIN_APPLY, m as u64]).rng();
            apply_chain(table, chain, image, &mut rng)
        })
        .collect()
}

/// `g = G p`: the policy-averaged gradient as a convex combination of
/// columns. `p` must lie on the simplex (tolerance 1e-6).
pub fn avg_gradient(jac: &Jacobian, p: &[f64]) -> Result<Vec<f64>> {
    check_simplex(p, jac.transform_count())?;
    let mut g = vec![0.0; jac.dim()];
    for (col, &w) in jac.columns.iter().zip(p) {
        if w == 0.0 {
            continue;
        }
        for (gi, &ci) in g.iter_mut().zip(col) {
            *gi += w * ci;
        }
    }
    Ok(g)
}

fn check_simplex(p: &[f64], expect_len: usize) -> Result<()> {
    if p.len() != expect_len {
        return Err(Error::InvalidArgument(format!(
            "probability vector length {} vs {expect_len} transforms",
            p.len()
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || p.iter().any(|&x| !(0.0..=1.0 + 1e-9).contains(&x)) {
        return Err(Error::InvalidArgument(format!("not a probability simplex (sum {sum})")));
    }
    Ok(())
}

/// Reward plus the quantities the trace wants alongside it.
#[derive(Debug, Clone)]
pub struct RewardOutput {
    pub reward: Vec<f64>,
    /// Cosine similarity between v and the averaged gradient g.
    pub cos: f64,
    pub g_norm: f64,
}

/// Shared-sample reward: g is formed from the same Jacobian columns, so
/// `p . r = 0` holds identically.
pub fn reward(jac: &Jacobian, p: &[f64], v: &[f64]) -> Result<RewardOutput> {
    let g = avg_gradient(jac, p)?;
    reward_against(jac, &g, v)
}

/// Reward of each column against an explicitly supplied average gradient.
fn reward_against(jac: &Jacobian, g: &[f64], v: &[f64]) -> Result<RewardOutput> {
    if v.len() != jac.dim() {
        return Err(Error::InvalidArgument(format!(
            "validation gradient length {} vs Jacobian dim {}",
            v.len(),
            jac.dim()
        )));
    }
    let u = bracket_vector(g, v)?;
    let reward: Vec<f64> = jac.columns.iter().map(|col| dot(col, &u)).collect();
    let cos = cosine_similarity(v, g)?;
    Ok(RewardOutput { reward, cos, g_norm: norm(g) })
}

/// The bracketed direction of the reward: `v/|g| - (v.g/|g|^2) g/|g|`, with
/// v normalized to unit length first. Cosine similarity is scale-free in v,
/// and the normalization makes `p_i (r_i - p.r)` the exact gradient of the
/// cosine with respect to the logits, not just a positive rescaling of it.
fn bracket_vector(g: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let g_norm = norm(g);
    if g_norm == 0.0 {
        return Err(Error::DegenerateGradient("averaged gradient has zero norm".into()));
    }
    let v_norm = norm(v);
    if v_norm == 0.0 {
        return Err(Error::DegenerateGradient("validation gradient has zero norm".into()));
    }
    let g_norm = g_norm.max(NORM_FLOOR);
    let scale = 1.0 / (v_norm * g_norm);
    let vg = dot(v, g);
    let coef = vg * scale / (g_norm * g_norm);
    Ok(v.iter().zip(g).map(|(&vi, &gi)| vi * scale - coef * gi).collect())
}

/// Eq.-style mean-minus-std aggregation over the expectation images:
/// elementwise mean minus `c` times the elementwise population standard
/// deviation.
pub fn regularized_reward(per_image: &[Vec<f64>], c: f64) -> Result<Vec<f64>> {
    if per_image.is_empty() {
        return Err(Error::InvalidArgument("no reward vectors to aggregate".into()));
    }
    if c < 0.0 {
        return Err(Error::InvalidArgument(format!("regularization c must be >= 0, got {c}")));
    }
    let len = per_image[0].len();
    if per_image.iter().any(|r| r.len() != len) {
        return Err(Error::InvalidArgument("reward vectors differ in length".into()));
    }
    let n = per_image.len() as f64;
    let mut out = vec![0.0; len];
    for i in 0..len {
        let mean = per_image.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = per_image.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / n;
        out[i] = mean - c * var.sqrt();
    }
    Ok(out)
}

/// Gradient of the cosine objective with respect to the layer's logits under
/// the softmax parameterization: `p_i * (r_i - p.r)`.
pub fn policy_grad(layer: &PolicyLayer, r: &[f64]) -> Result<Vec<f64>> {
    let p = layer.probs()?;
    if p.len() != r.len() {
        return Err(Error::InvalidArgument(format!(
            "reward length {} vs layer size {}",
            r.len(),
            p.len()
        )));
    }
    let avg = dot(&p, r);
    Ok(p.iter().zip(r).map(|(&pi, &ri)| pi * (ri - avg)).collect())
}

/// Which estimator supplies g in the reward bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardEstimator {
    /// g = G p from the same chain samples as the Jacobian (default; makes
    /// `p . r = 0` exact and reuses every backward pass).
    SharedSample,
    /// g estimated from independently sampled full-depth chains, including a
    /// draw from the current layer. Higher variance; kept for fidelity
    /// experiments.
    Independent { g_chains: usize },
}

/// Settings for one per-image reward evaluation.
#[derive(Debug, Clone, Copy)]
pub struct RewardConfig {
    pub n_chains: usize,
    pub estimator: RewardEstimator,
    /// Stream columns instead of materializing the Jacobian: O(D + |T|)
    /// memory at the cost of a second set of backward passes.
    pub low_memory: bool,
}

impl Default for RewardConfig {
    fn default() -> RewardConfig {
        RewardConfig { n_chains: 16, estimator: RewardEstimator::SharedSample, low_memory: false }
    }
}

/// Per-transform reward of one search image for the layer being optimized
/// (layer `prefix.depth() + 1`), with distribution `current` over the table.
pub fn image_reward(
    net: &Network,
    sample: Sample<'_>,
    prefix: &PolicyStack,
    current: &PolicyLayer,
    v: &[f64],
    cfg: &RewardConfig,
    seed: SeedFork,
) -> Result<RewardOutput> {
    let p = current.probs()?;
    match cfg.estimator {
        RewardEstimator::SharedSample => {
            if cfg.low_memory {
                streaming_reward(net, sample, prefix, &p, v, cfg.n_chains, seed)
            } else {
                let jac = jacobian_mc(net, sample, prefix, cfg.n_chains, seed)?;
                reward(&jac, &p, v)
            }
        }
        RewardEstimator::Independent { g_chains } => {
            let jac = jacobian_mc(net, sample, prefix, cfg.n_chains, seed)?;
            let g = independent_avg_gradient(net, sample, prefix, &p, g_chains, seed)?;
            reward_against(&jac, &g, v)
        }
    }
}

/// Monte Carlo g over full-depth chains sampled independently of the
/// Jacobian, with the final draw from the current layer's distribution.
fn independent_avg_gradient(
    net: &Network,
    sample: Sample<'_>,
    prefix: &PolicyStack,
    current_probs: &[f64],
    g_chains: usize,
    seed: SeedFork,
) -> Result<Vec<f64>> {
    if g_chains == 0 {
        return Err(Error::InvalidArgument("g_chains must be positive".into()));
    }
    let mut rng = seed.fork(&[FORK_INDEPENDENT]).rng();
    let mut acc = vec![0.0; net.param_count()];
    for _ in 0..g_chains {
        let mut chain = sample_chain(prefix, prefix.depth(), &mut rng)?;
        chain.push(sample_categorical(current_probs, &mut rng));
        let aug = apply_chain(&prefix.table, &chain, sample.image, &mut rng);
        let (_, grad) = net.loss_and_grad(&aug, sample.label)?;
        for (a, g) in acc.iter_mut().zip(&grad) {
            *a += g / g_chains as f64;
        }
    }
    Ok(acc)
}

/// Shared-sample reward without materializing the Jacobian. Pass one
/// accumulates g; pass two recomputes each column and dots it with the
/// bracket vector. Identical rng forks per (chain, column) keep the result
/// bit-equal to the materialized path.
fn streaming_reward(
    net: &Network,
    sample: Sample<'_>,
    prefix: &PolicyStack,
    p: &[f64],
    v: &[f64],
    n_chains: usize,
    seed: SeedFork,
) -> Result<RewardOutput> {
    if n_chains == 0 {
        return Err(Error::InvalidArgument("n_chains must be positive".into()));
    }
    let table = &prefix.table;
    check_simplex(p, table.len())?;
    let chains = sample_prefix_chains(prefix, n_chains, seed)?;
    let transformed = chain_images(sample.image, table, &chains, seed);
    let scale = 1.0 / chains.len() as f64;

    let column = |n: usize| -> Result<Vec<f64>> {
        let mut col = vec![0.0; net.param_count()];
        for (m, x) in transformed.iter().enumerate() {
            let mut rng = seed.fork(&[FORK_COLUMN, m as u64, n as u64]).rng();
            let aug = apply_transform(x, &table.entries[n], &mut rng);
            let (_, grad) = net.loss_and_grad(&aug, sample.label)?;
            for (c, g) in col.iter_mut().zip(&grad) {
                *c += g * scale;
            }
        }
        Ok(col)
    };

    let mut g = vec![0.0; net.param_count()];
    for n in 0..table.len() {
        if p[n] == 0.0 {
            continue;
        }
        let col = column(n)?;
        for (gi, ci) in g.iter_mut().zip(&col) {
            *gi += p[n] * ci;
        }
    }
    let u = bracket_vector(&g, v)?;
    let mut reward = vec![0.0; table.len()];
    for (n, r) in reward.iter_mut().enumerate() {
        *r = dot(&column(n)?, &u);
    }
    let cos = cosine_similarity(v, &g)?;
    Ok(RewardOutput { reward, cos, g_norm: norm(&g) })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests;
