//! Small differentiable classifiers with manual forward/backward.
//!
//! Two architectures: a conv net (conv3x3 -> relu -> maxpool2 -> conv3x3 ->
//! relu -> global-avg-pool -> dense) for 32x32-style rasters, and an MLP
//! (dense -> relu -> dense) for tiny synthetic inputs. Weights live in one
//! flat `f64` vector whose layout is fixed by the architecture, so the
//! matcher can treat gradients as plain vectors in R^D.

mod checkpoint;
mod pretrain;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use pretrain::{accuracy, pretrain, TrainConfig};

use crate::error::{Error, Result};
use crate::image::Image;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Architecture descriptor; determines the parameter layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arch {
    Mlp { input: usize, hidden: usize, classes: usize },
    Conv { in_channels: usize, side: usize, c1: usize, c2: usize, classes: usize },
}

impl Arch {
    pub fn param_count(&self) -> usize {
        match *self {
            Arch::Mlp { input, hidden, classes } => {
                hidden * input + hidden + classes * hidden + classes
            }
            Arch::Conv { in_channels, c1, c2, classes, .. } => {
                c1 * in_channels * 9 + c1 + c2 * c1 * 9 + c2 + classes * c2 + classes
            }
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Arch::Mlp { classes, .. } | Arch::Conv { classes, .. } => classes,
        }
    }

    /// Canonical text form stored in checkpoints.
    pub fn descriptor(&self) -> String {
        match *self {
            Arch::Mlp { input, hidden, classes } => {
                format!("mlp input={input} hidden={hidden} classes={classes}")
            }
            Arch::Conv { in_channels, side, c1, c2, classes } => {
                format!("conv in_channels={in_channels} side={side} c1={c1} c2={c2} classes={classes}")
            }
        }
    }

    pub fn from_descriptor(text: &str) -> Result<Arch> {
        let mut fields = std::collections::HashMap::new();
        let mut parts = text.split_whitespace();
        let kind = parts.next().unwrap_or("");
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad descriptor field '{part}'")))?;
            let n: usize = v
                .parse()
                .map_err(|_| Error::Format(format!("bad descriptor value '{part}'")))?;
            fields.insert(k.to_string(), n);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("descriptor missing '{k}'")))
        };
        match kind {
            "mlp" => Ok(Arch::Mlp { input: get("input")?, hidden: get("hidden")?, classes: get("classes")? }),
            "conv" => Ok(Arch::Conv {
                in_channels: get("in_channels")?,
                side: get("side")?,
                c1: get("c1")?,
                c2: get("c2")?,
                classes: get("classes")?,
            }),
            _ => Err(Error::Format(format!("unknown architecture '{kind}'"))),
        }
    }
}

/// A classifier: architecture plus flattened weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: Arch,
    pub weights: Vec<f64>,
}

impl Network {
    pub fn zeros(arch: Arch) -> Network {
        let n = arch.param_count();
        Network { arch, weights: vec![0.0; n] }
    }

    /// He-normal initialization.
    pub fn init<R: Rng + ?Sized>(arch: Arch, rng: &mut R) -> Network {
        let mut net = Network::zeros(arch.clone());
        let mut offset = 0;
        for (fan_in, w_len, b_len) in arch_layer_shapes(&arch) {
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("valid std");
            for w in &mut net.weights[offset..offset + w_len] {
                *w = normal.sample(rng);
            }
            offset += w_len + b_len; // biases stay zero
        }
        net
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        match self.arch {
            Arch::Mlp { input, .. } => {
                if img.data.len() != input {
                    return Err(Error::InvalidArgument(format!(
                        "input size {} does not match mlp input {input}",
                        img.data.len()
                    )));
                }
            }
            Arch::Conv { in_channels, side, .. } => {
                if img.channels != in_channels || img.height != side || img.width != side {
                    return Err(Error::InvalidArgument(format!(
                        "image {}x{}x{} does not match conv input {side}x{side}x{in_channels}",
                        img.height, img.width, img.channels
                    )));
                }
            }
        }
        Ok(())
    }

    /// Class scores (logits). Deterministic.
    pub fn forward(&self, img: &Image) -> Result<Vec<f64>> {
        self.check_input(img)?;
        Ok(match self.arch {
            Arch::Mlp { .. } => mlp_forward(self, &img.data).scores,
            Arch::Conv { .. } => conv_forward(self, img).scores,
        })
    }

    /// Cross-entropy loss and the exact gradient of the loss with respect to
    /// every weight, flattened in layout order.
    pub fn loss_and_grad(&self, img: &Image, label: usize) -> Result<(f64, Vec<f64>)> {
        self.check_input(img)?;
        if label >= self.arch.classes() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {} classes",
                self.arch.classes()
            )));
        }
        Ok(match self.arch {
            Arch::Mlp { .. } => mlp_loss_and_grad(self, &img.data, label),
            Arch::Conv { .. } => conv_loss_and_grad(self, img, label),
        })
    }

    /// Mean of per-example gradients over a batch.
    pub fn batch_grad(&self, imgs: &[&Image], labels: &[usize]) -> Result<Vec<f64>> {
        if imgs.is_empty() {
            return Err(Error::InvalidArgument("batch_grad needs a non-empty batch".into()));
        }
        if imgs.len() != labels.len() {
            return Err(Error::InvalidArgument("batch images/labels length mismatch".into()));
        }
        let grads: Vec<Result<Vec<f64>>> = imgs
            .par_iter()
            .zip(labels.par_iter())
            .map(|(img, &label)| self.loss_and_grad(img, label).map(|(_, g)| g))
            .collect();
        let mut acc = vec![0.0; self.param_count()];
        for g in grads {
            let g = g?;
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
        let scale = 1.0 / imgs.len() as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        Ok(acc)
    }
}

/// (fan_in, weight_len, bias_len) triples in layout order.
fn arch_layer_shapes(arch: &Arch) -> Vec<(usize, usize, usize)> {
    match *arch {
        Arch::Mlp { input, hidden, classes } => {
            vec![(input, hidden * input, hidden), (hidden, classes * hidden, classes)]
        }
        Arch::Conv { in_channels, c1, c2, classes, .. } => vec![
            (in_channels * 9, c1 * in_channels * 9, c1),
            (c1 * 9, c2 * c1 * 9, c2),
            (c2, classes * c2, classes),
        ],
    }
}

/// Stable softmax cross-entropy: returns (loss, dlogits).
fn softmax_ce(scores: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() - (scores[label] - max);
    let mut dlogits: Vec<f64> = exps.iter().map(|&e| e / z).collect();
    dlogits[label] -= 1.0;
    (loss, dlogits)
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

struct MlpCache {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    scores: Vec<f64>,
}

fn mlp_dims(net: &Network) -> (usize, usize, usize) {
    match net.arch {
        Arch::Mlp { input, hidden, classes } => (input, hidden, classes),
        _ => unreachable!(),
    }
}

fn mlp_forward(net: &Network, x: &[f64]) -> MlpCache {
    let (input, hidden, classes) = mlp_dims(net);
    let w = &net.weights;
    let (w1, rest) = w.split_at(hidden * input);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(classes * hidden);

    let mut hidden_pre = vec![0.0; hidden];
    for h in 0..hidden {
        let row = &w1[h * input..(h + 1) * input];
        hidden_pre[h] = b1[h] + dot(row, x);
    }
    let hidden_act: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
    let mut scores = vec![0.0; classes];
    for c in 0..classes {
        let row = &w2[c * hidden..(c + 1) * hidden];
        scores[c] = b2[c] + dot(row, &hidden_act);
    }
    MlpCache { hidden_pre, hidden: hidden_act, scores }
}

fn mlp_loss_and_grad(net: &Network, x: &[f64], label: usize) -> (f64, Vec<f64>) {
    let (input, hidden, classes) = mlp_dims(net);
    let cache = mlp_forward(net, x);
    let (loss, dscores) = softmax_ce(&cache.scores, label);

    let w = &net.weights;
    let w2_off = hidden * input + hidden;
    let w2 = &w[w2_off..w2_off + classes * hidden];

    let mut grad = vec![0.0; net.param_count()];
    {
        let (gw1, rest) = grad.split_at_mut(hidden * input);
        let (gb1, rest) = rest.split_at_mut(hidden);
        let (gw2, gb2) = rest.split_at_mut(classes * hidden);

        // output layer
        for c in 0..classes {
            let d = dscores[c];
            gb2[c] = d;
            let row = &mut gw2[c * hidden..(c + 1) * hidden];
            for h in 0..hidden {
                row[h] = d * cache.hidden[h];
            }
        }
        // hidden layer
        for h in 0..hidden {
            if cache.hidden_pre[h] <= 0.0 {
                continue;
            }
            let mut dh = 0.0;
            for c in 0..classes {
                dh += dscores[c] * w2[c * hidden + h];
            }
            gb1[h] = dh;
            let row = &mut gw1[h * input..(h + 1) * input];
            for (g, &xv) in row.iter_mut().zip(x) {
                *g = dh * xv;
            }
        }
    }
    (loss, grad)
}

// ---------------------------------------------------------------------------
// Conv net: conv3x3(SAME) -> relu -> maxpool2 -> conv3x3(SAME) -> relu ->
// global-avg-pool -> dense
// ---------------------------------------------------------------------------

struct ConvCache {
    conv1_pre: Vec<f64>,
    pool: Vec<f64>,
    pool_argmax: Vec<usize>,
    conv2_pre: Vec<f64>,
    gap: Vec<f64>,
    scores: Vec<f64>,
}

fn conv_dims(net: &Network) -> (usize, usize, usize, usize, usize) {
    match net.arch {
        Arch::Conv { in_channels, side, c1, c2, classes } => (in_channels, side, c1, c2, classes),
        _ => unreachable!(),
    }
}

/// 3x3 SAME convolution over a planar input.
fn conv3x3(input: &[f64], in_ch: usize, side: usize, kernels: &[f64], biases: &[f64], out_ch: usize) -> Vec<f64> {
    let n = side * side;
    let mut out = vec![0.0; out_ch * n];
    for oc in 0..out_ch {
        let kbase = oc * in_ch * 9;
        for y in 0..side {
            for x in 0..side {
                let mut acc = biases[oc];
                for ic in 0..in_ch {
                    let plane = &input[ic * n..(ic + 1) * n];
                    let k = &kernels[kbase + ic * 9..kbase + ic * 9 + 9];
                    for ky in 0..3usize {
                        let sy = y as i64 + ky as i64 - 1;
                        if sy < 0 || sy >= side as i64 {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = x as i64 + kx as i64 - 1;
                            if sx < 0 || sx >= side as i64 {
                                continue;
                            }
                            acc += k[ky * 3 + kx] * plane[sy as usize * side + sx as usize];
                        }
                    }
                }
                out[oc * n + y * side + x] = acc;
            }
        }
    }
    out
}

fn conv_forward(net: &Network, img: &Image) -> ConvCache {
    let (in_ch, side, c1, c2, classes) = conv_dims(net);
    let w = &net.weights;
    let (k1, rest) = w.split_at(c1 * in_ch * 9);
    let (b1, rest) = rest.split_at(c1);
    let (k2, rest) = rest.split_at(c2 * c1 * 9);
    let (b2, rest) = rest.split_at(c2);
    let (wd, bd) = rest.split_at(classes * c2);

    let conv1_pre = conv3x3(&img.data, in_ch, side, k1, b1, c1);
    let relu1: Vec<f64> = conv1_pre.iter().map(|&v| v.max(0.0)).collect();

    // 2x2 max pool, stride 2
    let half = side / 2;
    let n1 = side * side;
    let np = half * half;
    let mut pool = vec![0.0; c1 * np];
    let mut pool_argmax = vec![0usize; c1 * np];
    for c in 0..c1 {
        let plane = &relu1[c * n1..(c + 1) * n1];
        for y in 0..half {
            for x in 0..half {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (2 * y + dy) * side + 2 * x + dx;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                pool[c * np + y * half + x] = best;
                pool_argmax[c * np + y * half + x] = best_idx;
            }
        }
    }

    let conv2_pre = conv3x3(&pool, c1, half, k2, b2, c2);
    let relu2: Vec<f64> = conv2_pre.iter().map(|&v| v.max(0.0)).collect();

    let mut gap = vec![0.0; c2];
    for c in 0..c2 {
        gap[c] = relu2[c * np..(c + 1) * np].iter().sum::<f64>() / np as f64;
    }

    let mut scores = vec![0.0; classes];
    for cl in 0..classes {
        scores[cl] = bd[cl] + dot(&wd[cl * c2..(cl + 1) * c2], &gap);
    }
    ConvCache { conv1_pre, pool, pool_argmax, conv2_pre, gap, scores }
}

fn conv_loss_and_grad(net: &Network, img: &Image, label: usize) -> (f64, Vec<f64>) {
    let (in_ch, side, c1, c2, classes) = conv_dims(net);
    let cache = conv_forward(net, img);
    let (loss, dscores) = softmax_ce(&cache.scores, label);

    let w = &net.weights;
    let k2_off = c1 * in_ch * 9 + c1;
    let k2 = &w[k2_off..k2_off + c2 * c1 * 9];
    let wd_off = k2_off + c2 * c1 * 9 + c2;
    let wd = &w[wd_off..wd_off + classes * c2];

    let half = side / 2;
    let n1 = side * side;
    let np = half * half;

    let mut grad = vec![0.0; net.param_count()];
    let (gk1, rest) = grad.split_at_mut(c1 * in_ch * 9);
    let (gb1, rest) = rest.split_at_mut(c1);
    let (gk2, rest) = rest.split_at_mut(c2 * c1 * 9);
    let (gb2, rest) = rest.split_at_mut(c2);
    let (gwd, gbd) = rest.split_at_mut(classes * c2);

    // dense layer
    let mut dgap = vec![0.0; c2];
    for cl in 0..classes {
        let d = dscores[cl];
        gbd[cl] = d;
        for c in 0..c2 {
            gwd[cl * c2 + c] = d * cache.gap[c];
            dgap[c] += d * wd[cl * c2 + c];
        }
    }

    // global average pool + relu2 backward
    let mut dconv2 = vec![0.0; c2 * np];
    for c in 0..c2 {
        let d = dgap[c] / np as f64;
        for i in 0..np {
            if cache.conv2_pre[c * np + i] > 0.0 {
                dconv2[c * np + i] = d;
            }
        }
    }

    // conv2 backward: kernel grads and input (pool) grads
    let mut dpool = vec![0.0; c1 * np];
    for oc in 0..c2 {
        let kbase = oc * c1 * 9;
        let mut db = 0.0;
        for y in 0..half {
            for x in 0..half {
                let d = dconv2[oc * np + y * half + x];
                if d == 0.0 {
                    continue;
                }
                db += d;
                for ic in 0..c1 {
                    let plane = &cache.pool[ic * np..(ic + 1) * np];
                    for ky in 0..3usize {
                        let sy = y as i64 + ky as i64 - 1;
                        if sy < 0 || sy >= half as i64 {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = x as i64 + kx as i64 - 1;
                            if sx < 0 || sx >= half as i64 {
                                continue;
                            }
                            let sidx = sy as usize * half + sx as usize;
                            gk2[kbase + ic * 9 + ky * 3 + kx] += d * plane[sidx];
                            dpool[ic * np + sidx] += d * k2[kbase + ic * 9 + ky * 3 + kx];
                        }
                    }
                }
            }
        }
        gb2[oc] = db;
    }

    // maxpool backward into relu1 positions, then relu1 backward
    let mut dconv1 = vec![0.0; c1 * n1];
    for c in 0..c1 {
        for i in 0..np {
            let d = dpool[c * np + i];
            if d != 0.0 {
                dconv1[c * n1 + cache.pool_argmax[c * np + i]] += d;
            }
        }
    }
    for c in 0..c1 {
        for i in 0..n1 {
            if cache.conv1_pre[c * n1 + i] <= 0.0 {
                dconv1[c * n1 + i] = 0.0;
            }
        }
    }

    // conv1 backward: kernel grads only (input grads not needed)
    for oc in 0..c1 {
        let kbase = oc * in_ch * 9;
        let mut db = 0.0;
        for y in 0..side {
            for x in 0..side {
                let d = dconv1[oc * n1 + y * side + x];
                if d == 0.0 {
                    continue;
                }
                db += d;
                for ic in 0..in_ch {
                    let plane = &img.data[ic * n1..(ic + 1) * n1];
                    for ky in 0..3usize {
                        let sy = y as i64 + ky as i64 - 1;
                        if sy < 0 || sy >= side as i64 {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = x as i64 + kx as i64 - 1;
                            if sx < 0 || sx >= side as i64 {
                                continue;
                            }
                            gk1[kbase + ic * 9 + ky * 3 + kx] += d * plane[sy as usize * side + sx as usize];
                        }
                    }
                }
            }
        }
        gb1[oc] = db;
    }

    (loss, grad)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
