//! Stacked categorical augmentation policies.
//!
//! A layer is a vector of unconstrained logits over the transform table;
//! softmax gives the categorical distribution. A stack applies its layers in
//! order, sampling one transform per layer. Layers are immutable for
//! samplers; the optimizer owns mutation between iterations.

pub mod hexfloat;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::imgops::{apply_transform, build_transform_table, TableConfig, TransformTable};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Logits over the transform table of one augmentation layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLayer {
    pub logits: Vec<f64>,
}

impl PolicyLayer {
    /// All-zero logits: the uniform (maximum-entropy) start.
    pub fn uniform(len: usize) -> PolicyLayer {
        PolicyLayer { logits: vec![0.0; len] }
    }

    /// Numerically stabilized softmax.
    pub fn probs(&self) -> Result<Vec<f64>> {
        layer_probs(self)
    }

    /// Entropy of the softmax distribution in nats.
    pub fn entropy(&self) -> Result<f64> {
        let p = self.probs()?;
        Ok(-p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
    }
}

/// Softmax of the layer's logits (max-subtracted).
pub fn layer_probs(layer: &PolicyLayer) -> Result<Vec<f64>> {
    if layer.logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("layer logits are not finite".into()));
    }
    if layer.logits.is_empty() {
        return Err(Error::InvalidState("layer has no logits".into()));
    }
    let max = layer.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = layer.logits.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

/// Draw an index from a simplex vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Optional provenance carried by saved policies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub seed: u64,
    pub config_digest: String,
}

/// An ordered stack of policy layers over one shared transform table.
/// Layer 0 is applied first.
#[derive(Debug, Clone)]
pub struct PolicyStack {
    pub layers: Vec<PolicyLayer>,
    pub table: TransformTable,
    pub metadata: PolicyMeta,
    /// Set when the last layer converged to identity and is kept only as the
    /// recorded stop signal; appliers may skip it.
    pub terminal_identity: bool,
}

impl PolicyStack {
    pub fn new(table: TransformTable) -> PolicyStack {
        PolicyStack { layers: Vec::new(), table, metadata: PolicyMeta::default(), terminal_identity: false }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Number of layers applied by default (a terminal identity layer is
    /// skipped).
    pub fn effective_depth(&self) -> usize {
        if self.terminal_identity && !self.layers.is_empty() {
            self.layers.len() - 1
        } else {
            self.layers.len()
        }
    }
}

/// Sample one transform index per layer for the first `depth` layers,
/// independently from each layer's categorical.
pub fn sample_chain<R: Rng + ?Sized>(
    stack: &PolicyStack,
    depth: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if depth > stack.depth() {
        return Err(Error::InvalidArgument(format!(
            "chain depth {depth} exceeds stack depth {}",
            stack.depth()
        )));
    }
    let mut chain = Vec::with_capacity(depth);
    for layer in &stack.layers[..depth] {
        chain.push(sample_categorical(&layer.probs()?, rng));
    }
    Ok(chain)
}

/// Sample a full-depth chain and apply it in layer order.
pub fn apply_policy<R: Rng + ?Sized>(stack: &PolicyStack, img: &Image, rng: &mut R) -> Result<Image> {
    apply_policy_depth(stack, img, stack.effective_depth(), rng)
}

/// Apply a freshly sampled chain of the given depth.
pub fn apply_policy_depth<R: Rng + ?Sized>(
    stack: &PolicyStack,
    img: &Image,
    depth: usize,
    rng: &mut R,
) -> Result<Image> {
    if stack.layers.is_empty() {
        return Err(Error::InvalidArgument("policy stack is empty".into()));
    }
    let chain = sample_chain(stack, depth, rng)?;
    Ok(apply_chain(&stack.table, &chain, img, rng))
}

/// Apply an explicit chain of table indices in order.
pub fn apply_chain<R: Rng + ?Sized>(
    table: &TransformTable,
    chain: &[usize],
    img: &Image,
    rng: &mut R,
) -> Image {
    let mut out = img.clone();
    for &idx in chain {
        out = apply_transform(&out, &table.entries[idx], rng);
    }
    out
}

// ---------------------------------------------------------------------------
// Serialization: UTF-8 JSON with hex-float logits
// ---------------------------------------------------------------------------

const POLICY_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    version: u32,
    table_config: TableConfig,
    table_hash: String,
    metadata: PolicyMeta,
    terminal_identity: bool,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    logits: Vec<String>,
}

/// Serialize a stack to the policy JSON text.
pub fn policy_to_json(stack: &PolicyStack) -> String {
    let file = PolicyFile {
        version: POLICY_VERSION,
        table_config: stack.table.config.clone(),
        table_hash: format!("{:016x}", stack.table.hash()),
        metadata: stack.metadata.clone(),
        terminal_identity: stack.terminal_identity,
        layers: stack
            .layers
            .iter()
            .map(|l| LayerFile { logits: l.logits.iter().map(|&v| hexfloat::encode(v)).collect() })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("policy serializes")
}

/// Parse policy JSON text; verifies version and table hash, and rebuilds the
/// table from the embedded config.
pub fn policy_from_json(text: &str) -> Result<PolicyStack> {
    let file: PolicyFile =
        serde_json::from_str(text).map_err(|e| Error::PolicyLoad(format!("bad JSON: {e}")))?;
    if file.version != POLICY_VERSION {
        return Err(Error::PolicyLoad(format!("unsupported policy version {}", file.version)));
    }
    let table = build_transform_table(&file.table_config)
        .map_err(|e| Error::PolicyLoad(format!("embedded table config invalid: {e}")))?;
    let actual = format!("{:016x}", table.hash());
    if actual != file.table_hash {
        return Err(Error::PolicyLoad(format!(
            "table hash mismatch: file says {}, rebuilt table gives {actual}",
            file.table_hash
        )));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, lf) in file.layers.iter().enumerate() {
        if lf.logits.len() != table.len() {
            return Err(Error::PolicyLoad(format!(
                "layer {i} has {} logits for a {}-transform table",
                lf.logits.len(),
                table.len()
            )));
        }
        let mut logits = Vec::with_capacity(lf.logits.len());
        for s in &lf.logits {
            let v = hexfloat::decode(s)
                .ok_or_else(|| Error::PolicyLoad(format!("layer {i}: bad hex float '{s}'")))?;
            if !v.is_finite() {
                return Err(Error::PolicyLoad(format!("layer {i}: non-finite logit '{s}'")));
            }
            logits.push(v);
        }
        layers.push(PolicyLayer { logits });
    }
    Ok(PolicyStack {
        layers,
        table,
        metadata: file.metadata,
        terminal_identity: file.terminal_identity,
    })
}

pub fn save_policy(stack: &PolicyStack, path: &Path) -> Result<()> {
    crate::fsutil::atomic_write(path, policy_to_json(stack).as_bytes())
}

pub fn load_policy(path: &Path) -> Result<PolicyStack> {
    let text = std::fs::read_to_string(path)?;
    policy_from_json(&text)
}
