//! CSV renderings of traces and policy distributions.

use super::{SearchTrace, TraceRow};
use crate::policy::PolicyStack;
use std::fmt::Write;

/// Per-iteration trace: one row per Adam step.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("layer,iteration,cosine,grad_norm,entropy,top3,elapsed_ms\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.3}",
            r.layer, r.iteration, r.cosine, r.grad_norm, r.entropy, r.top3, r.elapsed_ms
        )
        .unwrap();
    }
    out
}

/// Per-layer operation distribution: probability of each op summed over its
/// magnitude levels.
pub fn op_distribution_csv(stack: &PolicyStack) -> String {
    let mut out = String::from("layer,op,probability\n");
    for (k, layer) in stack.layers.iter().enumerate() {
        let probs = layer.probs().expect("finite logits");
        let mut seen: Vec<(&str, f64)> = Vec::new();
        for (t, &p) in stack.table.entries.iter().zip(&probs) {
            match seen.iter_mut().find(|(name, _)| *name == t.op.name()) {
                Some((_, total)) => *total += p,
                None => seen.push((t.op.name(), p)),
            }
        }
        for (name, total) in seen {
            writeln!(out, "{},{},{}", k + 1, name, total).unwrap();
        }
    }
    out
}

/// Per-layer magnitude distribution for the leveled ops.
pub fn magnitude_distribution_csv(stack: &PolicyStack) -> String {
    let mut out = String::from("layer,op,level,magnitude,probability\n");
    for (k, layer) in stack.layers.iter().enumerate() {
        let probs = layer.probs().expect("finite logits");
        for (t, &p) in stack.table.entries.iter().zip(&probs) {
            if let (Some(level), Some(mag)) = (t.level, t.magnitude) {
                writeln!(out, "{},{},{},{},{}", k + 1, t.op.name(), level, mag, p).unwrap();
            }
        }
    }
    out
}

/// Gradient-similarity improvement per depth.
pub fn improvement_csv(stats: &[(f64, f64)]) -> String {
    let mut out = String::from("depth,mean_improvement,std_improvement\n");
    for (d, (mean, std)) in stats.iter().enumerate() {
        writeln!(out, "{d},{mean},{std}").unwrap();
    }
    out
}

/// Pretraining loss curve.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (e, loss) in curve.iter().enumerate() {
        writeln!(out, "{e},{loss}").unwrap();
    }
    out
}

/// Convenience: the trace plus per-layer summaries rendered for logs.
pub fn summarize(trace: &SearchTrace) -> String {
    let mut out = String::new();
    for s in &trace.layers {
        writeln!(
            out,
            "layer {}: p(identity)={:.4} converged={}{}",
            s.layer,
            s.identity_prob,
            s.converged_identity,
            match s.improvement {
                Some((m, sd)) => format!(" improvement mean={m:.5} std={sd:.5}"),
                None => String::new(),
            }
        )
        .unwrap();
    }
    out
}
