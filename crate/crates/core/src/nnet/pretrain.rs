//! Proxy-network pretraining: plain SGD with momentum on a dataset subset.
//! The weights are frozen after this; the search never updates them.

use super::Network;
use crate::data::Dataset;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig { epochs: 10, batch_size: 32, lr: 0.05, momentum: 0.9, seed: 0 }
    }
}

/// Train in place; returns the mean loss per epoch. Deterministic under
/// `cfg.seed`. Zero epochs leaves the weights untouched.
pub fn pretrain(net: &mut Network, dataset: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("pretrain dataset is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut velocity = vec![0.0; net.param_count()];
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = crate::rng::SeedFork::new(cfg.seed).fork(&[0x7261]).rng();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let imgs: Vec<&crate::image::Image> = chunk.iter().map(|&i| &dataset.images[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels[i]).collect();
            let grad = net.batch_grad(&imgs, &labels)?;
            let batch_loss: f64 = imgs
                .iter()
                .zip(&labels)
                .map(|(img, &l)| net.loss_and_grad(img, l).map(|(loss, _)| loss))
                .sum::<Result<f64>>()?
                / imgs.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged (epoch {epoch}, after {seen} examples): {batch_loss}"
                )));
            }
            epoch_loss += batch_loss * imgs.len() as f64;
            seen += imgs.len();
            for ((w, v), g) in net.weights.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *w -= cfg.lr * *v;
            }
        }
        curve.push(epoch_loss / seen as f64);
    }
    Ok(curve)
}

/// Fraction of examples whose argmax score matches the label.
pub fn accuracy(net: &Network, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("accuracy over empty dataset".into()));
    }
    let mut correct = 0usize;
    for (img, &label) in dataset.images.iter().zip(&dataset.labels) {
        let scores = net.forward(img)?;
        let pred = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
