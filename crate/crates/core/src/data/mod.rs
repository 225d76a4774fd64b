//! Dataset ingestion and sampling.
//!
//! CIFAR-10 binary records are 3073 bytes: one label byte followed by 3072
//! pixel bytes (1024 R, 1024 G, 1024 B, row-major). Synthetic datasets supply
//! the nuisance-controlled search experiments: the validation split can carry
//! a nuisance (rotation, brightness jitter, translation) the training split
//! lacks, so a correct search has to discover it.

mod synthetic;

pub use synthetic::{make_synthetic, Nuisance, SynthSpec};

use crate::error::{Error, Result};
use crate::image::Image;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use std::fs;
use std::path::Path;

pub const CIFAR_RECORD_BYTES: usize = 3073;
pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CLASSES: usize = 10;

/// Split tag carried by a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Images with labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        images: Vec<Image>,
        labels: Vec<usize>,
        class_count: usize,
        split: Split,
    ) -> Result<Dataset> {
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} images vs {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Dataset { images, labels, class_count, split })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Parse raw CIFAR-10 record bytes.
pub fn parse_cifar_records(bytes: &[u8], split: Split) -> Result<Dataset> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(Error::Format(format!(
            "CIFAR-10 data must be a positive multiple of {CIFAR_RECORD_BYTES} bytes, got {}",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(Error::Format(format!("label byte {label} > 9")));
        }
        let data = rec[1..].iter().map(|&b| f64::from(b) / 255.0).collect();
        images.push(Image { height: CIFAR_SIDE, width: CIFAR_SIDE, channels: 3, data });
        labels.push(label);
    }
    Dataset::new(images, labels, CIFAR_CLASSES, split)
}

/// Load CIFAR-10 binary batches. `path` may be a single batch file or a
/// directory, in which case every `*.bin` file (sorted by name) is read.
pub fn load_cifar10(path: &Path, split: Split) -> Result<Dataset> {
    let mut bytes = Vec::new();
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "bin"))
            .collect();
        if files.is_empty() {
            return Err(Error::Format(format!("no .bin batch files in {}", path.display())));
        }
        files.sort();
        for f in files {
            bytes.extend(fs::read(&f)?);
        }
    } else {
        bytes = fs::read(path)?;
    }
    parse_cifar_records(&bytes, split)
}

/// Serialize a dataset in the CIFAR-10 binary record layout. Images must be
/// 32x32x3; intensities are quantized to bytes.
pub fn write_cifar_records(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD_BYTES);
    for (img, &label) in ds.images.iter().zip(&ds.labels) {
        if img.height != CIFAR_SIDE || img.width != CIFAR_SIDE || img.channels != 3 {
            return Err(Error::InvalidArgument("CIFAR layout requires 32x32x3 images".into()));
        }
        out.push(label as u8);
        out.extend(img.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

/// Uniform subsample without replacement, deterministic under `seed`.
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot subsample {n} from {} records",
            ds.len()
        )));
    }
    let mut rng = crate::rng::SeedFork::new(seed).rng();
    let idx = index_sample(&mut rng, ds.len(), n);
    let images = idx.iter().map(|i| ds.images[i].clone()).collect();
    let labels = idx.iter().map(|i| ds.labels[i]).collect();
    Dataset::new(images, labels, ds.class_count, ds.split)
}

/// Sample a batch uniformly without replacement.
pub fn sample_val_batch<'a, R: Rng + ?Sized>(
    ds: &'a Dataset,
    size: usize,
    rng: &mut R,
) -> Result<(Vec<&'a Image>, Vec<usize>)> {
    if size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if size > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {size} exceeds dataset size {}",
            ds.len()
        )));
    }
    let idx = index_sample(rng, ds.len(), size);
    let imgs = idx.iter().map(|i| &ds.images[i]).collect();
    let labels = idx.iter().map(|i| ds.labels[i]).collect();
    Ok((imgs, labels))
}

/// Class-conditioned variant of [`sample_val_batch`]: draws only from
/// records of `class`.
pub fn sample_val_batch_conditioned<'a, R: Rng + ?Sized>(
    ds: &'a Dataset,
    size: usize,
    class: usize,
    rng: &mut R,
) -> Result<(Vec<&'a Image>, Vec<usize>)> {
    if size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let pool: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
    if size > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {size} exceeds {} records of class {class}",
            pool.len()
        )));
    }
    let idx = index_sample(rng, pool.len(), size);
    let imgs = idx.iter().map(|i| &ds.images[pool[i]]).collect();
    let labels = idx.iter().map(|i| ds.labels[pool[i]]).collect();
    Ok((imgs, labels))
}
