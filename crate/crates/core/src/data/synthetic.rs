//! Synthetic nuisance-controlled datasets.
//!
//! Each class renders a distinct oriented, horizontally-asymmetric shape with
//! a class-specific channel tint, positional jitter, and pixel noise. The
//! intensities are continuous (not 8-bit-quantized) and span a sub-interval
//! of [0,1], so no table transform collapses to an exact identity on this
//! data and the search signal is clean.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::imgops::{apply_op_with_magnitude, OpKind};
use crate::rng::SeedFork;
use rand::Rng;

use super::{Dataset, Split};

/// Distribution shift applied to the validation split (or both splits).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nuisance {
    None,
    /// Rotation by a uniform angle in `[-max_degrees, max_degrees]`.
    Rotation { max_degrees: f64 },
    /// Brightness blend by a uniform factor in `[lo, hi]`.
    Brightness { lo: f64, hi: f64 },
    /// Translation by uniform fractions in `[-max_frac, max_frac]` per axis.
    Translation { max_frac: f64 },
}

impl Nuisance {
    pub fn rotation() -> Nuisance {
        Nuisance::Rotation { max_degrees: 30.0 }
    }

    pub fn brightness() -> Nuisance {
        Nuisance::Brightness { lo: 0.5, hi: 1.5 }
    }

    pub fn translation() -> Nuisance {
        Nuisance::Translation { max_frac: 0.3 }
    }
}

/// Generator settings.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Image side in pixels (images are square, 3-channel).
    pub size: usize,
    /// Number of classes; each picks one of the built-in base shapes.
    pub classes: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub nuisance: Nuisance,
    /// Apply the nuisance to the train split too (control: no train/val gap).
    pub nuisance_on_train: bool,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(size: usize, classes: usize, train_per_class: usize, val_per_class: usize) -> SynthSpec {
        SynthSpec {
            size,
            classes,
            train_per_class,
            val_per_class,
            nuisance: Nuisance::None,
            nuisance_on_train: false,
            seed: 0,
        }
    }
}

const SHAPE_COUNT: usize = 4;
const BG: f64 = 0.28;
const FG: f64 = 0.62;
const NOISE: f64 = 0.04;

// class-specific RGB tints for the foreground
const TINTS: [[f64; 3]; SHAPE_COUNT] = [
    [1.0, 0.75, 0.55],
    [0.65, 1.0, 0.7],
    [0.6, 0.75, 1.0],
    [1.0, 1.0, 0.6],
];

fn inside_shape(class: usize, u: f64, v: f64) -> bool {
    match class % SHAPE_COUNT {
        // diagonal band
        0 => (u - v).abs() < 0.13 && u > 0.08 && u < 0.92,
        // L: left vertical stroke plus partial bottom stroke
        1 => (u < 0.3 && v > 0.1 && v < 0.9) || (v > 0.68 && v < 0.9 && u < 0.72),
        // T with an off-center stem
        2 => (v < 0.28 && u > 0.08 && u < 0.92) || ((u - 0.38).abs() < 0.14 && v < 0.9),
        // right triangle
        _ => u > 0.15 && u < 0.85 && v > 0.15 && v < 0.85 && v >= u,
    }
}

fn render_base<R: Rng + ?Sized>(size: usize, class: usize, rng: &mut R) -> Image {
    // per-sample jitter: position, scale, foreground level
    let jx: f64 = rng.random_range(-0.08..0.08);
    let jy: f64 = rng.random_range(-0.08..0.08);
    let scale: f64 = rng.random_range(0.9..1.1);
    let fg_level: f64 = FG + rng.random_range(-0.06..0.06);
    let tint = TINTS[class % SHAPE_COUNT];

    let mut img = Image::zeros(size, size, 3);
    let denom = (size - 1) as f64;
    for y in 0..size {
        for x in 0..size {
            let u = (x as f64 / denom - 0.5 - jx) / scale + 0.5;
            let v = (y as f64 / denom - 0.5 - jy) / scale + 0.5;
            let fg = inside_shape(class, u, v);
            for c in 0..3 {
                let base = if fg { fg_level * tint[c] } else { BG };
                let noisy = base + rng.random_range(-NOISE..NOISE);
                img.set(c, y, x, noisy.clamp(0.02, 0.98));
            }
        }
    }
    img
}

fn apply_nuisance<R: Rng + ?Sized>(img: &Image, nuisance: Nuisance, rng: &mut R) -> Image {
    match nuisance {
        Nuisance::None => img.clone(),
        Nuisance::Rotation { max_degrees } => {
            let angle = rng.random_range(-max_degrees..max_degrees);
            apply_op_with_magnitude(img, OpKind::Rotate, angle)
        }
        Nuisance::Brightness { lo, hi } => {
            let factor = rng.random_range(lo..hi);
            apply_op_with_magnitude(img, OpKind::Brightness, factor)
        }
        Nuisance::Translation { max_frac } => {
            let fx = rng.random_range(-max_frac..max_frac);
            let fy = rng.random_range(-max_frac..max_frac);
            let shifted = apply_op_with_magnitude(img, OpKind::TranslateX, fx);
            apply_op_with_magnitude(&shifted, OpKind::TranslateY, fy)
        }
    }
}

fn generate_split(spec: &SynthSpec, split: Split, per_class: usize) -> Result<Dataset> {
    let split_tag = match split {
        Split::Train => 0u64,
        Split::Val => 1u64,
    };
    let root = SeedFork::new(spec.seed);
    let with_nuisance = split == Split::Val || spec.nuisance_on_train;
    let mut images = Vec::with_capacity(per_class * spec.classes);
    let mut labels = Vec::with_capacity(per_class * spec.classes);
    for class in 0..spec.classes {
        for idx in 0..per_class {
            let mut base_rng = root.fork(&[split_tag, class as u64, idx as u64, 0]).rng();
            let base = render_base(spec.size, class, &mut base_rng);
            let img = if with_nuisance {
                let mut nuis_rng = root.fork(&[split_tag, class as u64, idx as u64, 1]).rng();
                apply_nuisance(&base, spec.nuisance, &mut nuis_rng)
            } else {
                base
            };
            images.push(img);
            labels.push(class);
        }
    }
    Dataset::new(images, labels, spec.classes, split)
}

/// Generate (train, val) datasets. Deterministic under `spec.seed`; the base
/// image of sample `i` is identical across nuisance settings, so nuisance
/// effects can be measured directly.
pub fn make_synthetic(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    if spec.classes == 0 || spec.classes > SHAPE_COUNT {
        return Err(Error::InvalidConfig(format!(
            "classes must be in 1..={SHAPE_COUNT}, got {}",
            spec.classes
        )));
    }
    if spec.train_per_class == 0 || spec.val_per_class == 0 {
        return Err(Error::InvalidConfig("samples per class must be positive".into()));
    }
    if spec.size < 8 {
        return Err(Error::InvalidConfig(format!("image size {} too small", spec.size)));
    }
    let train = generate_split(spec, Split::Train, spec.train_per_class)?;
    let val = generate_split(spec, Split::Val, spec.val_per_class)?;
    Ok((train, val))
}
