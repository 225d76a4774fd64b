//! The transform set: operations, magnitude grids, the transform table, and
//! transform application.
//!
//! A `Transform` is an operation with a fixed magnitude; the table is the
//! ordered set of all of them and defines the categorical axis every policy
//! layer distributes over. With the standard config (18 ops, 11 of them at 12
//! levels) the table has 139 entries.

mod bitops;
mod color;
mod geometry;

pub use geometry::{cutout_at, mirror, pad_crop_at, WARP_FILL};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::fnv1a64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Mid-gray fill for cutout patches.
pub const CUTOUT_FILL: f64 = 0.5;

/// The 18 operations of the augmentation space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Identity,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    Solarize,
    Equalize,
    Color,
    Posterize,
    Contrast,
    Brightness,
    Sharpness,
    AutoContrast,
    Invert,
    Cutout,
    Flips,
    Crop,
}

pub const ALL_OPS: [OpKind; 18] = [
    OpKind::Identity,
    OpKind::ShearX,
    OpKind::ShearY,
    OpKind::TranslateX,
    OpKind::TranslateY,
    OpKind::Rotate,
    OpKind::Solarize,
    OpKind::Equalize,
    OpKind::Color,
    OpKind::Posterize,
    OpKind::Contrast,
    OpKind::Brightness,
    OpKind::Sharpness,
    OpKind::AutoContrast,
    OpKind::Invert,
    OpKind::Cutout,
    OpKind::Flips,
    OpKind::Crop,
];

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Identity => "identity",
            OpKind::ShearX => "shear-x",
            OpKind::ShearY => "shear-y",
            OpKind::TranslateX => "translate-x",
            OpKind::TranslateY => "translate-y",
            OpKind::Rotate => "rotate",
            OpKind::Solarize => "solarize",
            OpKind::Equalize => "equalize",
            OpKind::Color => "color",
            OpKind::Posterize => "posterize",
            OpKind::Contrast => "contrast",
            OpKind::Brightness => "brightness",
            OpKind::Sharpness => "sharpness",
            OpKind::AutoContrast => "auto-contrast",
            OpKind::Invert => "invert",
            OpKind::Cutout => "cutout",
            OpKind::Flips => "flips",
            OpKind::Crop => "crop",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        ALL_OPS.into_iter().find(|op| op.name() == name)
    }

    /// Whether the op is searched over 12 discretized magnitude levels.
    pub fn has_levels(self) -> bool {
        matches!(
            self,
            OpKind::ShearX
                | OpKind::ShearY
                | OpKind::TranslateX
                | OpKind::TranslateY
                | OpKind::Rotate
                | OpKind::Solarize
                | OpKind::Posterize
                | OpKind::Contrast
                | OpKind::Color
                | OpKind::Brightness
                | OpKind::Sharpness
        )
    }

    /// Whether applying the op consumes randomness.
    pub fn is_stochastic(self) -> bool {
        matches!(self, OpKind::Flips | OpKind::Cutout | OpKind::Crop)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One entry of the transform set: an operation with a fixed magnitude.
///
/// Leveled ops carry `level` (index into the magnitude grid) and `magnitude`.
/// Cutout and crop carry a fixed parameter (patch size / pad) in `magnitude`
/// with no level. The remaining ops carry neither.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub op: OpKind,
    pub level: Option<usize>,
    pub magnitude: Option<f64>,
}

impl Transform {
    /// Label used in traces and reports, e.g. `rotate@11` or `invert`.
    pub fn label(&self) -> String {
        match self.level {
            Some(l) => format!("{}@{}", self.op, l),
            None => self.op.to_string(),
        }
    }
}

/// `n` uniformly spaced values covering `[lo, hi]` inclusive.
pub fn magnitude_levels(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo < hi) {
        return Err(Error::InvalidConfig(format!(
            "magnitude range [{lo}, {hi}] must satisfy lo < hi"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidConfig(format!("level count {n} must be >= 2")));
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut vals: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    vals[n - 1] = hi;
    Ok(vals)
}

/// Declarative table config (TOML on disk, embedded in policy files as JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub levels: usize,
    pub ops: Vec<OpSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Cutout patch side in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u32>,
    /// Crop padding in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad: Option<u32>,
}

impl TableConfig {
    pub fn from_toml_str(text: &str) -> Result<TableConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("table config: {e}")))
    }

    /// The standard 139-transform augmentation space.
    pub fn standard() -> TableConfig {
        TableConfig::from_toml_str(include_str!("standard.toml"))
            .expect("embedded standard table config parses")
    }
}

/// The ordered transform set plus the config that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformTable {
    pub entries: Vec<Transform>,
    pub identity_index: usize,
    pub config: TableConfig,
}

/// Expand a config into the ordered table: leveled ops contribute one entry
/// per magnitude level, the rest one entry each.
pub fn build_transform_table(config: &TableConfig) -> Result<TransformTable> {
    let mut entries = Vec::new();
    let mut identity_index = None;
    let mut seen: Vec<&str> = Vec::new();

    for spec in &config.ops {
        let op = OpKind::from_name(&spec.name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown op name '{}'", spec.name)))?;
        if seen.contains(&op.name()) {
            return Err(Error::InvalidConfig(format!("duplicate op '{}'", spec.name)));
        }
        seen.push(op.name());

        if spec.size.is_some() && op != OpKind::Cutout {
            return Err(Error::InvalidConfig(format!("op '{}' does not take a size", spec.name)));
        }
        if spec.pad.is_some() && op != OpKind::Crop {
            return Err(Error::InvalidConfig(format!("op '{}' does not take a pad", spec.name)));
        }

        if op.has_levels() {
            let range = spec.range.ok_or_else(|| {
                Error::InvalidConfig(format!("op '{}' requires a magnitude range", spec.name))
            })?;
            for (level, m) in magnitude_levels(range[0], range[1], config.levels)?
                .into_iter()
                .enumerate()
            {
                entries.push(Transform { op, level: Some(level), magnitude: Some(m) });
            }
        } else {
            if spec.range.is_some() {
                return Err(Error::InvalidConfig(format!(
                    "op '{}' does not take a magnitude range",
                    spec.name
                )));
            }
            let magnitude = match op {
                OpKind::Cutout => Some(f64::from(spec.size.unwrap_or(16))),
                OpKind::Crop => Some(f64::from(spec.pad.unwrap_or(4))),
                _ => None,
            };
            if op == OpKind::Identity {
                identity_index = Some(entries.len());
            }
            entries.push(Transform { op, level: None, magnitude });
        }
    }

    let identity_index = identity_index
        .ok_or_else(|| Error::InvalidConfig("table must include the identity op".into()))?;
    Ok(TransformTable { entries, identity_index, config: config.clone() })
}

impl TransformTable {
    pub fn standard() -> TransformTable {
        build_transform_table(&TableConfig::standard()).expect("standard table builds")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stable text form of the table; the policy file hash is FNV-1a over it.
    pub fn canonical_listing(&self) -> String {
        let mut out = String::new();
        for t in &self.entries {
            let level = t.level.map_or("-".to_string(), |l| l.to_string());
            let mag = t.magnitude.map_or("-".to_string(), |m| format!("{:016x}", m.to_bits()));
            out.push_str(&format!("{}|{}|{};", t.op, level, mag));
        }
        out
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(self.canonical_listing().as_bytes())
    }
}

/// Apply one transform. Deterministic for all ops except flips (mirror with
/// probability 0.5), crop (random pad-and-crop offset), and cutout (random
/// patch center); those consume `rng`.
pub fn apply_transform<R: Rng + ?Sized>(img: &Image, t: &Transform, rng: &mut R) -> Image {
    let m = t.magnitude;
    match t.op {
        OpKind::Identity => img.clone(),
        OpKind::ShearX => geometry::shear_x(img, m.unwrap()),
        OpKind::ShearY => geometry::shear_y(img, m.unwrap()),
        OpKind::TranslateX => geometry::translate_x(img, m.unwrap()),
        OpKind::TranslateY => geometry::translate_y(img, m.unwrap()),
        OpKind::Rotate => geometry::rotate(img, m.unwrap()),
        OpKind::Solarize => bitops::solarize(img, m.unwrap()),
        OpKind::Equalize => bitops::equalize(img),
        OpKind::Color => color::color(img, m.unwrap()),
        OpKind::Posterize => bitops::posterize(img, m.unwrap()),
        OpKind::Contrast => color::contrast(img, m.unwrap()),
        OpKind::Brightness => color::brightness(img, m.unwrap()),
        OpKind::Sharpness => color::sharpness(img, m.unwrap()),
        OpKind::AutoContrast => color::auto_contrast(img),
        OpKind::Invert => color::invert(img),
        OpKind::Cutout => {
            let size = m.unwrap() as usize;
            let cr = rng.random_range(0..img.height) as i64;
            let cc = rng.random_range(0..img.width) as i64;
            geometry::cutout_at(img, size, (cr, cc), CUTOUT_FILL)
        }
        OpKind::Flips => {
            if rng.random_bool(0.5) {
                geometry::mirror(img)
            } else {
                img.clone()
            }
        }
        OpKind::Crop => {
            let pad = m.unwrap() as usize;
            let oy = rng.random_range(0..=2 * pad);
            let ox = rng.random_range(0..=2 * pad);
            geometry::pad_crop_at(img, pad, (oy, ox)).expect("sampled offset is in range")
        }
    }
}

/// Direct (non-table) application of a leveled op at an arbitrary magnitude.
/// Used by the synthetic-data nuisances and magnitude-zero tests.
pub fn apply_op_with_magnitude(img: &Image, op: OpKind, magnitude: f64) -> Image {
    let t = Transform { op, level: None, magnitude: Some(magnitude) };
    let mut rng = crate::rng::SeedFork::new(0).rng();
    apply_transform(img, &t, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedFork;

    #[test]
    fn magnitude_levels_rotate_grid() {
        let v = magnitude_levels(-30.0, 30.0, 12).unwrap();
        assert_eq!(v.len(), 12);
        assert_eq!(v[0], -30.0);
        assert_eq!(v[11], 30.0);
        assert!((v[1] - (-24.545454545454547)).abs() < 1e-12);
        let step = 60.0 / 11.0;
        for w in v.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-9);
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn magnitude_levels_two_point_and_contrast_spacing() {
        assert_eq!(magnitude_levels(0.0, 1.0, 2).unwrap(), vec![0.0, 1.0]);
        let v = magnitude_levels(0.1, 1.9, 12).unwrap();
        assert_eq!(v.len(), 12);
        assert!((v[1] - v[0] - 1.8 / 11.0).abs() < 1e-12);
        assert!((1.8f64 / 11.0 - 0.16364).abs() < 1e-5);
    }

    #[test]
    fn magnitude_levels_rejects_bad_input() {
        assert!(magnitude_levels(1.0, 1.0, 12).is_err());
        assert!(magnitude_levels(2.0, 1.0, 12).is_err());
        assert!(magnitude_levels(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn standard_table_has_139_entries() {
        let table = TransformTable::standard();
        assert_eq!(table.len(), 139);
        assert_eq!(table.identity_index, 0);
        assert_eq!(table.entries[0].op, OpKind::Identity);
        let leveled = ALL_OPS.iter().filter(|o| o.has_levels()).count();
        assert_eq!(leveled, 11);
        assert_eq!(leveled * 12 + 7, 139);
    }

    #[test]
    fn table_entries_are_unique_and_ordering_stable() {
        let a = TransformTable::standard();
        let b = TransformTable::standard();
        assert_eq!(a.canonical_listing(), b.canonical_listing());
        let listing = a.canonical_listing();
        let mut parts: Vec<&str> = listing.split(';').filter(|s| !s.is_empty()).collect();
        let n = parts.len();
        parts.dedup();
        assert_eq!(parts.len(), n);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn tiny_table_configs() {
        let only_identity =
            TableConfig { levels: 12, ops: vec![OpSpec { name: "identity".into(), range: None, size: None, pad: None }] };
        let t = build_transform_table(&only_identity).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.identity_index, 0);

        let with_rotate = TableConfig {
            levels: 12,
            ops: vec![
                OpSpec { name: "identity".into(), range: None, size: None, pad: None },
                OpSpec { name: "rotate".into(), range: Some([-30.0, 30.0]), size: None, pad: None },
            ],
        };
        assert_eq!(build_transform_table(&with_rotate).unwrap().len(), 13);
    }

    #[test]
    fn table_config_errors() {
        let dup = TableConfig {
            levels: 12,
            ops: vec![
                OpSpec { name: "identity".into(), range: None, size: None, pad: None },
                OpSpec { name: "identity".into(), range: None, size: None, pad: None },
            ],
        };
        assert!(build_transform_table(&dup).is_err());

        let missing_range = TableConfig {
            levels: 12,
            ops: vec![
                OpSpec { name: "identity".into(), range: None, size: None, pad: None },
                OpSpec { name: "rotate".into(), range: None, size: None, pad: None },
            ],
        };
        assert!(build_transform_table(&missing_range).is_err());

        let no_identity = TableConfig {
            levels: 12,
            ops: vec![OpSpec { name: "invert".into(), range: None, size: None, pad: None }],
        };
        assert!(build_transform_table(&no_identity).is_err());

        let unknown = TableConfig {
            levels: 12,
            ops: vec![OpSpec { name: "warp9".into(), range: None, size: None, pad: None }],
        };
        assert!(build_transform_table(&unknown).is_err());
    }

    #[test]
    fn identity_transform_is_bit_identical() {
        let img = crate::image::Image::from_data(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let t = &TransformTable::standard().entries[0];
        let mut rng = SeedFork::new(1).rng();
        assert_eq!(apply_transform(&img, t, &mut rng), img);
    }

    #[test]
    fn deterministic_ops_ignore_rng_state() {
        let img = eight_bit_test_image();
        let table = TransformTable::standard();
        for t in &table.entries {
            if t.op.is_stochastic() {
                continue;
            }
            let a = apply_transform(&img, t, &mut SeedFork::new(1).rng());
            let b = apply_transform(&img, t, &mut SeedFork::new(999).rng());
            assert_eq!(a, b, "op {} must be deterministic", t.label());
        }
    }

    #[test]
    fn geometric_ops_at_zero_magnitude_reproduce_input() {
        let img = eight_bit_test_image();
        for op in [OpKind::ShearX, OpKind::ShearY, OpKind::TranslateX, OpKind::TranslateY, OpKind::Rotate] {
            let out = apply_op_with_magnitude(&img, op, 0.0);
            for (a, b) in out.data.iter().zip(img.data.iter()) {
                assert!((a - b).abs() < 1e-12, "{op} at magnitude 0");
            }
        }
    }

    #[test]
    fn solarize_top_level_leaves_quantized_image_unchanged() {
        let img = eight_bit_test_image();
        let table = TransformTable::standard();
        let t = table
            .entries
            .iter()
            .find(|t| t.op == OpKind::Solarize && t.magnitude == Some(256.0))
            .unwrap();
        let mut rng = SeedFork::new(0).rng();
        assert_eq!(apply_transform(&img, t, &mut rng), img);
    }

    #[test]
    fn range_closure_and_shape_preservation_over_full_table() {
        let img = eight_bit_test_image();
        let table = TransformTable::standard();
        for (i, t) in table.entries.iter().enumerate() {
            let mut rng = SeedFork::new(7).fork(&[i as u64]).rng();
            let out = apply_transform(&img, t, &mut rng);
            assert!(out.same_shape(&img), "{} changed shape", t.label());
            assert!(out.in_unit_range(), "{} left unit range", t.label());
        }
    }

    fn eight_bit_test_image() -> Image {
        // 8x8 RGB with an asymmetric pattern, 8-bit-quantized intensities
        let mut img = Image::zeros(8, 8, 3);
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    let b = ((x * 31 + y * 17 + c * 53) % 256) as f64;
                    img.set(c, y, x, b / 255.0);
                }
            }
        }
        img
    }
}
