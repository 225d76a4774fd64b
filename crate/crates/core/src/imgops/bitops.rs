//! 8-bit intensity transforms: posterize, solarize, equalize.
//!
//! These operate on `round(255*v)` and divide back, matching the integer
//! semantics their magnitude ranges imply. On 8-bit-quantized inputs the
//! round-trip is exact.

use crate::image::Image;

#[inline]
fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

#[inline]
fn from_byte(b: u8) -> f64 {
    f64::from(b) / 255.0
}

/// Keep the top `bits` bits of each 8-bit intensity. The magnitude is a real
/// number of bits and is rounded to an integer (clamped to 1..=8) here.
pub fn posterize(img: &Image, bits: f64) -> Image {
    let b = (bits.round() as i64).clamp(1, 8) as u32;
    let mask = (0xffu16 << (8 - b)) as u8;
    let data = img.data.iter().map(|&v| from_byte(to_byte(v) & mask)).collect();
    Image { height: img.height, width: img.width, channels: img.channels, data }
}

/// Invert every pixel whose 8-bit intensity reaches `threshold` (a real in
/// `[0, 256]`). At threshold 256 no pixel qualifies.
pub fn solarize(img: &Image, threshold: f64) -> Image {
    let data = img
        .data
        .iter()
        .map(|&v| {
            let b = to_byte(v);
            from_byte(if f64::from(b) >= threshold { 255 - b } else { b })
        })
        .collect();
    Image { height: img.height, width: img.width, channels: img.channels, data }
}

/// Per-channel histogram equalization over the 256 8-bit bins.
pub fn equalize(img: &Image) -> Image {
    let n = img.pixel_count();
    let mut out = img.clone();
    for c in 0..img.channels {
        let plane = img.plane(c);
        let mut hist = [0u64; 256];
        for &v in plane {
            hist[to_byte(v) as usize] += 1;
        }
        let lut = match equalize_lut(&hist) {
            Some(lut) => lut,
            None => continue,
        };
        for i in 0..n {
            out.data[c * n + i] = from_byte(lut[to_byte(plane[i]) as usize]);
        }
    }
    out
}

/// Classic equalization lookup table; `None` means the channel is left as-is
/// (at most one occupied bin, or a degenerate step).
fn equalize_lut(hist: &[u64; 256]) -> Option<[u8; 256]> {
    let nonzero: Vec<u64> = hist.iter().copied().filter(|&h| h > 0).collect();
    if nonzero.len() <= 1 {
        return None;
    }
    let total: u64 = nonzero.iter().sum();
    let step = (total - nonzero.last().unwrap()) / 255;
    if step == 0 {
        return None;
    }
    let mut lut = [0u8; 256];
    let mut n = step / 2;
    for i in 0..256 {
        lut[i] = (n / step).min(255) as u8;
        n += hist[i];
    }
    Some(lut)
}
