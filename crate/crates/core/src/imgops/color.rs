//! Intensity transforms on the float pixel model.
//!
//! The blend ops share one form: `out = clamp((1-m)*degenerate + m*img)`,
//! where the degenerate image is grayscale (color), mean luminance
//! (contrast), black (brightness), or box-smoothed (sharpness). Magnitude
//! 1.0 reproduces the input.

use crate::image::Image;

fn blend_with(img: &Image, degenerate: &Image, m: f64) -> Image {
    let data = img
        .data
        .iter()
        .zip(degenerate.data.iter())
        .map(|(&v, &d)| ((1.0 - m) * d + m * v).clamp(0.0, 1.0))
        .collect();
    Image { height: img.height, width: img.width, channels: img.channels, data }
}

/// Saturation blend toward the grayscale (luminance) image.
pub fn color(img: &Image, m: f64) -> Image {
    let lum = img.luminance();
    let n = img.pixel_count();
    let mut degen = Image::zeros(img.height, img.width, img.channels);
    for c in 0..img.channels {
        degen.data[c * n..(c + 1) * n].copy_from_slice(&lum);
    }
    blend_with(img, &degen, m)
}

/// Contrast blend toward the uniform mean-luminance image.
pub fn contrast(img: &Image, m: f64) -> Image {
    let lum = img.luminance();
    let mean = lum.iter().sum::<f64>() / lum.len() as f64;
    let degen = Image::filled(img.height, img.width, img.channels, mean);
    blend_with(img, &degen, m)
}

/// Brightness blend toward black.
pub fn brightness(img: &Image, m: f64) -> Image {
    let degen = Image::zeros(img.height, img.width, img.channels);
    blend_with(img, &degen, m)
}

/// Sharpness blend toward a 3x3 box-smoothed copy (replicated edges).
pub fn sharpness(img: &Image, m: f64) -> Image {
    blend_with(img, &box_smooth(img), m)
}

fn box_smooth(img: &Image) -> Image {
    let (h, w) = (img.height as i64, img.width as i64);
    let mut out = Image::zeros(img.height, img.width, img.channels);
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let sy = (y + dy).clamp(0, h - 1);
                        let sx = (x + dx).clamp(0, w - 1);
                        acc += src[(sy * w + sx) as usize];
                    }
                }
                out.set(c, y as usize, x as usize, acc / 9.0);
            }
        }
    }
    out
}

/// Pixelwise inversion `v -> 1 - v`.
pub fn invert(img: &Image) -> Image {
    let data = img.data.iter().map(|&v| 1.0 - v).collect();
    Image { height: img.height, width: img.width, channels: img.channels, data }
}

/// Stretch each channel so its min maps to 0 and its max to 1. A flat
/// channel is left unchanged.
pub fn auto_contrast(img: &Image) -> Image {
    let n = img.pixel_count();
    let mut out = img.clone();
    for c in 0..img.channels {
        let plane = img.plane(c);
        let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-12 {
            let scale = 1.0 / (hi - lo);
            for i in 0..n {
                out.data[c * n + i] = ((plane[i] - lo) * scale).clamp(0.0, 1.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_img() -> Image {
        Image::from_data(
            2,
            2,
            3,
            vec![
                0.1, 0.9, 0.4, 0.6, // R
                0.2, 0.5, 0.3, 0.8, // G
                0.7, 0.4, 0.9, 0.2, // B
            ],
        )
        .unwrap()
    }

    #[test]
    fn blend_ops_at_unit_magnitude_reproduce_input() {
        let img = test_img();
        for out in [
            color(&img, 1.0),
            contrast(&img, 1.0),
            brightness(&img, 1.0),
            sharpness(&img, 1.0),
        ] {
            for (a, b) in out.data.iter().zip(img.data.iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn brightness_zero_is_black_and_outputs_clamped() {
        let img = test_img();
        assert!(brightness(&img, 0.1).in_unit_range());
        let black = brightness(&img, 0.0);
        assert!(black.data.iter().all(|&v| v == 0.0));
        assert!(brightness(&img, 1.9).in_unit_range());
    }

    #[test]
    fn color_zero_desaturates() {
        let img = test_img();
        let gray = color(&img, 0.0);
        let n = img.pixel_count();
        for i in 0..n {
            assert!((gray.data[i] - gray.data[n + i]).abs() < 1e-12);
            assert!((gray.data[i] - gray.data[2 * n + i]).abs() < 1e-12);
        }
    }

    #[test]
    fn invert_is_involution() {
        let img = Image::from_data(1, 4, 1, vec![0.0, 10.0 / 255.0, 128.0 / 255.0, 1.0]).unwrap();
        let round_trip = invert(&invert(&img));
        for (a, b) in round_trip.data.iter().zip(img.data.iter()) {
            // exact in real arithmetic; floats may round one ulp for v < 0.5
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn auto_contrast_stretches_to_full_range() {
        let img = Image::from_data(1, 3, 1, vec![0.2, 0.5, 0.8]).unwrap();
        let out = auto_contrast(&img);
        assert!((out.get(0, 0, 0) - 0.0).abs() < 1e-12);
        assert!((out.get(0, 0, 1) - 0.5).abs() < 1e-12);
        assert!((out.get(0, 0, 2) - 1.0).abs() < 1e-12);
        // flat channel untouched
        let flat = Image::filled(2, 2, 1, 0.4);
        assert_eq!(auto_contrast(&flat), flat);
    }
}
