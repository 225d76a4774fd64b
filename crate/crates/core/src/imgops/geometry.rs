//! Geometric transforms: inverse-mapped affine warps with bilinear sampling.
//!
//! Out-of-bounds samples read a constant fill (mid-gray 0.5 for the warp
//! ops). `pad_crop_at` and `mirror` move whole pixels and never interpolate.

use crate::error::{Error, Result};
use crate::image::Image;

/// Fill intensity for samples outside the source raster.
pub const WARP_FILL: f64 = 0.5;

#[inline]
fn fetch(plane: &[f64], h: i64, w: i64, y: i64, x: i64, fill: f64) -> f64 {
    if y >= 0 && y < h && x >= 0 && x < w {
        plane[(y * w + x) as usize]
    } else {
        fill
    }
}

#[inline]
fn sample_bilinear(plane: &[f64], h: usize, w: usize, sy: f64, sx: f64, fill: f64) -> f64 {
    let y0 = sy.floor();
    let x0 = sx.floor();
    let dy = sy - y0;
    let dx = sx - x0;
    let (y0, x0) = (y0 as i64, x0 as i64);
    let (h, w) = (h as i64, w as i64);
    let v00 = fetch(plane, h, w, y0, x0, fill);
    let v01 = fetch(plane, h, w, y0, x0 + 1, fill);
    let v10 = fetch(plane, h, w, y0 + 1, x0, fill);
    let v11 = fetch(plane, h, w, y0 + 1, x0 + 1, fill);
    let top = v00 * (1.0 - dx) + v01 * dx;
    let bot = v10 * (1.0 - dx) + v11 * dx;
    (top * (1.0 - dy) + bot * dy).clamp(0.0, 1.0)
}

/// Warp by an inverse map `(dst_y, dst_x) -> (src_y, src_x)`.
fn warp(img: &Image, fill: f64, map: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let (h, w) = (img.height, img.width);
    let mut out = Image::zeros(h, w, img.channels);
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = map(y as f64, x as f64);
                out.set(c, y, x, sample_bilinear(src, h, w, sy, sx, fill));
            }
        }
    }
    out
}

/// Rotate content by `degrees` about the image center.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    warp(img, WARP_FILL, |y, x| {
        let dy = y - cy;
        let dx = x - cx;
        (cy - sin * dx + cos * dy, cx + cos * dx + sin * dy)
    })
}

/// Shear columns horizontally in proportion to the row offset from center.
pub fn shear_x(img: &Image, m: f64) -> Image {
    let cy = (img.height as f64 - 1.0) / 2.0;
    warp(img, WARP_FILL, |y, x| (y, x + m * (y - cy)))
}

/// Shear rows vertically in proportion to the column offset from center.
pub fn shear_y(img: &Image, m: f64) -> Image {
    let cx = (img.width as f64 - 1.0) / 2.0;
    warp(img, WARP_FILL, |y, x| (y + m * (x - cx), x))
}

/// Translate content right by `frac` of the width (negative moves left).
pub fn translate_x(img: &Image, frac: f64) -> Image {
    let shift = frac * img.width as f64;
    warp(img, WARP_FILL, |y, x| (y, x - shift))
}

/// Translate content down by `frac` of the height (negative moves up).
pub fn translate_y(img: &Image, frac: f64) -> Image {
    let shift = frac * img.height as f64;
    warp(img, WARP_FILL, |y, x| (y - shift, x))
}

/// Horizontal mirror.
pub fn mirror(img: &Image) -> Image {
    let (h, w) = (img.height, img.width);
    let mut out = Image::zeros(h, w, img.channels);
    for c in 0..img.channels {
        for y in 0..h {
            for x in 0..w {
                out.set(c, y, x, img.get(c, y, w - 1 - x));
            }
        }
    }
    out
}

/// Zero-pad by `pad` on all sides, then crop the original window at `offset`
/// (rows, cols) into the padded canvas. Offsets must lie in `0..=2*pad`.
pub fn pad_crop_at(img: &Image, pad: usize, offset: (usize, usize)) -> Result<Image> {
    let (oy, ox) = offset;
    if oy > 2 * pad || ox > 2 * pad {
        return Err(Error::InvalidArgument(format!(
            "pad_crop offset ({oy},{ox}) outside 0..={}",
            2 * pad
        )));
    }
    let (h, w) = (img.height as i64, img.width as i64);
    let (p, oy, ox) = (pad as i64, oy as i64, ox as i64);
    let mut out = Image::zeros(img.height, img.width, img.channels);
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let v = fetch(src, h, w, y + oy - p, x + ox - p, 0.0);
                out.set(c, y as usize, x as usize, v);
            }
        }
    }
    Ok(out)
}

/// Set a square patch of side `size` centered at `center` to `fill`,
/// clipped to the image bounds.
pub fn cutout_at(img: &Image, size: usize, center: (i64, i64), fill: f64) -> Image {
    let mut out = img.clone();
    if size == 0 {
        return out;
    }
    let half = (size / 2) as i64;
    let (cr, cc) = center;
    let r0 = (cr - half).max(0);
    let r1 = (cr - half + size as i64).min(img.height as i64);
    let c0 = (cc - half).max(0);
    let c1 = (cc - half + size as i64).min(img.width as i64);
    for c in 0..img.channels {
        for y in r0..r1 {
            for x in c0..c1 {
                out.set(c, y as usize, x as usize, fill);
            }
        }
    }
    out
}
