//! Raster image with unit-interval intensities.

use crate::error::{Error, Result};

/// H×W×C raster of intensities in `[0, 1]`, stored channel-planar:
/// `data[c*H*W + r*W + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    /// New image filled with a constant intensity.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Image {
        Image {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Image {
        Image::filled(height, width, channels, 0.0)
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Image> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[c * self.height * self.width + r * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, col: usize, v: f64) {
        self.data[c * self.height * self.width + r * self.width + col] = v;
    }

    /// Plane of one channel as a slice.
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// True if every intensity lies in `[0, 1]` and is finite.
    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    /// Per-pixel luminance (ITU-R 601 weights for RGB, identity for grayscale).
    pub fn luminance(&self) -> Vec<f64> {
        let n = self.pixel_count();
        if self.channels == 1 {
            return self.data.clone();
        }
        let (r, rest) = self.data.split_at(n);
        let (g, b) = rest.split_at(n);
        (0..n).map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).collect()
    }

    /// Encode as binary PPM (P6) for 3-channel or PGM (P5) for 1-channel
    /// images, 8 bits per sample.
    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        let n = self.pixel_count();
        for i in 0..n {
            for c in 0..self.channels {
                let v = (self.data[c * n + i] * 255.0).round().clamp(0.0, 255.0) as u8;
                out.push(v);
            }
        }
        out
    }
}
