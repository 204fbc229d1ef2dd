use std::sync::OnceLock;

use crate::ingest::{RawDigitImage, SIDE};
use crate::SEQ_LEN;

pub const HEIGHT: usize = 28;
pub const WIDTH: usize = 112;
/// Width of five source digits side by side, before resizing.
pub const STRIP_WIDTH: usize = SEQ_LEN * SIDE;

/// A 28x112 row-major image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn zeros() -> Self {
        Self {
            pixels: vec![0.0; HEIGHT * WIDTH],
        }
    }

    /// Wraps `pixels`, clamping into `[0, 1]`. Returns `None` on a wrong length
    /// or a non-finite value.
    pub fn from_pixels(mut pixels: Vec<f32>) -> Option<Self> {
        if pixels.len() != HEIGHT * WIDTH || pixels.iter().any(|v| !v.is_finite()) {
            return None;
        }
        pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Some(Self { pixels })
    }

    /// Inverse of [`GrayImage::to_bytes`].
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        (bytes.len() == HEIGHT * WIDTH).then(|| Self {
            pixels: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        })
    }

    /// One byte per pixel, `round(v * 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Snaps every pixel to the nearest multiple of 1/255, so the in-memory
    /// image equals its serialized form.
    pub fn quantized(&self) -> Self {
        Self::from_bytes(&self.to_bytes()).expect("same shape")
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * WIDTH + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.pixels[row * WIDTH + col] = value.clamp(0.0, 1.0);
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum()
    }
}

/// Sparse horizontal resampling weights: for every output column, the first
/// source column and the normalized weights that follow it.
struct ColumnWeights {
    start: Vec<usize>,
    weights: Vec<Vec<f32>>,
}

/// Triangle-filter ("bilinear") weights for shrinking `src` columns to `dst`.
///
/// When shrinking, the filter support is widened by the scale factor so every
/// source column contributes (the antialiased bilinear used by common imaging
/// libraries). Weights for each output column are normalized to sum to one.
fn triangle_weights(src: usize, dst: usize) -> ColumnWeights {
    let scale = src as f64 / dst as f64;
    let filter_scale = scale.max(1.0);
    let support = filter_scale;
    let mut start = Vec::with_capacity(dst);
    let mut weights = Vec::with_capacity(dst);
    for x in 0..dst {
        let center = (x as f64 + 0.5) * scale;
        let lo = ((center - support).floor().max(0.0)) as usize;
        let hi = ((center + support).ceil() as usize).min(src);
        let raw: Vec<f64> = (lo..hi)
            .map(|j| (1.0 - ((j as f64 + 0.5 - center) / filter_scale).abs()).max(0.0))
            .collect();
        let total: f64 = raw.iter().sum();
        start.push(lo);
        weights.push(raw.iter().map(|w| (w / total) as f32).collect());
    }
    ColumnWeights { start, weights }
}

fn strip_weights() -> &'static ColumnWeights {
    static WEIGHTS: OnceLock<ColumnWeights> = OnceLock::new();
    WEIGHTS.get_or_init(|| triangle_weights(STRIP_WIDTH, WIDTH))
}

/// Places five 28x28 digits side by side (28x140), scales intensities by
/// 1/255 and resamples the strip to 28x112 with a bilinear filter. Height is
/// unchanged, so only columns are resampled.
pub fn concat_and_resize(parts: [&RawDigitImage; SEQ_LEN]) -> GrayImage {
    let weights = strip_weights();
    let mut out = GrayImage::zeros();
    let mut strip_row = [0f32; STRIP_WIDTH];
    for row in 0..HEIGHT {
        for (k, part) in parts.iter().enumerate() {
            for col in 0..SIDE {
                strip_row[k * SIDE + col] = part.get(row, col) as f32 / 255.0;
            }
        }
        for x in 0..WIDTH {
            let lo = weights.start[x];
            let v: f32 = weights.weights[x]
                .iter()
                .enumerate()
                .map(|(i, w)| w * strip_row[lo + i])
                .sum();
            out.pixels[row * WIDTH + x] = v.clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_parts() {
        let zero = RawDigitImage::filled(0);
        let out = concat_and_resize([&zero; 5]);
        assert!(out.pixels().iter().all(|&v| v == 0.0));

        let full = RawDigitImage::filled(255);
        let out = concat_and_resize([&full; 5]);
        assert!(out.pixels().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn weights_are_normalized() {
        let w = triangle_weights(140, 112);
        for ws in &w.weights {
            let s: f32 = ws.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        // every source column is reached
        let mut reached = [false; 140];
        for (lo, ws) in w.start.iter().zip(&w.weights) {
            for (i, &wt) in ws.iter().enumerate() {
                if wt > 0.0 {
                    reached[lo + i] = true;
                }
            }
        }
        assert!(reached.iter().all(|&r| r));
    }

    #[test]
    fn byte_round_trip() {
        let mut img = GrayImage::zeros();
        img.set(3, 7, 0.5);
        img.set(27, 111, 1.0);
        let q = img.quantized();
        assert_eq!(q.to_bytes(), img.to_bytes());
        assert!((q.get(3, 7) - 128.0 / 255.0).abs() < 1e-7);
        assert_eq!(GrayImage::from_bytes(&[0; 10]), None);
    }
}
