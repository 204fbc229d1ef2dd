//! Single-example building blocks in CHW layout: 3x3 same-padding
//! convolution via im2col, ReLU and 2x2 max pooling.

use super::scalar::{gemm, Layout, Scalar};

/// Spatial size of a CHW feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn len(&self) -> usize {
        self.channels * self.plane()
    }

    pub const fn pooled(&self) -> Dims {
        Dims::new(self.channels, self.height / 2, self.width / 2)
    }
}

pub const KERNEL: usize = 3;
pub const TAPS: usize = KERNEL * KERNEL;

/// Unfolds `input` into a `(channels * 9) x (height * width)` patch matrix.
pub fn im2col<S: Scalar>(input: &[S], dims: Dims, cols: &mut Vec<S>) {
    let (h, w) = (dims.height, dims.width);
    cols.clear();
    cols.resize(dims.channels * TAPS * dims.plane(), S::ZERO);
    for c in 0..dims.channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (c * TAPS + ky * KERNEL + kx) * h * w;
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut cols[row + y * w..row + (y + 1) * w];
                    // dst[x] = src[x + kx - 1] where in range
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds patch gradients back onto the input.
pub fn col2im<S: Scalar>(cols: &[S], dims: Dims, output: &mut [S]) {
    let (h, w) = (dims.height, dims.width);
    output.iter_mut().for_each(|v| *v = S::ZERO);
    for c in 0..dims.channels {
        let plane = &mut output[c * h * w..(c + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (c * TAPS + ky * KERNEL + kx) * h * w;
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &cols[row + y * w..row + (y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += *s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += *s),
                    }
                }
            }
        }
    }
}

/// `out = relu(weights * cols + bias)`, `weights` is `out_channels x (in * 9)`.
pub fn conv_forward<S: Scalar>(
    weights: &[S],
    bias: &[S],
    cols: &[S],
    in_dims: Dims,
    out: &mut Vec<S>,
) {
    let out_channels = bias.len();
    let plane = in_dims.plane();
    out.clear();
    out.resize(out_channels * plane, S::ZERO);
    gemm(
        out_channels,
        in_dims.channels * TAPS,
        plane,
        weights,
        Layout::Plain,
        cols,
        Layout::Plain,
        out,
        false,
    );
    for (row, &b) in out.chunks_exact_mut(plane).zip(bias) {
        for v in row {
            let z = *v + b;
            *v = if z > S::ZERO { z } else { S::ZERO };
        }
    }
}

/// Accumulates weight and bias gradients of a convolution whose
/// pre-activation gradient is `grad_out` (`out_channels x plane`).
pub fn conv_backward_params<S: Scalar>(
    grad_out: &[S],
    cols: &[S],
    in_dims: Dims,
    grad_weights: &mut [S],
    grad_bias: &mut [S],
) {
    let out_channels = grad_bias.len();
    let plane = in_dims.plane();
    gemm(
        out_channels,
        plane,
        in_dims.channels * TAPS,
        grad_out,
        Layout::Plain,
        cols,
        Layout::Transposed,
        grad_weights,
        true,
    );
    for (row, gb) in grad_out.chunks_exact(plane).zip(grad_bias) {
        *gb += row.iter().copied().sum::<S>();
    }
}

/// Patch-matrix gradient `weights^T * grad_out`.
pub fn conv_backward_cols<S: Scalar>(
    weights: &[S],
    grad_out: &[S],
    in_dims: Dims,
    out_channels: usize,
    grad_cols: &mut Vec<S>,
) {
    let plane = in_dims.plane();
    grad_cols.clear();
    grad_cols.resize(in_dims.channels * TAPS * plane, S::ZERO);
    gemm(
        in_dims.channels * TAPS,
        out_channels,
        plane,
        weights,
        Layout::Transposed,
        grad_out,
        Layout::Plain,
        grad_cols,
        false,
    );
}

/// 2x2 stride-2 max pooling; records the flat input index of each maximum.
/// Ties go to the first element in row-major window order.
pub fn maxpool_forward<S: Scalar>(
    input: &[S],
    dims: Dims,
    out: &mut Vec<S>,
    argmax: &mut Vec<u32>,
) {
    let pooled = dims.pooled();
    out.clear();
    argmax.clear();
    out.reserve(pooled.len());
    argmax.reserve(pooled.len());
    let w = dims.width;
    for c in 0..dims.channels {
        let base = c * dims.plane();
        for y in 0..pooled.height {
            for x in 0..pooled.width {
                let top = base + 2 * y * w + 2 * x;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                argmax.push(best as u32);
            }
        }
    }
}

/// Routes pooled gradients to the recorded maxima, through the ReLU that
/// precedes the pool: a maximum of zero means the unit was inactive.
pub fn maxpool_relu_backward<S: Scalar>(
    grad_pooled: &[S],
    pooled: &[S],
    argmax: &[u32],
    input_len: usize,
    grad_input: &mut Vec<S>,
) {
    grad_input.clear();
    grad_input.resize(input_len, S::ZERO);
    for ((g, v), &idx) in grad_pooled.iter().zip(pooled).zip(argmax) {
        if *v > S::ZERO {
            grad_input[idx as usize] += *g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_center_tap_is_identity() {
        let dims = Dims::new(2, 3, 4);
        let input: Vec<f64> = (0..dims.len()).map(|i| i as f64).collect();
        let mut cols = Vec::new();
        im2col(&input, dims, &mut cols);
        for c in 0..2 {
            let row = (c * TAPS + 4) * dims.plane();
            assert_eq!(&cols[row..row + 12], &input[c * 12..(c + 1) * 12]);
        }
        // top-left tap of output (0,0) reads padding
        assert_eq!(cols[0], 0.0);
        // top-left tap of output (1,1) reads input (0,0)
        assert_eq!(cols[4 + 1], input[0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let dims = Dims::new(2, 4, 5);
        let x: Vec<f64> = (0..dims.len()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut cols = Vec::new();
        im2col(&x, dims, &mut cols);
        let y: Vec<f64> = (0..cols.len()).map(|i| ((i * 3) % 7) as f64 - 3.0).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; dims.len()];
        col2im(&y, dims, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn pooling_picks_maxima() {
        let dims = Dims::new(1, 2, 4);
        let input = vec![1.0, 5.0, 0.0, 0.0, 2.0, 3.0, 0.0, 0.0f64];
        let (mut out, mut idx) = (Vec::new(), Vec::new());
        maxpool_forward(&input, dims, &mut out, &mut idx);
        assert_eq!(out, vec![5.0, 0.0]);
        assert_eq!(idx, vec![1, 2]);
        let mut grad = Vec::new();
        maxpool_relu_backward(&[1.0, 1.0], &out, &idx, 8, &mut grad);
        assert_eq!(grad, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
