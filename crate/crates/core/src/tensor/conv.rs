use crate::error::{Error, Result};
use crate::par::{self, SharedMut};

use super::VideoTensor;

/// Upper bound on the im2col scratch buffer per tile, in elements.
const TILE_BUDGET: usize = 1 << 20;

/// A 3-D convolution layer: kernel, stride, zero padding, weights and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    in_channels: usize,
    out_channels: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvSpec {
    /// `weights` are laid out `(out, in, kf, kh, kw)`; `bias` has one entry per
    /// output channel.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel.contains(&0) {
            return Err(Error::invalid("convolution with an empty dimension"));
        }
        if stride.contains(&0) {
            return Err(Error::invalid("convolution stride must be at least 1"));
        }
        let expected = out_channels * in_channels * kernel.iter().product::<usize>();
        if weights.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} weights, got {}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::invalid(format!(
                "expected {out_channels} bias values, got {}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite convolution parameter"));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weights,
            bias,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> [usize; 3] {
        self.kernel
    }

    pub fn stride(&self) -> [usize; 3] {
        self.stride
    }

    pub fn padding(&self) -> [usize; 3] {
        self.padding
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Kernel taps per output element, `in * kf * kh * kw`.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    /// Output extent for an input extent, or `None` when a dimension collapses.
    pub fn output_extent(&self, frames: usize, height: usize, width: usize) -> Option<(usize, usize, usize)> {
        let dim = |d: usize, axis: usize| {
            let padded = d + 2 * self.padding[axis];
            (padded >= self.kernel[axis]).then(|| (padded - self.kernel[axis]) / self.stride[axis] + 1)
        };
        Some((dim(frames, 0)?, dim(height, 1)?, dim(width, 2)?))
    }
}

/// Inference-mode batch-norm statistics for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

/// Folds inference-mode batch normalisation into the preceding convolution.
///
/// With `scale = gamma / sqrt(var + eps)` the folded layer has weights
/// `w * scale` and bias `beta + (bias - mean) * scale`.
pub fn fold_batchnorm(conv: &ConvSpec, bn: &BatchNorm) -> Result<ConvSpec> {
    let n = conv.out_channels;
    for (name, v) in [
        ("gamma", &bn.gamma),
        ("beta", &bn.beta),
        ("running_mean", &bn.running_mean),
        ("running_var", &bn.running_var),
    ] {
        if v.len() != n {
            return Err(Error::invalid(format!(
                "batch-norm {name} has {} entries, convolution has {n} output channels",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite batch-norm {name}")));
        }
    }
    if bn.eps.is_nan() || bn.eps < 0.0 || bn.running_var.iter().any(|&v| v < 0.0 || v + bn.eps <= 0.0) {
        return Err(Error::invalid("batch-norm variance must be non-negative with var + eps > 0"));
    }

    let per_out = conv.weights.len() / n;
    let mut weights = conv.weights.clone();
    let mut bias = Vec::with_capacity(n);
    for o in 0..n {
        let scale = f64::from(bn.gamma[o]) / (f64::from(bn.running_var[o]) + f64::from(bn.eps)).sqrt();
        for w in &mut weights[o * per_out..(o + 1) * per_out] {
            *w = (f64::from(*w) * scale) as f32;
        }
        let b = f64::from(bn.beta[o]) + (f64::from(conv.bias[o]) - f64::from(bn.running_mean[o])) * scale;
        bias.push(b as f32);
    }
    ConvSpec::new(
        conv.in_channels,
        conv.out_channels,
        conv.kernel,
        conv.stride,
        conv.padding,
        weights,
        bias,
    )
}

/// 3-D convolution with zero padding.
///
/// Each output element is its bias plus the sum over input channels and
/// kernel taps, reduced in `(in, kf, kh, kw)` order. Work is split into tiles
/// of whole output rows; each tile gathers its receptive fields into an
/// im2col buffer and runs one GEMM against the weight matrix.
pub fn conv3d(input: &VideoTensor, spec: &ConvSpec) -> Result<VideoTensor> {
    if input.channels() != spec.in_channels {
        return Err(Error::shape(format!(
            "convolution expects {} input channels, got {}",
            spec.in_channels,
            input.channels()
        )));
    }
    let (fo, ho, wo) = spec
        .output_extent(input.frames(), input.height(), input.width())
        .ok_or_else(|| {
            Error::shape(format!(
                "input extent {:?} too small for kernel {:?} with padding {:?}",
                input.extent(),
                spec.kernel,
                spec.padding
            ))
        })?;

    let positions = fo * ho * wo;
    let mut out = vec![0.0f32; spec.out_channels * positions];
    for (o, chunk) in out.chunks_mut(positions).enumerate() {
        chunk.fill(spec.bias[o]);
    }

    let taps = spec.fan_in();
    let pointwise = spec.kernel == [1, 1, 1] && spec.stride == [1, 1, 1] && spec.padding == [0, 0, 0];
    if pointwise {
        // The input already is the (in_channels x positions) column matrix.
        unsafe {
            gemm_into(spec, input.data(), positions, positions, out.as_mut_ptr());
        }
    } else {
        let rows_per_tile = (TILE_BUDGET / (taps * wo)).clamp(1, ho);
        let row_blocks = ho.div_ceil(rows_per_tile);
        let out_ptr = SharedMut(out.as_mut_ptr());
        par::for_each_index(fo * row_blocks, |tile| {
            let of = tile / row_blocks;
            let h0 = (tile % row_blocks) * rows_per_tile;
            let h1 = (h0 + rows_per_tile).min(ho);
            let cols = (h1 - h0) * wo;
            let mut col = vec![0.0f32; taps * cols];
            gather_columns(input, spec, of, h0..h1, wo, &mut col);
            let offset = (of * ho + h0) * wo;
            // SAFETY: tiles cover disjoint column ranges of the output matrix.
            unsafe {
                gemm_into(spec, &col, cols, positions, out_ptr.get().add(offset));
            }
        });
    }

    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("convolution output overflowed".into()));
    }
    Ok(VideoTensor::from_raw([spec.out_channels, fo, ho, wo], out))
}

/// `out[o, j] += sum_k W[o, k] * col[k, j]` for `j < cols`, with output rows
/// `out_stride` apart.
unsafe fn gemm_into(spec: &ConvSpec, col: &[f32], cols: usize, out_stride: usize, out: *mut f32) {
    let taps = spec.fan_in();
    debug_assert_eq!(col.len(), taps * cols);
    matrixmultiply::sgemm(
        spec.out_channels,
        taps,
        cols,
        1.0,
        spec.weights.as_ptr(),
        taps as isize,
        1,
        col.as_ptr(),
        cols as isize,
        1,
        1.0,
        out,
        out_stride as isize,
        1,
    );
}

/// Fills the im2col matrix (rows: `(in, kf, kh, kw)`, columns: output
/// positions of frame `of`, rows `rows`) with zero-padded input samples.
fn gather_columns(
    input: &VideoTensor,
    spec: &ConvSpec,
    of: usize,
    rows: std::ops::Range<usize>,
    wo: usize,
    col: &mut [f32],
) {
    let [kf, kh, kw] = spec.kernel;
    let [sf, sh, sw] = spec.stride;
    let [pf, ph, pw] = spec.padding;
    let (fin, hin, win) = input.extent();
    let cols = rows.len() * wo;
    let data = input.data();

    let mut r = 0;
    for ci in 0..spec.in_channels {
        for a in 0..kf {
            let fi = (of * sf + a) as isize - pf as isize;
            for b in 0..kh {
                for c in 0..kw {
                    let dst = &mut col[r * cols..(r + 1) * cols];
                    r += 1;
                    if fi < 0 || fi >= fin as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    // Output columns whose input column lands inside [0, win).
                    let lo = if pw > c { (pw - c).div_ceil(sw) } else { 0 };
                    let hi = if win + pw > c { ((win + pw - c - 1) / sw + 1).min(wo) } else { 0 };
                    for (k, oh) in rows.clone().enumerate() {
                        let row = &mut dst[k * wo..(k + 1) * wo];
                        let hi_idx = (oh * sh + b) as isize - ph as isize;
                        if hi_idx < 0 || hi_idx >= hin as isize || lo >= hi {
                            row.fill(0.0);
                            continue;
                        }
                        let base = input.index(ci, fi as usize, hi_idx as usize, 0);
                        let src = &data[base..base + win];
                        row[..lo].fill(0.0);
                        row[hi..].fill(0.0);
                        let first = lo * sw + c - pw;
                        if sw == 1 {
                            row[lo..hi].copy_from_slice(&src[first..first + (hi - lo)]);
                        } else {
                            for (dst, src) in row[lo..hi].iter_mut().zip(src[first..].iter().step_by(sw)) {
                                *dst = *src;
                            }
                        }
                    }
                }
            }
        }
    }
}
