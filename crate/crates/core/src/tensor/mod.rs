//! Dense 4-D tensors and the kernels needed to run the network.

mod conv;
mod ops;
mod resample;

pub use conv::{conv3d, fold_batchnorm, BatchNorm, ConvSpec};
pub use ops::{channel_unit_normalize, relu, residual_add, NORMALIZE_EPS};
pub(crate) use ops::inverse_channel_norms;
pub use resample::trilinear_resample;

use crate::error::{Error, Result};

/// Spatiotemporal extent `(frames, height, width)`.
pub type Extent = (usize, usize, usize);

/// Row-major `(channels, frames, height, width)` array of `f32`.
///
/// Every dimension is at least one and every value is finite. Tensors are not
/// mutated once handed out; kernels consume or borrow them and return new ones.
#[derive(Clone, PartialEq)]
pub struct VideoTensor {
    channels: usize,
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl std::fmt::Debug for VideoTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VideoTensor")
            .field("shape", &self.shape())
            .finish_non_exhaustive()
    }
}

impl VideoTensor {
    /// Wraps `data`, checking its length and that every value is finite.
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let [c, f, h, w] = shape;
        if c == 0 || f == 0 || h == 0 || w == 0 {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        if data.len() != c * f * h * w {
            return Err(Error::shape(format!(
                "data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("element {i} of tensor {shape:?}")));
        }
        Ok(Self::from_raw(shape, data))
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        let n: usize = shape.iter().product();
        assert!(n > 0, "zero-sized tensor {shape:?}");
        Self::from_raw(shape, vec![0.0; n])
    }

    pub fn filled(shape: [usize; 4], value: f32) -> Self {
        assert!(value.is_finite());
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    /// Builds a tensor by evaluating `f(c, f, h, w)` at every element.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let [c, fr, h, w] = shape;
        let mut data = Vec::with_capacity(c * fr * h * w);
        for ci in 0..c {
            for fi in 0..fr {
                for hi in 0..h {
                    for wi in 0..w {
                        data.push(f(ci, fi, hi, wi));
                    }
                }
            }
        }
        Self::new(shape, data).expect("from_fn produced a non-finite value")
    }

    /// Internal constructor for kernels whose outputs are finite by construction.
    pub(crate) fn from_raw(shape: [usize; 4], data: Vec<f32>) -> Self {
        let [channels, frames, height, width] = shape;
        debug_assert_eq!(data.len(), channels * frames * height * width);
        Self {
            channels,
            frames,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.channels, self.frames, self.height, self.width]
    }

    pub fn extent(&self) -> Extent {
        (self.frames, self.height, self.width)
    }

    /// Number of spatiotemporal locations, `frames * height * width`.
    pub fn locations(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, c: usize, f: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(c, f, h, w)]
    }

    #[inline]
    pub fn index(&self, c: usize, f: usize, h: usize, w: usize) -> usize {
        ((c * self.frames + f) * self.height + h) * self.width + w
    }

    /// Contiguous `(frames, height, width)` block of one channel.
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.locations();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Returns the tensor with every element multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        let data: Vec<f32> = self.data.iter().map(|v| v * factor).collect();
        Self::new(self.shape(), data).expect("scaling overflowed")
    }

    /// Copies the window starting at `origin` with the given `extent`.
    pub fn crop(&self, origin: Extent, extent: Extent) -> Result<Self> {
        let (f0, h0, w0) = origin;
        let (nf, nh, nw) = extent;
        if nf == 0 || nh == 0 || nw == 0 {
            return Err(Error::shape("empty crop"));
        }
        if f0 + nf > self.frames || h0 + nh > self.height || w0 + nw > self.width {
            return Err(Error::shape(format!(
                "crop {origin:?}+{extent:?} exceeds {:?}",
                self.extent()
            )));
        }
        let mut data = Vec::with_capacity(self.channels * nf * nh * nw);
        for c in 0..self.channels {
            for f in f0..f0 + nf {
                for h in h0..h0 + nh {
                    let start = self.index(c, f, h, w0);
                    data.extend_from_slice(&self.data[start..start + nw]);
                }
            }
        }
        Ok(Self::from_raw([self.channels, nf, nh, nw], data))
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }
}
