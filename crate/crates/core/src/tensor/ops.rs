use crate::error::{Error, Result};

use super::VideoTensor;

/// Regulariser for channel normalisation; enters the root as `eps^2`.
pub const NORMALIZE_EPS: f32 = 1e-10;

pub fn relu(input: &VideoTensor) -> VideoTensor {
    input.clone().into_relu()
}

pub fn residual_add(a: &VideoTensor, b: &VideoTensor) -> Result<VideoTensor> {
    a.clone().into_sum(b)
}

impl VideoTensor {
    /// Elementwise `max(0, v)`, reusing the allocation.
    pub fn into_relu(mut self) -> Self {
        for v in self.data_mut() {
            *v = v.max(0.0);
        }
        self
    }

    /// Elementwise sum with `other`, reusing this tensor's allocation.
    pub fn into_sum(mut self, other: &VideoTensor) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (a, b) in self.data_mut().iter_mut().zip(other.data()) {
            *a += b;
        }
        if self.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("residual sum overflowed".into()));
        }
        Ok(self)
    }
}

/// Reciprocal channel norm `1 / sqrt(sum_c v_c^2 + eps^2)` at every location.
pub(crate) fn inverse_channel_norms(input: &VideoTensor, eps: f32) -> Vec<f64> {
    let n = input.locations();
    let mut acc = vec![0.0f64; n];
    for c in 0..input.channels() {
        for (a, &v) in acc.iter_mut().zip(input.channel(c)) {
            let v = f64::from(v);
            *a += v * v;
        }
    }
    let eps2 = f64::from(eps) * f64::from(eps);
    for a in &mut acc {
        *a = 1.0 / (*a + eps2).sqrt();
    }
    acc
}

/// Divides every location's channel vector by `sqrt(sum_c v_c^2 + eps^2)`.
pub fn channel_unit_normalize(input: &VideoTensor, eps: f32) -> Result<VideoTensor> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!("normalisation eps must be positive, got {eps}")));
    }
    let inv = inverse_channel_norms(input, eps);
    let n = input.locations();
    let mut data = Vec::with_capacity(input.len());
    for c in 0..input.channels() {
        data.extend(
            input.channel(c)
                .iter()
                .zip(&inv)
                .map(|(&v, &s)| (f64::from(v) * s) as f32),
        );
    }
    debug_assert_eq!(data.len(), n * input.channels());
    Ok(VideoTensor::from_raw(input.shape(), data))
}
