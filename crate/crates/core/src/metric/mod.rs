//! Quality scores and error maps from pairs of feature stacks.
//!
//! Each feature entry is unit-normalised along channels, the reference and
//! distorted entries are differenced, and the squared difference is weighted
//! per channel by `omega^2`. Averaging over locations and summing over layers
//! gives the distance that is subtracted from the quality ceiling `alpha`;
//! keeping the locations and resampling each layer to the input resolution
//! gives the error map.

mod patch;
mod video;

pub use patch::{patch_decompose, patch_windows, PatchSize, PatchWindow};
pub use video::{analyze, video_quality, Analysis, AnalyzeOptions};

use crate::error::{Error, Result};
use crate::model::{channel_count, TapSelection};
use crate::par;
use crate::tensor::inverse_channel_norms;
use crate::tensor::{trilinear_resample, Extent, VideoTensor};

/// Default quality ceiling, the score of an undistorted video on a DMOS scale.
pub const DEFAULT_ALPHA: f64 = 100.0;

/// Ordered feature entries for one clip, with a name per entry.
#[derive(Clone, Debug)]
pub struct FeatureStack {
    entries: Vec<VideoTensor>,
    layer_names: Vec<String>,
}

impl FeatureStack {
    pub fn new(entries: Vec<VideoTensor>, layer_names: Vec<String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("feature stack has no entries"));
        }
        if entries.len() != layer_names.len() {
            return Err(Error::invalid(format!(
                "{} feature entries but {} layer names",
                entries.len(),
                layer_names.len()
            )));
        }
        Ok(Self { entries, layer_names })
    }

    pub fn entries(&self) -> &[VideoTensor] {
        &self.entries
    }

    pub fn layer_names(&self) -> &[String] {
        &self.layer_names
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn layer_channels(&self) -> Vec<usize> {
        self.entries.iter().map(VideoTensor::channels).collect()
    }

    fn check_pair(&self, other: &FeatureStack) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "feature stacks have {} and {} entries",
                self.len(),
                other.len()
            )));
        }
        for (i, (a, b)) in self.entries.iter().zip(&other.entries).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::shape(format!(
                    "entry {} ({}): {:?} vs {:?}",
                    i,
                    self.layer_names[i],
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Per-layer, per-channel mean squared difference of normalised features.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledDiff {
    per_layer: Vec<Vec<f64>>,
}

impl PooledDiff {
    pub fn new(per_layer: Vec<Vec<f64>>) -> Result<Self> {
        if per_layer.iter().flatten().any(|&s| s.is_nan() || s < 0.0 || !s.is_finite()) {
            return Err(Error::invalid("pooled differences must be finite and non-negative"));
        }
        Ok(Self { per_layer })
    }

    /// Splits a flat channel vector according to `layer_channels`.
    pub fn from_flat(layer_channels: &[usize], flat: &[f64]) -> Result<Self> {
        let total: usize = layer_channels.iter().sum();
        if flat.len() != total {
            return Err(Error::shape(format!(
                "{} pooled values for {total} channels",
                flat.len()
            )));
        }
        let mut rest = flat;
        let mut per_layer = Vec::with_capacity(layer_channels.len());
        for &c in layer_channels {
            let (head, tail) = rest.split_at(c);
            per_layer.push(head.to_vec());
            rest = tail;
        }
        Self::new(per_layer)
    }

    pub fn per_layer(&self) -> &[Vec<f64>] {
        &self.per_layer
    }

    pub fn total_channels(&self) -> usize {
        self.per_layer.iter().map(Vec::len).sum()
    }

    pub fn layer_channels(&self) -> Vec<usize> {
        self.per_layer.iter().map(Vec::len).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.per_layer.iter().flatten().copied().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.per_layer.iter().flatten().all(|&s| s == 0.0)
    }
}

/// Calibrated channel weights `omega`, the ceiling `alpha` and the feature
/// taps they apply to.
///
/// Only `omega^2` enters any output, so the sign of a weight is irrelevant.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightProfile {
    omega: Vec<f64>,
    alpha: f64,
    taps: TapSelection,
    label: String,
}

impl WeightProfile {
    pub fn new(taps: TapSelection, omega: Vec<f64>, alpha: f64, label: impl Into<String>) -> Result<Self> {
        let expected = channel_count(&taps);
        if omega.len() != expected {
            return Err(Error::shape(format!(
                "{} weights for a selection with {expected} channels",
                omega.len()
            )));
        }
        if !alpha.is_finite() || omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weight profile contains non-finite values"));
        }
        Ok(Self {
            omega,
            alpha,
            taps,
            label: label.into(),
        })
    }

    /// Every weight set to one: the uncalibrated metric.
    pub fn uniform(taps: TapSelection, alpha: f64) -> Self {
        let label = if taps == TapSelection::cgvqm5() {
            "CGVQM-5 (uniform)".to_string()
        } else if taps == TapSelection::cgvqm2() {
            "CGVQM-2 (uniform)".to_string()
        } else {
            "uniform".to_string()
        };
        let n = channel_count(&taps);
        Self::new(taps, vec![1.0; n], alpha, label).expect("uniform profile is valid")
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn taps(&self) -> &TapSelection {
        &self.taps
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Weights of stack entry `layer`.
    pub fn layer_omega(&self, layer: usize) -> &[f64] {
        let channels = self.taps.layer_channels();
        let start: usize = channels[..layer].iter().sum();
        &self.omega[start..start + channels[layer]]
    }
}

/// Error map at the input resolution, one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    map: VideoTensor,
}

impl ErrorMap {
    pub fn new(map: VideoTensor) -> Result<Self> {
        if map.channels() != 1 {
            return Err(Error::shape(format!("error map has {} channels", map.channels())));
        }
        if map.data().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("error map has negative values"));
        }
        Ok(Self { map })
    }

    pub fn tensor(&self) -> &VideoTensor {
        &self.map
    }

    pub fn into_tensor(self) -> VideoTensor {
        self.map
    }

    pub fn extent(&self) -> Extent {
        self.map.extent()
    }

    pub fn is_zero(&self) -> bool {
        self.map.data().iter().all(|&v| v == 0.0)
    }

    /// Display rescaling `max(0, gain * v + offset)`, used to bring raw map
    /// units onto a perceptual label range.
    pub fn rescaled(&self, gain: f32, offset: f32) -> Result<Self> {
        let data = self.map.data().iter().map(|&v| (gain * v + offset).max(0.0)).collect();
        Self::new(VideoTensor::new(self.map.shape(), data)?)
    }
}

/// `mean over locations of (a_norm - b_norm)^2`, per channel.
pub(crate) fn layer_pooled(a: &VideoTensor, b: &VideoTensor, eps: f32) -> Vec<f64> {
    debug_assert_eq!(a.shape(), b.shape());
    let ia = inverse_channel_norms(a, eps);
    let ib = inverse_channel_norms(b, eps);
    let n = a.locations() as f64;
    par::map_indices(a.channels(), |c| {
        let mut acc = 0.0f64;
        for (((&x, &y), &sx), &sy) in a.channel(c).iter().zip(b.channel(c)).zip(&ia).zip(&ib) {
            let d = f64::from(x) * sx - f64::from(y) * sy;
            acc += d * d;
        }
        acc / n
    })
}

/// `sqrt(sum_c omega_c^2 (a_norm - b_norm)^2)` at every location, one channel.
pub(crate) fn layer_error(a: &VideoTensor, b: &VideoTensor, omega: &[f64], eps: f32) -> VideoTensor {
    debug_assert_eq!(a.shape(), b.shape());
    debug_assert_eq!(a.channels(), omega.len());
    let ia = inverse_channel_norms(a, eps);
    let ib = inverse_channel_norms(b, eps);
    let mut acc = vec![0.0f64; a.locations()];
    for (c, w) in omega.iter().enumerate() {
        let w2 = w * w;
        for ((((s, &x), &y), &sx), &sy) in acc.iter_mut().zip(a.channel(c)).zip(b.channel(c)).zip(&ia).zip(&ib) {
            let d = f64::from(x) * sx - f64::from(y) * sy;
            *s += w2 * d * d;
        }
    }
    let data = acc.into_iter().map(|s| s.sqrt() as f32).collect();
    VideoTensor::from_raw([1, a.frames(), a.height(), a.width()], data)
}

/// Pooled squared differences between two raw feature stacks.
pub fn pooled_diff(ref_feats: &FeatureStack, dist_feats: &FeatureStack, eps: f32) -> Result<PooledDiff> {
    ref_feats.check_pair(dist_feats)?;
    let per_layer = ref_feats
        .entries
        .iter()
        .zip(&dist_feats.entries)
        .map(|(a, b)| layer_pooled(a, b, eps))
        .collect();
    PooledDiff::new(per_layer)
}

/// `alpha - sum over layers and channels of omega^2 * s`.
pub fn quality_score(pooled: &PooledDiff, profile: &WeightProfile) -> Result<f64> {
    if pooled.layer_channels() != profile.taps.layer_channels() {
        return Err(Error::shape(format!(
            "pooled layers {:?} do not match profile layers {:?}",
            pooled.layer_channels(),
            profile.taps.layer_channels()
        )));
    }
    let distance: f64 = pooled
        .per_layer
        .iter()
        .flatten()
        .zip(&profile.omega)
        .map(|(s, w)| w * w * s)
        .sum();
    Ok(profile.alpha - distance)
}

/// Per-location weighted feature distance, resampled to `target` and summed
/// over layers.
pub fn error_map(
    ref_feats: &FeatureStack,
    dist_feats: &FeatureStack,
    profile: &WeightProfile,
    target: Extent,
    eps: f32,
) -> Result<ErrorMap> {
    ref_feats.check_pair(dist_feats)?;
    if ref_feats.layer_channels() != profile.taps.layer_channels() {
        return Err(Error::shape("feature stack does not match the profile's taps"));
    }
    let mut acc = ErrorAccumulator::new(target);
    for (l, (a, b)) in ref_feats.entries.iter().zip(&dist_feats.entries).enumerate() {
        acc.add(&layer_error(a, b, profile.layer_omega(l), eps))?;
    }
    acc.finish()
}

/// Sums per-layer distance maps after resampling them to a common extent.
pub(crate) struct ErrorAccumulator {
    target: Extent,
    sum: Vec<f32>,
}

impl ErrorAccumulator {
    pub(crate) fn new(target: Extent) -> Self {
        Self {
            target,
            sum: vec![0.0; target.0 * target.1 * target.2],
        }
    }

    pub(crate) fn add(&mut self, layer_map: &VideoTensor) -> Result<()> {
        let up = trilinear_resample(layer_map, self.target)?;
        for (s, v) in self.sum.iter_mut().zip(up.data()) {
            *s += v;
        }
        Ok(())
    }

    pub(crate) fn finish(self) -> Result<ErrorMap> {
        let (f, h, w) = self.target;
        ErrorMap::new(VideoTensor::new([1, f, h, w], self.sum)?)
    }
}
