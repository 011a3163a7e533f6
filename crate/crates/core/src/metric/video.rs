use log::debug;

use crate::error::{Error, Result};
use crate::model::{check_clip, preprocess, NetworkModel};
use crate::tensor::{VideoTensor, NORMALIZE_EPS};

use super::{
    layer_error, layer_pooled, patch_windows, quality_score, ErrorAccumulator, ErrorMap, PatchSize, PatchWindow,
    PooledDiff, WeightProfile,
};

#[derive(Clone, Copy, Debug, Default)]
pub struct AnalyzeOptions {
    pub patch: PatchSize,
    /// Also build the full-resolution error map.
    pub error_map: bool,
}

/// Per-patch results for one reference/distorted pair.
#[derive(Clone, Debug)]
pub struct Analysis {
    /// Overall quality: the worst patch.
    pub quality: f64,
    pub per_patch: Vec<f64>,
    pub windows: Vec<PatchWindow>,
    pub pooled: Vec<PooledDiff>,
    pub error_map: Option<ErrorMap>,
}

/// Overall quality and per-patch scores with the default patch size.
pub fn video_quality(
    reference: &VideoTensor,
    distorted: &VideoTensor,
    model: &NetworkModel,
    profile: &WeightProfile,
) -> Result<(f64, Vec<f64>)> {
    let a = analyze(reference, distorted, model, profile, AnalyzeOptions::default())?;
    Ok((a.quality, a.per_patch))
}

/// Scores every patch of a `[0, 1]` RGB video pair and min-pools the result.
///
/// Reference and distorted patches are pushed through the network block by
/// block in lockstep so only the current activations of each are held in
/// memory. When a distorted patch is bit-identical to its reference the
/// reference activations are reused for both sides.
pub fn analyze(
    reference: &VideoTensor,
    distorted: &VideoTensor,
    model: &NetworkModel,
    profile: &WeightProfile,
    opts: AnalyzeOptions,
) -> Result<Analysis> {
    if reference.shape() != distorted.shape() {
        return Err(Error::shape(format!(
            "reference {:?} and distorted {:?} differ in shape",
            reference.shape(),
            distorted.shape()
        )));
    }
    let windows = patch_windows(reference.extent(), opts.patch);
    let taps = profile.taps();
    let mut map = opts.error_map.then(|| vec![0.0f32; reference.locations()]);
    let mut per_patch = Vec::with_capacity(windows.len());
    let mut pooled = Vec::with_capacity(windows.len());

    for (i, window) in windows.iter().enumerate() {
        let r = reference.crop(window.origin, window.extent)?;
        let d = distorted.crop(window.origin, window.extent)?;
        check_clip(&r)?;
        let identical = r == d;
        let mut xr = preprocess(model, &r)?;
        let mut xd = if identical { None } else { Some(preprocess(model, &d)?) };
        drop((r, d));

        let mut layers = Vec::with_capacity(taps.len());
        let mut acc = opts.error_map.then(|| ErrorAccumulator::new(window.extent));
        let mut reduce = |layer: usize, a: &VideoTensor, b: &VideoTensor| -> Result<()> {
            layers.push(layer_pooled(a, b, NORMALIZE_EPS));
            if let Some(acc) = acc.as_mut() {
                acc.add(&layer_error(a, b, profile.layer_omega(layer), NORMALIZE_EPS))?;
            }
            Ok(())
        };

        let mut layer = 0;
        if taps.include_input() {
            reduce(layer, &xr, xd.as_ref().unwrap_or(&xr))?;
            layer += 1;
        }
        for block in 1..=taps.deepest() {
            xr = model.forward_block(block, xr)?;
            xd = xd.map(|x| model.forward_block(block, x)).transpose()?;
            if taps.taps().contains(&block) {
                reduce(layer, &xr, xd.as_ref().unwrap_or(&xr))?;
                layer += 1;
            }
        }

        let diff = PooledDiff::new(layers)?;
        let q = quality_score(&diff, profile)?;
        if !q.is_finite() {
            return Err(Error::Numeric(format!("patch {i} produced a non-finite score")));
        }
        debug!("patch {i} at {:?}: q = {q}", window.origin);
        per_patch.push(q);
        pooled.push(diff);

        if let (Some(map), Some(acc)) = (map.as_mut(), acc) {
            paste_max(map, reference.extent(), window, acc.finish()?.tensor());
        }
    }

    let quality = per_patch.iter().copied().fold(f64::INFINITY, f64::min);
    let error_map = match map {
        Some(data) => {
            let (f, h, w) = reference.extent();
            Some(ErrorMap::new(VideoTensor::new([1, f, h, w], data)?)?)
        }
        None => None,
    };
    Ok(Analysis {
        quality,
        per_patch,
        windows,
        pooled,
        error_map,
    })
}

/// Writes a patch map into the full map; overlapping windows keep the larger value.
fn paste_max(map: &mut [f32], extent: (usize, usize, usize), window: &PatchWindow, patch: &VideoTensor) {
    let (_, h, w) = extent;
    let (f0, h0, w0) = window.origin;
    let (nf, nh, nw) = window.extent;
    for f in 0..nf {
        for y in 0..nh {
            let dst = ((f0 + f) * h + h0 + y) * w + w0;
            let src = patch.index(0, f, y, 0);
            for (d, s) in map[dst..dst + nw].iter_mut().zip(&patch.data()[src..src + nw]) {
                *d = d.max(*s);
            }
        }
    }
}
