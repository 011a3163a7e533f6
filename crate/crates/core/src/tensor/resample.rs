use crate::error::{Error, Result};
use crate::par;

use super::{Extent, VideoTensor};

/// Source taps for one output coordinate along one axis.
#[derive(Clone, Copy, Debug)]
struct AxisTap {
    lo: usize,
    hi: usize,
    frac: f64,
}

/// Half-pixel (align-corners-false) mapping from `dst` samples onto `src`,
/// clamped to the source edge.
fn axis_taps(src: usize, dst: usize) -> Vec<AxisTap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            AxisTap { lo, hi, frac: x - lo as f64 }
        })
        .collect()
}

/// Trilinear resampling of every channel to `target` frames, rows and columns.
pub fn trilinear_resample(input: &VideoTensor, target: Extent) -> Result<VideoTensor> {
    let (tf, th, tw) = target;
    if tf == 0 || th == 0 || tw == 0 {
        return Err(Error::shape(format!("empty resample target {target:?}")));
    }
    if input.extent() == target {
        return Ok(input.clone());
    }
    let (sf, sh, sw) = input.extent();
    let fz = axis_taps(sf, tf);
    let fy = axis_taps(sh, th);
    let fx = axis_taps(sw, tw);

    let plane = th * tw;
    let mut out = vec![0.0f32; input.channels() * tf * plane];
    // One chunk per output (channel, frame) plane.
    par::for_each_chunk_mut(&mut out, plane, |idx, dst| {
        let c = idx / tf;
        let z = fz[idx % tf];
        let src = input.channel(c);
        let at = |f: usize, h: usize, w: usize| f64::from(src[(f * sh + h) * sw + w]);
        for (y_i, y) in fy.iter().enumerate() {
            for (x_i, x) in fx.iter().enumerate() {
                let lerp_x = |f: usize, h: usize| at(f, h, x.lo) * (1.0 - x.frac) + at(f, h, x.hi) * x.frac;
                let lerp_y = |f: usize| lerp_x(f, y.lo) * (1.0 - y.frac) + lerp_x(f, y.hi) * y.frac;
                let v = lerp_y(z.lo) * (1.0 - z.frac) + lerp_y(z.hi) * z.frac;
                dst[y_i * tw + x_i] = v as f32;
            }
        }
    });
    Ok(VideoTensor::from_raw([input.channels(), tf, th, tw], out))
}
