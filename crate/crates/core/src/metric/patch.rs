use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Extent, VideoTensor};

/// Nominal patch extent `(frames, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSize {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl PatchSize {
    pub fn new(frames: usize, height: usize, width: usize) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("patch dimensions must be positive"));
        }
        Ok(Self { frames, height, width })
    }
}

impl Default for PatchSize {
    fn default() -> Self {
        Self {
            frames: 30,
            height: 512,
            width: 512,
        }
    }
}

impl fmt::Display for PatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.frames, self.height, self.width)
    }
}

impl FromStr for PatchSize {
    type Err = Error;

    /// Parses `F,H,W`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::invalid(format!("patch size `{s}` is not F,H,W")))?;
        match parts.as_slice() {
            &[f, h, w] => Self::new(f, h, w),
            _ => Err(Error::invalid(format!("patch size `{s}` is not F,H,W"))),
        }
    }
}

/// One patch: its origin in the video and its extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchWindow {
    pub origin: Extent,
    pub extent: Extent,
}

/// Window starts along one axis. Windows tile the axis without overlap
/// except for the last, which is shifted back so it ends at the edge.
fn axis_starts(len: usize, patch: usize) -> (Vec<usize>, usize) {
    if len <= patch {
        return (vec![0], len);
    }
    let count = len.div_ceil(patch);
    let starts = (0..count)
        .map(|k| if k + 1 == count { len - patch } else { k * patch })
        .collect();
    (starts, patch)
}

/// Patch windows covering a video of the given extent, in frame-major order.
pub fn patch_windows(extent: Extent, patch: PatchSize) -> Vec<PatchWindow> {
    let (fs, nf) = axis_starts(extent.0, patch.frames);
    let (hs, nh) = axis_starts(extent.1, patch.height);
    let (ws, nw) = axis_starts(extent.2, patch.width);
    let mut windows = Vec::with_capacity(fs.len() * hs.len() * ws.len());
    for &f in &fs {
        for &h in &hs {
            for &w in &ws {
                windows.push(PatchWindow {
                    origin: (f, h, w),
                    extent: (nf, nh, nw),
                });
            }
        }
    }
    windows
}

/// Cuts `video` into patches; see [`patch_windows`].
pub fn patch_decompose(video: &VideoTensor, patch: PatchSize) -> Result<Vec<(VideoTensor, Extent)>> {
    patch_windows(video.extent(), patch)
        .into_iter()
        .map(|w| Ok((video.crop(w.origin, w.extent)?, w.origin)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_hd_style_tiling() {
        let w = patch_windows((90, 1024, 1024), PatchSize::default());
        assert_eq!(w.len(), 12);
        assert!(w.iter().all(|p| p.extent == (30, 512, 512)));
    }

    #[test]
    fn exact_patch_is_single_window() {
        let w = patch_windows((30, 512, 512), PatchSize::default());
        assert_eq!(
            w,
            vec![PatchWindow {
                origin: (0, 0, 0),
                extent: (30, 512, 512)
            }]
        );
    }

    #[test]
    fn final_window_is_shifted_inward() {
        let w = patch_windows((45, 512, 512), PatchSize::default());
        let frames: Vec<_> = w.iter().map(|p| (p.origin.0, p.origin.0 + p.extent.0)).collect();
        assert_eq!(frames, vec![(0, 30), (15, 45)]);
        // Every frame covered; window count is ceil(45 / 30).
        let mut covered = [false; 45];
        for (a, b) in frames {
            covered[a..b].iter_mut().for_each(|c| *c = true);
        }
        assert!(covered.iter().all(|&c| c));
        assert_eq!(w.len(), 45usize.div_ceil(30));
    }

    #[test]
    fn small_videos_give_one_clamped_patch() {
        let w = patch_windows((8, 100, 700), PatchSize::default());
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].extent, (8, 100, 512));
        assert_eq!(w[1].origin, (0, 0, 188));
    }

    #[test]
    fn decompose_crops_content() {
        let v = VideoTensor::from_fn([1, 4, 2, 6], |_, f, h, w| (f * 100 + h * 10 + w) as f32);
        let p = patch_decompose(&v, PatchSize::new(2, 2, 4).unwrap()).unwrap();
        assert_eq!(p.len(), 4);
        let (t, origin) = &p[1];
        assert_eq!(*origin, (0, 0, 2));
        assert_eq!(t.get(0, 1, 1, 0), 112.0);
    }

    #[test]
    fn parses_patch_size() {
        assert_eq!("32,512,512".parse::<PatchSize>().unwrap(), PatchSize::new(32, 512, 512).unwrap());
        assert!("32,512".parse::<PatchSize>().is_err());
        assert!("0,1,1".parse::<PatchSize>().is_err());
    }
}
