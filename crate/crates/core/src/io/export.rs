//! Error-map artifacts: the raw map as a tensor file plus grayscale frames.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::container::write_tensors;
use crate::io::frames::{to_u8, write_png, FramePattern, DEFAULT_FRAME_PATTERN};
use crate::metric::ErrorMap;
use crate::par;

pub const ERROR_MAP_FILE: &str = "error_map.cgtv";
pub const ERROR_MAP_RECORD: &str = "error_map";
pub const FRAMES_DIR: &str = "frames";

/// The value below which 99.9% of the map lies (nearest rank).
pub fn auto_vmax(map: &ErrorMap) -> f32 {
    let mut values = map.tensor().data().to_vec();
    let rank = ((values.len() as f64 * 0.999).ceil() as usize).clamp(1, values.len()) - 1;
    let (_, v, _) = values.select_nth_unstable_by(rank, f32::total_cmp);
    *v
}

/// Writes `error_map.cgtv` and `frames/frame_%06d.png` under `out_dir`.
///
/// Frames show `clamp(v / vmax, 0, 1)` as 8-bit gray; without `vmax` the
/// 99.9th percentile is used. A non-positive scale renders black frames.
/// Returns the scale used.
pub fn export_error_map(map: &ErrorMap, out_dir: impl AsRef<Path>, vmax: Option<f32>) -> Result<f32> {
    let out_dir = out_dir.as_ref();
    let vmax = match vmax {
        Some(v) if !v.is_finite() || v < 0.0 => {
            return Err(Error::invalid(format!("vmax must be finite and non-negative, got {v}")))
        }
        Some(v) => v,
        None => auto_vmax(map),
    };
    let frames_dir = out_dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir)?;
    write_tensors(out_dir.join(ERROR_MAP_FILE), &[(ERROR_MAP_RECORD, map.tensor())])?;

    let pattern = FramePattern::parse(DEFAULT_FRAME_PATTERN)?;
    let t = map.tensor();
    let (frames, h, w) = t.extent();
    let results = par::map_indices(frames, |f| {
        let plane = &t.data()[f * h * w..(f + 1) * h * w];
        let pixels: Vec<u8> = if vmax > 0.0 {
            plane.iter().map(|&v| to_u8(v / vmax)).collect()
        } else {
            vec![0; h * w]
        };
        write_png(&frames_dir.join(pattern.name(f)), w, h, png::ColorType::Grayscale, &pixels)
    });
    results.into_iter().collect::<Result<()>>()?;
    Ok(vmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::container::read_tensors;
    use crate::tensor::VideoTensor;

    fn gray_pixels(path: &Path) -> Vec<u8> {
        let decoder = png::Decoder::new(fs::File::open(path).unwrap());
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!(info.color_type, png::ColorType::Grayscale);
        buf.truncate(info.buffer_size());
        buf
    }

    #[test]
    fn zero_map_gives_black_frames() {
        let dir = tempfile::tempdir().unwrap();
        let map = ErrorMap::new(VideoTensor::zeros([1, 2, 3, 4])).unwrap();
        export_error_map(&map, dir.path(), None).unwrap();
        let px = gray_pixels(&dir.path().join("frames/frame_000001.png"));
        assert_eq!(px, vec![0; 12]);
    }

    #[test]
    fn constant_map_at_vmax_is_white() {
        let dir = tempfile::tempdir().unwrap();
        let map = ErrorMap::new(VideoTensor::filled([1, 1, 2, 2], 0.7)).unwrap();
        assert_eq!(export_error_map(&map, dir.path(), Some(0.7)).unwrap(), 0.7);
        assert_eq!(gray_pixels(&dir.path().join("frames/frame_000000.png")), vec![255; 4]);
    }

    #[test]
    fn raw_map_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let t = VideoTensor::from_fn([1, 3, 5, 7], |_, f, h, w| ((f * 35 + h * 7 + w) as f32).sqrt() * 0.013);
        let map = ErrorMap::new(t.clone()).unwrap();
        export_error_map(&map, dir.path(), None).unwrap();
        let back = read_tensors(dir.path().join(ERROR_MAP_FILE)).unwrap();
        assert_eq!(back[0].0, ERROR_MAP_RECORD);
        assert_eq!(back[0].1, t);
    }

    #[test]
    fn auto_scale_is_high_percentile() {
        let t = VideoTensor::from_fn([1, 1, 1, 2000], |_, _, _, w| w as f32);
        let map = ErrorMap::new(t).unwrap();
        assert_eq!(auto_vmax(&map), 1997.0);
    }
}
