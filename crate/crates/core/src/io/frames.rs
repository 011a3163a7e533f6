//! PNG frame directories.
//!
//! A video is a directory of 8-bit RGB frames named by a zero-padded
//! counter, numbered consecutively from zero.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::VideoTensor;

pub const DEFAULT_FRAME_PATTERN: &str = "frame_%06d.png";

/// A `prefix%0Nd suffix` file-name pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FramePattern {
    prefix: String,
    width: usize,
    suffix: String,
}

impl FramePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("frame pattern `{pattern}` must contain one %0Nd field"));
        let (prefix, rest) = pattern.split_once('%').ok_or_else(bad)?;
        let d = rest.find('d').ok_or_else(bad)?;
        let spec = &rest[..d];
        let width = if spec.is_empty() {
            0
        } else {
            spec.strip_prefix('0').unwrap_or(spec).parse().map_err(|_| bad())?
        };
        let suffix = &rest[d + 1..];
        if suffix.contains('%') {
            return Err(bad());
        }
        Ok(Self {
            prefix: prefix.to_string(),
            width,
            suffix: suffix.to_string(),
        })
    }

    pub fn name(&self, index: usize) -> String {
        format!("{}{:0w$}{}", self.prefix, index, self.suffix, w = self.width)
    }

    /// Frame index encoded in `file_name`, if it matches the pattern.
    pub fn index_of(&self, file_name: &str) -> Option<usize> {
        let digits = file_name.strip_prefix(&self.prefix)?.strip_suffix(&self.suffix)?;
        if digits.is_empty() || digits.len() < self.width || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok()
    }
}

fn decode_rgb8(path: &Path, index: usize) -> Result<(usize, usize, Vec<u8>)> {
    let ingest = |reason: String| Error::Ingest { index, reason };
    let file = File::open(path).map_err(|e| ingest(format!("{}: {e}", path.display())))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| ingest(format!("{}: {e}", path.display())))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Rgb || depth != png::BitDepth::Eight {
        return Err(ingest(format!(
            "{}: expected 8-bit RGB, found {color:?} at {depth:?}",
            path.display()
        )));
    }
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ingest(format!("{}: {e}", path.display())))?;
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

/// Reads every frame of `dir` into a `(3, F, H, W)` tensor scaled to `[0, 1]`.
pub fn read_frames(dir: impl AsRef<Path>, pattern: &str) -> Result<VideoTensor> {
    let dir = dir.as_ref();
    let pattern = FramePattern::parse(pattern)?;
    let mut found: BTreeMap<usize, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(i) = name.to_str().and_then(|n| pattern.index_of(n)) {
            if found.insert(i, entry.path()).is_some() {
                return Err(Error::Ingest {
                    index: i,
                    reason: "frame index appears under two file names".into(),
                });
            }
        }
    }
    if found.is_empty() {
        return Err(Error::invalid(format!("no frames matching the pattern in {}", dir.display())));
    }
    if let Some(missing) = (0..found.len()).find(|i| !found.contains_key(i)) {
        return Err(Error::Ingest {
            index: missing,
            reason: format!("missing {}", pattern.name(missing)),
        });
    }

    let paths: Vec<PathBuf> = found.into_values().collect();
    let decoded = par::map_indices(paths.len(), |i| decode_rgb8(&paths[i], i));
    let decoded: Vec<_> = decoded.into_iter().collect::<Result<_>>()?;
    let (w, h) = (decoded[0].0, decoded[0].1);
    if let Some((i, d)) = decoded.iter().enumerate().find(|(_, d)| (d.0, d.1) != (w, h)) {
        return Err(Error::Ingest {
            index: i,
            reason: format!("size {}x{} differs from frame 0 ({w}x{h})", d.0, d.1),
        });
    }

    let frames = decoded.len();
    let plane = frames * h * w;
    let mut data = vec![0.0f32; 3 * plane];
    for (f, (_, _, pixels)) in decoded.iter().enumerate() {
        for (p, rgb) in pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + f * h * w + p] = f32::from(rgb[c]) / 255.0;
            }
        }
    }
    VideoTensor::new([3, frames, h, w], data)
}

pub(crate) fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, pixels: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    writer
        .write_image_data(pixels)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    writer
        .finish()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Writes a `(3, F, H, W)` tensor as 8-bit RGB frames, creating `dir` if needed.
pub fn write_frames(video: &VideoTensor, dir: impl AsRef<Path>, pattern: &str) -> Result<()> {
    if video.channels() != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {}", video.channels())));
    }
    let dir = dir.as_ref();
    let pattern = FramePattern::parse(pattern)?;
    fs::create_dir_all(dir)?;
    let (frames, h, w) = video.extent();
    let results = par::map_indices(frames, |f| {
        let mut pixels = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    pixels.push(to_u8(video.get(c, f, y, x)));
                }
            }
        }
        write_png(&dir.join(pattern.name(f)), w, h, png::ColorType::Rgb, &pixels)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_parsing() {
        let p = FramePattern::parse(DEFAULT_FRAME_PATTERN).unwrap();
        assert_eq!(p.name(7), "frame_000007.png");
        assert_eq!(p.index_of("frame_000123.png"), Some(123));
        assert_eq!(p.index_of("frame_12.png"), None);
        assert_eq!(p.index_of("other.png"), None);
        assert!(FramePattern::parse("frame.png").is_err());
    }

    #[test]
    fn mid_gray_frames() {
        let dir = tempfile::tempdir().unwrap();
        let v = VideoTensor::filled([3, 2, 4, 4], 128.0 / 255.0);
        write_frames(&v, dir.path(), DEFAULT_FRAME_PATTERN).unwrap();
        let r = read_frames(dir.path(), DEFAULT_FRAME_PATTERN).unwrap();
        assert_eq!(r.shape(), [3, 2, 4, 4]);
        assert!(r.data().iter().all(|&x| x == 128.0 / 255.0));
    }

    #[test]
    fn gap_names_the_frame() {
        let dir = tempfile::tempdir().unwrap();
        let v = VideoTensor::filled([3, 3, 4, 4], 0.5);
        write_frames(&v, dir.path(), DEFAULT_FRAME_PATTERN).unwrap();
        fs::remove_file(dir.path().join("frame_000001.png")).unwrap();
        match read_frames(dir.path(), DEFAULT_FRAME_PATTERN) {
            Err(Error::Ingest { index, reason }) => {
                assert_eq!(index, 1);
                assert!(reason.contains("frame_000001.png"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_grayscale_and_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("frame_000000.png"), 2, 2, png::ColorType::Grayscale, &[0; 4]).unwrap();
        assert!(matches!(
            read_frames(dir.path(), DEFAULT_FRAME_PATTERN),
            Err(Error::Ingest { index: 0, .. })
        ));

        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("frame_000000.png"), 2, 2, png::ColorType::Rgb, &[0; 12]).unwrap();
        write_png(&dir.path().join("frame_000001.png"), 3, 2, png::ColorType::Rgb, &[0; 18]).unwrap();
        assert!(matches!(
            read_frames(dir.path(), DEFAULT_FRAME_PATTERN),
            Err(Error::Ingest { index: 1, .. })
        ));
    }
}
