//! Feature caches: pooled differences of every patch of every rated video.
//!
//! Stored as a tensor container. Two metadata records describe the tap
//! selection and per-layer channel counts; each patch is one record named
//! `dataset/video/patchK`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::container::{read_container_file, write_container_file, ContainerKind, NamedArray};
use crate::metric::PooledDiff;
use crate::model::TapSelection;

const META_TAPS: &str = "meta.taps";
const META_CHANNELS: &str = "meta.layer_channels";

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    taps: TapSelection,
    entries: BTreeMap<(String, String), Vec<PooledDiff>>,
}

fn check_id(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() || id.contains('/') {
        return Err(Error::invalid(format!("{kind} `{id}` must be non-empty and free of `/`")));
    }
    Ok(())
}

impl FeatureCache {
    pub fn new(taps: TapSelection) -> Self {
        Self {
            taps,
            entries: BTreeMap::new(),
        }
    }

    pub fn taps(&self) -> &TapSelection {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, dataset_id: &str, video_id: &str, patches: Vec<PooledDiff>) -> Result<()> {
        check_id("dataset id", dataset_id)?;
        check_id("video id", video_id)?;
        if patches.is_empty() {
            return Err(Error::invalid(format!("{dataset_id}/{video_id}: no patches")));
        }
        let expected = self.taps.layer_channels();
        if let Some(p) = patches.iter().find(|p| p.layer_channels() != expected) {
            return Err(Error::shape(format!(
                "{dataset_id}/{video_id}: layer channels {:?}, cache expects {expected:?}",
                p.layer_channels()
            )));
        }
        self.entries.insert((dataset_id.into(), video_id.into()), patches);
        Ok(())
    }

    pub fn get(&self, dataset_id: &str, video_id: &str) -> Option<&[PooledDiff]> {
        self.entries
            .get(&(dataset_id.to_string(), video_id.to_string()))
            .map(Vec::as_slice)
    }

    pub fn to_records(&self) -> Vec<NamedArray> {
        let mut taps = vec![if self.taps.include_input() { 1.0 } else { 0.0 }];
        taps.extend(self.taps.taps().iter().map(|&t| t as f32));
        let channels: Vec<f32> = self.taps.layer_channels().iter().map(|&c| c as f32).collect();
        let mut records = vec![
            NamedArray {
                name: META_TAPS.into(),
                dims: vec![taps.len()],
                data: taps,
            },
            NamedArray {
                name: META_CHANNELS.into(),
                dims: vec![channels.len()],
                data: channels,
            },
        ];
        for ((ds, vid), patches) in &self.entries {
            for (k, p) in patches.iter().enumerate() {
                let data: Vec<f32> = p.flat().iter().map(|&v| v as f32).collect();
                records.push(NamedArray {
                    name: format!("{ds}/{vid}/patch{k}"),
                    dims: vec![data.len()],
                    data,
                });
            }
        }
        records
    }

    pub fn from_records(records: Vec<NamedArray>) -> Result<Self> {
        let mut meta_taps = None;
        let mut meta_channels = None;
        let mut patches: BTreeMap<(String, String), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for r in records {
            match r.name.as_str() {
                META_TAPS => meta_taps = Some(r.data),
                META_CHANNELS => meta_channels = Some(r.data),
                name => {
                    let bad = || Error::format(format!("unexpected cache record `{name}`"));
                    let mut parts = name.split('/');
                    let (ds, vid, patch) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                        (Some(d), Some(v), Some(p), None) => (d, v, p),
                        _ => return Err(bad()),
                    };
                    let k: usize = patch.strip_prefix("patch").and_then(|k| k.parse().ok()).ok_or_else(bad)?;
                    let values = r.data.iter().map(|&v| f64::from(v)).collect();
                    patches
                        .entry((ds.to_string(), vid.to_string()))
                        .or_default()
                        .insert(k, values);
                }
            }
        }
        let meta_taps = meta_taps.ok_or_else(|| Error::format(format!("cache lacks `{META_TAPS}`")))?;
        let meta_channels = meta_channels.ok_or_else(|| Error::format(format!("cache lacks `{META_CHANNELS}`")))?;
        let (&flag, indices) = meta_taps
            .split_first()
            .ok_or_else(|| Error::format(format!("empty `{META_TAPS}`")))?;
        let indices: Vec<usize> = indices.iter().map(|&t| t as usize).collect();
        let taps = TapSelection::new(flag != 0.0, &indices)?;
        let channels = taps.layer_channels();
        let stored: Vec<usize> = meta_channels.iter().map(|&c| c as usize).collect();
        if stored != channels {
            return Err(Error::format(format!(
                "cache channel table {stored:?} disagrees with its taps ({channels:?})"
            )));
        }

        let mut cache = Self::new(taps);
        for ((ds, vid), by_index) in patches {
            if by_index.keys().copied().ne(0..by_index.len()) {
                return Err(Error::format(format!("{ds}/{vid}: patch records are not numbered 0..n")));
            }
            let diffs = by_index
                .into_values()
                .map(|flat| PooledDiff::from_flat(&channels, &flat))
                .collect::<Result<Vec<_>>>()?;
            cache.insert(&ds, &vid, diffs)?;
        }
        Ok(cache)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_container_file(path, ContainerKind::Tensors, &self.to_records())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_records(read_container_file(path, ContainerKind::Tensors)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diff(channels: &[usize], base: f64) -> PooledDiff {
        let n: usize = channels.iter().sum();
        let flat: Vec<f64> = (0..n).map(|i| base + i as f64 * 0.25).collect();
        PooledDiff::from_flat(channels, &flat).unwrap()
    }

    #[test]
    fn round_trip() {
        let taps = TapSelection::cgvqm2();
        let ch = taps.layer_channels();
        let mut cache = FeatureCache::new(taps);
        cache.insert("ds", "v1", vec![diff(&ch, 0.0), diff(&ch, 1.0)]).unwrap();
        cache.insert("ds", "v2", vec![diff(&ch, 2.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cgtv");
        cache.write(&path).unwrap();
        let back = FeatureCache::read(&path).unwrap();
        assert_eq!(back, cache);
        assert_eq!(back.get("ds", "v1").unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_ids_and_shapes() {
        let taps = TapSelection::cgvqm2();
        let mut cache = FeatureCache::new(taps);
        assert!(cache.insert("a/b", "v", vec![]).is_err());
        let wrong = diff(&[3, 64], 0.0);
        assert!(cache.insert("a", "v", vec![wrong]).is_err());
    }
}
