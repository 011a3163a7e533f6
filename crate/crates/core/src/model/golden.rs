//! Parity check against stored reference activations.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::container::{read_container_file, ContainerKind, NamedArray};
use crate::tensor::VideoTensor;

use super::{forward_features, preprocess, NetworkModel, TapSelection};

/// Tolerances a parity run must meet.
pub const PARITY_MAX_ABS: f64 = 1e-3;
pub const PARITY_MEAN_ABS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct TapParity {
    pub name: String,
    pub shape: [usize; 4],
    pub max_abs: f64,
    pub mean_abs: f64,
}

impl TapParity {
    pub fn passes(&self) -> bool {
        self.max_abs < PARITY_MAX_ABS && self.mean_abs < PARITY_MEAN_ABS
    }
}

/// Golden input and expected activations of the five taps.
#[derive(Clone, Debug)]
pub struct GoldenSet {
    pub input: VideoTensor,
    pub taps: Vec<VideoTensor>,
}

impl GoldenSet {
    pub fn from_records(records: Vec<NamedArray>) -> Result<Self> {
        let mut input = None;
        let mut taps: Vec<Option<VideoTensor>> = vec![None; 5];
        for r in records {
            let name = r.name.clone();
            if name == "golden.input" {
                input = Some(r.into_tensor()?);
            } else if let Some(k) = name.strip_prefix("golden.tap").and_then(|k| k.parse::<usize>().ok()) {
                if !(1..=5).contains(&k) {
                    return Err(Error::format(format!("unexpected golden record `{name}`")));
                }
                taps[k - 1] = Some(r.into_tensor()?);
            }
        }
        let input = input.ok_or_else(|| Error::format("golden file lacks `golden.input`"))?;
        let taps = taps
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| Error::format(format!("golden file lacks `golden.tap{}`", i + 1))))
            .collect::<Result<_>>()?;
        Ok(Self { input, taps })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_records(read_container_file(path, ContainerKind::Tensors)?)
    }
}

/// Runs the model on the golden input and measures the deviation of every tap.
pub fn golden_parity(model: &NetworkModel, golden: &GoldenSet) -> Result<Vec<TapParity>> {
    let clip = preprocess(model, &golden.input)?;
    let taps = TapSelection::new(false, &[1, 2, 3, 4, 5])?;
    let feats = forward_features(model, &clip, &taps)?;
    feats
        .entries()
        .iter()
        .zip(&golden.taps)
        .enumerate()
        .map(|(i, (got, want))| {
            let name = format!("golden.tap{}", i + 1);
            if got.shape() != want.shape() {
                return Err(Error::shape(format!(
                    "{name}: computed {:?}, stored {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
            let mut max_abs = 0.0f64;
            let mut sum = 0.0f64;
            for (a, b) in got.data().iter().zip(want.data()) {
                let d = (f64::from(*a) - f64::from(*b)).abs();
                max_abs = max_abs.max(d);
                sum += d;
            }
            Ok(TapParity {
                name,
                shape: got.shape(),
                max_abs,
                mean_abs: sum / got.len() as f64,
            })
        })
        .collect()
}
