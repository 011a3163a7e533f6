//! JSON serialisation of weight profiles.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::WeightProfile;
use crate::model::TapSelection;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapsFile {
    pub include_input: bool,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub name: String,
    pub channels: usize,
    pub omega: Vec<f64>,
}

/// On-disk form of a [`WeightProfile`], with weights grouped per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightProfileFile {
    pub label: String,
    pub alpha: f64,
    pub taps: TapsFile,
    pub layers: Vec<LayerFile>,
}

impl From<&WeightProfile> for WeightProfileFile {
    fn from(p: &WeightProfile) -> Self {
        let taps = p.taps();
        let layers = taps
            .layer_names()
            .into_iter()
            .zip(taps.layer_channels())
            .enumerate()
            .map(|(l, (name, channels))| LayerFile {
                name,
                channels,
                omega: p.layer_omega(l).to_vec(),
            })
            .collect();
        Self {
            label: p.label().to_string(),
            alpha: p.alpha(),
            taps: TapsFile {
                include_input: taps.include_input(),
                indices: taps.taps().to_vec(),
            },
            layers,
        }
    }
}

impl WeightProfileFile {
    pub fn into_profile(self) -> Result<WeightProfile> {
        let taps = TapSelection::new(self.taps.include_input, &self.taps.indices)?;
        let names = taps.layer_names();
        let channels = taps.layer_channels();
        if self.layers.len() != names.len() {
            return Err(Error::invalid(format!(
                "profile lists {} layers, tap selection has {}",
                self.layers.len(),
                names.len()
            )));
        }
        let mut omega = Vec::with_capacity(channels.iter().sum());
        for (layer, (name, c)) in self.layers.into_iter().zip(names.iter().zip(&channels)) {
            if layer.name != *name {
                return Err(Error::invalid(format!("profile layer `{}` where `{name}` was expected", layer.name)));
            }
            if layer.channels != *c || layer.omega.len() != *c {
                return Err(Error::invalid(format!(
                    "profile layer `{name}` declares {} channels with {} weights; expected {c}",
                    layer.channels,
                    layer.omega.len()
                )));
            }
            omega.extend(layer.omega);
        }
        WeightProfile::new(taps, omega, self.alpha, self.label)
    }
}

pub fn profile_to_json(profile: &WeightProfile) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&WeightProfileFile::from(profile))?;
    s.push('\n');
    Ok(s)
}

pub fn profile_from_json(text: &str) -> Result<WeightProfile> {
    serde_json::from_str::<WeightProfileFile>(text)?.into_profile()
}

pub fn write_profile(path: impl AsRef<Path>, profile: &WeightProfile) -> Result<()> {
    fs::write(path, profile_to_json(profile)?)?;
    Ok(())
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<WeightProfile> {
    profile_from_json(&fs::read_to_string(path)?)
}
