//! The R3D-18 feature extractor.
//!
//! The network is the 18-layer ResNet with full 3x3x3 convolutions: a
//! `3x7x7` stem with spatial stride 2 followed by four stages of two basic
//! residual blocks (64, 128, 256 and 512 channels). Stages two to four halve
//! every extent in their first block and carry a strided `1x1x1` projection
//! on the skip path. The feature taps are the stem output and the output of
//! each stage, optionally preceded by the input clip itself.

mod golden;
pub mod synthetic;

pub use golden::{golden_parity, GoldenSet, TapParity, PARITY_MAX_ABS, PARITY_MEAN_ABS};

use std::io::Read;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::io::container::{read_container, ContainerKind, NamedArray};
use crate::metric::FeatureStack;
use crate::tensor::{conv3d, fold_batchnorm, BatchNorm, ConvSpec, VideoTensor};

/// Batch-norm epsilon used by the checkpoint's training framework.
pub const BATCHNORM_EPS: f32 = 1e-5;

/// Output channels of the stem and of each residual stage.
pub const TAP_CHANNELS: [usize; 5] = [64, 64, 128, 256, 512];

pub const INPUT_CHANNELS: usize = 3;

const STAGE_CHANNELS: [usize; 4] = [64, 128, 256, 512];
const STEM_KERNEL: [usize; 3] = [3, 7, 7];
const STEM_STRIDE: [usize; 3] = [1, 2, 2];
const STEM_PADDING: [usize; 3] = [1, 3, 3];

/// Smallest clip the stride chain accepts.
pub const MIN_FRAMES: usize = 2;
pub const MIN_SIDE: usize = 32;

/// Which entries of the feature stack a metric uses.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TapSelection {
    include_input: bool,
    taps: Vec<usize>,
}

impl TapSelection {
    /// `taps` are 1-based block indices; duplicates are merged.
    pub fn new(include_input: bool, taps: &[usize]) -> Result<Self> {
        let mut taps = taps.to_vec();
        taps.sort_unstable();
        taps.dedup();
        if let Some(bad) = taps.iter().find(|&&t| !(1..=5).contains(&t)) {
            return Err(Error::invalid(format!("tap index {bad} outside 1..=5")));
        }
        if taps.is_empty() && !include_input {
            return Err(Error::invalid("tap selection is empty"));
        }
        Ok(Self { include_input, taps })
    }

    /// Input clip plus all five block outputs (1027 channels).
    pub fn cgvqm5() -> Self {
        Self::new(true, &[1, 2, 3, 4, 5]).unwrap()
    }

    /// Input clip plus the first two block outputs (131 channels).
    pub fn cgvqm2() -> Self {
        Self::new(true, &[1, 2]).unwrap()
    }

    pub fn include_input(&self) -> bool {
        self.include_input
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    /// Number of stack entries.
    pub fn len(&self) -> usize {
        self.taps.len() + usize::from(self.include_input)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Deepest block that must be evaluated (0 when only the input is used).
    pub fn deepest(&self) -> usize {
        self.taps.last().copied().unwrap_or(0)
    }

    /// Layer names in stack order: `input`, `conv3d_1`, ..., `conv3d_5`.
    pub fn layer_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        if self.include_input {
            names.push("input".to_string());
        }
        names.extend(self.taps.iter().map(|t| format!("conv3d_{t}")));
        names
    }

    /// Channel count of each stack entry.
    pub fn layer_channels(&self) -> Vec<usize> {
        let mut channels = Vec::with_capacity(self.len());
        if self.include_input {
            channels.push(INPUT_CHANNELS);
        }
        channels.extend(self.taps.iter().map(|&t| TAP_CHANNELS[t - 1]));
        channels
    }
}

/// Total number of feature channels (and hence weights) for a selection.
pub fn channel_count(taps: &TapSelection) -> usize {
    taps.layer_channels().iter().sum()
}

/// Expected checkpoint record: name and dimensions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
}

fn conv_params(out: &mut Vec<ParamSpec>, conv: &str, bn: &str, cout: usize, cin: usize, kernel: [usize; 3]) {
    out.push(ParamSpec {
        name: format!("{conv}.weight"),
        dims: vec![cout, cin, kernel[0], kernel[1], kernel[2]],
    });
    for stat in ["weight", "bias", "running_mean", "running_var"] {
        out.push(ParamSpec {
            name: format!("{bn}.{stat}"),
            dims: vec![cout],
        });
    }
}

/// Every record a weight file must contain, in canonical order.
pub fn parameter_layout() -> Vec<ParamSpec> {
    let mut params = Vec::with_capacity(102);
    conv_params(&mut params, "stem.conv", "stem.bn", 64, 3, STEM_KERNEL);
    let mut cin = 64;
    for (s, &cout) in STAGE_CHANNELS.iter().enumerate() {
        for b in 0..2 {
            let p = format!("layer{}.{b}", s + 1);
            let block_in = if b == 0 { cin } else { cout };
            conv_params(&mut params, &format!("{p}.conv1"), &format!("{p}.bn1"), cout, block_in, [3, 3, 3]);
            conv_params(&mut params, &format!("{p}.conv2"), &format!("{p}.bn2"), cout, cout, [3, 3, 3]);
            if b == 0 && s > 0 {
                conv_params(
                    &mut params,
                    &format!("{p}.downsample.conv"),
                    &format!("{p}.downsample.bn"),
                    cout,
                    cin,
                    [1, 1, 1],
                );
            }
        }
        cin = cout;
    }
    for name in ["preproc.mean", "preproc.std"] {
        params.push(ParamSpec {
            name: name.to_string(),
            dims: vec![3],
        });
    }
    params
}

#[derive(Clone, Debug)]
struct BasicBlock {
    conv1: ConvSpec,
    conv2: ConvSpec,
    downsample: Option<ConvSpec>,
}

impl BasicBlock {
    fn forward(&self, x: VideoTensor) -> Result<VideoTensor> {
        let h = conv3d(&x, &self.conv1)?.into_relu();
        let h = conv3d(&h, &self.conv2)?;
        let out = match &self.downsample {
            Some(proj) => {
                let skip = conv3d(&x, proj)?;
                drop(x);
                h.into_sum(&skip)?
            }
            None => h.into_sum(&x)?,
        };
        Ok(out.into_relu())
    }
}

/// Immutable R3D-18 weights with batch norm folded into every convolution.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    stem: ConvSpec,
    stages: Vec<Vec<BasicBlock>>,
    preproc_mean: [f32; 3],
    preproc_std: [f32; 3],
    provenance: String,
}

struct RecordTable(std::collections::HashMap<String, NamedArray>);

impl RecordTable {
    fn take(&mut self, spec: &ParamSpec) -> Result<Vec<f32>> {
        let record = self
            .0
            .remove(&spec.name)
            .ok_or_else(|| Error::load(&spec.name, "missing from weight file"))?;
        if record.dims != spec.dims {
            return Err(Error::load(
                &spec.name,
                format!("shape {:?}, expected {:?}", record.dims, spec.dims),
            ));
        }
        if record.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::load(&spec.name, "contains non-finite values"));
        }
        Ok(record.data)
    }
}

impl NetworkModel {
    /// Builds the model from checkpoint records, validating names and shapes
    /// and folding every batch norm into its convolution.
    pub fn from_records(records: Vec<NamedArray>, provenance: impl Into<String>) -> Result<Self> {
        let layout = parameter_layout();
        let mut table = RecordTable(records.into_iter().map(|r| (r.name.clone(), r)).collect());
        let mut specs = layout.iter();
        let mut next = |table: &mut RecordTable| {
            let spec = specs.next().expect("layout exhausted");
            table.take(spec).map(|data| (spec.clone(), data))
        };

        let mut folded = |table: &mut RecordTable, stride: [usize; 3], padding: [usize; 3]| -> Result<ConvSpec> {
            let (wspec, weights) = next(table)?;
            let d = &wspec.dims;
            let conv = ConvSpec::new(d[1], d[0], [d[2], d[3], d[4]], stride, padding, weights, vec![0.0; d[0]])
                .map_err(|e| Error::load(&wspec.name, e.to_string()))?;
            let (gamma_spec, gamma) = next(table)?;
            let (_, beta) = next(table)?;
            let (_, running_mean) = next(table)?;
            let (var_spec, running_var) = next(table)?;
            if running_var.iter().any(|&v| v < 0.0) {
                return Err(Error::load(&var_spec.name, "negative running variance"));
            }
            let bn = BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                eps: BATCHNORM_EPS,
            };
            fold_batchnorm(&conv, &bn).map_err(|e| Error::load(&gamma_spec.name, e.to_string()))
        };

        let stem = folded(&mut table, STEM_STRIDE, STEM_PADDING)?;
        let mut stages = Vec::with_capacity(4);
        for s in 0..4 {
            let mut blocks = Vec::with_capacity(2);
            for b in 0..2 {
                let stride = if s > 0 && b == 0 { [2, 2, 2] } else { [1, 1, 1] };
                let conv1 = folded(&mut table, stride, [1, 1, 1])?;
                let conv2 = folded(&mut table, [1, 1, 1], [1, 1, 1])?;
                let downsample = if s > 0 && b == 0 {
                    Some(folded(&mut table, [2, 2, 2], [0, 0, 0])?)
                } else {
                    None
                };
                blocks.push(BasicBlock { conv1, conv2, downsample });
            }
            stages.push(blocks);
        }
        let (_, mean) = next(&mut table)?;
        let (std_spec, std) = next(&mut table)?;
        if std.iter().any(|&s| s <= 0.0) {
            return Err(Error::load(&std_spec.name, "standard deviations must be positive"));
        }
        if !table.0.is_empty() {
            let mut extra: Vec<_> = table.0.keys().cloned().collect();
            extra.sort();
            warn!("ignoring {} unused weight records: {}", extra.len(), extra.join(", "));
        }
        Ok(Self {
            stem,
            stages,
            preproc_mean: [mean[0], mean[1], mean[2]],
            preproc_std: [std[0], std[1], std[2]],
            provenance: provenance.into(),
        })
    }

    pub fn preproc_mean(&self) -> [f32; 3] {
        self.preproc_mean
    }

    pub fn preproc_std(&self) -> [f32; 3] {
        self.preproc_std
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// The folded stem convolution.
    pub fn stem(&self) -> &ConvSpec {
        &self.stem
    }

    /// Runs block `index` (1 = stem, 2..=5 = residual stages) on `x`.
    pub fn forward_block(&self, index: usize, x: VideoTensor) -> Result<VideoTensor> {
        match index {
            1 => Ok(conv3d(&x, &self.stem)?.into_relu()),
            2..=5 => self.stages[index - 2].iter().try_fold(x, |h, block| block.forward(h)),
            _ => Err(Error::invalid(format!("block index {index} outside 1..=5"))),
        }
    }
}

/// Reads a weight container and builds the model.
pub fn load_model<R: Read>(reader: R) -> Result<NetworkModel> {
    let records = read_container(reader, ContainerKind::Weights)?;
    NetworkModel::from_records(records, "stream")
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let records = read_container(std::io::BufReader::new(file), ContainerKind::Weights)?;
    NetworkModel::from_records(records, path.display().to_string())
}

/// Maps a `[0, 1]` RGB clip to the network's normalised input space.
pub fn preprocess(model: &NetworkModel, raw: &VideoTensor) -> Result<VideoTensor> {
    if raw.channels() != INPUT_CHANNELS {
        return Err(Error::shape(format!("expected 3 colour channels, got {}", raw.channels())));
    }
    if let Some(v) = raw.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
    }
    let n = raw.locations();
    let mut data = Vec::with_capacity(raw.len());
    for c in 0..INPUT_CHANNELS {
        let (m, s) = (model.preproc_mean[c], model.preproc_std[c]);
        data.extend(raw.data()[c * n..(c + 1) * n].iter().map(|&v| (v - m) / s));
    }
    VideoTensor::new(raw.shape(), data)
}

pub(crate) fn check_clip(clip: &VideoTensor) -> Result<()> {
    if clip.channels() != INPUT_CHANNELS {
        return Err(Error::shape(format!("expected 3 channels, got {}", clip.channels())));
    }
    if clip.frames() < MIN_FRAMES || clip.height() < MIN_SIDE || clip.width() < MIN_SIDE {
        return Err(Error::shape(format!(
            "clip extent {:?} too small; need at least {MIN_FRAMES} frames and {MIN_SIDE}x{MIN_SIDE} pixels",
            clip.extent()
        )));
    }
    Ok(())
}

/// Evaluates the network on a preprocessed clip and collects the selected
/// feature entries (raw, not normalised).
pub fn forward_features(model: &NetworkModel, clip: &VideoTensor, taps: &TapSelection) -> Result<FeatureStack> {
    check_clip(clip)?;
    let mut entries = Vec::with_capacity(taps.len());
    if taps.include_input() {
        entries.push(clip.clone());
    }
    let mut x = clip.clone();
    for block in 1..=taps.deepest() {
        x = model.forward_block(block, x)?;
        if taps.taps().contains(&block) {
            entries.push(x.clone());
        }
    }
    FeatureStack::new(entries, taps.layer_names())
}
