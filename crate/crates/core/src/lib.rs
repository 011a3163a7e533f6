//! CGVQM: a full-reference video quality metric computed in the feature
//! space of a frozen 3D ResNet-18.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] holds the dense `(channels, frames, height, width)` container
//!   and the numeric kernels (3-D convolution, batch-norm folding, trilinear
//!   resampling, channel normalisation).
//! * [`model`] loads the R3D-18 checkpoint and produces tapped feature stacks.
//! * [`metric`] turns two feature stacks into a quality score and an error map,
//!   including patch decomposition and min-pooling over patches.
//! * [`calibrate`] learns per-channel weights against human ratings.
//! * [`eval`] implements the statistics used to benchmark metrics.
//! * [`io`] covers the file formats and frame ingestion, and [`cli`] the
//!   `cgvqm` command-line tool.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Both paths
//! produce bit-identical results.

pub mod calibrate;
pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod metric;
pub mod model;
pub mod par;
pub mod tensor;

pub use error::{Error, Result};
pub use metric::{ErrorMap, FeatureStack, PooledDiff, WeightProfile};
pub use model::{NetworkModel, TapSelection};
pub use tensor::{ConvSpec, VideoTensor};
