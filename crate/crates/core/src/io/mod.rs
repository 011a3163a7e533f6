//! File formats and video ingestion.

pub mod cache;
pub mod container;
pub mod export;
pub mod frames;
pub mod manifest;
pub mod profile;
pub mod scores;

pub use cache::FeatureCache;
pub use container::{read_tensors, write_tensors, NamedArray};
pub use export::export_error_map;
pub use frames::{read_frames, write_frames, DEFAULT_FRAME_PATTERN};
pub use manifest::{DatasetManifest, ManifestRecord, Split};
pub use profile::{read_profile, write_profile, WeightProfileFile};
pub use scores::{read_scores, write_scores};
