//! Audio ingestion, dataset manifests, splits and the preprocessing store.

pub mod manifest;
pub mod pipeline;
pub mod split;
pub mod store;
pub mod wav;

pub use manifest::{load_manifest, ClipRecord, DatasetManifest, Labeled, SourceKind};
pub use pipeline::{clip_image, PipelineConfig};
pub use split::{split_folds, split_holdout};
pub use store::{preprocess_dataset, ArrayStore, StoreEntry};
pub use wav::{decode_wav, read_wav};
