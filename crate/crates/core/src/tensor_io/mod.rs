//! On-disk formats: FCFT feature maps, run-length masks, and the curated
//! dataset JSON.

mod dataset;
mod features;
mod rle;

pub use dataset::{read_dataset, write_dataset, Annotation, DatasetFile, VideoEntry, CATEGORY_ID};
pub use features::{read_feature_map, write_feature_map, FeatureMap, FCFT_MAGIC, FCFT_VERSION};
pub use rle::{rle_decode, rle_encode, PixelMask};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum TensorIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad format: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: corrupt payload: expected {expected} bytes, found {found}")]
    Corrupt {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("invalid value: {0}")]
    Validation(String),
    #[error("schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },
}

impl TensorIoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
