//! Pseudo-label curation for unsupervised video instance segmentation.
//!
//! The pipeline takes per-frame patch features for the image and for an
//! optical-flow visualization, and
//!
//! 1. builds a thresholded affinity fusing both streams ([`affinity`]),
//! 2. cuts it repeatedly with normalized cuts to get up to three disjoint
//!    instance masks per frame ([`spectral`], [`maskcut`]),
//! 3. pairs frames up to four apart, keeps only instances whose masks
//!    overlap by more than half across the pair, and writes the result as a
//!    two-frame clip dataset ([`matching`]).
//!
//! [`eval`] scores predictions with class-agnostic video AP/AR and
//! DAVIS-style J/F, and [`synth`] generates moving-shape videos with known
//! ground truth for end-to-end checks.

pub mod affinity;
pub mod eval;
pub mod mask;
pub mod maskcut;
pub mod matching;
pub mod pipeline;
pub mod spectral;
pub mod synth;
pub mod tensor_io;

pub use affinity::{build_affinity, normalize_features, AffinityConfig, AffinityMatrix};
pub use mask::{BinaryMask, PatchMask};
pub use maskcut::{extract_masks, upsample_mask, MaskCutConfig};
pub use spectral::{binarize, solve_fiedler, Bipartition, EigenSolution, ForegroundRule};
pub use tensor_io::{DatasetFile, FeatureMap, PixelMask};
