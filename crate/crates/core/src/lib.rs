//! Interactive keyframe retrieval engine.
//!
//! Keyframes are indexed three ways: concept labels and captions go into a
//! TF/IDF inverted index, while 16x16 dominant-color and object-location
//! masks go into random-hyperplane LSH tables keyed by their concatenated
//! bit vectors. A query combines the modalities with user weights
//!
//! ```text
//! sim_all = w_t * sim_t + w_c * (1 - dist_c) + w_o * (1 - dist_o)
//! ```
//!
//! and is presented either as a flat ranking or grouped by video.

pub mod bits;
pub mod codec;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod ingest;
pub mod lsh;
pub mod mask;
pub mod persist;
pub mod text;

pub use bits::{cosine_distance, BitVector};
pub use engine::{DisplayMode, QueryError, QueryRequest, QueryResponse, SearchEngine};
pub use error::{Error, Result};
pub use fusion::{fuse, group_by_video, FusionWeights, ScoredHit, VideoGroup};
pub use ingest::{build_indexes, load_manifest, DatasetManifest, IndexSet, KeyframeRecord};
pub use lsh::{LshConfig, LshIndex, Neighbor};
pub use mask::{
    concat_color_vector, concat_object_vector, quantize_color_masks, rasterize_object_masks,
    BinaryMask, BoundingBox, ColorMaskSet, ObjectLabel, ObjectMaskSet, PaletteColor, GRID_SIZE,
};
pub use text::{normalize_scores, tokenize, ConceptAnnotations, TextHit, TextIndex};
