//! Request handling shared by the HTTP service and the CLI.

use std::path::{Path, PathBuf};
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::Result;
use crate::fusion::{
    fuse, group_by_video, FusionError, FusionInput, FusionWeights, ScoredHit, SketchInput,
};
use crate::ingest::IndexSet;
use crate::mask::{
    concat_color_vector, concat_object_vector, ColorMaskSet, ObjectLabel, ObjectMaskSet,
    PaletteColor, GRID_SIZE,
};
use crate::persist;
use crate::text::{normalize_scores, tokenize};

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 1000;
/// Per-modality result depth relative to the requested limit.
pub const CANDIDATE_DEPTH_FACTOR: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayMode {
    #[default]
    Flat,
    Grouped,
}

fn default_limit() -> usize {
    DEFAULT_LIMIT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Base64 of the 256-byte color mask set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_mask: Option<String>,
    /// Base64 of the 320-byte object mask set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_mask: Option<String>,
    #[serde(default)]
    pub weights: FusionWeights,
    #[serde(default)]
    pub mode: DisplayMode,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

impl Default for QueryRequest {
    fn default() -> Self {
        Self {
            text: None,
            color_mask: None,
            object_mask: None,
            weights: FusionWeights::default(),
            mode: DisplayMode::Flat,
            limit: DEFAULT_LIMIT,
        }
    }
}

impl QueryRequest {
    pub fn with_color(mut self, set: &ColorMaskSet) -> Self {
        self.color_mask = Some(BASE64.encode(set.to_bytes()));
        self
    }

    pub fn with_object(mut self, set: &ObjectMaskSet) -> Self {
        self.object_mask = Some(BASE64.encode(set.to_bytes()));
        self
    }
}

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("empty query: provide text, a color sketch, or an object sketch")]
    Empty,
    #[error("malformed {field}: {message}")]
    MalformedBlob {
        field: &'static str,
        message: String,
    },
    #[error("limit must be in 1..={MAX_LIMIT}, got {0}")]
    InvalidLimit(usize),
    #[error("weights must be finite and non-negative")]
    InvalidWeights,
    #[error("all queried modalities have weight zero")]
    ZeroWeights,
}

impl From<FusionError> for QueryError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::EmptyQuery => QueryError::Empty,
            FusionError::ZeroWeights => QueryError::ZeroWeights,
            FusionError::InvalidWeights => QueryError::InvalidWeights,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HitView {
    pub keyframe_id: String,
    pub video_id: String,
    pub sim_t: Option<f64>,
    pub dist_c: Option<f64>,
    pub dist_o: Option<f64>,
    pub sim_all: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thumbnail_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupView {
    pub video_id: String,
    pub group_score: f64,
    pub hits: Vec<HitView>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ResultPayload {
    Flat { hits: Vec<HitView> },
    Grouped { groups: Vec<GroupView> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryResponse {
    #[serde(flatten)]
    pub payload: ResultPayload,
    pub timing_ms: f64,
    pub candidate_count: usize,
}

impl QueryResponse {
    /// Hits in display order, flattening groups.
    pub fn hits(&self) -> Vec<&HitView> {
        match &self.payload {
            ResultPayload::Flat { hits } => hits.iter().collect(),
            ResultPayload::Grouped { groups } => groups.iter().flat_map(|g| &g.hits).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeyframeView {
    pub keyframe_id: String,
    pub frame_index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thumbnail_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaletteEntry {
    pub name: &'static str,
    pub rgb: [u8; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigView {
    pub palette: Vec<PaletteEntry>,
    pub object_labels: Vec<&'static str>,
    pub default_weights: FusionWeights,
    pub grid_size: usize,
    pub default_limit: usize,
    pub max_limit: usize,
}

impl ConfigView {
    pub fn current() -> Self {
        Self {
            palette: PaletteColor::ALL
                .iter()
                .map(|c| PaletteEntry {
                    name: c.name(),
                    rgb: c.anchor(),
                })
                .collect(),
            object_labels: ObjectLabel::ALL.iter().map(|l| l.name()).collect(),
            default_weights: FusionWeights::default(),
            grid_size: GRID_SIZE,
            default_limit: DEFAULT_LIMIT,
            max_limit: MAX_LIMIT,
        }
    }
}

pub fn thumbnail_url(keyframe: &str) -> String {
    format!("/api/keyframes/{keyframe}/thumbnail")
}

fn decode_blob(field: &'static str, blob: &str) -> Result<Vec<u8>, QueryError> {
    BASE64
        .decode(blob.trim())
        .map_err(|e| QueryError::MalformedBlob {
            field,
            message: e.to_string(),
        })
}

/// Immutable, shareable view over one loaded index directory.
pub struct SearchEngine {
    indexes: IndexSet,
}

impl SearchEngine {
    pub fn new(indexes: IndexSet) -> Self {
        Self { indexes }
    }

    pub fn open(dir: &Path) -> Result<Self> {
        persist::load(dir).map(Self::new)
    }

    pub fn indexes(&self) -> &IndexSet {
        &self.indexes
    }

    fn hit_view(&self, h: &ScoredHit) -> HitView {
        HitView {
            keyframe_id: h.keyframe.clone(),
            video_id: h.video.clone(),
            sim_t: h.sim_t,
            dist_c: h.dist_c,
            dist_o: h.dist_o,
            sim_all: h.sim_all,
            thumbnail_url: self
                .thumbnail_path(&h.keyframe)
                .map(|_| thumbnail_url(&h.keyframe)),
        }
    }

    pub fn search(&self, req: &QueryRequest) -> Result<QueryResponse, QueryError> {
        let started = Instant::now();
        if req.limit == 0 || req.limit > MAX_LIMIT {
            return Err(QueryError::InvalidLimit(req.limit));
        }

        let color_query: Option<BitVector> = req
            .color_mask
            .as_deref()
            .map(|b| {
                let bytes = decode_blob("color_mask", b)?;
                ColorMaskSet::from_bytes(&bytes)
                    .map(|s| concat_color_vector(&s))
                    .map_err(|e| QueryError::MalformedBlob {
                        field: "color_mask",
                        message: e.to_string(),
                    })
            })
            .transpose()?;
        let object_query: Option<BitVector> = req
            .object_mask
            .as_deref()
            .map(|b| {
                let bytes = decode_blob("object_mask", b)?;
                ObjectMaskSet::from_bytes(&bytes)
                    .map(|s| concat_object_vector(&s))
                    .map_err(|e| QueryError::MalformedBlob {
                        field: "object_mask",
                        message: e.to_string(),
                    })
            })
            .transpose()?;
        let text_query = req.text.as_deref().filter(|t| !tokenize(t).is_empty());

        // Activity is decided before running any index so that weight errors
        // do not cost a search.
        let probe = FusionInput {
            text: text_query.map(|_| &[][..]),
            color: color_query.as_ref().map(|q| SketchInput {
                query: q,
                hits: &[],
            }),
            object: object_query.as_ref().map(|q| SketchInput {
                query: q,
                hits: &[],
            }),
        };
        let [text_on, color_on, object_on] = probe.active(&req.weights)?;

        let depth = CANDIDATE_DEPTH_FACTOR * req.limit;
        let text_hits = match text_query {
            Some(q) if text_on => normalize_scores(&self.indexes.text.search(q, depth)),
            _ => Vec::new(),
        };
        let sketch = |on: bool, q: &Option<BitVector>, index: &crate::lsh::LshIndex| match q {
            Some(q) if on => index.query(q, depth).expect("query length matches index"),
            _ => Vec::new(),
        };
        let color_hits = sketch(color_on, &color_query, &self.indexes.color);
        let object_hits = sketch(object_on, &object_query, &self.indexes.object);

        let input = FusionInput {
            text: text_query.map(|_| text_hits.as_slice()),
            color: color_query.as_ref().map(|q| SketchInput {
                query: q,
                hits: &color_hits,
            }),
            object: object_query.as_ref().map(|q| SketchInput {
                query: q,
                hits: &object_hits,
            }),
        };
        let fused = fuse(&input, &req.weights, &self.indexes, req.limit)?;

        let payload = match req.mode {
            DisplayMode::Flat => ResultPayload::Flat {
                hits: fused.hits.iter().map(|h| self.hit_view(h)).collect(),
            },
            DisplayMode::Grouped => ResultPayload::Grouped {
                groups: group_by_video(&fused.hits)
                    .into_iter()
                    .map(|g| GroupView {
                        video_id: g.video,
                        group_score: g.group_score,
                        hits: g.hits.iter().map(|h| self.hit_view(h)).collect(),
                    })
                    .collect(),
            },
        };
        Ok(QueryResponse {
            payload,
            timing_ms: started.elapsed().as_secs_f64() * 1e3,
            candidate_count: fused.candidates,
        })
    }

    /// Keyframes of one video in ascending frame order.
    pub fn video_keyframes(&self, video: &str) -> Option<Vec<KeyframeView>> {
        let frames = self.indexes.videos.keyframes(video)?;
        Some(
            frames
                .iter()
                .map(|e| KeyframeView {
                    keyframe_id: e.keyframe_id.clone(),
                    frame_index: e.frame_index,
                    thumbnail_url: e.has_image.then(|| thumbnail_url(&e.keyframe_id)),
                })
                .collect(),
        )
    }

    /// Image file of a keyframe whose image was read at ingest time.
    pub fn thumbnail_path(&self, keyframe: &str) -> Option<PathBuf> {
        self.indexes.videos.image_path(keyframe)
    }
}
