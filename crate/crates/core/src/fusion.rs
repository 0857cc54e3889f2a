//! Weighted late fusion of text and sketch scores, plus video grouping.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::bits::{cosine_distance_unchecked, BitVector};
use crate::lsh::Neighbor;
use crate::text::TextHit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    #[serde(rename = "w_t")]
    pub text: f64,
    #[serde(rename = "w_c")]
    pub color: f64,
    #[serde(rename = "w_o")]
    pub object: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }
}

impl FusionWeights {
    pub fn new(text: f64, color: f64, object: f64) -> Self {
        Self {
            text,
            color,
            object,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::new(
            self.text * factor,
            self.color * factor,
            self.object * factor,
        )
    }

    pub fn is_valid(&self) -> bool {
        [self.text, self.color, self.object]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredHit {
    pub keyframe: String,
    pub video: String,
    pub sim_t: Option<f64>,
    pub dist_c: Option<f64>,
    pub dist_o: Option<f64>,
    pub sim_all: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VideoGroup {
    pub video: String,
    pub group_score: f64,
    pub hits: Vec<ScoredHit>,
}

/// Read access to per-keyframe data needed while fusing.
pub trait FeatureSource {
    fn video_of(&self, keyframe: &str) -> Option<&str>;
    fn color_vector(&self, keyframe: &str) -> Option<&BitVector>;
    fn object_vector(&self, keyframe: &str) -> Option<&BitVector>;
}

/// One sketch modality: the query vector and its nearest-neighbor list.
#[derive(Clone, Copy, Debug)]
pub struct SketchInput<'a> {
    pub query: &'a BitVector,
    pub hits: &'a [Neighbor],
}

/// Per-modality inputs. `None` means the modality was not queried; `text`
/// holds max-normalized scores.
#[derive(Clone, Copy, Debug, Default)]
pub struct FusionInput<'a> {
    pub text: Option<&'a [TextHit]>,
    pub color: Option<SketchInput<'a>>,
    pub object: Option<SketchInput<'a>>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("query has no text, color sketch, or object sketch")]
    EmptyQuery,
    #[error("every queried modality has weight zero")]
    ZeroWeights,
    #[error("weights must be finite and non-negative")]
    InvalidWeights,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionOutcome {
    pub hits: Vec<ScoredHit>,
    /// Size of the candidate union before truncation.
    pub candidates: usize,
}

impl FusionInput<'_> {
    fn text_present(&self) -> bool {
        self.text.is_some()
    }

    fn sketch_present(s: &Option<SketchInput<'_>>) -> bool {
        s.is_some_and(|s| !s.query.is_empty())
    }

    /// Checks weights against the present modalities and returns which of
    /// (text, color, object) take part in scoring.
    pub fn active(&self, w: &FusionWeights) -> Result<[bool; 3], FusionError> {
        if !w.is_valid() {
            return Err(FusionError::InvalidWeights);
        }
        let present = [
            self.text_present(),
            Self::sketch_present(&self.color),
            Self::sketch_present(&self.object),
        ];
        if !present.iter().any(|&p| p) {
            return Err(FusionError::EmptyQuery);
        }
        let weights = [w.text, w.color, w.object];
        let active: [bool; 3] = std::array::from_fn(|i| present[i] && weights[i] > 0.0);
        if !active.iter().any(|&a| a) {
            return Err(FusionError::ZeroWeights);
        }
        Ok(active)
    }
}

fn distance_map(on: bool, s: Option<SketchInput<'_>>) -> HashMap<&str, f64> {
    match (on, s) {
        (true, Some(s)) => s.hits.iter().map(|n| (n.id.as_str(), n.distance)).collect(),
        _ => HashMap::new(),
    }
}

/// Combines modality results as
/// `w_t * sim_t + w_c * (1 - dist_c) + w_o * (1 - dist_o)`.
///
/// Candidates are the union of the active modalities' lists. A candidate
/// missing from an active sketch list gets its exact distance recomputed
/// from `source`; one missing from the text list gets `sim_t = 0`. Inactive
/// modalities contribute nothing.
pub fn fuse(
    input: &FusionInput<'_>,
    weights: &FusionWeights,
    source: &dyn FeatureSource,
    limit: usize,
) -> Result<FusionOutcome, FusionError> {
    let [text_on, color_on, object_on] = input.active(weights)?;

    let mut candidates: BTreeSet<&str> = BTreeSet::new();
    let mut text_scores: HashMap<&str, f64> = HashMap::new();
    if text_on {
        for h in input.text.unwrap_or_default() {
            text_scores.insert(&h.keyframe, h.score);
            candidates.insert(&h.keyframe);
        }
    }
    let color_dists = distance_map(color_on, input.color);
    let object_dists = distance_map(object_on, input.object);
    candidates.extend(color_dists.keys().copied());
    candidates.extend(object_dists.keys().copied());

    let resolve = |dists: &HashMap<&str, f64>,
                   s: &Option<SketchInput<'_>>,
                   kf: &str,
                   stored: Option<&BitVector>|
     -> Option<f64> {
        dists
            .get(kf)
            .copied()
            .or_else(|| Some(cosine_distance_unchecked(s.as_ref()?.query, stored?)))
    };

    let mut hits: Vec<ScoredHit> = candidates
        .iter()
        .map(|&kf| {
            let sim_t = text_on.then(|| text_scores.get(kf).copied().unwrap_or(0.0));
            let dist_c = color_on
                .then(|| resolve(&color_dists, &input.color, kf, source.color_vector(kf)))
                .flatten();
            let dist_o = object_on
                .then(|| resolve(&object_dists, &input.object, kf, source.object_vector(kf)))
                .flatten();
            let sim_all = weights.text * sim_t.unwrap_or(0.0)
                + weights.color * (1.0 - dist_c.unwrap_or(1.0))
                + weights.object * (1.0 - dist_o.unwrap_or(1.0));
            ScoredHit {
                keyframe: kf.to_string(),
                video: source.video_of(kf).unwrap_or_default().to_string(),
                sim_t,
                dist_c,
                dist_o,
                sim_all,
            }
        })
        .collect();

    let candidates = hits.len();
    hits.sort_by(|a, b| {
        b.sim_all
            .total_cmp(&a.sim_all)
            .then_with(|| a.keyframe.cmp(&b.keyframe))
    });
    hits.truncate(limit);
    Ok(FusionOutcome { hits, candidates })
}

/// Groups hits by video. Groups are ordered by their best hit, then by video
/// id; members keep their input order.
pub fn group_by_video(hits: &[ScoredHit]) -> Vec<VideoGroup> {
    let mut groups: Vec<VideoGroup> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for h in hits {
        let i = *slot.entry(&h.video).or_insert_with(|| {
            groups.push(VideoGroup {
                video: h.video.clone(),
                group_score: f64::NEG_INFINITY,
                hits: Vec::new(),
            });
            groups.len() - 1
        });
        let g = &mut groups[i];
        g.group_score = g.group_score.max(h.sim_all);
        g.hits.push(h.clone());
    }
    groups.sort_by(|a, b| {
        b.group_score
            .total_cmp(&a.group_score)
            .then_with(|| a.video.cmp(&b.video))
    });
    groups
}
