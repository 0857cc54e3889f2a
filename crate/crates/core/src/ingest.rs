//! Manifest loading and the indexing pipeline.
//!
//! Each manifest record contributes its annotations to the text index. When
//! its keyframe image can be read, the color and object masks are computed
//! and their vectors go into the two LSH indexes and the feature store;
//! otherwise the record stays text-only and is counted as skipped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::fusion::FeatureSource;
use crate::lsh::{LshConfig, LshIndex};
use crate::mask::{
    concat_color_vector, concat_object_vector, quantize_color_masks, rasterize_object_masks,
    BoundingBox, ColorMaskSet, ObjectMaskSet,
};
use crate::text::{ConceptAnnotations, LabelScore, TextIndex};

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestLine {
    pub keyframe_id: String,
    pub video_id: String,
    pub frame_index: u32,
    pub image: String,
    #[serde(default)]
    pub objects: Vec<LabelScore>,
    #[serde(default)]
    pub scenes: Vec<LabelScore>,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub boxes: Vec<BoundingBox>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeRecord {
    pub keyframe_id: String,
    pub video_id: String,
    pub frame_index: u32,
    pub image_path: String,
    pub annotations: ConceptAnnotations,
    pub boxes: Vec<BoundingBox>,
}

impl From<ManifestLine> for KeyframeRecord {
    fn from(l: ManifestLine) -> Self {
        Self {
            keyframe_id: l.keyframe_id,
            video_id: l.video_id,
            frame_index: l.frame_index,
            image_path: l.image,
            annotations: ConceptAnnotations {
                objects: l.objects,
                scenes: l.scenes,
                caption: l.caption,
            },
            boxes: l.boxes,
        }
    }
}

impl From<&KeyframeRecord> for ManifestLine {
    fn from(r: &KeyframeRecord) -> Self {
        Self {
            keyframe_id: r.keyframe_id.clone(),
            video_id: r.video_id.clone(),
            frame_index: r.frame_index,
            image: r.image_path.clone(),
            objects: r.annotations.objects.clone(),
            scenes: r.annotations.scenes.clone(),
            caption: r.annotations.caption.clone(),
            boxes: r.boxes.clone(),
        }
    }
}

impl KeyframeRecord {
    fn validate(&self) -> Result<()> {
        if self.keyframe_id.trim().is_empty() {
            return Err(Error::invalid("empty keyframe_id"));
        }
        if self.video_id.trim().is_empty() {
            return Err(Error::invalid("empty video_id"));
        }
        self.annotations.validate()?;
        for b in &self.boxes {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<KeyframeRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl DatasetManifest {
    /// Validates records as a whole (unique ids, unique frame indexes per
    /// video, non-empty) and fills in count metadata.
    pub fn from_records(records: Vec<KeyframeRecord>) -> Result<Self> {
        Self::from_numbered(records.into_iter().enumerate().map(|(i, r)| (i + 1, r)))
    }

    fn from_numbered(numbered: impl IntoIterator<Item = (usize, KeyframeRecord)>) -> Result<Self> {
        let mut records = Vec::new();
        let mut ids: HashSet<String> = HashSet::new();
        let mut frames: HashSet<(String, u32)> = HashSet::new();
        for (line, r) in numbered {
            r.validate().map_err(|e| Error::Manifest {
                line,
                message: e.to_string(),
            })?;
            if !ids.insert(r.keyframe_id.clone()) {
                return Err(Error::Manifest {
                    line,
                    message: format!("duplicate keyframe_id {:?}", r.keyframe_id),
                });
            }
            if !frames.insert((r.video_id.clone(), r.frame_index)) {
                return Err(Error::Manifest {
                    line,
                    message: format!(
                        "duplicate frame_index {} in video {:?}",
                        r.frame_index, r.video_id
                    ),
                });
            }
            records.push(r);
        }
        if records.is_empty() {
            return Err(Error::EmptyManifest);
        }
        let videos: HashSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
        let metadata = BTreeMap::from([
            ("records".to_string(), records.len().to_string()),
            ("videos".to_string(), videos.len().to_string()),
        ]);
        Ok(Self { records, metadata })
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut numbered = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ManifestLine =
                serde_json::from_str(&line).map_err(|e| Error::Manifest {
                    line: line_no,
                    message: e.to_string(),
                })?;
            numbered.push((line_no, KeyframeRecord::from(parsed)));
        }
        Self::from_numbered(numbered)
    }

    /// Records whose image file does not exist under `image_root`.
    pub fn missing_images(&self, image_root: &Path) -> Vec<&KeyframeRecord> {
        self.records
            .iter()
            .filter(|r| !image_root.join(&r.image_path).is_file())
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(&ManifestLine::from(r)).expect("serializable"));
            out.push('\n');
        }
        out
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = fs::File::open(path)?;
    let mut manifest = DatasetManifest::parse(BufReader::new(file))?;
    if let Some(name) = path.file_name() {
        manifest
            .metadata
            .insert("source".into(), name.to_string_lossy().into_owned());
    }
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeFeatures {
    pub color: ColorMaskSet,
    pub object: ObjectMaskSet,
    pub color_vector: BitVector,
    pub object_vector: BitVector,
}

impl KeyframeFeatures {
    pub fn new(color: ColorMaskSet, object: ObjectMaskSet) -> Self {
        Self {
            color_vector: concat_color_vector(&color),
            object_vector: concat_object_vector(&object),
            color,
            object,
        }
    }
}

/// Stored masks for every keyframe with a readable image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureStore {
    entries: BTreeMap<String, KeyframeFeatures>,
}

impl FeatureStore {
    pub fn insert(
        &mut self,
        keyframe: impl Into<String>,
        features: KeyframeFeatures,
    ) -> Result<()> {
        let keyframe = keyframe.into();
        if self.entries.contains_key(&keyframe) {
            return Err(Error::Conflict(format!(
                "features for {keyframe:?} already stored"
            )));
        }
        self.entries.insert(keyframe, features);
        Ok(())
    }

    pub fn get(&self, keyframe: &str) -> Option<&KeyframeFeatures> {
        self.entries.get(keyframe)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &KeyframeFeatures)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KeyframeEntry {
    pub keyframe_id: String,
    pub video_id: String,
    pub frame_index: u32,
    pub image: String,
    /// False when the image could not be read at ingest time.
    pub has_image: bool,
}

/// Video id to its keyframes in ascending frame order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VideoTable {
    image_root: String,
    videos: BTreeMap<String, Vec<KeyframeEntry>>,
    by_keyframe: HashMap<String, (String, usize)>,
}

impl VideoTable {
    pub fn new(image_root: impl Into<String>) -> Self {
        Self {
            image_root: image_root.into(),
            ..Default::default()
        }
    }

    pub fn image_root(&self) -> &str {
        &self.image_root
    }

    pub fn insert(&mut self, entry: KeyframeEntry) -> Result<()> {
        if self.by_keyframe.contains_key(&entry.keyframe_id) {
            return Err(Error::Conflict(format!(
                "keyframe {:?} already in video table",
                entry.keyframe_id
            )));
        }
        let video = entry.video_id.clone();
        let list = self.videos.entry(video.clone()).or_default();
        let pos = match list.binary_search_by_key(&entry.frame_index, |e| e.frame_index) {
            Ok(_) => {
                return Err(Error::Conflict(format!(
                    "frame {} of video {:?} already present",
                    entry.frame_index, entry.video_id
                )))
            }
            Err(pos) => pos,
        };
        list.insert(pos, entry);
        self.reindex_video(&video);
        Ok(())
    }

    fn reindex_video(&mut self, video: &str) {
        for (i, e) in self.videos[video].iter().enumerate() {
            self.by_keyframe
                .insert(e.keyframe_id.clone(), (video.to_string(), i));
        }
    }

    pub fn keyframes(&self, video: &str) -> Option<&[KeyframeEntry]> {
        self.videos.get(video).map(Vec::as_slice)
    }

    pub fn keyframe(&self, keyframe: &str) -> Option<&KeyframeEntry> {
        let (video, i) = self.by_keyframe.get(keyframe)?;
        self.videos.get(video).map(|list| &list[*i])
    }

    pub fn video_count(&self) -> usize {
        self.videos.len()
    }

    pub fn keyframe_count(&self) -> usize {
        self.by_keyframe.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[KeyframeEntry])> {
        self.videos.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Absolute image path for a keyframe with a readable image.
    pub fn image_path(&self, keyframe: &str) -> Option<PathBuf> {
        let e = self.keyframe(keyframe)?;
        e.has_image
            .then(|| Path::new(&self.image_root).join(&e.image))
    }
}

/// All persisted structures of one index directory.
pub struct IndexSet {
    pub text: TextIndex,
    pub color: LshIndex,
    pub object: LshIndex,
    pub features: FeatureStore,
    pub videos: VideoTable,
}

impl IndexSet {
    pub fn empty(seed: u64, image_root: impl Into<String>) -> Result<Self> {
        Ok(Self {
            text: TextIndex::new(),
            color: LshIndex::build(LshConfig::color(seed))?,
            object: LshIndex::build(LshConfig::object(seed))?,
            features: FeatureStore::default(),
            videos: VideoTable::new(image_root),
        })
    }
}

impl FeatureSource for IndexSet {
    fn video_of(&self, keyframe: &str) -> Option<&str> {
        self.videos.keyframe(keyframe).map(|e| e.video_id.as_str())
    }

    fn color_vector(&self, keyframe: &str) -> Option<&BitVector> {
        self.features.get(keyframe).map(|f| &f.color_vector)
    }

    fn object_vector(&self, keyframe: &str) -> Option<&BitVector> {
        self.features.get(keyframe).map(|f| &f.object_vector)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuildReport {
    /// Records indexed for text and visual features.
    pub indexed: usize,
    /// Records indexed for text only, with the reason their image was skipped.
    pub skipped: Vec<(String, String)>,
}

/// Computes color and object masks for one record.
pub fn extract_features(record: &KeyframeRecord, image_root: &Path) -> Result<KeyframeFeatures> {
    let path = image_root.join(&record.image_path);
    let img = image::open(&path)
        .map_err(|source| Error::Image {
            path: path.clone(),
            source,
        })?
        .to_rgb8();
    let color = quantize_color_masks(&img)?;
    let object = rasterize_object_masks(&record.boxes)?;
    Ok(KeyframeFeatures::new(color, object))
}

/// Runs the indexing pipeline. Feature extraction runs in parallel; all
/// insertions happen on the calling thread in manifest order.
pub fn build_indexes(
    manifest: &DatasetManifest,
    image_root: &Path,
    seed: u64,
) -> Result<(IndexSet, BuildReport)> {
    let root = image_root
        .canonicalize()
        .unwrap_or_else(|_| image_root.to_path_buf());
    let mut set = IndexSet::empty(seed, root.to_string_lossy())?;

    let extracted: Vec<Result<KeyframeFeatures>> = manifest
        .records
        .par_iter()
        .map(|r| extract_features(r, &root))
        .collect();

    let mut report = BuildReport::default();
    for (record, features) in manifest.records.iter().zip(extracted) {
        set.text
            .add_document(record.keyframe_id.clone(), record.annotations.clone())?;
        let has_image = match features {
            Ok(f) => {
                set.color
                    .insert(record.keyframe_id.clone(), f.color_vector.clone())?;
                set.object
                    .insert(record.keyframe_id.clone(), f.object_vector.clone())?;
                set.features.insert(record.keyframe_id.clone(), f)?;
                report.indexed += 1;
                true
            }
            Err(e) => {
                tracing::warn!(keyframe = %record.keyframe_id, error = %e, "image skipped, text only");
                report
                    .skipped
                    .push((record.keyframe_id.clone(), e.to_string()));
                false
            }
        };
        set.videos.insert(KeyframeEntry {
            keyframe_id: record.keyframe_id.clone(),
            video_id: record.video_id.clone(),
            frame_index: record.frame_index,
            image: record.image_path.clone(),
            has_image,
        })?;
    }
    Ok((set, report))
}
