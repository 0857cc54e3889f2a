//! Index directory layout:
//!
//! | file              | contents                                   |
//! |-------------------|--------------------------------------------|
//! | `text.idx`        | TF/IDF dictionary, postings, doc table     |
//! | `color.lsh`       | color LSH config + stored vectors          |
//! | `object.lsh`      | object LSH config + stored vectors         |
//! | `features.bin`    | raw color/object masks per keyframe        |
//! | `videos.tbl`      | image root and per-video keyframe lists    |
//! | `manifest.checksum` | SHA-256 of each file above               |
//!
//! Loading verifies every checksum before decoding anything.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::ingest::{FeatureStore, IndexSet, KeyframeEntry, KeyframeFeatures, VideoTable};
use crate::lsh::LshIndex;
use crate::mask::{ColorMaskSet, ObjectMaskSet};
use crate::text::TextIndex;

pub const TEXT_FILE: &str = "text.idx";
pub const COLOR_FILE: &str = "color.lsh";
pub const OBJECT_FILE: &str = "object.lsh";
pub const FEATURES_FILE: &str = "features.bin";
pub const VIDEOS_FILE: &str = "videos.tbl";
pub const CHECKSUM_FILE: &str = "manifest.checksum";

const DATA_FILES: [&str; 5] = [
    TEXT_FILE,
    COLOR_FILE,
    OBJECT_FILE,
    FEATURES_FILE,
    VIDEOS_FILE,
];

const FEATURES_MAGIC: &[u8; 4] = b"SFEA";
const VIDEOS_MAGIC: &[u8; 4] = b"SVID";
const VERSION: u32 = 1;

fn encode_features(store: &FeatureStore) -> Vec<u8> {
    let mut w = Writer::with_header(FEATURES_MAGIC, VERSION);
    w.count(store.len());
    for (id, f) in store.iter() {
        w.str(id);
        w.bytes(&f.color.to_bytes());
        w.bytes(&f.object.to_bytes());
    }
    w.finish()
}

fn decode_features(buf: &[u8]) -> Result<FeatureStore> {
    let mut r = Reader::with_header(FEATURES_FILE, buf, FEATURES_MAGIC, VERSION)?;
    let mut store = FeatureStore::default();
    for _ in 0..r.count()? {
        let id = r.str()?;
        let color = ColorMaskSet::from_bytes(r.take(ColorMaskSet::BYTES)?)
            .map_err(|e| r.corrupt(e.to_string()))?;
        let object = ObjectMaskSet::from_bytes(r.take(ObjectMaskSet::BYTES)?)
            .map_err(|e| r.corrupt(e.to_string()))?;
        store
            .insert(id, KeyframeFeatures::new(color, object))
            .map_err(|e| r.corrupt(e.to_string()))?;
    }
    r.finish()?;
    Ok(store)
}

fn encode_videos(table: &VideoTable) -> Vec<u8> {
    let mut w = Writer::with_header(VIDEOS_MAGIC, VERSION);
    w.str(table.image_root());
    w.count(table.video_count());
    for (video, frames) in table.iter() {
        w.str(video);
        w.count(frames.len());
        for e in frames {
            w.str(&e.keyframe_id);
            w.u32(e.frame_index);
            w.str(&e.image);
            w.bytes(&[u8::from(e.has_image)]);
        }
    }
    w.finish()
}

fn decode_videos(buf: &[u8]) -> Result<VideoTable> {
    let mut r = Reader::with_header(VIDEOS_FILE, buf, VIDEOS_MAGIC, VERSION)?;
    let mut table = VideoTable::new(r.str()?);
    for _ in 0..r.count()? {
        let video_id = r.str()?;
        for _ in 0..r.count()? {
            let keyframe_id = r.str()?;
            let frame_index = r.u32()?;
            let image = r.str()?;
            let has_image = match r.take(1)?[0] {
                0 => false,
                1 => true,
                b => return Err(r.corrupt(format!("bad flag byte {b}"))),
            };
            table
                .insert(KeyframeEntry {
                    keyframe_id,
                    video_id: video_id.clone(),
                    frame_index,
                    image,
                    has_image,
                })
                .map_err(|e| r.corrupt(e.to_string()))?;
        }
    }
    r.finish()?;
    Ok(table)
}

/// Serialized bytes of every data file, keyed by file name.
pub fn encode_all(set: &IndexSet) -> BTreeMap<&'static str, Vec<u8>> {
    BTreeMap::from([
        (TEXT_FILE, set.text.encode()),
        (COLOR_FILE, set.color.encode()),
        (OBJECT_FILE, set.object.encode()),
        (FEATURES_FILE, encode_features(&set.features)),
        (VIDEOS_FILE, encode_videos(&set.videos)),
    ])
}

fn checksum_listing(files: &BTreeMap<&str, Vec<u8>>) -> String {
    DATA_FILES
        .iter()
        .map(|name| format!("{}  {name}\n", hex::encode(Sha256::digest(&files[name]))))
        .collect()
}

pub fn persist(set: &IndexSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let files = encode_all(set);
    for (name, bytes) in &files {
        fs::write(dir.join(name), bytes)?;
    }
    fs::write(dir.join(CHECKSUM_FILE), checksum_listing(&files))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<IndexSet> {
    let listing = fs::read_to_string(dir.join(CHECKSUM_FILE))?;
    let mut expected: BTreeMap<&str, &str> = BTreeMap::new();
    for line in listing.lines().filter(|l| !l.trim().is_empty()) {
        let (digest, name) = line.split_once("  ").ok_or_else(|| Error::Corrupt {
            file: CHECKSUM_FILE.into(),
            message: format!("malformed line {line:?}"),
        })?;
        expected.insert(name, digest);
    }

    let mut files: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for name in DATA_FILES {
        let digest = expected.get(name).ok_or_else(|| Error::Corrupt {
            file: CHECKSUM_FILE.into(),
            message: format!("no checksum for {name}"),
        })?;
        let bytes = fs::read(dir.join(name))?;
        if hex::encode(Sha256::digest(&bytes)) != *digest {
            return Err(Error::Checksum { file: name.into() });
        }
        files.insert(name, bytes);
    }

    Ok(IndexSet {
        text: TextIndex::decode(TEXT_FILE, &files[TEXT_FILE])?,
        color: LshIndex::decode(COLOR_FILE, &files[COLOR_FILE])?,
        object: LshIndex::decode(OBJECT_FILE, &files[OBJECT_FILE])?,
        features: decode_features(&files[FEATURES_FILE])?,
        videos: decode_videos(&files[VIDEOS_FILE])?,
    })
}
