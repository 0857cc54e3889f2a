//! Deterministic synthetic keyframe corpus.
//!
//! Frames are solid palette backgrounds with colored rectangles, each
//! rectangle annotated as an object box. One frame per video is "planted":
//! it gets three rectangles and a caption containing a word no other frame
//! uses, and its ground truth (caption, cell-center color layout, boxes) is
//! written alongside the manifest for end-to-end retrieval checks.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DatasetManifest, KeyframeRecord};
use crate::mask::{BoundingBox, ColorMaskSet, ObjectLabel, PaletteColor, GRID_SIZE, MASK_BITS};
use crate::text::{ConceptAnnotations, LabelScore};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const IMAGES_DIR: &str = "images";

const SCENES: [&str; 10] = [
    "street", "beach", "kitchen", "forest", "office", "stadium", "park", "river", "market",
    "studio",
];
const VERBS: [&str; 6] = ["stands", "walks", "waits", "appears", "rests", "moves"];
/// Labels outside the tracked vocabulary; their boxes are annotated but never
/// rasterized.
const OTHER_LABELS: [&str; 4] = ["dog", "lamp", "chair", "bicycle"];
const DISTINCTIVE: [&str; 24] = [
    "zeppelin",
    "carousel",
    "lighthouse",
    "saxophone",
    "origami",
    "tractor",
    "waterfall",
    "volcano",
    "igloo",
    "kayak",
    "telescope",
    "accordion",
    "windmill",
    "cathedral",
    "hammock",
    "trombone",
    "pagoda",
    "glacier",
    "bulldozer",
    "flamingo",
    "submarine",
    "pyramid",
    "scarecrow",
    "harp",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusConfig {
    pub videos: usize,
    pub frames_per_video: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Per-channel uniform pixel noise amplitude.
    pub noise: u8,
}

impl CorpusConfig {
    pub fn new(videos: usize, frames_per_video: usize, seed: u64) -> Self {
        Self {
            videos,
            frames_per_video,
            seed,
            width: 128,
            height: 96,
            noise: 6,
        }
    }
}

/// An axis-aligned filled rectangle in pixel coordinates, `[x0, x1) x [y0, y1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    pub color: PaletteColor,
    pub label: String,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn to_box(&self, width: u32, height: u32) -> BoundingBox {
        BoundingBox::new(
            self.label.clone(),
            self.x0 as f64 / width as f64,
            self.y0 as f64 / height as f64,
            self.x1 as f64 / width as f64,
            self.y1 as f64 / height as f64,
        )
    }
}

/// Scene description; later rectangles paint over earlier ones.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSpec {
    pub width: u32,
    pub height: u32,
    pub background: PaletteColor,
    pub rects: Vec<Rect>,
}

impl FrameSpec {
    pub fn color_at(&self, x: u32, y: u32) -> PaletteColor {
        self.rects
            .iter()
            .rev()
            .find(|r| r.contains(x, y))
            .map_or(self.background, |r| r.color)
    }

    /// Color of the pixel at each grid cell's center.
    pub fn cell_layout(&self) -> [PaletteColor; MASK_BITS] {
        std::array::from_fn(|i| {
            let (row, col) = (i / GRID_SIZE, i % GRID_SIZE);
            let x = ((2 * col + 1) as u32 * self.width) / (2 * GRID_SIZE as u32);
            let y = ((2 * row + 1) as u32 * self.height) / (2 * GRID_SIZE as u32);
            self.color_at(x, y)
        })
    }

    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.rects
            .iter()
            .map(|r| r.to_box(self.width, self.height))
            .collect()
    }

    /// Renders the frame with uniform per-channel noise of `noise` levels.
    pub fn render(&self, noise: u8, rng: &mut impl Rng) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let anchor = self.color_at(x, y).anchor();
            Rgb(anchor.map(|c| {
                if noise == 0 {
                    return c;
                }
                let n = noise as i16;
                (c as i16 + rng.random_range(-n..=n)).clamp(0, 255) as u8
            }))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub keyframe_id: String,
    pub video_id: String,
    pub caption: String,
    pub color_layout: Vec<PaletteColor>,
    pub boxes: Vec<BoundingBox>,
}

impl GroundTruth {
    pub fn color_masks(&self) -> Result<ColorMaskSet> {
        let cells: &[PaletteColor; MASK_BITS] = self
            .color_layout
            .as_slice()
            .try_into()
            .map_err(|_| Error::invalid("color layout must have 256 cells"))?;
        Ok(ColorMaskSet::from_cells(cells))
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticFrame {
    pub record: KeyframeRecord,
    pub spec: FrameSpec,
    pub planted: bool,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub config: CorpusConfig,
    pub frames: Vec<SyntheticFrame>,
}

pub fn keyframe_id(video: usize, frame: usize) -> String {
    format!("v{video:03}_f{frame:03}")
}

fn random_rect(rng: &mut impl Rng, cfg: &CorpusConfig, color: PaletteColor, label: &str) -> Rect {
    let (w, h) = (cfg.width, cfg.height);
    let rw = rng.random_range(w / 5..=w * 3 / 5);
    let rh = rng.random_range(h / 5..=h * 3 / 5);
    let x0 = rng.random_range(0..=w - rw);
    let y0 = rng.random_range(0..=h - rh);
    Rect {
        color,
        label: label.to_string(),
        x0,
        y0,
        x1: x0 + rw,
        y1: y0 + rh,
    }
}

fn confidence(rng: &mut impl Rng) -> f64 {
    (rng.random_range(50..=99) as f64) / 100.0
}

pub fn generate(cfg: CorpusConfig) -> Result<SyntheticCorpus> {
    if cfg.videos == 0 || cfg.frames_per_video == 0 {
        return Err(Error::invalid(
            "corpus needs at least one video and one frame",
        ));
    }
    if cfg.width < GRID_SIZE as u32 * 2 || cfg.height < GRID_SIZE as u32 * 2 {
        return Err(Error::invalid("frames must be at least 32x32"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut frames = Vec::with_capacity(cfg.videos * cfg.frames_per_video);
    for v in 0..cfg.videos {
        let video_id = format!("v{v:03}");
        let planted_frame = rng.random_range(0..cfg.frames_per_video);
        for f in 0..cfg.frames_per_video {
            let planted = f == planted_frame;
            let background = *PaletteColor::ALL.choose(&mut rng).expect("non-empty");
            let mut colors: Vec<PaletteColor> = PaletteColor::ALL
                .into_iter()
                .filter(|&c| c != background)
                .collect();
            let n_rects = if planted { 3 } else { rng.random_range(1..=3) };
            let mut rects = Vec::with_capacity(n_rects + 1);
            for _ in 0..n_rects {
                let ci = rng.random_range(0..colors.len());
                let color = colors.swap_remove(ci);
                let label = ObjectLabel::ALL.choose(&mut rng).expect("non-empty").name();
                rects.push(random_rect(&mut rng, &cfg, color, label));
            }
            let spec = FrameSpec {
                width: cfg.width,
                height: cfg.height,
                background,
                rects,
            };

            let mut boxes = spec.boxes();
            if rng.random_bool(0.3) {
                let label = OTHER_LABELS.choose(&mut rng).expect("non-empty");
                boxes.push(
                    random_rect(&mut rng, &cfg, background, label).to_box(cfg.width, cfg.height),
                );
            }
            let scene = *SCENES.choose(&mut rng).expect("non-empty");
            let first = &spec.rects[0];
            let second = spec.rects.last().expect("at least one rect");
            let verb = VERBS.choose(&mut rng).expect("non-empty");
            let caption = if planted {
                let word = DISTINCTIVE[v % DISTINCTIVE.len()];
                let word = match v / DISTINCTIVE.len() {
                    0 => word.to_string(),
                    n => format!("{word}{n}"),
                };
                format!(
                    "a {} {} {verb} beside a {} {} in the {scene}",
                    first.color.name(),
                    word,
                    second.color.name(),
                    second.label
                )
            } else {
                format!(
                    "a {} {} {verb} near a {} in the {scene}",
                    first.color.name(),
                    first.label,
                    second.label
                )
            };
            let annotations = ConceptAnnotations {
                objects: boxes
                    .iter()
                    .map(|b| LabelScore::new(b.label.clone(), confidence(&mut rng)))
                    .collect(),
                scenes: vec![LabelScore::new(scene, confidence(&mut rng))],
                caption,
            };
            frames.push(SyntheticFrame {
                record: KeyframeRecord {
                    keyframe_id: keyframe_id(v, f),
                    video_id: video_id.clone(),
                    frame_index: f as u32,
                    image_path: format!("{video_id}/f{f:03}.png"),
                    annotations,
                    boxes,
                },
                spec,
                planted,
            });
        }
    }
    Ok(SyntheticCorpus {
        config: cfg,
        frames,
    })
}

impl SyntheticCorpus {
    pub fn manifest(&self) -> Result<DatasetManifest> {
        DatasetManifest::from_records(self.frames.iter().map(|f| f.record.clone()).collect())
    }

    pub fn ground_truth(&self) -> Vec<GroundTruth> {
        self.frames
            .iter()
            .filter(|f| f.planted)
            .map(|f| GroundTruth {
                keyframe_id: f.record.keyframe_id.clone(),
                video_id: f.record.video_id.clone(),
                caption: f.record.annotations.caption.clone(),
                color_layout: f.spec.cell_layout().to_vec(),
                boxes: f.spec.boxes(),
            })
            .collect()
    }

    /// Renders frame `i`; the noise stream depends only on the seed and `i`.
    pub fn render(&self, i: usize) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(i as u64 + 1);
        self.frames[i].spec.render(self.config.noise, &mut rng)
    }

    /// Writes `images/`, `manifest.jsonl` and `ground_truth.jsonl` under `out`.
    pub fn write(&self, out: &Path) -> Result<()> {
        let images = out.join(IMAGES_DIR);
        for f in &self.frames {
            let path = images.join(&f.record.image_path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
        }
        (0..self.frames.len()).into_par_iter().try_for_each(|i| {
            let path = images.join(&self.frames[i].record.image_path);
            self.render(i)
                .save(&path)
                .map_err(|source| Error::Image { path, source })
        })?;
        fs::write(out.join(MANIFEST_FILE), self.manifest()?.to_jsonl())?;
        let mut gt = String::new();
        for g in self.ground_truth() {
            gt.push_str(&serde_json::to_string(&g)?);
            gt.push('\n');
        }
        fs::write(out.join(GROUND_TRUTH_FILE), gt)?;
        Ok(())
    }
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
