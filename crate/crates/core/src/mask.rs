//! 16x16 binary masks: dominant-color layout and object-location features.
//!
//! A keyframe carries one [`ColorMaskSet`] (8 masks that partition the grid,
//! one per palette color) and one [`ObjectMaskSet`] (10 possibly overlapping
//! masks, one per tracked object class). Both flatten into fixed-length
//! [`BitVector`]s for hashing and distance computation.

use std::fmt;
use std::ops::{BitAnd, BitOr};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::error::{Error, Result};

pub const GRID_SIZE: usize = 16;
pub const MASK_BITS: usize = GRID_SIZE * GRID_SIZE;
pub const MASK_BYTES: usize = MASK_BITS / 8;

pub const COLOR_VECTOR_BITS: usize = PaletteColor::COUNT * MASK_BITS;
pub const OBJECT_VECTOR_BITS: usize = ObjectLabel::COUNT * MASK_BITS;

/// A 256-bit occupancy grid, row-major with row 0 at the top and column 0 at
/// the left.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct BinaryMask([u64; 4]);

impl BinaryMask {
    pub const fn empty() -> Self {
        Self([0; 4])
    }

    pub const fn full() -> Self {
        Self([u64::MAX; 4])
    }

    #[inline]
    fn index(row: usize, col: usize) -> usize {
        assert!(
            row < GRID_SIZE && col < GRID_SIZE,
            "cell ({row}, {col}) outside the grid"
        );
        row * GRID_SIZE + col
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.get_bit(Self::index(row, col))
    }

    pub fn set(&mut self, row: usize, col: usize) {
        self.set_bit(Self::index(row, col));
    }

    pub fn get_bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn words(&self) -> &[u64; 4] {
        &self.0
    }

    /// 32 bytes; bit `i` at byte `i / 8`, bit position `i % 8`.
    pub fn to_bytes(&self) -> [u8; MASK_BYTES] {
        let mut out = [0u8; MASK_BYTES];
        for (chunk, w) in out.chunks_exact_mut(8).zip(self.0) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8; MASK_BYTES]) -> Self {
        let mut words = [0u64; 4];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks_exact(8)) {
            *w = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Self(words)
    }
}

impl BitOr for BinaryMask {
    type Output = Self;
    fn bitor(self, rhs: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] | rhs.0[i]))
    }
}

impl BitAnd for BinaryMask {
    type Output = Self;
    fn bitand(self, rhs: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] & rhs.0[i]))
    }
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinaryMask(")?;
        for row in 0..GRID_SIZE {
            let line: String = (0..GRID_SIZE)
                .map(|col| if self.get(row, col) { '#' } else { '.' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        write!(f, ")")
    }
}

/// The eight dominant colors, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaletteColor {
    Red,
    Purple,
    DarkBlue,
    LightBlue,
    Green,
    Yellow,
    Orange,
    Gray,
}

impl PaletteColor {
    pub const COUNT: usize = 8;

    pub const ALL: [PaletteColor; Self::COUNT] = [
        PaletteColor::Red,
        PaletteColor::Purple,
        PaletteColor::DarkBlue,
        PaletteColor::LightBlue,
        PaletteColor::Green,
        PaletteColor::Yellow,
        PaletteColor::Orange,
        PaletteColor::Gray,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PaletteColor::Red => "red",
            PaletteColor::Purple => "purple",
            PaletteColor::DarkBlue => "dark-blue",
            PaletteColor::LightBlue => "light-blue",
            PaletteColor::Green => "green",
            PaletteColor::Yellow => "yellow",
            PaletteColor::Orange => "orange",
            PaletteColor::Gray => "gray",
        }
    }

    /// Representative RGB value used for nearest-anchor assignment.
    pub fn anchor(self) -> [u8; 3] {
        match self {
            PaletteColor::Red => [200, 30, 30],
            PaletteColor::Purple => [130, 40, 140],
            PaletteColor::DarkBlue => [25, 35, 120],
            PaletteColor::LightBlue => [90, 170, 220],
            PaletteColor::Green => [50, 140, 60],
            PaletteColor::Yellow => [230, 210, 50],
            PaletteColor::Orange => [235, 140, 30],
            PaletteColor::Gray => [128, 128, 128],
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Nearest anchor by Euclidean RGB distance; ties go to the earlier color.
    pub fn nearest(rgb: [f64; 3]) -> Self {
        let mut best = PaletteColor::Red;
        let mut best_d = f64::INFINITY;
        for c in Self::ALL {
            let a = c.anchor();
            let d: f64 = (0..3).map(|k| (rgb[k] - a[k] as f64).powi(2)).sum();
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        best
    }
}

/// The ten object classes with spatial masks, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectLabel {
    Person,
    Man,
    Woman,
    Face,
    Clothing,
    Tree,
    Plant,
    Car,
    Window,
    Poster,
}

impl ObjectLabel {
    pub const COUNT: usize = 10;

    pub const ALL: [ObjectLabel; Self::COUNT] = [
        ObjectLabel::Person,
        ObjectLabel::Man,
        ObjectLabel::Woman,
        ObjectLabel::Face,
        ObjectLabel::Clothing,
        ObjectLabel::Tree,
        ObjectLabel::Plant,
        ObjectLabel::Car,
        ObjectLabel::Window,
        ObjectLabel::Poster,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectLabel::Person => "person",
            ObjectLabel::Man => "man",
            ObjectLabel::Woman => "woman",
            ObjectLabel::Face => "face",
            ObjectLabel::Clothing => "clothing",
            ObjectLabel::Tree => "tree",
            ObjectLabel::Plant => "plant",
            ObjectLabel::Car => "car",
            ObjectLabel::Window => "window",
            ObjectLabel::Poster => "poster",
        }
    }

    /// Case-insensitive lookup; surrounding whitespace is ignored.
    pub fn from_name(name: &str) -> Option<Self> {
        let name = name.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(name))
    }
}

/// Eight masks, one per [`PaletteColor`], that together cover every cell
/// exactly once.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColorMaskSet {
    masks: [BinaryMask; PaletteColor::COUNT],
}

impl ColorMaskSet {
    pub const BYTES: usize = PaletteColor::COUNT * MASK_BYTES;

    /// Validates the partition property.
    pub fn new(masks: [BinaryMask; PaletteColor::COUNT]) -> Result<Self> {
        let mut union = BinaryMask::empty();
        for (i, m) in masks.iter().enumerate() {
            if !(union & *m).is_empty() {
                return Err(Error::invalid(format!(
                    "color mask {} overlaps an earlier color",
                    PaletteColor::ALL[i].name()
                )));
            }
            union = union | *m;
        }
        if union != BinaryMask::full() {
            return Err(Error::invalid(format!(
                "color masks leave {} cells uncovered",
                MASK_BITS as u32 - union.count_ones()
            )));
        }
        Ok(Self { masks })
    }

    /// Builds the set from one color per cell (row-major).
    pub fn from_cells(cells: &[PaletteColor; MASK_BITS]) -> Self {
        let mut masks = [BinaryMask::empty(); PaletteColor::COUNT];
        for (i, c) in cells.iter().enumerate() {
            masks[c.index()].set_bit(i);
        }
        Self { masks }
    }

    pub fn uniform(color: PaletteColor) -> Self {
        let mut masks = [BinaryMask::empty(); PaletteColor::COUNT];
        masks[color.index()] = BinaryMask::full();
        Self { masks }
    }

    pub fn get(&self, color: PaletteColor) -> &BinaryMask {
        &self.masks[color.index()]
    }

    pub fn masks(&self) -> &[BinaryMask; PaletteColor::COUNT] {
        &self.masks
    }

    /// The color owning cell `i`.
    pub fn cell(&self, i: usize) -> PaletteColor {
        PaletteColor::ALL
            .into_iter()
            .find(|c| self.masks[c.index()].get_bit(i))
            .expect("partition covers every cell")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.masks.iter().flat_map(|m| m.to_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::new(masks_from_bytes(bytes, "color")?)
    }

    pub fn from_vector(v: &BitVector) -> Result<Self> {
        Self::new(masks_from_vector(v, "color")?)
    }
}

impl fmt::Debug for ColorMaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for c in PaletteColor::ALL {
            m.entry(&c.name(), &self.get(c).count_ones());
        }
        m.finish()
    }
}

/// Ten masks, one per [`ObjectLabel`]. Masks may overlap or be empty.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ObjectMaskSet {
    masks: [BinaryMask; ObjectLabel::COUNT],
}

impl ObjectMaskSet {
    pub const BYTES: usize = ObjectLabel::COUNT * MASK_BYTES;

    pub fn new(masks: [BinaryMask; ObjectLabel::COUNT]) -> Self {
        Self { masks }
    }

    pub fn get(&self, label: ObjectLabel) -> &BinaryMask {
        &self.masks[label.index()]
    }

    pub fn masks(&self) -> &[BinaryMask; ObjectLabel::COUNT] {
        &self.masks
    }

    pub fn is_empty(&self) -> bool {
        self.masks.iter().all(BinaryMask::is_empty)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.masks.iter().flat_map(|m| m.to_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        masks_from_bytes(bytes, "object").map(Self::new)
    }

    pub fn from_vector(v: &BitVector) -> Result<Self> {
        masks_from_vector(v, "object").map(Self::new)
    }
}

impl fmt::Debug for ObjectMaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for l in ObjectLabel::ALL {
            m.entry(&l.name(), &self.get(l).count_ones());
        }
        m.finish()
    }
}

fn masks_from_bytes<const N: usize>(bytes: &[u8], what: &str) -> Result<[BinaryMask; N]> {
    if bytes.len() != N * MASK_BYTES {
        return Err(Error::invalid(format!(
            "{what} mask blob must be {} bytes, got {}",
            N * MASK_BYTES,
            bytes.len()
        )));
    }
    Ok(std::array::from_fn(|i| {
        let chunk: &[u8; MASK_BYTES] = bytes[i * MASK_BYTES..(i + 1) * MASK_BYTES]
            .try_into()
            .expect("exact chunk");
        BinaryMask::from_bytes(chunk)
    }))
}

fn masks_from_vector<const N: usize>(v: &BitVector, what: &str) -> Result<[BinaryMask; N]> {
    if v.len() != N * MASK_BITS {
        return Err(Error::invalid(format!(
            "{what} vector must have {} bits, got {}",
            N * MASK_BITS,
            v.len()
        )));
    }
    Ok(std::array::from_fn(|i| {
        BinaryMask(
            v.words()[i * 4..(i + 1) * 4]
                .try_into()
                .expect("four words"),
        )
    }))
}

fn concat(masks: &[BinaryMask]) -> BitVector {
    let words = masks.iter().flat_map(|m| m.0).collect();
    BitVector::from_words(masks.len() * MASK_BITS, words)
}

/// The 2048-bit color feature: masks in palette order, each row-major.
pub fn concat_color_vector(set: &ColorMaskSet) -> BitVector {
    concat(&set.masks)
}

/// The 2560-bit object feature: masks in label order, each row-major.
pub fn concat_object_vector(set: &ObjectMaskSet) -> BitVector {
    concat(&set.masks)
}

/// An annotated box in normalized image coordinates, origin top-left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub label: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn new(label: impl Into<String>, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            label: label.into(),
            x0,
            y0,
            x1,
            y1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok =
            |lo: f64, hi: f64| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo < hi;
        if ok(self.x0, self.x1) && ok(self.y0, self.y1) {
            Ok(())
        } else {
            Err(Error::invalid(format!("malformed bounding box {self}")))
        }
    }

    /// Whether the box overlaps cell `(row, col)` by a positive area.
    pub fn covers_cell(&self, row: usize, col: usize) -> bool {
        // Scaling by 16 is exact in binary floating point.
        let g = GRID_SIZE as f64;
        let (r, c) = (row as f64, col as f64);
        self.x0 * g < c + 1.0 && self.x1 * g > c && self.y0 * g < r + 1.0 && self.y1 * g > r
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} ({}, {}, {}, {})",
            self.label, self.x0, self.y0, self.x1, self.y1
        )
    }
}

/// Assigns every grid cell to the palette color nearest the mean RGB of the
/// pixels whose centers fall inside it.
pub fn quantize_color_masks(image: &RgbImage) -> Result<ColorMaskSet> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w < GRID_SIZE || h < GRID_SIZE {
        return Err(Error::invalid(format!(
            "image is {w}x{h}; at least {GRID_SIZE}x{GRID_SIZE} is required"
        )));
    }
    // Pixel x has center x + 0.5, so its column is floor((2x + 1) * 16 / 2w).
    let cell_of = |p: usize, extent: usize| (2 * p + 1) * GRID_SIZE / (2 * extent);
    let cols: Vec<usize> = (0..w).map(|x| cell_of(x, w)).collect();

    let mut sums = [[0u64; 3]; MASK_BITS];
    let mut counts = [0u64; MASK_BITS];
    for (y, row) in image.rows().enumerate() {
        let base = cell_of(y, h) * GRID_SIZE;
        for (x, px) in row.enumerate() {
            let cell = base + cols[x];
            for (sum, &c) in sums[cell].iter_mut().zip(&px.0) {
                *sum += c as u64;
            }
            counts[cell] += 1;
        }
    }

    let mut masks = [BinaryMask::empty(); PaletteColor::COUNT];
    for cell in 0..MASK_BITS {
        let n = counts[cell] as f64;
        let mean = sums[cell].map(|s| s as f64 / n);
        masks[PaletteColor::nearest(mean).index()].set_bit(cell);
    }
    Ok(ColorMaskSet { masks })
}

/// Rasterizes boxes of the ten tracked classes onto their masks. Any cell the
/// box overlaps by a positive area is set; boxes of other classes are skipped.
pub fn rasterize_object_masks(boxes: &[BoundingBox]) -> Result<ObjectMaskSet> {
    for (i, b) in boxes.iter().enumerate() {
        b.validate()
            .map_err(|_| Error::invalid(format!("box #{i} is malformed: {b}")))?;
    }
    let mut set = ObjectMaskSet::default();
    for b in boxes {
        let Some(label) = ObjectLabel::from_name(&b.label) else {
            tracing::debug!(label = %b.label, "ignoring box outside the tracked vocabulary");
            continue;
        };
        let mask = &mut set.masks[label.index()];
        for row in 0..GRID_SIZE {
            for col in 0..GRID_SIZE {
                if b.covers_cell(row, col) {
                    mask.set(row, col);
                }
            }
        }
    }
    Ok(set)
}
