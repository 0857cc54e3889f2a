//! Random-hyperplane LSH over concatenated mask vectors.
//!
//! Each table draws `bits_per_signature` hyperplanes with ±1 components. A
//! hyperplane is stored as the bit set of its +1 coordinates, so the dot
//! product with a binary vector `v` is `2 * |v AND plus| - |v|` and the whole
//! signature is computed with popcounts. Signatures only select candidates;
//! reported distances are always the exact binary cosine distance.

use std::collections::{HashMap, HashSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{cosine_distance_unchecked, BitVector};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::mask::{COLOR_VECTOR_BITS, OBJECT_VECTOR_BITS};

const MAGIC: &[u8; 4] = b"SLSH";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshConfig {
    pub tables: usize,
    pub bits_per_signature: usize,
    pub seed: u64,
    pub vector_length: usize,
}

impl LshConfig {
    pub const DEFAULT_TABLES: usize = 8;
    pub const DEFAULT_BITS: usize = 16;

    pub fn new(vector_length: usize, seed: u64) -> Self {
        Self {
            tables: Self::DEFAULT_TABLES,
            bits_per_signature: Self::DEFAULT_BITS,
            seed,
            vector_length,
        }
    }

    pub fn color(seed: u64) -> Self {
        Self::new(COLOR_VECTOR_BITS, seed)
    }

    pub fn object(seed: u64) -> Self {
        Self::new(OBJECT_VECTOR_BITS, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vector_length != COLOR_VECTOR_BITS && self.vector_length != OBJECT_VECTOR_BITS {
            return Err(Error::Config(format!(
                "vector_length must be {COLOR_VECTOR_BITS} or {OBJECT_VECTOR_BITS}, got {}",
                self.vector_length
            )));
        }
        if self.tables == 0 {
            return Err(Error::Config("at least one table is required".into()));
        }
        if !(1..=64).contains(&self.bits_per_signature) {
            return Err(Error::Config(format!(
                "bits_per_signature must be in 1..=64, got {}",
                self.bits_per_signature
            )));
        }
        Ok(())
    }
}

/// Packed signature bits for one table; bit `j` is hyperplane `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub u64);

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

/// Result of a query plus how the candidates were obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub neighbors: Vec<Neighbor>,
    /// Distinct ids found in the probed buckets.
    pub candidates: usize,
    /// True when too few candidates forced a full scan.
    pub exhaustive: bool,
}

pub struct LshIndex {
    config: LshConfig,
    /// `planes[table][bit]` = words of the +1 coordinates.
    planes: Vec<Vec<Vec<u64>>>,
    tables: Vec<HashMap<Signature, Vec<u32>>>,
    ids: Vec<String>,
    vectors: Vec<BitVector>,
    lookup: HashMap<String, u32>,
}

impl LshIndex {
    pub fn build(config: LshConfig) -> Result<Self> {
        config.validate()?;
        let words = config.vector_length.div_ceil(64);
        let planes = (0..config.tables)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(t as u64);
                (0..config.bits_per_signature)
                    .map(|_| (0..words).map(|_| rng.next_u64()).collect())
                    .collect()
            })
            .collect();
        Ok(Self {
            config,
            planes,
            tables: vec![HashMap::new(); config.tables],
            ids: Vec::new(),
            vectors: Vec::new(),
            lookup: HashMap::new(),
        })
    }

    pub fn config(&self) -> &LshConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lookup.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&BitVector> {
        self.lookup.get(id).map(|&i| &self.vectors[i as usize])
    }

    /// Stored items in insertion order.
    pub fn items(&self) -> impl Iterator<Item = (&str, &BitVector)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Number of ids in every bucket of `table`.
    pub fn bucket_sizes(&self, table: usize) -> Vec<usize> {
        self.tables[table].values().map(Vec::len).collect()
    }

    fn check_len(&self, v: &BitVector) -> Result<()> {
        if v.len() != self.config.vector_length {
            return Err(Error::invalid(format!(
                "vector has {} bits, index expects {}",
                v.len(),
                self.config.vector_length
            )));
        }
        Ok(())
    }

    pub fn signature(&self, table: usize, v: &BitVector) -> Result<Signature> {
        if table >= self.config.tables {
            return Err(Error::invalid(format!(
                "table {table} out of range ({} tables)",
                self.config.tables
            )));
        }
        self.check_len(v)?;
        Ok(self.signature_unchecked(table, v))
    }

    fn signature_unchecked(&self, table: usize, v: &BitVector) -> Signature {
        let total = v.count_ones() as i64;
        let mut sig = 0u64;
        for (j, plus) in self.planes[table].iter().enumerate() {
            let pos: i64 = v
                .words()
                .iter()
                .zip(plus)
                .map(|(a, b)| (a & b).count_ones() as i64)
                .sum();
            if 2 * pos - total >= 0 {
                sig |= 1 << j;
            }
        }
        Signature(sig)
    }

    pub fn insert(&mut self, id: impl Into<String>, v: BitVector) -> Result<()> {
        let id = id.into();
        self.check_len(&v)?;
        if self.lookup.contains_key(&id) {
            return Err(Error::Conflict(format!("item {id:?} already indexed")));
        }
        let ord = u32::try_from(self.ids.len()).map_err(|_| Error::Config("index full".into()))?;
        for t in 0..self.config.tables {
            let sig = self.signature_unchecked(t, &v);
            self.tables[t].entry(sig).or_default().push(ord);
        }
        self.lookup.insert(id.clone(), ord);
        self.ids.push(id);
        self.vectors.push(v);
        Ok(())
    }

    /// The `k` nearest stored items by exact cosine distance, probing the
    /// matching bucket of every table and scanning everything when the
    /// buckets yield fewer than `k` candidates.
    pub fn query(&self, v: &BitVector, k: usize) -> Result<Vec<Neighbor>> {
        self.query_detailed(v, k).map(|o| o.neighbors)
    }

    pub fn query_detailed(&self, v: &BitVector, k: usize) -> Result<QueryOutcome> {
        self.check_len(v)?;
        if k == 0 {
            return Ok(QueryOutcome {
                neighbors: Vec::new(),
                candidates: 0,
                exhaustive: false,
            });
        }
        let mut seen = HashSet::new();
        for t in 0..self.config.tables {
            if let Some(bucket) = self.tables[t].get(&self.signature_unchecked(t, v)) {
                seen.extend(bucket.iter().copied());
            }
        }
        let candidates = seen.len();
        let exhaustive = candidates < k;
        let neighbors = if exhaustive {
            self.rank(v, 0..self.ids.len() as u32, k)
        } else {
            self.rank(v, seen.into_iter(), k)
        };
        Ok(QueryOutcome {
            neighbors,
            candidates,
            exhaustive,
        })
    }

    /// Linear scan over the whole store.
    pub fn exhaustive(&self, v: &BitVector, k: usize) -> Result<Vec<Neighbor>> {
        self.check_len(v)?;
        Ok(self.rank(v, 0..self.ids.len() as u32, k))
    }

    fn rank(&self, v: &BitVector, ords: impl Iterator<Item = u32>, k: usize) -> Vec<Neighbor> {
        let mut scored: Vec<(f64, u32)> = ords
            .map(|o| (cosine_distance_unchecked(v, &self.vectors[o as usize]), o))
            .collect();
        let cmp = |a: &(f64, u32), b: &(f64, u32)| {
            a.0.total_cmp(&b.0)
                .then_with(|| self.ids[a.1 as usize].cmp(&self.ids[b.1 as usize]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        scored
            .into_iter()
            .map(|(distance, o)| Neighbor {
                id: self.ids[o as usize].clone(),
                distance,
            })
            .collect()
    }

    /// Header, then the stored items in insertion order. Buckets are derived
    /// data and are rebuilt on decode.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MAGIC, VERSION);
        w.count(self.config.tables);
        w.count(self.config.bits_per_signature);
        w.u64(self.config.seed);
        w.count(self.config.vector_length);
        w.count(self.ids.len());
        for (id, v) in self.items() {
            w.str(id);
            w.bytes(&v.to_bytes());
        }
        w.finish()
    }

    pub fn decode(file: &str, buf: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(file, buf, MAGIC, VERSION)?;
        let config = LshConfig {
            tables: r.u32()? as usize,
            bits_per_signature: r.u32()? as usize,
            seed: r.u64()?,
            vector_length: r.u32()? as usize,
        };
        let mut index = Self::build(config).map_err(|e| r.corrupt(e.to_string()))?;
        let count = r.count()?;
        let nbytes = config.vector_length.div_ceil(8);
        for _ in 0..count {
            let id = r.str()?;
            let v = BitVector::from_bytes(config.vector_length, r.take(nbytes)?)
                .map_err(|e| r.corrupt(e.to_string()))?;
            index.insert(id, v).map_err(|e| r.corrupt(e.to_string()))?;
        }
        r.finish()?;
        Ok(index)
    }
}
