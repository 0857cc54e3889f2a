//! Recall of LSH queries against an exhaustive scan.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bits::BitVector;
use crate::error::Result;
use crate::lsh::{LshConfig, LshIndex};

/// Deterministic part of an evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecallReport {
    pub items: usize,
    pub queries: usize,
    pub k: usize,
    pub seed: u64,
    pub mean_recall: f64,
    pub min_recall: f64,
    /// Queries answered by a full scan because buckets held fewer than k ids.
    pub exhaustive_fallbacks: usize,
    pub mean_candidates: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencySummary {
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub total_ms: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Samples `queries` stored vectors (without replacement, seeded) and
/// compares each LSH top-`k` with the exhaustive top-`k`.
pub fn evaluate_recall(
    index: &LshIndex,
    queries: usize,
    k: usize,
    seed: u64,
) -> Result<(RecallReport, LatencySummary)> {
    let items: Vec<&BitVector> = index.items().map(|(_, v)| v).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = queries.min(items.len());
    let sample = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();

    let mut recalls = Vec::with_capacity(n);
    let mut latencies = Vec::with_capacity(n);
    let mut fallbacks = 0;
    let mut candidates = 0usize;
    let started = Instant::now();
    for &i in &sample {
        let q = items[i];
        let t = Instant::now();
        let outcome = index.query_detailed(q, k)?;
        latencies.push(t.elapsed().as_secs_f64() * 1e3);
        fallbacks += usize::from(outcome.exhaustive);
        candidates += outcome.candidates;

        let exact: HashSet<String> = index.exhaustive(q, k)?.into_iter().map(|n| n.id).collect();
        let found = outcome
            .neighbors
            .iter()
            .filter(|n| exact.contains(&n.id))
            .count();
        recalls.push(if exact.is_empty() {
            1.0
        } else {
            found as f64 / exact.len() as f64
        });
    }
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    latencies.sort_by(f64::total_cmp);

    let report = RecallReport {
        items: items.len(),
        queries: n,
        k,
        seed,
        mean_recall: if n == 0 {
            0.0
        } else {
            recalls.iter().sum::<f64>() / n as f64
        },
        min_recall: recalls.iter().copied().reduce(f64::min).unwrap_or(0.0),
        exhaustive_fallbacks: fallbacks,
        mean_candidates: if n == 0 {
            0.0
        } else {
            candidates as f64 / n as f64
        },
    };
    let latency = LatencySummary {
        p50_ms: percentile(&latencies, 0.50),
        p95_ms: percentile(&latencies, 0.95),
        p99_ms: percentile(&latencies, 0.99),
        total_ms,
    };
    Ok((report, latency))
}

/// `count` random vectors of `len` bits, each bit set with probability
/// `density`.
pub fn random_vectors(count: usize, len: usize, density: f64, seed: u64) -> Vec<BitVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| BitVector::from_indices(len, (0..len).filter(|_| rng.random_bool(density))))
        .collect()
}

/// An index over [`random_vectors`] with ids `item-00000`, `item-00001`, ...
pub fn synthetic_index(count: usize, density: f64, config: LshConfig) -> Result<LshIndex> {
    let mut index = LshIndex::build(config)?;
    let vectors = random_vectors(count, config.vector_length, density, config.seed ^ 0x5eed);
    for (i, v) in vectors.into_iter().enumerate() {
        index.insert(format!("item-{i:05}"), v)?;
    }
    Ok(index)
}
