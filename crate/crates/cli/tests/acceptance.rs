//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sloth_core::corpus::{self, load_ground_truth};
use sloth_core::fusion::{FeatureSource, FusionInput, SketchInput};
use sloth_core::text::LabelScore;
use sloth_core::{
    build_indexes, cosine_distance, fuse, load_manifest, persist, quantize_color_masks,
    rasterize_object_masks, tokenize, BinaryMask, BitVector, BoundingBox, ColorMaskSet,
    ConceptAnnotations, FusionWeights, LshConfig, LshIndex, Neighbor, ObjectLabel, PaletteColor,
    QueryRequest, SearchEngine, TextHit, TextIndex,
};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sloth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sloth"))
        .args(args)
        .output()
        .expect("spawn sloth")
}

fn sloth_ok(args: &[&str]) -> Result<String, String> {
    let out = sloth(args);
    if !out.status.success() {
        return Err(format!(
            "sloth {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8(out.stdout).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn random_bits(rng: &mut impl Rng, len: usize, density: f64) -> BitVector {
    BitVector::from_indices(len, (0..len).filter(|_| rng.random_bool(density)))
}

/// Cosine distance from dense 0/1 arrays, independent of the crate's popcounts.
fn dense_distance(a: &BitVector, b: &BitVector) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..a.len() {
        let (x, y) = (a.get(i) as u8 as f64, b.get(i) as u8 as f64);
        dot += x * y;
        na += x;
        nb += y;
    }
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0),
    }
}

// LSH recall

fn lsh_recall() -> Outcome {
    let started = Instant::now();
    let out = sloth_ok(&[
        "eval",
        "--synthetic",
        "10000",
        "--queries",
        "100",
        "--k",
        "10",
        "--seed",
        "7",
    ])?;
    let elapsed = started.elapsed().as_secs_f64();
    let report: Value = serde_json::from_str(out.trim()).map_err(|e| e.to_string())?;
    let recall = report["mean_recall"].as_f64().unwrap();

    // Recompute recall with a dense scan outside the crate's ranking code.
    let cfg = LshConfig::color(7);
    let index = sloth_core::eval::synthetic_index(10_000, 0.05, cfg).map_err(|e| e.to_string())?;
    let items: Vec<(String, BitVector)> = index
        .items()
        .map(|(id, v)| (id.to_string(), v.clone()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut total = 0.0;
    for _ in 0..100 {
        let (_, q) = items.choose(&mut rng).unwrap();
        let mut exact: Vec<(f64, &str)> = items
            .iter()
            .map(|(id, v)| (dense_distance(q, v), id.as_str()))
            .collect();
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let truth: BTreeSet<&str> = exact[..10].iter().map(|e| e.1).collect();
        let got = index.query(q, 10).map_err(|e| e.to_string())?;
        total += got.iter().filter(|n| truth.contains(n.id.as_str())).count() as f64 / 10.0;
    }
    let oracle_recall = total / 100.0;

    check(recall >= 0.9, || {
        format!("cli mean recall@10 {recall:.4} < 0.9")
    })?;
    check(oracle_recall >= 0.9, || {
        format!("oracle recall@10 {oracle_recall:.4} < 0.9")
    })?;
    check(elapsed < 30.0, || format!("eval took {elapsed:.1}s"))?;
    Ok(format!(
        "cli recall@10={recall:.4}, dense-oracle recall@10={oracle_recall:.4}, eval {elapsed:.2}s"
    ))
}

// Distance exactness

fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for (len, config) in [(2048, LshConfig::color(3)), (2560, LshConfig::object(3))] {
        let mut index = LshIndex::build(config).map_err(|e| e.to_string())?;
        let mut stored = HashMap::new();
        for i in 0..2000 {
            let density = rng.random_range(0.01..0.2);
            let v = random_bits(&mut rng, len, density);
            index
                .insert(format!("x{i}"), v.clone())
                .map_err(|e| e.to_string())?;
            stored.insert(format!("x{i}"), v);
        }
        for _ in 0..100 {
            let q = random_bits(&mut rng, len, 0.05);
            for Neighbor { id, distance } in index.query(&q, 50).map_err(|e| e.to_string())? {
                let v = &stored[&id];
                let again = cosine_distance(&q, v).map_err(|e| e.to_string())?;
                check((distance - again).abs() <= 1e-12, || {
                    format!("{id}: {distance} vs {again}")
                })?;
                let dense = dense_distance(&q, v);
                check((distance - dense).abs() <= 1e-12, || {
                    format!("{id}: {distance} vs dense {dense}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{checked}/{checked} returned distances within 1e-12"
    ))
}

// TF/IDF oracle

fn brute_force_text(docs: &[(String, ConceptAnnotations)], query: &str) -> Vec<(String, f64)> {
    let bags: Vec<BTreeMap<String, u32>> = docs
        .iter()
        .map(|(_, a)| {
            let mut bag = BTreeMap::new();
            let labels = a
                .objects
                .iter()
                .chain(&a.scenes)
                .flat_map(|l| tokenize(&l.label));
            for t in tokenize(&a.caption).into_iter().chain(labels) {
                *bag.entry(t).or_insert(0u32) += 1;
            }
            bag
        })
        .collect();
    let n = docs.len() as f64;
    let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    let mut scored = Vec::new();
    for (i, (id, _)) in docs.iter().enumerate() {
        let len = bags[i].values().sum::<u32>() as f64;
        let mut score = None;
        for t in &terms {
            if let Some(&tf) = bags[i].get(t) {
                let df = bags.iter().filter(|b| b.contains_key(t)).count() as f64;
                let idf = 1.0 + (n / (df + 1.0)).ln();
                *score.get_or_insert(0.0) += (tf as f64).sqrt() * idf * idf / len.sqrt();
            }
        }
        if let Some(s) = score {
            scored.push((id.clone(), s));
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored
}

fn tfidf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let vocab: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
    // Skewed draw so that frequent and rare terms both occur.
    let word = |rng: &mut ChaCha8Rng| {
        let r: f64 = rng.random();
        vocab[((r * r) * vocab.len() as f64) as usize].clone()
    };
    let docs: Vec<(String, ConceptAnnotations)> = (0..1000)
        .map(|i| {
            let caption: Vec<String> = (0..rng.random_range(0..15))
                .map(|_| word(&mut rng))
                .collect();
            let objects = (0..rng.random_range(0..4))
                .map(|_| LabelScore::new(word(&mut rng), rng.random_range(0.0..1.0)))
                .collect();
            let scenes = (0..rng.random_range(0..2))
                .map(|_| LabelScore::new(word(&mut rng), rng.random_range(0.0..1.0)))
                .collect();
            (
                format!("doc{i:04}"),
                ConceptAnnotations {
                    objects,
                    scenes,
                    caption: caption.join(" "),
                },
            )
        })
        .collect();
    let mut index = TextIndex::new();
    for (id, a) in &docs {
        index
            .add_document(id.clone(), a.clone())
            .map_err(|e| e.to_string())?;
    }
    let mut compared = 0;
    for qi in 0..50 {
        let query: Vec<String> = (0..rng.random_range(2..=5))
            .map(|_| word(&mut rng))
            .collect();
        let query = query.join(" ");
        let want = brute_force_text(&docs, &query);
        let got = index.search(&query, docs.len());
        check(got.len() == want.len(), || {
            format!("query {qi}: {} hits vs {}", got.len(), want.len())
        })?;
        for (rank, (g, w)) in got.iter().zip(&want).enumerate() {
            check(g.keyframe == w.0, || {
                format!("query {qi} rank {rank}: {} vs {}", g.keyframe, w.0)
            })?;
            check((g.score - w.1).abs() <= 1e-9, || {
                format!("query {qi} rank {rank}: {} vs {}", g.score, w.1)
            })?;
        }
        compared += got.len();
    }
    Ok(format!(
        "50 queries, {compared} ranked hits identical to brute force"
    ))
}

// Fusion degeneracy and scale invariance

fn corpus_engine(dir: &Path, seed: u64) -> Result<SearchEngine, String> {
    let manifest = load_manifest(&dir.join(corpus::MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let (set, _) =
        build_indexes(&manifest, &dir.join(corpus::IMAGES_DIR), seed).map_err(|e| e.to_string())?;
    Ok(SearchEngine::new(set))
}

fn ids<'a>(hits: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    hits.into_iter().map(str::to_string).collect()
}

fn degeneracy(corpus_dir: &Path) -> Outcome {
    let engine = corpus_engine(corpus_dir, 5)?;
    let set = engine.indexes();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let keyframes: Vec<String> = set.features.iter().map(|(id, _)| id.to_string()).collect();
    let words = [
        "person", "car", "street", "tree", "a", "walks", "window", "woman",
    ];
    for case in 0..25 {
        let source = keyframes.choose(&mut rng).unwrap();
        let other = keyframes.choose(&mut rng).unwrap();
        let feats = set.features.get(source).unwrap();
        let text = format!(
            "{} {}",
            words.choose(&mut rng).unwrap(),
            words.choose(&mut rng).unwrap()
        );
        let limit = rng.random_range(5..60);
        let base = QueryRequest {
            text: Some(text.clone()),
            limit,
            ..QueryRequest::default()
        }
        .with_color(&feats.color)
        .with_object(&set.features.get(other).unwrap().object);

        let resp = engine
            .search(&QueryRequest {
                weights: FusionWeights::new(1.0, 0.0, 0.0),
                ..base.clone()
            })
            .map_err(|e| e.to_string())?;
        let text_order: Vec<String> = set
            .text
            .search(&text, 4 * limit)
            .into_iter()
            .take(limit)
            .map(|h| h.keyframe)
            .collect();
        check(
            ids(resp.hits().iter().map(|h| h.keyframe_id.as_str())) == text_order,
            || format!("case {case}: (1,0,0) differs from text ordering"),
        )?;

        let resp = engine
            .search(&QueryRequest {
                weights: FusionWeights::new(0.0, 1.0, 0.0),
                ..base.clone()
            })
            .map_err(|e| e.to_string())?;
        let color_order: Vec<String> = set
            .color
            .query(&feats.color_vector, 4 * limit)
            .map_err(|e| e.to_string())?
            .into_iter()
            .take(limit)
            .map(|n| n.id)
            .collect();
        check(
            ids(resp.hits().iter().map(|h| h.keyframe_id.as_str())) == color_order,
            || format!("case {case}: (0,1,0) differs from color ordering"),
        )?;
    }

    // Same property on raw score lists with disjoint and overlapping ids.
    for case in 0..100 {
        let (text, color, _) = {
            let n = rng.random_range(1..80);
            random_lists(&mut rng, n)
        };
        let cq = BitVector::from_indices(2048, [1]);
        let input = FusionInput {
            text: Some(&text),
            color: Some(SketchInput {
                query: &cq,
                hits: &color,
            }),
            object: None,
        };
        let fused = fuse(
            &input,
            &FusionWeights::new(1.0, 0.0, 0.0),
            &NoFeatures,
            1000,
        )
        .map_err(|e| e.to_string())?;
        let mut want = text.clone();
        want.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.keyframe.cmp(&b.keyframe))
        });
        check(
            fused
                .hits
                .iter()
                .map(|h| &h.keyframe)
                .eq(want.iter().map(|h| &h.keyframe)),
            || format!("list case {case}: (1,0,0)"),
        )?;
        let fused = fuse(
            &input,
            &FusionWeights::new(0.0, 1.0, 0.0),
            &NoFeatures,
            1000,
        )
        .map_err(|e| e.to_string())?;
        let mut want = color.clone();
        want.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.id.cmp(&b.id))
        });
        check(
            fused
                .hits
                .iter()
                .map(|h| &h.keyframe)
                .eq(want.iter().map(|h| &h.id)),
            || format!("list case {case}: (0,1,0)"),
        )?;
    }
    Ok(
        "25 corpus queries + 100 random list sets: exact list equality for (1,0,0) and (0,1,0)"
            .into(),
    )
}

struct NoFeatures;

impl FeatureSource for NoFeatures {
    fn video_of(&self, _: &str) -> Option<&str> {
        Some("v")
    }
    fn color_vector(&self, _: &str) -> Option<&BitVector> {
        None
    }
    fn object_vector(&self, _: &str) -> Option<&BitVector> {
        None
    }
}

/// Three score lists over a shared id pool; each id lands in each list with
/// probability 0.7.
fn random_lists(rng: &mut impl Rng, n: usize) -> (Vec<TextHit>, Vec<Neighbor>, Vec<Neighbor>) {
    let (mut t, mut c, mut o) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let id = format!("v{}_{i:03}", i % 9);
        if rng.random_bool(0.7) {
            t.push(TextHit {
                keyframe: id.clone(),
                score: rng.random_range(0.0..=1.0),
            });
        }
        if rng.random_bool(0.7) {
            c.push(Neighbor {
                id: id.clone(),
                distance: rng.random_range(0.0..=1.0),
            });
        }
        if rng.random_bool(0.7) {
            o.push(Neighbor {
                id,
                distance: rng.random_range(0.0..=1.0),
            });
        }
    }
    (t, c, o)
}

fn scale_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cq = BitVector::from_indices(2048, [1]);
    let oq = BitVector::from_indices(2560, [1]);
    let mut total = 0;
    for case in 0..100 {
        let (text, color, object) = {
            let n = rng.random_range(2..120);
            random_lists(&mut rng, n)
        };
        let input = FusionInput {
            text: Some(&text),
            color: Some(SketchInput {
                query: &cq,
                hits: &color,
            }),
            object: Some(SketchInput {
                query: &oq,
                hits: &object,
            }),
        };
        let w = FusionWeights::new(
            rng.random_range(0.0..3.0),
            rng.random_range(0.0..3.0),
            rng.random_range(0.01..3.0),
        );
        let a = fuse(&input, &w, &NoFeatures, 1000)
            .map_err(|e| e.to_string())?
            .hits;
        let b = fuse(&input, &w.scaled(3.7), &NoFeatures, 1000)
            .map_err(|e| e.to_string())?
            .hits;
        // Argsort of sim_all computed here, not taken from fuse's ordering.
        let argsort = |hits: &[sloth_core::ScoredHit]| {
            let mut idx: Vec<usize> = (0..hits.len()).collect();
            idx.sort_by(|&i, &j| {
                hits[j]
                    .sim_all
                    .total_cmp(&hits[i].sim_all)
                    .then_with(|| hits[i].keyframe.cmp(&hits[j].keyframe))
            });
            idx.into_iter()
                .map(|i| hits[i].keyframe.clone())
                .collect::<Vec<_>>()
        };
        check(argsort(&a) == argsort(&b), || {
            format!("case {case}: argsort changed under 3.7x")
        })?;
        check(
            a.iter()
                .map(|h| &h.keyframe)
                .eq(b.iter().map(|h| &h.keyframe)),
            || format!("case {case}: fused order changed"),
        )?;
        for (x, y) in a.iter().zip(&b) {
            check((y.sim_all - 3.7 * x.sim_all).abs() <= 1e-9, || {
                format!("case {case}: {} vs 3.7*{}", y.sim_all, x.sim_all)
            })?;
        }
        total += a.len();
    }
    Ok(format!(
        "100 triples ({total} fused hits), argsort unchanged under 3.7x weights"
    ))
}

// Mask invariants

fn random_image(rng: &mut impl Rng) -> RgbImage {
    let (w, h) = (rng.random_range(16..80), rng.random_range(16..80));
    let mut img = RgbImage::from_pixel(w, h, Rgb(rng.random()));
    for _ in 0..rng.random_range(0..6) {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (x1, y1) = (rng.random_range(x0..=w), rng.random_range(y0..=h));
        let c: [u8; 3] = rng.random();
        for y in y0..y1 {
            for x in x0..x1 {
                img.put_pixel(x, y, Rgb(c));
            }
        }
    }
    let noise = rng.random_range(0u8..40);
    for px in img.pixels_mut() {
        for ch in px.0.iter_mut() {
            *ch = ch.saturating_add(rng.random_range(0..=noise));
        }
    }
    img
}

/// Set iff the box and the cell share positive area, computed in cell units.
fn overlap_oracle(boxes: &[BoundingBox]) -> Vec<Vec<bool>> {
    let mut out = vec![vec![false; 256]; ObjectLabel::COUNT];
    for b in boxes {
        let Some(li) = ObjectLabel::ALL
            .iter()
            .position(|l| l.name().eq_ignore_ascii_case(b.label.trim()))
        else {
            continue;
        };
        for cell in 0..256 {
            let (r, c) = ((cell / 16) as f64, (cell % 16) as f64);
            let dx = (b.x1 * 16.0).min(c + 1.0) - (b.x0 * 16.0).max(c);
            let dy = (b.y1 * 16.0).min(r + 1.0) - (b.y0 * 16.0).max(r);
            out[li][cell] |= dx > 0.0 && dy > 0.0;
        }
    }
    out
}

fn random_boxes(rng: &mut impl Rng) -> Vec<BoundingBox> {
    (0..rng.random_range(0..8))
        .map(|_| {
            let label = if rng.random_bool(0.1) {
                "unlisted".to_string()
            } else {
                ObjectLabel::ALL.choose(rng).unwrap().name().to_string()
            };
            // Snap some coordinates to cell edges to exercise the boundary rule.
            let coord = |rng: &mut dyn rand::RngCore| -> f64 {
                if rng.random_bool(0.3) {
                    rng.random_range(0..=16) as f64 / 16.0
                } else {
                    rng.random_range(0.0..=1.0)
                }
            };
            let (a, b) = (coord(rng), coord(rng));
            let (c, d) = (coord(rng), coord(rng));
            let (x0, x1) = if a < b {
                (a, b)
            } else if a > b {
                (b, a)
            } else {
                (0.0, 1.0)
            };
            let (y0, y1) = if c < d {
                (c, d)
            } else if c > d {
                (d, c)
            } else {
                (0.0, 1.0)
            };
            BoundingBox::new(label, x0, y0, x1, y1)
        })
        .collect()
}

fn mask_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for i in 0..1000 {
        let img = random_image(&mut rng);
        let set = quantize_color_masks(&img).map_err(|e| e.to_string())?;
        let mut seen = BinaryMask::empty();
        for m in set.masks() {
            check((seen & *m).is_empty(), || {
                format!("image {i}: overlapping color masks")
            })?;
            seen = seen | *m;
        }
        check(seen == BinaryMask::full(), || {
            format!("image {i}: uncovered cells")
        })?;
    }
    let mut bits = 0;
    for i in 0..1000 {
        let boxes = random_boxes(&mut rng);
        let set = rasterize_object_masks(&boxes).map_err(|e| e.to_string())?;
        let oracle = overlap_oracle(&boxes);
        for (li, label) in ObjectLabel::ALL.iter().enumerate() {
            for cell in 0..256 {
                check(set.get(*label).get_bit(cell) == oracle[li][cell], || {
                    format!("box list {i}: {} cell {cell}", label.name())
                })?;
                bits += 1;
            }
        }
    }
    Ok(format!(
        "1000 images partition the grid; 1000 box lists match the overlap oracle on {bits} bits"
    ))
}

// End-to-end planted target

fn planted_target(work: &Path) -> Outcome {
    let started = Instant::now();
    let corpus_dir = work.join("e2e-corpus");
    let index_dir = work.join("e2e-index");
    sloth_ok(&[
        "gen-corpus",
        "--out",
        p(&corpus_dir),
        "--videos",
        "20",
        "--frames-per-video",
        "10",
        "--seed",
        "2018",
    ])?;
    let summary = sloth_ok(&[
        "index",
        "--manifest",
        p(&corpus_dir.join(corpus::MANIFEST_FILE)),
        "--images",
        p(&corpus_dir.join(corpus::IMAGES_DIR)),
        "--out",
        p(&index_dir),
        "--seed",
        "1",
    ])?;
    check(summary.trim() == "indexed=200 skipped=0", || {
        format!("index summary {summary:?}")
    })?;

    let truth = load_ground_truth(&corpus_dir.join(corpus::GROUND_TRUTH_FILE))
        .map_err(|e| e.to_string())?;
    check(truth.len() == 20, || {
        format!("{} planted frames", truth.len())
    })?;
    let mut hits = 0;
    let mut ranks = Vec::new();
    for (i, g) in truth.iter().enumerate() {
        let cells: [PaletteColor; 256] = g
            .color_layout
            .clone()
            .try_into()
            .map_err(|_| "layout length".to_string())?;
        let color = ColorMaskSet::from_cells(&cells);
        let object = rasterize_object_masks(&g.boxes).map_err(|e| e.to_string())?;
        let cpath = work.join(format!("q{i}.color"));
        let opath = work.join(format!("q{i}.object"));
        fs::write(&cpath, color.to_bytes()).unwrap();
        fs::write(&opath, object.to_bytes()).unwrap();
        let out = sloth_ok(&[
            "query",
            "--index",
            p(&index_dir),
            "--text",
            &g.caption,
            "--color-mask",
            p(&cpath),
            "--object-mask",
            p(&opath),
            "--limit",
            "10",
        ])?;
        let rank = out
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap())
            .position(|h| h["keyframe_id"] == g.keyframe_id.as_str());
        hits += usize::from(rank.is_some());
        ranks.push(rank.map_or("-".to_string(), |r| (r + 1).to_string()));
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(hits >= 18, || {
        format!(
            "{hits}/20 planted frames in top-10 (ranks {})",
            ranks.join(",")
        )
    })?;
    check(elapsed < 60.0, || format!("pipeline took {elapsed:.1}s"))?;
    Ok(format!(
        "{hits}/20 planted frames in top-10 (ranks {}), pipeline {elapsed:.2}s",
        ranks.join(",")
    ))
}

// Persistence

fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn persistence(corpus_dir: &Path, work: &Path) -> Outcome {
    let first = work.join("persist-a");
    let second = work.join("persist-b");
    let summary = sloth_ok(&[
        "index",
        "--manifest",
        p(&corpus_dir.join(corpus::MANIFEST_FILE)),
        "--images",
        p(&corpus_dir.join(corpus::IMAGES_DIR)),
        "--out",
        p(&first),
    ])?;
    check(summary.trim() == "indexed=200 skipped=0", || {
        format!("index summary {summary:?}")
    })?;
    let loaded = persist::load(&first).map_err(|e| e.to_string())?;
    persist::persist(&loaded, &second).map_err(|e| e.to_string())?;
    let (a, b) = (dir_files(&first), dir_files(&second));
    check(a.keys().eq(b.keys()), || {
        format!("file sets differ: {:?} vs {:?}", a.keys(), b.keys())
    })?;
    for (name, bytes) in &a {
        check(&b[name] == bytes, || {
            format!("{name} differs after re-persist")
        })?;
    }
    let total: usize = a.values().map(Vec::len).sum();
    Ok(format!(
        "{} files ({total} bytes) byte-identical after load + re-persist",
        a.len()
    ))
}

// Determinism

fn determinism(corpus_dir: &Path, work: &Path) -> Outcome {
    let mut reports = Vec::new();
    let mut dirs = Vec::new();
    for run in 0..2 {
        let out = work.join(format!("det-{run}"));
        sloth_ok(&[
            "index",
            "--manifest",
            p(&corpus_dir.join(corpus::MANIFEST_FILE)),
            "--images",
            p(&corpus_dir.join(corpus::IMAGES_DIR)),
            "--out",
            p(&out),
            "--seed",
            "99",
        ])?;
        let mut report = String::new();
        for modality in ["color", "object"] {
            report += &sloth_ok(&[
                "eval",
                "--index",
                p(&out),
                "--modality",
                modality,
                "--queries",
                "50",
                "--k",
                "10",
                "--seed",
                "99",
            ])?;
        }
        report += &sloth_ok(&[
            "eval",
            "--synthetic",
            "2000",
            "--queries",
            "50",
            "--k",
            "10",
            "--seed",
            "99",
        ])?;
        reports.push(report);
        dirs.push(dir_files(&out));
    }
    check(reports[0] == reports[1], || {
        format!("reports differ:\n{}\n{}", reports[0], reports[1])
    })?;
    check(dirs[0] == dirs[1], || "index directories differ".into())?;
    Ok("two cold index+eval runs: identical reports and byte-identical index directories".into())
}

fn main() {
    let work = tempfile::tempdir().expect("tempdir");
    let shared = work.path().join("corpus-200");
    sloth_ok(&[
        "gen-corpus",
        "--out",
        p(&shared),
        "--videos",
        "20",
        "--frames-per-video",
        "10",
        "--seed",
        "7",
    ])
    .expect("generate shared corpus");

    let criteria: Vec<Criterion> = vec![
        ("lsh-recall", Box::new(lsh_recall)),
        ("distance-exactness", Box::new(exactness)),
        ("tfidf-oracle", Box::new(tfidf_oracle)),
        ("fusion-degeneracy", Box::new(|| degeneracy(&shared))),
        ("fusion-scale-invariance", Box::new(scale_invariance)),
        ("mask-invariants", Box::new(mask_invariants)),
        (
            "e2e-planted-target",
            Box::new(|| planted_target(work.path())),
        ),
        (
            "persistence",
            Box::new(|| persistence(&shared, work.path())),
        ),
        (
            "determinism",
            Box::new(|| determinism(&shared, work.path())),
        ),
    ];

    let mut failed = 0;
    for (name, run) in &criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(format!(
                "panicked: {:?}",
                e.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(e.downcast_ref::<&str>().copied())
            ))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
