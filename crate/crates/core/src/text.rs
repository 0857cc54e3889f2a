//! Inverted index over concept labels and captions with TF/IDF scoring.
//!
//! A document's score for a query is
//!
//! ```text
//! sum over distinct query terms t in d:  sqrt(tf(t, d)) * idf(t)^2 / sqrt(len(d))
//! idf(t) = 1 + ln(N / (df(t) + 1))
//! ```
//!
//! Label confidences are kept with each document but do not affect scoring.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STXT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

impl LabelScore {
    pub fn new(label: impl Into<String>, confidence: f64) -> Self {
        Self {
            label: label.into(),
            confidence,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConceptAnnotations {
    #[serde(default)]
    pub objects: Vec<LabelScore>,
    #[serde(default)]
    pub scenes: Vec<LabelScore>,
    #[serde(default)]
    pub caption: String,
}

impl ConceptAnnotations {
    pub fn validate(&self) -> Result<()> {
        for l in self.objects.iter().chain(&self.scenes) {
            if l.label.trim().is_empty() {
                return Err(Error::invalid("empty concept label"));
            }
            if !(0.0..=1.0).contains(&l.confidence) {
                return Err(Error::invalid(format!(
                    "confidence {} of label {:?} outside [0, 1]",
                    l.confidence, l.label
                )));
            }
        }
        Ok(())
    }

    /// Caption tokens followed by object and scene label tokens.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = tokenize(&self.caption);
        for l in self.objects.iter().chain(&self.scenes) {
            out.extend(tokenize(&l.label));
        }
        out
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub term_frequency: u32,
}

#[derive(Clone, Debug, PartialEq)]
struct DocEntry {
    id: String,
    length: u32,
    annotations: ConceptAnnotations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextHit {
    pub keyframe: String,
    pub score: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TextIndex {
    docs: Vec<DocEntry>,
    by_id: HashMap<String, u32>,
    postings: BTreeMap<String, Vec<Posting>>,
}

pub fn idf(doc_count: usize, df: usize) -> f64 {
    1.0 + (doc_count as f64 / (df as f64 + 1.0)).ln()
}

impl TextIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn contains(&self, doc: &str) -> bool {
        self.by_id.contains_key(doc)
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn doc_length(&self, doc: &str) -> Option<u32> {
        self.by_id.get(doc).map(|&i| self.docs[i as usize].length)
    }

    pub fn annotations(&self, doc: &str) -> Option<&ConceptAnnotations> {
        self.by_id
            .get(doc)
            .map(|&i| &self.docs[i as usize].annotations)
    }

    /// Term frequencies of one document, reconstructed from the postings.
    pub fn document_terms(&self, doc: &str) -> Option<BTreeMap<String, u32>> {
        let &ord = self.by_id.get(doc)?;
        Some(
            self.postings
                .iter()
                .filter_map(|(term, list)| {
                    list.binary_search_by_key(&ord, |p| p.doc)
                        .ok()
                        .map(|i| (term.clone(), list[i].term_frequency))
                })
                .collect(),
        )
    }

    pub fn add_document(&mut self, doc: impl Into<String>, ann: ConceptAnnotations) -> Result<()> {
        let doc = doc.into();
        if self.by_id.contains_key(&doc) {
            return Err(Error::Conflict(format!("document {doc:?} already indexed")));
        }
        ann.validate()?;
        let tokens = ann.tokens();
        let ord = u32::try_from(self.docs.len()).map_err(|_| Error::Config("index full".into()))?;
        let mut bag: BTreeMap<String, u32> = BTreeMap::new();
        for t in &tokens {
            *bag.entry(t.clone()).or_default() += 1;
        }
        for (term, tf) in bag {
            self.postings.entry(term).or_default().push(Posting {
                doc: ord,
                term_frequency: tf,
            });
        }
        self.by_id.insert(doc.clone(), ord);
        self.docs.push(DocEntry {
            id: doc,
            length: tokens.len() as u32,
            annotations: ann,
        });
        Ok(())
    }

    /// Documents containing at least one query term, by descending score
    /// then ascending id, at most `limit` of them.
    pub fn search(&self, query: &str, limit: usize) -> Vec<TextHit> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();

        let n = self.docs.len();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = idf(n, list.len());
            for p in list {
                let len = self.docs[p.doc as usize].length as f64;
                *scores.entry(p.doc).or_default() +=
                    (p.term_frequency as f64).sqrt() * idf * idf / len.sqrt();
            }
        }

        let mut hits: Vec<TextHit> = scores
            .into_iter()
            .map(|(ord, score)| TextHit {
                keyframe: self.docs[ord as usize].id.clone(),
                score,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.keyframe.cmp(&b.keyframe))
        });
        hits.truncate(limit);
        hits
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MAGIC, VERSION);
        w.count(self.docs.len());
        for d in &self.docs {
            w.str(&d.id);
            w.u32(d.length);
            w.str(&d.annotations.caption);
            for labels in [&d.annotations.objects, &d.annotations.scenes] {
                w.count(labels.len());
                for l in labels {
                    w.str(&l.label);
                    w.f64(l.confidence);
                }
            }
        }
        w.count(self.postings.len());
        for (term, list) in &self.postings {
            w.str(term);
            w.count(list.len());
            let mut prev = 0u32;
            for p in list {
                w.varint(u64::from(p.doc - prev));
                w.varint(u64::from(p.term_frequency));
                prev = p.doc;
            }
        }
        w.finish()
    }

    pub fn decode(file: &str, buf: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(file, buf, MAGIC, VERSION)?;
        let mut idx = Self::new();
        let ndocs = r.count()?;
        for ord in 0..ndocs {
            let id = r.str()?;
            let length = r.u32()?;
            let caption = r.str()?;
            let mut label_lists = [Vec::new(), Vec::new()];
            for list in &mut label_lists {
                let n = r.count()?;
                for _ in 0..n {
                    let label = r.str()?;
                    list.push(LabelScore::new(label, r.f64()?));
                }
            }
            let [objects, scenes] = label_lists;
            if idx.by_id.insert(id.clone(), ord as u32).is_some() {
                return Err(r.corrupt(format!("duplicate document {id:?}")));
            }
            idx.docs.push(DocEntry {
                id,
                length,
                annotations: ConceptAnnotations {
                    objects,
                    scenes,
                    caption,
                },
            });
        }
        let nterms = r.count()?;
        for _ in 0..nterms {
            let term = r.str()?;
            let df = r.count()?;
            let mut list = Vec::with_capacity(df);
            let mut doc = 0u64;
            for i in 0..df {
                let delta = r.varint()?;
                if i > 0 && delta == 0 {
                    return Err(r.corrupt(format!("postings of {term:?} not strictly increasing")));
                }
                doc += delta;
                let tf = r.varint()?;
                if doc >= ndocs as u64 || tf == 0 || tf > u64::from(u32::MAX) {
                    return Err(r.corrupt(format!("bad posting in {term:?}")));
                }
                list.push(Posting {
                    doc: doc as u32,
                    term_frequency: tf as u32,
                });
            }
            idx.postings.insert(term, list);
        }
        r.finish()?;
        Ok(idx)
    }
}

/// Divides every score by the largest one. Expects hits sorted descending.
pub fn normalize_scores(hits: &[TextHit]) -> Vec<TextHit> {
    let Some(max) = hits.iter().map(|h| h.score).reduce(f64::max) else {
        return Vec::new();
    };
    hits.iter()
        .map(|h| TextHit {
            keyframe: h.keyframe.clone(),
            score: h.score / max,
        })
        .collect()
}
