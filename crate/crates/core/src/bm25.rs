//! Okapi BM25 over title + abstract, and the reversed min–max relevance cost.
//!
//! ```text
//! score(d, q) = Σ_{t ∈ q} idf(t) · tf(t,d)·(k1 + 1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(N − df + 0.5) − ln(df + 0.5)
//! ```
//!
//! Query terms are summed with multiplicity. A negative idf is replaced by
//! `epsilon` times the mean of the strictly positive idf values (0 when there
//! are none).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::textprep::{doc_text, tokenize, TokenStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub epsilon: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.5,
            b: 0.75,
            epsilon: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    doc: u32,
    tf: u32,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_pos: HashMap<String, usize>,
    doc_len: Vec<usize>,
    avg_doc_len: f64,
    // sorted by doc position
    postings: BTreeMap<String, Vec<Posting>>,
    idf: BTreeMap<String, f64>,
}

/// Counts printed by `fairrank index`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexStats {
    pub documents: usize,
    pub terms: usize,
    pub tokens: usize,
    pub avg_doc_len: f64,
}

impl Bm25Index {
    /// Indexes `doc_text` of every corpus document with default parameters.
    pub fn build(corpus: &Corpus) -> Result<Self> {
        Self::build_with(corpus, Bm25Params::default())
    }

    pub fn build_with(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        let docs = corpus
            .iter()
            .map(|d| (d.doc_id.clone(), tokenize(&doc_text(d))))
            .collect();
        Self::from_token_streams(docs, params)
    }

    pub fn from_token_streams(
        docs: Vec<(String, TokenStream)>,
        params: Bm25Params,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut doc_pos = HashMap::with_capacity(docs.len());
        let mut doc_len = Vec::with_capacity(docs.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (pos, (id, tokens)) in docs.into_iter().enumerate() {
            if doc_pos.insert(id.clone(), pos).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate document `{id}`")));
            }
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push(Posting {
                    doc: pos as u32,
                    tf: count,
                });
            }
            doc_ids.push(id);
            doc_len.push(tokens.len());
        }
        let mut index = Bm25Index {
            params,
            doc_ids,
            doc_pos,
            doc_len,
            avg_doc_len: 0.0,
            postings,
            idf: BTreeMap::new(),
        };
        index.compute_statistics();
        Ok(index)
    }

    fn compute_statistics(&mut self) {
        let n = self.doc_ids.len() as f64;
        self.avg_doc_len = self.doc_len.iter().sum::<usize>() as f64 / n;
        let mut idf: BTreeMap<String, f64> = self
            .postings
            .iter()
            .map(|(term, list)| {
                let df = list.len() as f64;
                (term.clone(), (n - df + 0.5).ln() - (df + 0.5).ln())
            })
            .collect();
        let positive: Vec<f64> = idf.values().copied().filter(|&v| v > 0.0).collect();
        let floor = if positive.is_empty() {
            0.0
        } else {
            self.params.epsilon * positive.iter().sum::<f64>() / positive.len() as f64
        };
        for v in idf.values_mut() {
            if *v < 0.0 {
                *v = floor;
            }
        }
        self.idf = idf;
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.doc_pos.get(doc_id).map(|&p| self.doc_len[p])
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.doc_pos.contains_key(doc_id)
    }

    /// Floored idf of `term`, or `None` if no document contains it.
    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            documents: self.doc_ids.len(),
            terms: self.postings.len(),
            tokens: self.doc_len.iter().sum(),
            avg_doc_len: self.avg_doc_len,
        }
    }

    fn term_weight(&self, idf: f64, tf: u32, len: usize) -> f64 {
        let Bm25Params { k1, b, .. } = self.params;
        let tf = tf as f64;
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len as f64 / self.avg_doc_len))
    }

    fn score_pos(&self, query: &TokenStream, pos: usize) -> f64 {
        let mut total = 0.0;
        for term in query {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            if let Ok(i) = list.binary_search_by_key(&(pos as u32), |p| p.doc) {
                total += self.term_weight(self.idf[term], list[i].tf, self.doc_len[pos]);
            }
        }
        total
    }

    /// Raw BM25 score of one document.
    pub fn score(&self, query: &TokenStream, doc_id: &str) -> Result<f64> {
        let pos = *self
            .doc_pos
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        Ok(self.score_pos(query, pos))
    }

    /// Raw scores for `doc_ids`, in the same order.
    pub fn scores(&self, query: &TokenStream, doc_ids: &[String]) -> Result<Vec<f64>> {
        doc_ids.iter().map(|id| self.score(query, id)).collect()
    }

    /// Scores every indexed document; positions follow [`Bm25Index::doc_ids`].
    pub fn score_all(&self, query: &TokenStream) -> Vec<f64> {
        let mut out = vec![0.0; self.doc_ids.len()];
        for term in query {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf[term];
            for p in list {
                let pos = p.doc as usize;
                out[pos] += self.term_weight(idf, p.tf, self.doc_len[pos]);
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let persisted = PersistedIndex {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            params: self.params,
            doc_ids: self.doc_ids.clone(),
            doc_len: self.doc_len.clone(),
            postings: self
                .postings
                .iter()
                .map(|(t, l)| (t.clone(), l.iter().map(|p| [p.doc, p.tf]).collect()))
                .collect(),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &persisted).map_err(|e| Error::Format {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bad = |message: String| Error::Format {
            context: path.display().to_string(),
            message,
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let p: PersistedIndex =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| bad(e.to_string()))?;
        if p.format != INDEX_FORMAT || p.version != INDEX_VERSION {
            return Err(bad(format!(
                "unsupported index format {} v{}",
                p.format, p.version
            )));
        }
        if p.doc_ids.is_empty() || p.doc_ids.len() != p.doc_len.len() {
            return Err(bad("document table is empty or inconsistent".into()));
        }
        let doc_pos: HashMap<String, usize> = p
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        if doc_pos.len() != p.doc_ids.len() {
            return Err(bad("duplicate document id".into()));
        }
        let mut postings = BTreeMap::new();
        for (term, list) in p.postings {
            let mut list: Vec<Posting> = list
                .into_iter()
                .map(|[doc, tf]| Posting { doc, tf })
                .collect();
            if list
                .iter()
                .any(|q| q.doc as usize >= p.doc_ids.len() || q.tf == 0)
            {
                return Err(bad(format!("posting list for `{term}` is out of range")));
            }
            list.sort_by_key(|q| q.doc);
            postings.insert(term, list);
        }
        let mut index = Bm25Index {
            params: p.params,
            doc_ids: p.doc_ids,
            doc_pos,
            doc_len: p.doc_len,
            avg_doc_len: 0.0,
            postings,
            idf: BTreeMap::new(),
        };
        index.compute_statistics();
        Ok(index)
    }
}

const INDEX_FORMAT: &str = "fairrank-bm25";
const INDEX_VERSION: u32 = 1;

/// On-disk index: a single JSON object. idf and avgdl are recomputed on load.
#[derive(Serialize, Deserialize)]
struct PersistedIndex {
    format: String,
    version: u32,
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_len: Vec<usize>,
    postings: BTreeMap<String, Vec<[u32; 2]>>,
}

/// Orders `(doc_id, score)` pairs by descending score, then ascending id.
pub fn sort_by_score(scored: &mut [(String, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// The pure BM25 ranking of `candidates` (duplicates ignored).
pub fn rank_by_score(
    index: &Bm25Index,
    query: &TokenStream,
    candidates: &[String],
) -> Result<Vec<(String, f64)>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    let mut seen = HashSet::with_capacity(candidates.len());
    let mut scored = Vec::with_capacity(candidates.len());
    for id in candidates {
        if seen.insert(id.as_str()) {
            scored.push((id.clone(), index.score(query, id)?));
        }
    }
    sort_by_score(&mut scored);
    Ok(scored)
}

/// Reversed, min–max normalized BM25 score: 0 for the most relevant pool
/// member, 1 for the least.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RelevanceCost(f64);

impl RelevanceCost {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Maps raw pool scores to relevance costs. An all-equal pool maps to 0.
pub fn reversed_min_max(scores: &[f64]) -> Vec<RelevanceCost> {
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
    let range = hi - lo;
    scores
        .iter()
        .map(|&s| {
            if range > 0.0 {
                RelevanceCost(1.0 - (s - lo) / range)
            } else {
                RelevanceCost(0.0)
            }
        })
        .collect()
}

pub fn relevance_cost(
    index: &Bm25Index,
    query: &TokenStream,
    doc_id: &str,
    pool: &[String],
) -> Result<RelevanceCost> {
    let at = pool
        .iter()
        .position(|p| p == doc_id)
        .ok_or_else(|| Error::NotInPool(doc_id.to_string()))?;
    let scores = index.scores(query, pool)?;
    Ok(reversed_min_max(&scores)[at])
}
