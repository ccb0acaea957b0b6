//! Seeded synthetic corpora for benchmarks and trade-off experiments.
//!
//! Each query owns a disjoint block of candidate documents. The relevant
//! documents in a block mention the query terms often and are written only
//! by authors from the majority groups (male, advanced economy); the rest
//! mention the query at most once and draw author labels from the minority
//! groups more often, so pure relevance ranking over-exposes one group.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    AuthorRecord, AuthorTable, Corpus, Economy, Gender, PaperDoc, QueryDoc, QueryRecord,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub queries: usize,
    pub candidates_per_query: usize,
    pub relevant_per_query: usize,
    pub authors_per_doc: usize,
    /// Probability that a non-relevant document's author is male / advanced.
    pub background_majority_share: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// 10 queries × 20 candidates = 200 documents.
    fn default() -> Self {
        SyntheticConfig {
            queries: 10,
            candidates_per_query: 20,
            relevant_per_query: 4,
            authors_per_doc: 2,
            background_majority_share: 0.3,
            seed: 2020,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Every author carries known labels.
    pub authors: AuthorTable,
    pub queries: Vec<QueryRecord>,
}

const FILLER: usize = 60;

fn filler(rng: &mut ChaCha8Rng, words: usize) -> Vec<String> {
    (0..words)
        .map(|_| format!("word{}", rng.random_range(0..FILLER)))
        .collect()
}

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut docs = Vec::new();
    let mut authors = Vec::new();
    let mut queries = Vec::new();
    for q in 0..config.queries {
        let terms = [format!("topic{q}"), format!("subject{q}")];
        let mut judged = Vec::new();
        for c in 0..config.candidates_per_query {
            let doc_id = format!("q{q:03}d{c:03}");
            let relevant = c < config.relevant_per_query;
            let n = 12 + rng.random_range(0..8);
            let mut words = filler(&mut rng, n);
            if relevant {
                for _ in 0..2 + rng.random_range(0..3) {
                    words.extend(terms.iter().cloned());
                }
            } else if rng.random_bool(0.5) {
                words.push(terms[rng.random_range(0..2)].clone());
            }
            let mut author_ids = Vec::new();
            for a in 0..config.authors_per_doc {
                let id = format!("{doc_id}a{a}");
                let (gender, economy) = if relevant {
                    (Gender::Male, Economy::Advanced)
                } else {
                    let p = config.background_majority_share;
                    (
                        if rng.random_bool(p) {
                            Gender::Male
                        } else {
                            Gender::Female
                        },
                        if rng.random_bool(p) {
                            Economy::Advanced
                        } else {
                            Economy::Developing
                        },
                    )
                };
                authors.push(
                    AuthorRecord::new(id.clone(), format!("Author {id}"))
                        .with_labels(gender, economy),
                );
                author_ids.push(id);
            }
            let refs: Vec<&str> = author_ids.iter().map(String::as_str).collect();
            docs.push(PaperDoc::new(
                doc_id.clone(),
                &format!("paper {c}"),
                &words.join(" "),
                &refs,
            ));
            judged.push(QueryDoc {
                doc_id,
                relevance: Some(relevant as u8),
            });
        }
        // candidate lists arrive in no particular order
        for i in (1..judged.len()).rev() {
            judged.swap(i, rng.random_range(0..=i));
        }
        queries.push(QueryRecord {
            query_id: format!("q{q:03}"),
            query_text: terms.join(" "),
            frequency: 1,
            documents: judged,
        });
    }
    SyntheticCorpus {
        corpus: Corpus::from_rows(docs).expect("synthetic doc ids are unique"),
        authors: AuthorTable::from_rows(authors).expect("synthetic author ids are unique"),
        queries,
    }
}
