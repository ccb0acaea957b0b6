//! Fairness-aware retrieval and re-ranking for academic-paper corpora.
//!
//! The pipeline: load a corpus and author table ([`corpus`]), attribute
//! gender and economy labels to authors ([`attribution`]), impute the rest
//! ([`groups`]), score documents with BM25 ([`bm25`]), then build each
//! ranking greedily by minimizing a weighted sum of relevance cost and
//! per-group KL divergence ([`reranker`]). [`eval`] measures utility against
//! unfairness across weight settings.

pub mod attribution;
pub mod bm25;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod exec;
pub mod groups;
pub mod reranker;
pub mod runfile;
pub mod synthetic;
pub mod textprep;

pub use bm25::{Bm25Index, Bm25Params, RelevanceCost};
pub use corpus::{AuthorRecord, AuthorTable, Corpus, Economy, Gender, PaperDoc, QueryRecord};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use groups::{GroupDistribution, GroupProfiles, GroupVariable, ImputationPolicy};
pub use reranker::{CostBreakdown, RankedEntry, RankedList, Reranker, WeightVector};
pub use textprep::{tokenize, TokenStream};
