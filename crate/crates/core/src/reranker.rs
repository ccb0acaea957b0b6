//! Fairness-aware greedy re-ranking.
//!
//! The cost of appending document `d` to the partial ranking `R` is
//!
//! ```text
//! C(d) = w_r · F(d) + w_g · KL(p_gender(R + d) ‖ p_gender(D′)) + w_c · KL(p_country(R + d) ‖ p_country(D′))
//! ```
//!
//! where `F` is the reversed min–max BM25 score over the reference pool `D′`
//! and the distributions pool author occurrences. Each step appends the
//! cheapest remaining candidate; equal costs go to the smaller doc id.
//!
//! Edge cases with no author information:
//! - if `R + d` has no resolvable authors for a variable, that KL term is 0;
//! - if the reference pool has none, the term is 0 for every candidate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bm25::{reversed_min_max, sort_by_score, Bm25Index};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::groups::{
    smoothed_kl, DocCounts, GroupProfiles, GroupVariable, GROUP_ARITY, KL_SMOOTHING,
};
use crate::textprep::TokenStream;

/// Default candidate pool depth for the retrieval task.
pub const DEFAULT_POOL_SIZE: usize = 100;

/// Relevance, gender, and country weights on the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightVector {
    relevance: f64,
    gender: f64,
    country: f64,
}

impl WeightVector {
    pub fn new(relevance: f64, gender: f64, country: f64) -> Result<Self> {
        let w = [relevance, gender, country];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "weights must be finite and nonnegative, got {relevance},{gender},{country}"
            )));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(WeightVector {
            relevance,
            gender,
            country,
        })
    }

    /// Pure relevance, `(1, 0, 0)`.
    pub fn relevance_only() -> Self {
        WeightVector {
            relevance: 1.0,
            gender: 0.0,
            country: 0.0,
        }
    }

    pub fn relevance(&self) -> f64 {
        self.relevance
    }

    pub fn gender(&self) -> f64 {
        self.gender
    }

    pub fn country(&self) -> f64 {
        self.country
    }

    pub fn fairness(&self, variable: GroupVariable) -> f64 {
        match variable {
            GroupVariable::Gender => self.gender,
            GroupVariable::Country => self.country,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.relevance, self.gender, self.country]
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.relevance, self.gender, self.country)
    }
}

/// Parses `r,g,c`.
impl FromStr for WeightVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidWeights(format!(
                "expected `r,g,c`, got `{s}`"
            )));
        }
        let mut w = [0.0; 3];
        for (slot, part) in w.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::InvalidWeights(format!("`{part}` is not a number")))?;
        }
        WeightVector::new(w[0], w[1], w[2])
    }
}

/// Per-term cost of one placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub relevance: f64,
    pub kl_gender: f64,
    pub kl_country: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(weights: &WeightVector, relevance: f64, kl_gender: f64, kl_country: f64) -> Self {
        CostBreakdown {
            relevance,
            kl_gender,
            kl_country,
            total: weights.relevance * relevance
                + weights.gender * kl_gender
                + weights.country * kl_country,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.relevance, self.kl_gender, self.kl_country, self.total]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub doc_id: String,
    /// Cost at the step this document was placed; absent for baselines.
    pub cost: Option<CostBreakdown>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
    /// `None` for baseline rankings.
    pub weights: Option<WeightVector>,
    pub seed: u64,
}

impl RankedList {
    pub fn doc_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.doc_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Smallest slice of candidates costed by one parallel task within a greedy
/// step; a single cost evaluation is a few dozen flops.
const STEP_CHUNK: usize = 512;

/// Reference distribution of one variable, `None` when the pool has no
/// resolvable authors for it.
type Reference = [Option<[f64; GROUP_ARITY]>; 2];

fn reference_of(pool_counts: &[DocCounts]) -> Reference {
    let mut out = [None; 2];
    for v in GroupVariable::ALL {
        let mut totals = [0.0; GROUP_ARITY];
        for c in pool_counts {
            for (t, x) in totals.iter_mut().zip(c[v.index()]) {
                *t += x;
            }
        }
        let sum: f64 = totals.iter().sum();
        if sum > 0.0 {
            out[v.index()] = Some(totals.map(|t| t / sum));
        }
    }
    out
}

fn fairness_term(counts: &[f64; GROUP_ARITY], reference: Option<&[f64; GROUP_ARITY]>) -> f64 {
    let Some(q) = reference else {
        return 0.0;
    };
    let sum: f64 = counts.iter().sum();
    if sum <= 0.0 {
        return 0.0;
    }
    let p = counts.map(|c| c / sum);
    smoothed_kl(&p, q, KL_SMOOTHING)
}

/// Cost of appending a document whose author counts are `doc`, given the
/// running counts `placed` of the documents already ranked.
fn placement_cost(
    weights: &WeightVector,
    relevance: f64,
    placed: &DocCounts,
    doc: &DocCounts,
    reference: &Reference,
) -> CostBreakdown {
    let mut kl = [0.0; 2];
    for v in GroupVariable::ALL {
        let i = v.index();
        let mut merged = placed[i];
        for (m, x) in merged.iter_mut().zip(doc[i]) {
            *m += x;
        }
        kl[i] = fairness_term(&merged, reference[i].as_ref());
    }
    CostBreakdown::new(weights, relevance, kl[0], kl[1])
}

fn add_counts(into: &mut DocCounts, from: &DocCounts) {
    for (row, add) in into.iter_mut().zip(from) {
        for (x, y) in row.iter_mut().zip(add) {
            *x += y;
        }
    }
}

fn dedup(ids: &[String]) -> Vec<String> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter()
        .filter(|id| seen.insert(id.as_str()))
        .cloned()
        .collect()
}

/// Greedy re-ranking over pre-scored inputs.
///
/// `reference` is D′ with raw BM25 scores: it fixes the relevance
/// normalization and the target group distributions. `working` is D″, the
/// candidates that may be placed; each must appear in `reference`.
pub fn rerank_scored(
    reference: &[(String, f64)],
    working: &[String],
    weights: &WeightVector,
    len: usize,
    profiles: &GroupProfiles,
    mode: ExecMode,
) -> Result<Vec<RankedEntry>> {
    if len == 0 {
        return Err(Error::InvalidArgument(
            "list length must be positive".into(),
        ));
    }
    let working = dedup(working);
    if len > working.len() {
        return Err(Error::LengthExceedsPool {
            requested: len,
            pool: working.len(),
        });
    }
    let raw: Vec<f64> = reference.iter().map(|(_, s)| *s).collect();
    let costs = reversed_min_max(&raw);
    let ref_counts: Vec<DocCounts> = reference
        .iter()
        .map(|(id, _)| profiles.counts(id))
        .collect();
    let target = reference_of(&ref_counts);

    struct Candidate {
        id: String,
        relevance: f64,
        counts: DocCounts,
    }
    let mut remaining = working
        .into_iter()
        .map(|id| {
            let at = reference
                .iter()
                .position(|(r, _)| *r == id)
                .ok_or_else(|| Error::NotInPool(id.clone()))?;
            Ok(Candidate {
                relevance: costs[at].value(),
                counts: ref_counts[at],
                id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // scanning in id order makes the first strict minimum the tie-break winner
    remaining.sort_by(|a, b| a.id.cmp(&b.id));

    let mut placed: DocCounts = [[0.0; GROUP_ARITY]; 2];
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let step_costs = exec::map_chunked(&remaining, mode, STEP_CHUNK, |c| {
            placement_cost(weights, c.relevance, &placed, &c.counts, &target)
        });
        let mut best = 0;
        for (i, c) in step_costs.iter().enumerate().skip(1) {
            if c.total < step_costs[best].total {
                best = i;
            }
        }
        let chosen = remaining.remove(best);
        add_counts(&mut placed, &chosen.counts);
        out.push(RankedEntry {
            doc_id: chosen.id,
            cost: Some(step_costs[best]),
        });
    }
    Ok(out)
}

/// Index plus resolved author groups: everything a cost evaluation needs.
#[derive(Debug, Clone, Copy)]
pub struct Reranker<'a> {
    index: &'a Bm25Index,
    profiles: &'a GroupProfiles,
    mode: ExecMode,
}

impl<'a> Reranker<'a> {
    pub fn new(index: &'a Bm25Index, profiles: &'a GroupProfiles) -> Self {
        Reranker {
            index,
            profiles,
            mode: ExecMode::default(),
        }
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn index(&self) -> &'a Bm25Index {
        self.index
    }

    pub fn profiles(&self) -> &'a GroupProfiles {
        self.profiles
    }

    /// Top `k` documents by BM25, drawn from `restrict_to` or, when `None`,
    /// from the whole index.
    pub fn candidate_pool(
        &self,
        query: &TokenStream,
        k: usize,
        restrict_to: Option<&[String]>,
    ) -> Result<Vec<String>> {
        Ok(self
            .scored_pool(query, k, restrict_to)?
            .into_iter()
            .map(|(id, _)| id)
            .collect())
    }

    /// Like [`Reranker::candidate_pool`] but keeps raw scores.
    pub fn scored_pool(
        &self,
        query: &TokenStream,
        k: usize,
        restrict_to: Option<&[String]>,
    ) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument(
                "pool size k must be positive".into(),
            ));
        }
        let mut scored = match restrict_to {
            Some([]) => return Err(Error::Empty("candidate restriction")),
            Some(ids) => {
                let ids = dedup(ids);
                let scores = self.index.scores(query, &ids)?;
                ids.into_iter().zip(scores).collect::<Vec<_>>()
            }
            None => self
                .index
                .doc_ids()
                .iter()
                .cloned()
                .zip(self.index.score_all(query))
                .collect(),
        };
        sort_by_score(&mut scored);
        scored.truncate(k);
        Ok(scored)
    }

    /// Cost of appending `doc` to `current`, with `pool` as both the
    /// normalization pool and the reference distribution.
    pub fn cost(
        &self,
        doc: &str,
        weights: &WeightVector,
        current: &[String],
        pool: &[String],
        query: &TokenStream,
    ) -> Result<CostBreakdown> {
        if current.iter().any(|c| c == doc) {
            return Err(Error::AlreadyRanked(doc.to_string()));
        }
        let at = pool
            .iter()
            .position(|p| p == doc)
            .ok_or_else(|| Error::NotInPool(doc.to_string()))?;
        let scores = self.index.scores(query, pool)?;
        let relevance = reversed_min_max(&scores)[at].value();
        let pool_counts: Vec<DocCounts> = pool.iter().map(|id| self.profiles.counts(id)).collect();
        let mut placed = [[0.0; GROUP_ARITY]; 2];
        for id in current {
            add_counts(&mut placed, &self.profiles.counts(id));
        }
        Ok(placement_cost(
            weights,
            relevance,
            &placed,
            &pool_counts[at],
            &reference_of(&pool_counts),
        ))
    }

    /// Greedy ranking of `len` documents from `pool` (D′ = D″ = pool).
    pub fn rerank(
        &self,
        pool: &[String],
        weights: &WeightVector,
        len: usize,
        query: &TokenStream,
    ) -> Result<Vec<RankedEntry>> {
        self.rerank_with_reference(pool, pool, weights, len, query)
    }

    /// Greedy ranking where the reference pool D′ may be larger than the
    /// working set D″.
    pub fn rerank_with_reference(
        &self,
        reference: &[String],
        working: &[String],
        weights: &WeightVector,
        len: usize,
        query: &TokenStream,
    ) -> Result<Vec<RankedEntry>> {
        let reference = dedup(reference);
        let scores = self.index.scores(query, &reference)?;
        let scored: Vec<(String, f64)> = reference.into_iter().zip(scores).collect();
        rerank_scored(&scored, working, weights, len, self.profiles, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm25::Bm25Params;
    use crate::textprep::tokenize;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(WeightVector::new(0.5, 0.5, 0.0).is_ok());
        assert!(WeightVector::new(0.5, 0.5, 0.5).is_err());
        assert!(WeightVector::new(1.5, -0.5, 0.0).is_err());
        assert!("0.5,0.25,0.25".parse::<WeightVector>().is_ok());
        assert!("0.5,0.25".parse::<WeightVector>().is_err());
        assert!("a,b,c".parse::<WeightVector>().is_err());
    }

    // d1: [M, A], d2: [F, D], d3: [M, D], d4: [F, A]
    fn profiles() -> GroupProfiles {
        GroupProfiles::from_counts([
            ("d1".to_string(), [[1.0, 0.0], [1.0, 0.0]]),
            ("d2".to_string(), [[0.0, 1.0], [0.0, 1.0]]),
            ("d3".to_string(), [[1.0, 0.0], [0.0, 1.0]]),
            ("d4".to_string(), [[0.0, 1.0], [1.0, 0.0]]),
            ("mixed".to_string(), [[1.0, 1.0], [1.0, 1.0]]),
        ])
    }

    fn scored(v: &[(&str, f64)]) -> Vec<(String, f64)> {
        v.iter().map(|(id, s)| (id.to_string(), *s)).collect()
    }

    #[test]
    fn relevance_only_follows_scores() {
        let pool = scored(&[("d1", 1.0), ("d2", 4.0), ("d3", 2.5), ("d4", 3.0)]);
        let out = rerank_scored(
            &pool,
            &ids(&["d1", "d2", "d3", "d4"]),
            &WeightVector::relevance_only(),
            4,
            &profiles(),
            ExecMode::Sequential,
        )
        .unwrap();
        let order: Vec<_> = out.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(order, ["d2", "d4", "d3", "d1"]);
        assert_eq!(out[0].cost.unwrap().total, 0.0);
        assert_eq!(out[3].cost.unwrap().total, 1.0);
    }

    #[test]
    fn equal_costs_go_to_smaller_id() {
        let pool = scored(&[("d3", 1.0), ("d1", 1.0)]);
        let out = rerank_scored(
            &pool,
            &ids(&["d3", "d1"]),
            &WeightVector::relevance_only(),
            2,
            &profiles(),
            ExecMode::Sequential,
        )
        .unwrap();
        assert_eq!(out[0].doc_id, "d1");
    }

    #[test]
    fn fairness_weight_balances_groups() {
        // d1 and d3 are the most relevant but both male; pure gender weight
        // alternates genders.
        let pool = scored(&[("d1", 4.0), ("d3", 3.0), ("d2", 2.0), ("d4", 1.0)]);
        let w = WeightVector::new(0.0, 1.0, 0.0).unwrap();
        let out = rerank_scored(
            &pool,
            &ids(&["d1", "d2", "d3", "d4"]),
            &w,
            4,
            &profiles(),
            ExecMode::Sequential,
        )
        .unwrap();
        let first_two: HashSet<_> = out[..2].iter().map(|e| e.doc_id.as_str()).collect();
        let has_male = first_two.contains("d1") || first_two.contains("d3");
        let has_female = first_two.contains("d2") || first_two.contains("d4");
        assert!(has_male && has_female);
    }

    #[test]
    fn length_contract() {
        let pool = scored(&[("d1", 1.0), ("d2", 2.0)]);
        let w = WeightVector::relevance_only();
        assert!(matches!(
            rerank_scored(
                &pool,
                &ids(&["d1", "d2"]),
                &w,
                3,
                &profiles(),
                ExecMode::Sequential
            ),
            Err(Error::LengthExceedsPool {
                requested: 3,
                pool: 2
            })
        ));
        assert!(rerank_scored(
            &pool,
            &ids(&["d1", "d2"]),
            &w,
            0,
            &profiles(),
            ExecMode::Sequential
        )
        .is_err());
        let one = rerank_scored(
            &pool,
            &ids(&["d1", "d2"]),
            &w,
            1,
            &profiles(),
            ExecMode::Sequential,
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].doc_id, "d2");
    }

    #[test]
    fn working_set_must_be_in_reference() {
        let pool = scored(&[("d1", 1.0)]);
        assert!(matches!(
            rerank_scored(
                &pool,
                &ids(&["d2"]),
                &WeightVector::relevance_only(),
                1,
                &profiles(),
                ExecMode::Sequential
            ),
            Err(Error::NotInPool(_))
        ));
    }

    #[test]
    fn matching_candidate_has_negligible_kl() {
        let pool = scored(&[("d1", 1.0), ("d2", 2.0), ("mixed", 3.0)]);
        let w = WeightVector::new(0.0, 0.5, 0.5).unwrap();
        let out = rerank_scored(
            &pool,
            &ids(&["d1", "d2", "mixed"]),
            &w,
            1,
            &profiles(),
            ExecMode::Sequential,
        )
        .unwrap();
        let c = out[0].cost.unwrap();
        assert_eq!(out[0].doc_id, "mixed");
        assert!(c.kl_gender < 1e-4 && c.kl_country < 1e-4);
    }

    #[test]
    fn authorless_pool_has_zero_fairness_cost() {
        let empty = GroupProfiles::default();
        let pool = scored(&[("x", 1.0), ("y", 2.0)]);
        let w = WeightVector::new(0.0, 0.5, 0.5).unwrap();
        let out = rerank_scored(
            &pool,
            &ids(&["x", "y"]),
            &w,
            2,
            &empty,
            ExecMode::Sequential,
        )
        .unwrap();
        assert!(out.iter().all(|e| e.cost.unwrap().total == 0.0));
        assert_eq!(out[0].doc_id, "x");
    }

    fn index() -> Bm25Index {
        let docs = [
            ("d1", "fair ranking of papers"),
            ("d2", "ranking"),
            ("d3", "fair exposure fair"),
            ("d4", "unrelated text"),
        ];
        Bm25Index::from_token_streams(
            docs.iter()
                .map(|(id, t)| (id.to_string(), tokenize(t)))
                .collect(),
            Bm25Params::default(),
        )
        .unwrap()
    }

    #[test]
    fn cost_contract() {
        let idx = index();
        let prof = profiles();
        let r = Reranker::new(&idx, &prof);
        let q = tokenize("fair ranking");
        let pool = ids(&["d1", "d2", "d3", "d4"]);
        let w = WeightVector::relevance_only();
        let c = r.cost("d1", &w, &[], &pool, &q).unwrap();
        assert_eq!(c.total, c.relevance);
        assert!(matches!(
            r.cost("d1", &w, &ids(&["d1"]), &pool, &q),
            Err(Error::AlreadyRanked(_))
        ));
        assert!(matches!(
            r.cost("zz", &w, &[], &pool, &q),
            Err(Error::NotInPool(_))
        ));
    }

    #[test]
    fn greedy_costs_match_standalone_cost() {
        let idx = index();
        let prof = profiles();
        let r = Reranker::new(&idx, &prof);
        let q = tokenize("fair ranking");
        let pool = ids(&["d1", "d2", "d3", "d4"]);
        let w = WeightVector::new(0.4, 0.3, 0.3).unwrap();
        let out = r.rerank(&pool, &w, 4, &q).unwrap();
        let mut prefix = Vec::new();
        for e in &out {
            let c = r.cost(&e.doc_id, &w, &prefix, &pool, &q).unwrap();
            assert_eq!(Some(c), e.cost);
            prefix.push(e.doc_id.clone());
        }
    }

    #[test]
    fn candidate_pool_top_k() {
        let idx = index();
        let prof = profiles();
        let r = Reranker::new(&idx, &prof);
        let q = tokenize("fair ranking");
        let top = r.candidate_pool(&q, 2, None).unwrap();
        assert_eq!(top.len(), 2);
        let all = r.candidate_pool(&q, 50, None).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all[..2], top[..]);
        let restricted = r.candidate_pool(&q, 10, Some(&ids(&["d4", "d2"]))).unwrap();
        assert_eq!(restricted, ids(&["d2", "d4"]));
        assert!(r.candidate_pool(&q, 10, Some(&[])).is_err());
        assert!(r.candidate_pool(&q, 0, None).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let idx = index();
        let prof = profiles();
        let q = tokenize("fair ranking");
        let pool = ids(&["d1", "d2", "d3", "d4"]);
        let w = WeightVector::new(0.5, 0.25, 0.25).unwrap();
        let seq = Reranker::new(&idx, &prof)
            .with_mode(ExecMode::Sequential)
            .rerank(&pool, &w, 4, &q)
            .unwrap();
        let par = Reranker::new(&idx, &prof)
            .with_mode(ExecMode::Parallel)
            .rerank(&pool, &w, 4, &q)
            .unwrap();
        assert_eq!(seq, par);
    }
}
