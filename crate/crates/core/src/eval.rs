//! Utility and unfairness measurement, baselines, and weight sweeps.
//!
//! - Utility is NDCG@depth over binary judgments (gain = relevance,
//!   discount = 1/log2(i + 1)).
//! - Unfairness is the smoothed KL divergence between the exposure-weighted
//!   author distribution of a ranking (position `i` weighted by `γ^(i−1)`)
//!   and the unweighted author distribution of its candidate pool.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attribution::csv_error;
use crate::bm25::Bm25Index;
use crate::corpus::QueryRecord;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::groups::{kl_divergence, GroupDistribution, GroupProfiles, GroupVariable, GROUP_ARITY};
use crate::reranker::{rerank_scored, RankedEntry, RankedList, Reranker, WeightVector};
use crate::textprep::tokenize;

pub const DEFAULT_DEPTH: usize = 10;
pub const DEFAULT_GAMMA: f64 = 0.5;

/// NDCG@depth of `ranking` against the set of relevant ids. `None` when
/// nothing is relevant.
pub fn ndcg(ranking: &[String], relevant: &HashSet<&str>, depth: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(depth)
        .enumerate()
        .filter(|(_, id)| relevant.contains(id.as_str()))
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..relevant.len().min(depth)).map(discount).sum();
    Some(dcg / ideal)
}

pub fn utility(ranking: &RankedList, qrels: &QueryRecord, depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be positive".into()));
    }
    ndcg(&ranking.doc_ids(), &qrels.relevant_ids(), depth)
        .ok_or_else(|| Error::NoRelevant(qrels.query_id.clone()))
}

/// Author distribution of a ranking with position `i` (1-based) weighted by
/// `γ^(i−1)`.
pub fn exposure_distribution(
    ranking: &[String],
    profiles: &GroupProfiles,
    variable: GroupVariable,
    gamma: f64,
) -> Result<GroupDistribution> {
    if ranking.is_empty() {
        return Err(Error::Empty("ranking"));
    }
    let mut counts = [0.0; GROUP_ARITY];
    let mut weight = 1.0;
    for id in ranking {
        let c = profiles.counts(id)[variable.index()];
        for (t, x) in counts.iter_mut().zip(c) {
            *t += weight * x;
        }
        weight *= gamma;
    }
    GroupDistribution::from_counts(variable, counts)
}

pub fn unfairness(
    ranking: &[String],
    pool: &[String],
    variable: GroupVariable,
    gamma: f64,
    profiles: &GroupProfiles,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    let exposed = exposure_distribution(ranking, profiles, variable, gamma)?;
    kl_divergence(&exposed, &profiles.pooled(pool, variable)?)
}

/// 64-bit FNV-1a, used to derive per-query random streams.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Uniformly random ordering of `len` pool documents. The stream depends on
/// `seed` and `query_id` only.
pub fn baseline_random(
    query_id: &str,
    pool: &[String],
    len: usize,
    seed: u64,
) -> Result<RankedList> {
    if len > pool.len() {
        return Err(Error::LengthExceedsPool {
            requested: len,
            pool: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(query_id));
    let mut order = pool.to_vec();
    order.shuffle(&mut rng);
    order.truncate(len);
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries: order
            .into_iter()
            .map(|doc_id| RankedEntry { doc_id, cost: None })
            .collect(),
        weights: None,
        seed,
    })
}

/// Sweep point identity: a weight vector or one of the two baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointLabel {
    Weights(WeightVector),
    Bm25,
    Random,
}

impl PointLabel {
    pub fn tag(&self) -> &'static str {
        match self {
            PointLabel::Weights(_) => "fair",
            PointLabel::Bm25 => "bm25",
            PointLabel::Random => "random",
        }
    }

    pub fn weights(&self) -> Option<WeightVector> {
        match self {
            PointLabel::Weights(w) => Some(*w),
            _ => None,
        }
    }
}

impl fmt::Display for PointLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointLabel::Weights(w) => write!(f, "fair({w})"),
            other => f.write_str(other.tag()),
        }
    }
}

/// Query-averaged metrics of one sweep point. Averages are `None` when every
/// query was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub label: PointLabel,
    pub utility: Option<f64>,
    pub unfairness_gender: Option<f64>,
    pub unfairness_country: Option<f64>,
    pub n_queries: usize,
    pub n_skipped: usize,
}

/// Per-query metrics of one ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub utility: f64,
    pub unfairness_gender: f64,
    pub unfairness_country: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub label: String,
    pub query_id: String,
    pub reason: String,
}

impl fmt::Display for Skip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} query `{}`: {}",
            self.label, self.query_id, self.reason
        )
    }
}

/// Where each query's candidate pool comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolSource {
    /// The query's own candidate list, optionally cut to the BM25 top `k`.
    Provided { k: Option<usize> },
    /// The BM25 top `k` of the whole corpus.
    Corpus { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub depth: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Ranked list length; `None` ranks the whole pool. Longer requests are
    /// cut to the pool size.
    pub list_len: Option<usize>,
    pub pool: PoolSource,
    pub mode: ExecMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            depth: DEFAULT_DEPTH,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            list_len: None,
            pool: PoolSource::Provided { k: None },
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Grid points in input order, then the bm25 and random baselines.
    pub points: Vec<EvalPoint>,
    pub skips: Vec<Skip>,
}

/// All weight vectors on the simplex lattice with `divisions` steps per
/// axis, relevance weight descending. `divisions = 4` gives the 15-point
/// lattice with step 0.25.
pub fn simplex_grid(divisions: u32) -> Vec<WeightVector> {
    let n = divisions.max(1);
    let mut grid = Vec::new();
    for r in (0..=n).rev() {
        for g in (0..=n - r).rev() {
            let c = n - r - g;
            let d = n as f64;
            grid.push(
                WeightVector::new(r as f64 / d, g as f64 / d, c as f64 / d)
                    .expect("lattice point on simplex"),
            );
        }
    }
    grid
}

pub fn default_grid() -> Vec<WeightVector> {
    simplex_grid(4)
}

/// Pool, scores, and judgments of one query, prepared once per sweep.
struct PreparedQuery {
    query_id: String,
    scored: Vec<(String, f64)>,
    pool: Vec<String>,
    relevant: HashSet<String>,
}

fn prepare(
    query: &QueryRecord,
    reranker: &Reranker<'_>,
    source: PoolSource,
) -> Result<PreparedQuery> {
    let tokens = tokenize(&query.query_text);
    let scored = match source {
        PoolSource::Provided { k } => {
            let ids = query.candidate_ids();
            if ids.is_empty() {
                return Err(Error::Empty("candidate list"));
            }
            reranker.scored_pool(&tokens, k.unwrap_or(usize::MAX), Some(&ids))?
        }
        PoolSource::Corpus { k } => reranker.scored_pool(&tokens, k, None)?,
    };
    Ok(PreparedQuery {
        query_id: query.query_id.clone(),
        pool: scored.iter().map(|(id, _)| id.clone()).collect(),
        scored,
        relevant: query
            .relevant_ids()
            .into_iter()
            .map(str::to_string)
            .collect(),
    })
}

/// Utility and both unfairness values for one ranking.
pub fn score_ranking(
    ranking: &[String],
    pool: &[String],
    relevant: &HashSet<&str>,
    profiles: &GroupProfiles,
    depth: usize,
    gamma: f64,
) -> std::result::Result<QueryMetrics, String> {
    let utility = ndcg(ranking, relevant, depth).ok_or("no relevant documents")?;
    let unfair = |v| unfairness(ranking, pool, v, gamma, profiles).map_err(|e| e.to_string());
    Ok(QueryMetrics {
        utility,
        unfairness_gender: unfair(GroupVariable::Gender)?,
        unfairness_country: unfair(GroupVariable::Country)?,
    })
}

fn run_point(
    label: &PointLabel,
    q: &PreparedQuery,
    profiles: &GroupProfiles,
    config: &SweepConfig,
) -> std::result::Result<QueryMetrics, String> {
    let len = config.list_len.unwrap_or(q.pool.len()).min(q.pool.len());
    let ranking: Vec<String> = match label {
        PointLabel::Weights(w) => {
            rerank_scored(&q.scored, &q.pool, w, len, profiles, ExecMode::Sequential)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|e| e.doc_id)
                .collect()
        }
        PointLabel::Bm25 => q.pool[..len].to_vec(),
        PointLabel::Random => baseline_random(&q.query_id, &q.pool, len, config.seed)
            .map_err(|e| e.to_string())?
            .doc_ids(),
    };
    let relevant: HashSet<&str> = q.relevant.iter().map(String::as_str).collect();
    score_ranking(
        &ranking,
        &q.pool,
        &relevant,
        profiles,
        config.depth,
        config.gamma,
    )
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Runs every grid point plus the bm25 and random baselines over all
/// queries and averages the metrics of queries that could be scored.
///
/// Queries are evaluated in parallel (per `config.mode`); averaging walks
/// them in input order so results do not depend on scheduling.
pub fn sweep(
    grid: &[WeightVector],
    queries: &[QueryRecord],
    index: &Bm25Index,
    profiles: &GroupProfiles,
    config: &SweepConfig,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::Empty("weight grid"));
    }
    if config.depth == 0 {
        return Err(Error::InvalidArgument("depth must be positive".into()));
    }
    if !(config.gamma > 0.0 && config.gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be in (0, 1], got {}",
            config.gamma
        )));
    }
    let reranker = Reranker::new(index, profiles);
    let prepared = exec::map(queries, config.mode, |q| prepare(q, &reranker, config.pool));

    let labels: Vec<PointLabel> = grid
        .iter()
        .map(|w| PointLabel::Weights(*w))
        .chain([PointLabel::Bm25, PointLabel::Random])
        .collect();
    let jobs: Vec<(usize, usize)> = (0..labels.len())
        .flat_map(|p| (0..queries.len()).map(move |q| (p, q)))
        .collect();
    let results = exec::map(&jobs, config.mode, |&(p, q)| match &prepared[q] {
        Ok(prep) => run_point(&labels[p], prep, profiles, config),
        Err(e) => Err(e.to_string()),
    });

    let mut points = Vec::with_capacity(labels.len());
    let mut skips = Vec::new();
    for (p, label) in labels.iter().enumerate() {
        let per_query = &results[p * queries.len()..(p + 1) * queries.len()];
        let mut ok = Vec::new();
        for (q, r) in per_query.iter().enumerate() {
            match r {
                Ok(m) => ok.push(m),
                Err(reason) => skips.push(Skip {
                    label: label.to_string(),
                    query_id: queries[q].query_id.clone(),
                    reason: reason.clone(),
                }),
            }
        }
        points.push(EvalPoint {
            label: *label,
            utility: mean(ok.iter().map(|m| m.utility)),
            unfairness_gender: mean(ok.iter().map(|m| m.unfairness_gender)),
            unfairness_country: mean(ok.iter().map(|m| m.unfairness_country)),
            n_queries: ok.len(),
            n_skipped: per_query.len() - ok.len(),
        });
    }
    Ok(SweepReport { points, skips })
}

#[derive(Serialize)]
struct SweepRow {
    label: &'static str,
    w_r: Option<f64>,
    w_g: Option<f64>,
    w_c: Option<f64>,
    utility: Option<f64>,
    unfairness_gender: Option<f64>,
    unfairness_country: Option<f64>,
    n_queries: usize,
    n_skipped: usize,
}

/// Writes `label,w_r,w_g,w_c,utility,unfairness_gender,unfairness_country,n_queries,n_skipped`.
/// Baseline rows leave the weight columns empty.
pub fn write_sweep_csv(path: impl AsRef<Path>, points: &[EvalPoint]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for p in points {
        let weights = p.label.weights().map(|w| w.as_array());
        w.serialize(SweepRow {
            label: p.label.tag(),
            w_r: weights.map(|w| w[0]),
            w_g: weights.map(|w| w[1]),
            w_c: weights.map(|w| w[2]),
            utility: p.utility,
            unfairness_gender: p.unfairness_gender,
            unfairness_country: p.unfairness_country,
            n_queries: p.n_queries,
            n_skipped: p.n_skipped,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct QueryRow<'a> {
    qid: &'a str,
    utility: f64,
    unfairness_gender: f64,
    unfairness_country: f64,
}

/// Writes `qid,utility,unfairness_gender,unfairness_country`, one row per
/// scored query.
pub fn write_query_metrics_csv(
    path: impl AsRef<Path>,
    rows: &[(String, QueryMetrics)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (qid, m) in rows {
        w.serialize(QueryRow {
            qid,
            utility: m.utility,
            unfairness_gender: m.unfairness_gender,
            unfairness_country: m.unfairness_country,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
