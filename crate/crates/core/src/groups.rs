//! Group variables, missing-label imputation, author-pooled distributions,
//! and smoothed KL divergence.

use std::collections::HashMap;
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{AuthorTable, Corpus};
use crate::error::{Error, Result};

/// Number of known values per group variable.
pub const GROUP_ARITY: usize = 2;

/// Mass added to every cell of both distributions before computing KL.
pub const KL_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupVariable {
    Gender,
    /// Country of affiliation, grouped by economy class.
    Country,
}

impl GroupVariable {
    pub const ALL: [GroupVariable; 2] = [GroupVariable::Gender, GroupVariable::Country];

    pub fn name(self) -> &'static str {
        match self {
            GroupVariable::Gender => "gender",
            GroupVariable::Country => "country",
        }
    }

    /// Known values, in index order.
    pub fn values(self) -> &'static [&'static str; GROUP_ARITY] {
        match self {
            GroupVariable::Gender => &["male", "female"],
            GroupVariable::Country => &["advanced", "developing"],
        }
    }

    pub fn index(self) -> usize {
        match self {
            GroupVariable::Gender => 0,
            GroupVariable::Country => 1,
        }
    }
}

impl fmt::Display for GroupVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Probability table over the known values of one group variable.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDistribution {
    variable: GroupVariable,
    probs: [f64; GROUP_ARITY],
}

impl GroupDistribution {
    pub fn new(variable: GroupVariable, probs: [f64; GROUP_ARITY]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::DistributionMismatch(format!(
                "{variable} probabilities must be finite and nonnegative: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::DistributionMismatch(format!(
                "{variable} probabilities sum to {sum}"
            )));
        }
        Ok(GroupDistribution { variable, probs })
    }

    /// Normalizes nonnegative counts. Zero total mass is an error.
    pub fn from_counts(variable: GroupVariable, counts: [f64; GROUP_ARITY]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::NoAuthors(variable));
        }
        Ok(GroupDistribution {
            variable,
            probs: counts.map(|c| c / total),
        })
    }

    pub fn variable(&self) -> GroupVariable {
        self.variable
    }

    pub fn probs(&self) -> &[f64; GROUP_ARITY] {
        &self.probs
    }

    pub fn prob(&self, value: &str) -> Option<f64> {
        self.variable
            .values()
            .iter()
            .position(|v| *v == value)
            .map(|i| self.probs[i])
    }
}

/// KL(p ‖ q) after adding `alpha` to each cell of both sides and renormalizing.
pub fn smoothed_kl(p: &[f64], q: &[f64], alpha: f64) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let n = p.len() as f64;
    let p_norm = 1.0 + n * alpha;
    let q_norm = 1.0 + n * alpha;
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let ps = (pi + alpha) / p_norm;
            let qs = (qi + alpha) / q_norm;
            ps * (ps / qs).ln()
        })
        .sum::<f64>()
        // rounding can leave -1e-17 for identical inputs
        .max(0.0)
}

pub fn kl_divergence(p: &GroupDistribution, q: &GroupDistribution) -> Result<f64> {
    if p.variable != q.variable {
        return Err(Error::DistributionMismatch(format!(
            "cannot compare {} with {}",
            p.variable, q.variable
        )));
    }
    Ok(smoothed_kl(&p.probs, &q.probs, KL_SMOOTHING))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImputationStrategy {
    /// Draw each missing label with probability equal to that value's share
    /// among identified authors.
    #[default]
    SampleByCorpusFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImputationPolicy {
    pub seed: u64,
    pub strategy: ImputationStrategy,
}

impl ImputationPolicy {
    pub fn new(seed: u64) -> Self {
        ImputationPolicy {
            seed,
            strategy: ImputationStrategy::SampleByCorpusFraction,
        }
    }
}

/// Replaces every Unknown label with a sampled known value. Identified labels
/// are left alone. Each variable draws from its own seeded stream, walking
/// authors in table order.
pub fn impute(authors: &AuthorTable, policy: ImputationPolicy) -> Result<AuthorTable> {
    let mut rows = authors.rows().to_vec();
    for variable in GroupVariable::ALL {
        let mut counts = [0u64; GROUP_ARITY];
        let mut missing = 0usize;
        for a in &rows {
            match a.label(variable) {
                Some(i) => counts[i] += 1,
                None => missing += 1,
            }
        }
        if missing == 0 {
            continue;
        }
        let ImputationStrategy::SampleByCorpusFraction = policy.strategy;
        let dist = WeightedIndex::new(counts).map_err(|_| Error::NoIdentifiedLabels(variable))?;
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
        rng.set_stream(variable.index() as u64);
        for a in rows.iter_mut().filter(|a| a.label(variable).is_none()) {
            let value = rng.sample(&dist);
            a.set_label(variable, Some(value));
        }
    }
    AuthorTable::from_rows(rows)
}

/// Per-document author label counts, indexed `[variable][value]`.
pub type DocCounts = [[f64; GROUP_ARITY]; 2];

/// Resolved group counts for every document in a corpus.
///
/// Authors missing from the table, or whose label is still Unknown, are not
/// counted. A document with no resolvable authors has all-zero counts.
#[derive(Debug, Clone, Default)]
pub struct GroupProfiles {
    counts: HashMap<String, DocCounts>,
}

impl GroupProfiles {
    pub fn build(corpus: &Corpus, authors: &AuthorTable) -> Self {
        let counts = corpus
            .iter()
            .map(|doc| {
                let mut c = [[0.0; GROUP_ARITY]; 2];
                for author in doc.author_ids.iter().filter_map(|id| authors.get(id)) {
                    for variable in GroupVariable::ALL {
                        if let Some(v) = author.label(variable) {
                            c[variable.index()][v] += 1.0;
                        }
                    }
                }
                (doc.doc_id.clone(), c)
            })
            .collect();
        GroupProfiles { counts }
    }

    /// Builds profiles directly from per-document counts.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, DocCounts)>) -> Self {
        GroupProfiles {
            counts: counts.into_iter().collect(),
        }
    }

    pub fn counts(&self, doc_id: &str) -> DocCounts {
        self.counts.get(doc_id).copied().unwrap_or_default()
    }

    /// Summed counts of one variable over `doc_ids`.
    pub fn tally(&self, doc_ids: &[String], variable: GroupVariable) -> [f64; GROUP_ARITY] {
        let mut total = [0.0; GROUP_ARITY];
        for id in doc_ids {
            let c = self.counts(id)[variable.index()];
            for (t, x) in total.iter_mut().zip(c) {
                *t += x;
            }
        }
        total
    }

    pub fn pooled(&self, doc_ids: &[String], variable: GroupVariable) -> Result<GroupDistribution> {
        if doc_ids.is_empty() {
            return Err(Error::Empty("document list"));
        }
        GroupDistribution::from_counts(variable, self.tally(doc_ids, variable))
    }
}

/// Author-pooled distribution of `variable` over a set of documents: every
/// author occurrence counts once, so an author on two documents counts twice.
pub fn pooled_distribution(
    doc_ids: &[String],
    corpus: &Corpus,
    authors: &AuthorTable,
    variable: GroupVariable,
) -> Result<GroupDistribution> {
    if doc_ids.is_empty() {
        return Err(Error::Empty("document list"));
    }
    let mut counts = [0.0; GROUP_ARITY];
    for id in doc_ids {
        let doc = corpus
            .get(id)
            .ok_or_else(|| Error::UnknownDocument(id.clone()))?;
        for author in doc.author_ids.iter().filter_map(|a| authors.get(a)) {
            if let Some(v) = author.label(variable) {
                counts[v] += 1.0;
            }
        }
    }
    GroupDistribution::from_counts(variable, counts)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{AuthorRecord, Economy, Gender, PaperDoc};

    fn dist(variable: GroupVariable, p: [f64; 2]) -> GroupDistribution {
        GroupDistribution::new(variable, p).unwrap()
    }

    #[test]
    fn kl_identity_is_zero() {
        let p = dist(GroupVariable::Gender, [0.3, 0.7]);
        assert!(kl_divergence(&p, &p).unwrap() <= 1e-12);
    }

    #[test]
    fn kl_point_mass_against_uniform() {
        let p = dist(GroupVariable::Gender, [1.0, 0.0]);
        let q = dist(GroupVariable::Gender, [0.5, 0.5]);
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-4);
    }

    #[test]
    fn kl_quarter_split() {
        let p = dist(GroupVariable::Country, [0.25, 0.75]);
        let q = dist(GroupVariable::Country, [0.5, 0.5]);
        let expected = 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-4);
        assert!((expected - 0.1308).abs() < 1e-4);
    }

    #[test]
    fn kl_rejects_mixed_variables() {
        let p = dist(GroupVariable::Gender, [0.5, 0.5]);
        let q = dist(GroupVariable::Country, [0.5, 0.5]);
        assert!(kl_divergence(&p, &q).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(GroupDistribution::new(GroupVariable::Gender, [0.5, 0.6]).is_err());
        assert!(GroupDistribution::new(GroupVariable::Gender, [-0.5, 1.5]).is_err());
        assert!(GroupDistribution::from_counts(GroupVariable::Gender, [0.0, 0.0]).is_err());
    }

    fn fixture() -> (Corpus, AuthorTable) {
        let authors = AuthorTable::from_rows(vec![
            AuthorRecord::new("m1", "").with_labels(Gender::Male, Economy::Advanced),
            AuthorRecord::new("m2", "").with_labels(Gender::Male, Economy::Developing),
            AuthorRecord::new("f1", "").with_labels(Gender::Female, Economy::Advanced),
        ])
        .unwrap();
        let corpus = Corpus::from_rows(vec![
            PaperDoc::new("d1", "", "", &["m1", "f1"]),
            PaperDoc::new("d2", "", "", &["m2"]),
            PaperDoc::new("d3", "", "", &["m1", "f1"]),
            PaperDoc::new("empty", "", "", &[]),
        ])
        .unwrap();
        (corpus, authors)
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pooled_single_doc() {
        let (corpus, authors) = fixture();
        let d =
            pooled_distribution(&ids(&["d1"]), &corpus, &authors, GroupVariable::Gender).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn pooled_counts_occurrences() {
        let (corpus, authors) = fixture();
        let d = pooled_distribution(
            &ids(&["d2", "d1"]),
            &corpus,
            &authors,
            GroupVariable::Gender,
        )
        .unwrap();
        assert!((d.prob("male").unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.prob("female").unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn authorless_docs_contribute_nothing() {
        let (corpus, authors) = fixture();
        let with = pooled_distribution(
            &ids(&["d1", "empty"]),
            &corpus,
            &authors,
            GroupVariable::Country,
        )
        .unwrap();
        let without =
            pooled_distribution(&ids(&["d1"]), &corpus, &authors, GroupVariable::Country).unwrap();
        assert_eq!(with, without);
        assert!(matches!(
            pooled_distribution(&ids(&["empty"]), &corpus, &authors, GroupVariable::Country),
            Err(Error::NoAuthors(_))
        ));
    }

    #[test]
    fn profiles_agree_with_direct_pooling() {
        let (corpus, authors) = fixture();
        let profiles = GroupProfiles::build(&corpus, &authors);
        for set in [
            ids(&["d1"]),
            ids(&["d1", "d2", "d3"]),
            ids(&["d3", "empty"]),
        ] {
            for v in GroupVariable::ALL {
                assert_eq!(
                    profiles.pooled(&set, v).unwrap(),
                    pooled_distribution(&set, &corpus, &authors, v).unwrap()
                );
            }
        }
    }

    fn unknown_heavy_table(male: usize, female: usize, unknown: usize) -> AuthorTable {
        let mut rows = Vec::new();
        let mut push = |g: Gender| {
            let id = rows.len();
            rows.push(AuthorRecord::new(format!("a{id}"), "").with_labels(g, Economy::Advanced));
        };
        (0..male).for_each(|_| push(Gender::Male));
        (0..female).for_each(|_| push(Gender::Female));
        (0..unknown).for_each(|_| push(Gender::Unknown));
        AuthorTable::from_rows(rows).unwrap()
    }

    #[test]
    fn imputation_keeps_identified_labels() {
        let table = unknown_heavy_table(3, 1, 20);
        let out = impute(&table, ImputationPolicy::new(7)).unwrap();
        for (before, after) in table.iter().zip(out.iter()) {
            if before.gender != Gender::Unknown {
                assert_eq!(before.gender, after.gender);
            }
            assert_ne!(after.gender, Gender::Unknown);
        }
    }

    #[test]
    fn imputation_draws_at_identified_share() {
        // 75% of identified authors are male
        let table = unknown_heavy_table(75, 25, 20_000);
        let out = impute(&table, ImputationPolicy::new(1)).unwrap();
        let imputed_male = out
            .iter()
            .skip(100)
            .filter(|a| a.gender == Gender::Male)
            .count();
        let share = imputed_male as f64 / 20_000.0;
        // 4σ for p = 0.75, n = 20000 is about 0.012
        assert!((share - 0.75).abs() < 0.012, "share {share}");
    }

    #[test]
    fn imputation_needs_identified_labels() {
        let table = unknown_heavy_table(0, 0, 5);
        assert!(matches!(
            impute(&table, ImputationPolicy::new(1)),
            Err(Error::NoIdentifiedLabels(GroupVariable::Gender))
        ));
    }

    #[test]
    fn imputation_is_seeded() {
        let table = unknown_heavy_table(6, 4, 500);
        let a = impute(&table, ImputationPolicy::new(99)).unwrap();
        let b = impute(&table, ImputationPolicy::new(99)).unwrap();
        let c = impute(&table, ImputationPolicy::new(100)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn simplex() -> impl Strategy<Value = [f64; 2]> {
        (0.0f64..=1.0).prop_map(|x| [x, 1.0 - x])
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(p in simplex(), q in simplex()) {
            let p = GroupDistribution { variable: GroupVariable::Gender, probs: p };
            let q = GroupDistribution { variable: GroupVariable::Gender, probs: q };
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        }

        #[test]
        fn pooling_ignores_order(order in Just(vec!["d1", "d2", "d3", "empty"]).prop_shuffle()) {
            let (corpus, authors) = fixture();
            let base = pooled_distribution(&ids(&["d1", "d2", "d3", "empty"]), &corpus, &authors, GroupVariable::Gender).unwrap();
            let shuffled = pooled_distribution(&ids(&order), &corpus, &authors, GroupVariable::Gender).unwrap();
            for (a, b) in base.probs().iter().zip(shuffled.probs()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
