//! Reference implementations written directly from the formulas, sharing no
//! code with the library beyond its input types.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALPHA: f64 = 1e-6;

/// Okapi BM25 of every document against `query`, with the negative-idf
/// floor `eps × mean(positive idf)`.
pub fn bm25(docs: &[Vec<&str>], query: &[&str], k1: f64, b: f64, eps: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut vocab: Vec<&str> = docs.iter().flatten().copied().collect();
    vocab.sort();
    vocab.dedup();
    let raw_idf = |t: &str| {
        let df = docs.iter().filter(|d| d.contains(&t)).count() as f64;
        (n - df + 0.5).ln() - (df + 0.5).ln()
    };
    let positive: Vec<f64> = vocab
        .iter()
        .map(|t| raw_idf(t))
        .filter(|v| *v > 0.0)
        .collect();
    let floor = if positive.is_empty() {
        0.0
    } else {
        eps * positive.iter().sum::<f64>() / positive.len() as f64
    };
    docs.iter()
        .map(|d| {
            let len = d.len() as f64;
            query
                .iter()
                .filter(|t| vocab.contains(t))
                .map(|t| {
                    let idf = raw_idf(t);
                    let idf = if idf < 0.0 { floor } else { idf };
                    let tf = d.iter().filter(|w| *w == t).count() as f64;
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg))
                })
                .sum()
        })
        .collect()
}

/// Smoothed KL(p ‖ q) over two-valued distributions given as raw counts.
/// Zero when either side has no mass.
pub fn kl_counts(p: [f64; 2], q: [f64; 2]) -> f64 {
    let (sp, sq) = (p[0] + p[1], q[0] + q[1]);
    if sp <= 0.0 || sq <= 0.0 {
        return 0.0;
    }
    kl(&[p[0] / sp, p[1] / sp], &[q[0] / sq, q[1] / sq])
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let k = p.len() as f64;
    let mut total = 0.0;
    for i in 0..p.len() {
        let a = (p[i] + ALPHA) / (1.0 + k * ALPHA);
        let b = (q[i] + ALPHA) / (1.0 + k * ALPHA);
        total += a * (a / b).ln();
    }
    total.max(0.0)
}

/// One greedy instance: raw scores, per-doc counts `[gender, country]`, and
/// weights. Doc ids are `d0..dn` in the given order.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub counts: Vec<[[f64; 2]; 2]>,
    pub weights: [f64; 3],
}

impl Instance {
    /// Weighted cost of appending pool member `doc` after `placed`.
    pub fn cost(&self, placed: &[usize], doc: usize) -> f64 {
        let lo = self.scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self
            .scores
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let f = if hi > lo {
            1.0 - (self.scores[doc] - lo) / (hi - lo)
        } else {
            0.0
        };
        let mut total = self.weights[0] * f;
        for v in 0..2 {
            let mut list = [0.0; 2];
            for &d in placed.iter().chain([&doc]) {
                list[0] += self.counts[d][v][0];
                list[1] += self.counts[d][v][1];
            }
            let mut pool = [0.0; 2];
            for c in &self.counts {
                pool[0] += c[v][0];
                pool[1] += c[v][1];
            }
            total += self.weights[1 + v] * kl_counts(list, pool);
        }
        total
    }

    /// Exhaustive greedy: at each step, the smallest id among documents whose
    /// cost is within `tol` of the step minimum.
    pub fn greedy(&self, len: usize, tol: f64) -> Vec<usize> {
        let mut placed = Vec::new();
        for _ in 0..len {
            let rest: Vec<usize> = (0..self.ids.len())
                .filter(|d| !placed.contains(d))
                .collect();
            let costs: Vec<f64> = rest.iter().map(|&d| self.cost(&placed, d)).collect();
            let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let pick = rest
                .iter()
                .zip(&costs)
                .filter(|(_, c)| **c <= min + tol)
                .map(|(d, _)| *d)
                .min_by(|a, b| self.ids[*a].cmp(&self.ids[*b]))
                .unwrap();
            placed.push(pick);
        }
        placed
    }
}

/// Random instance with up to `max_pool` docs. Scores and counts come from
/// small integer ranges so ties occur often.
pub fn random_instance(rng: &mut ChaCha8Rng, max_pool: usize) -> Instance {
    let n = rng.random_range(1..=max_pool);
    let ids = (0..n).map(|i| format!("d{i}")).collect();
    let scores = (0..n)
        .map(|_| rng.random_range(0..4) as f64 * 0.75)
        .collect();
    let counts = (0..n)
        .map(|_| {
            let mut c = [[0.0; 2]; 2];
            for row in c.iter_mut() {
                for x in row.iter_mut() {
                    *x = rng.random_range(0..3) as f64;
                }
            }
            c
        })
        .collect();
    let (a, b) = (rng.random_range(0..=4), rng.random_range(0..=4));
    let (lo, hi) = (a.min(b) as f64 / 4.0, a.max(b) as f64 / 4.0);
    Instance {
        ids,
        scores,
        counts,
        weights: [lo, hi - lo, 1.0 - hi],
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
