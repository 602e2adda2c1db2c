//! Small indexes and synthetic datasets for tests, examples and the
//! experiment harness.

use rand::seq::index::sample;
use rand::Rng;

use crate::corpus::Dictionary;
use crate::index::Index;
use crate::preferences::{sample_split, Preference, PreferencePool, ScoredPair, TermPair};
use crate::rng;
use crate::semantics::{wnsd, SemanticModel};
use crate::TermId;

/// Three contexts over terms `a`, `b`, `c` (ids 0, 1, 2): `{a, b}`, `{a, c}`
/// and `{a, b, c}`.
pub fn fixture3() -> Index {
    from_term_lists(&[&["a", "b"], &["a", "c"], &["a", "b", "c"]])
}

/// An unstemmed index with one context per list. Term ids follow the usual
/// dictionary order (descending context count, then alphabetical).
pub fn from_term_lists(contexts: &[&[&str]]) -> Index {
    let mut counts: std::collections::BTreeMap<&str, u64> = Default::default();
    for ctx in contexts {
        let mut seen: Vec<&str> = ctx.to_vec();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *counts.entry(t).or_default() += 1;
        }
    }
    let dict = Dictionary::from_counts(counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect())
        .expect("fixture terms are distinct");
    let sets: Vec<Vec<TermId>> = contexts
        .iter()
        .map(|ctx| {
            let mut ids: Vec<TermId> = ctx.iter().map(|t| dict.id(t).unwrap()).collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        })
        .collect();
    let doc_ids: Vec<u32> = (0..contexts.len() as u32).collect();
    Index::from_term_sets(dict, false, &doc_ids, &sets).expect("fixture index is valid")
}

fn term_name(i: usize) -> String {
    format!("t{i:02}")
}

/// A random index with at most `max_terms` terms and `max_contexts` contexts.
/// Term popularity is skewed so that some pairs co-occur often and others
/// rarely or never.
pub fn random_index(seed: u64, max_terms: usize, max_contexts: usize) -> Index {
    assert!(max_terms >= 3 && max_contexts >= 2);
    let mut rng = rng::seeded(seed);
    let n_terms = rng.random_range(3..=max_terms);
    let n_contexts = rng.random_range(2..=max_contexts);
    random_sets(&mut rng, n_terms, n_contexts)
}

fn random_sets(rng: &mut rng::Rng, n_terms: usize, n_contexts: usize) -> Index {
    let names: Vec<String> = (0..n_terms).map(term_name).collect();
    let mut lists: Vec<Vec<&str>> = Vec::with_capacity(n_contexts);
    for _ in 0..n_contexts {
        let size = rng.random_range(2..=n_terms.min(8));
        let mut picked: Vec<&str> = Vec::with_capacity(size);
        while picked.len() < size {
            // Squaring a uniform draw favours low indices.
            let u: f64 = rng.random();
            let t = ((u * u) * n_terms as f64) as usize;
            let name = names[t.min(n_terms - 1)].as_str();
            if !picked.contains(&name) {
                picked.push(name);
            }
        }
        lists.push(picked);
    }
    let refs: Vec<&[&str]> = lists.iter().map(Vec::as_slice).collect();
    from_term_lists(&refs)
}

/// A random positive weight vector, log-uniform over `[1/spread, spread]`.
pub fn random_weights(seed: u64, n: usize, spread: f64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    let l = spread.ln();
    (0..n).map(|_| rng.random_range(-l..=l).exp()).collect()
}

/// A realizable learning problem: preferences labeled by a hidden weight
/// vector over a random index.
#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub index: Index,
    pub hidden: SemanticModel,
    /// Every co-occurring pair scored by its negated hidden distance.
    pub scores: Vec<ScoredPair>,
    pub pool: PreferencePool,
    /// A uniform sample from `pool`.
    pub preferences: Vec<Preference>,
}

/// Builds a suite with `n_terms` terms, `n_contexts` contexts and
/// `n_prefs` sampled preferences.
pub fn synthetic_suite(seed: u64, n_terms: usize, n_contexts: usize, n_prefs: usize) -> SyntheticSuite {
    let mut rng = rng::seeded(rng::derive_seed(seed, &[0x5e7]));
    let index = random_sets(&mut rng, n_terms, n_contexts);
    let weights = random_weights(rng::derive_seed(seed, &[1]), index.num_contexts(), 10.0);
    let hidden = SemanticModel::from_weights(weights, &index).expect("positive weights");
    let n = index.num_terms() as TermId;
    let mut scores = Vec::new();
    for lo in 0..n {
        for hi in (lo + 1)..n {
            let d = wnsd(&hidden, &index, lo, hi).expect("random suite is not degenerate");
            if d.is_finite() {
                scores.push(ScoredPair {
                    pair: TermPair::new(lo, hi).unwrap(),
                    score: d.score(),
                });
            }
        }
    }
    let pool = PreferencePool::new(&scores).expect("suite has scored pairs");
    let preferences = sample_split(&pool, n_prefs as u64, rng::derive_seed(seed, &[2]), 0)
        .expect("pool larger than sample")
        .train;
    SyntheticSuite {
        index,
        hidden,
        scores,
        pool,
        preferences,
    }
}

/// `count` distinct indices in `0..len`, for tests that need a cheap subset.
pub fn distinct_indices(seed: u64, len: usize, count: usize) -> Vec<usize> {
    sample(&mut rng::seeded(seed), len, count).into_vec()
}
