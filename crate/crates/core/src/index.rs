//! Inverted index from terms to the contexts that contain them.
//!
//! Postings are stored in one flat array with per-term offsets, so the memory
//! footprint is one `u32` per distinct (term, context) incidence.

use std::collections::HashMap;

use crate::corpus::{count_phrase, Dictionary, TokenizedContext};
use crate::error::{Error, Result};
use crate::{ContextId, TermId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextMeta {
    pub doc_id: u32,
    /// Distinct dictionary terms in the context.
    pub distinct_terms: u32,
}

impl ContextMeta {
    /// Unordered pairs of distinct dictionary terms in the context.
    pub fn pair_count(&self) -> u64 {
        let u = self.distinct_terms as u64;
        u * u.saturating_sub(1) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Index {
    dictionary: Dictionary,
    stemmed: bool,
    contexts: Vec<ContextMeta>,
    offsets: Vec<usize>,
    postings: Vec<ContextId>,
}

impl Index {
    /// Builds the index over `contexts`, whose tokens must come from the same
    /// tokenizer that produced `dictionary`.
    pub fn build(contexts: &[TokenizedContext], dictionary: Dictionary, stemmed: bool) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let phrases: Vec<(TermId, Vec<String>)> = dictionary
            .phrases()
            .map(|(id, toks)| (id, toks.into_iter().map(str::to_string).collect()))
            .collect();
        let mut by_first: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, (_, toks)) in phrases.iter().enumerate() {
            by_first.entry(toks[0].as_str()).or_default().push(i);
        }

        let mut term_sets: Vec<Vec<TermId>> = Vec::with_capacity(contexts.len());
        for ctx in contexts {
            let mut ids: Vec<TermId> = ctx.tokens.iter().filter_map(|t| dictionary.id(t)).collect();
            if !phrases.is_empty() {
                for t in &ctx.tokens {
                    if let Some(cands) = by_first.get(t.as_str()) {
                        for &i in cands {
                            let (id, toks) = &phrases[i];
                            if count_phrase(&ctx.tokens, toks) > 0 {
                                ids.push(*id);
                            }
                        }
                    }
                }
            }
            ids.sort_unstable();
            ids.dedup();
            term_sets.push(ids);
        }
        let doc_ids: Vec<u32> = contexts.iter().map(|c| c.doc_id).collect();
        Self::from_term_sets(dictionary, stemmed, &doc_ids, &term_sets)
    }

    /// Builds the index from per-context sets of term ids.
    pub fn from_term_sets(
        dictionary: Dictionary,
        stemmed: bool,
        doc_ids: &[u32],
        term_sets: &[Vec<TermId>],
    ) -> Result<Self> {
        if term_sets.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        assert_eq!(doc_ids.len(), term_sets.len());
        let d = dictionary.len();
        let mut counts = vec![0usize; d];
        let mut contexts = Vec::with_capacity(term_sets.len());
        for (set, &doc_id) in term_sets.iter().zip(doc_ids) {
            let mut distinct = 0u32;
            let mut prev = None;
            for &t in set {
                if t as usize >= d {
                    return Err(Error::TermOutOfRange(t));
                }
                if prev.is_some_and(|p| p >= t) {
                    if prev == Some(t) {
                        continue;
                    }
                    return Err(Error::CorruptArtifact("term set not sorted".into()));
                }
                prev = Some(t);
                counts[t as usize] += 1;
                distinct += 1;
            }
            contexts.push(ContextMeta {
                doc_id,
                distinct_terms: distinct,
            });
        }
        let mut offsets = Vec::with_capacity(d + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut cursor = offsets[..d].to_vec();
        let mut postings = vec![0; offsets[d]];
        for (cid, set) in term_sets.iter().enumerate() {
            let mut prev = None;
            for &t in set {
                if prev == Some(t) {
                    continue;
                }
                prev = Some(t);
                postings[cursor[t as usize]] = cid as ContextId;
                cursor[t as usize] += 1;
            }
        }
        Ok(Index {
            dictionary,
            stemmed,
            contexts,
            offsets,
            postings,
        })
    }

    /// Reassembles an index from stored parts, validating every invariant.
    pub fn from_parts(
        dictionary: Dictionary,
        stemmed: bool,
        contexts: Vec<ContextMeta>,
        lists: Vec<Vec<ContextId>>,
    ) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if lists.len() != dictionary.len() {
            return Err(Error::CorruptArtifact(format!(
                "{} posting lists for {} terms",
                lists.len(),
                dictionary.len()
            )));
        }
        let n = contexts.len();
        let mut per_context = vec![0u32; n];
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut postings = Vec::new();
        for list in &lists {
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::CorruptArtifact("postings not strictly ascending".into()));
            }
            for &c in list {
                if c as usize >= n {
                    return Err(Error::ContextOutOfRange(c));
                }
                per_context[c as usize] += 1;
            }
            postings.extend_from_slice(list);
            offsets.push(postings.len());
        }
        if per_context
            .iter()
            .zip(&contexts)
            .any(|(&u, meta)| u != meta.distinct_terms)
        {
            return Err(Error::CorruptArtifact(
                "context term counts disagree with postings".into(),
            ));
        }
        Ok(Index {
            dictionary,
            stemmed,
            contexts,
            offsets,
            postings,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    /// Whether the dictionary terms are Porter stems.
    pub fn stemmed(&self) -> bool {
        self.stemmed
    }

    pub fn contexts(&self) -> &[ContextMeta] {
        &self.contexts
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn num_terms(&self) -> usize {
        self.dictionary.len()
    }

    fn check(&self, t: TermId) -> Result<()> {
        if (t as usize) < self.dictionary.len() {
            Ok(())
        } else {
            Err(Error::TermOutOfRange(t))
        }
    }

    /// The contexts containing `t`, ascending.
    pub fn postings(&self, t: TermId) -> Result<&[ContextId]> {
        self.check(t)?;
        let t = t as usize;
        Ok(&self.postings[self.offsets[t]..self.offsets[t + 1]])
    }

    /// The contexts containing both `t1` and `t2`, ascending.
    pub fn co_occurring(&self, t1: TermId, t2: TermId) -> Result<Vec<ContextId>> {
        self.check(t1)?;
        self.check(t2)?;
        if t1 == t2 {
            return Err(Error::DegeneratePair(t1));
        }
        Ok(intersect(self.postings(t1)?, self.postings(t2)?))
    }

    /// Sum of per-context pair counts; the unit-weight pair mass.
    pub fn total_pairs(&self) -> u64 {
        self.contexts.iter().map(ContextMeta::pair_count).sum()
    }

    /// Per-context term lists (the transpose of the postings).
    pub fn forward(&self) -> Vec<Vec<TermId>> {
        let mut fwd: Vec<Vec<TermId>> = self
            .contexts
            .iter()
            .map(|m| Vec::with_capacity(m.distinct_terms as usize))
            .collect();
        for t in 0..self.dictionary.len() {
            for &c in &self.postings[self.offsets[t]..self.offsets[t + 1]] {
                fwd[c as usize].push(t as TermId);
            }
        }
        fwd
    }
}

/// Sorted-list intersection. Switches to galloping search when one side is
/// much shorter than the other.
pub fn intersect(a: &[ContextId], b: &[ContextId]) -> Vec<ContextId> {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(short.len());
    if long.len() / short.len() >= 16 {
        let mut lo = 0;
        for &x in short {
            let mut step = 1;
            let mut hi = lo;
            while hi < long.len() && long[hi] < x {
                lo = hi;
                hi += step;
                step *= 2;
            }
            let hi = (hi + 1).min(long.len());
            match long[lo..hi].binary_search(&x) {
                Ok(pos) => {
                    out.push(x);
                    lo += pos + 1;
                }
                Err(pos) => lo += pos,
            }
            if lo >= long.len() {
                break;
            }
        }
    } else {
        let (mut i, mut j) = (0, 0);
        while i < short.len() && j < long.len() {
            match short[i].cmp(&long[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(short[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_dictionary;
    use crate::fixtures;
    use proptest::prelude::*;

    #[test]
    fn fixture_postings_and_meta() {
        let idx = fixtures::fixture3();
        assert_eq!(idx.postings(0).unwrap(), &[0, 1, 2]);
        assert_eq!(idx.postings(1).unwrap(), &[0, 2]);
        assert_eq!(idx.postings(2).unwrap(), &[1, 2]);
        let u: Vec<u32> = idx.contexts().iter().map(|m| m.distinct_terms).collect();
        let p: Vec<u64> = idx.contexts().iter().map(|m| m.pair_count()).collect();
        assert_eq!(u, vec![2, 2, 3]);
        assert_eq!(p, vec![1, 1, 3]);
        assert_eq!(idx.total_pairs(), 5);
    }

    #[test]
    fn fixture_co_occurrence() {
        let idx = fixtures::fixture3();
        assert_eq!(idx.co_occurring(0, 1).unwrap(), vec![0, 2]);
        assert_eq!(idx.co_occurring(1, 2).unwrap(), vec![2]);
        assert!(matches!(idx.co_occurring(1, 1), Err(Error::DegeneratePair(1))));
        assert!(matches!(idx.postings(3), Err(Error::TermOutOfRange(3))));
    }

    #[test]
    fn single_and_repeated_tokens() {
        let ctx = vec![TokenizedContext {
            doc_id: 0,
            tokens: vec!["x".into(), "x".into()],
        }];
        let dict = build_dictionary(&ctx, None, &[]).unwrap();
        let idx = Index::build(&ctx, dict, false).unwrap();
        assert_eq!(idx.postings(0).unwrap(), &[0]);
        assert_eq!(idx.contexts()[0].distinct_terms, 1);
        assert_eq!(idx.contexts()[0].pair_count(), 0);
    }

    #[test]
    fn disjoint_postings() {
        let ctx = vec![
            TokenizedContext {
                doc_id: 0,
                tokens: vec!["x".into()],
            },
            TokenizedContext {
                doc_id: 0,
                tokens: vec!["y".into()],
            },
        ];
        let dict = build_dictionary(&ctx, None, &[]).unwrap();
        let idx = Index::build(&ctx, dict, false).unwrap();
        assert!(idx.co_occurring(0, 1).unwrap().is_empty());
    }

    #[test]
    fn empty_corpus() {
        let dict = Dictionary::from_counts(vec![("x".into(), 1)]).unwrap();
        assert!(matches!(Index::build(&[], dict, false), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn phrases_index_as_terms() {
        let ctx = vec![
            TokenizedContext {
                doc_id: 0,
                tokens: vec!["new".into(), "york".into()],
            },
            TokenizedContext {
                doc_id: 1,
                tokens: vec!["york".into(), "new".into()],
            },
        ];
        let phrase = vec!["new".to_string(), "york".to_string()];
        let dict = build_dictionary(&ctx, None, &[phrase]).unwrap();
        let idx = Index::build(&ctx, dict, false).unwrap();
        let id = idx.dictionary().id("new york").unwrap();
        assert_eq!(idx.postings(id).unwrap(), &[0]);
        assert_eq!(idx.contexts()[0].distinct_terms, 3);
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
        prop::collection::vec(prop::collection::vec(0u8..12, 0..8), 1..30)
    }

    fn build_random(sets: &[Vec<u8>]) -> Index {
        let ctx: Vec<TokenizedContext> = sets
            .iter()
            .map(|s| TokenizedContext {
                doc_id: 0,
                tokens: s.iter().map(|t| format!("t{t}")).collect(),
            })
            .collect();
        let ctx = if ctx.iter().all(|c| c.tokens.is_empty()) {
            vec![TokenizedContext {
                doc_id: 0,
                tokens: vec!["t0".into()],
            }]
        } else {
            ctx
        };
        let dict = build_dictionary(&ctx, None, &[]).unwrap();
        Index::build(&ctx, dict, false).unwrap()
    }

    proptest! {
        #[test]
        fn incidence_invariants(sets in corpus_strategy()) {
            let idx = build_random(&sets);
            let d = idx.num_terms() as TermId;
            let total_u: u64 = idx.contexts().iter().map(|m| m.distinct_terms as u64).sum();
            let total_post: u64 = (0..d).map(|t| idx.postings(t).unwrap().len() as u64).sum();
            prop_assert_eq!(total_u, total_post);

            let mut pair_incidences = 0u64;
            for t1 in 0..d {
                for t2 in (t1 + 1)..d {
                    let co = idx.co_occurring(t1, t2).unwrap();
                    let p1 = idx.postings(t1).unwrap();
                    let p2 = idx.postings(t2).unwrap();
                    prop_assert!(co.len() <= p1.len().min(p2.len()));
                    let brute: Vec<u32> = p1.iter().copied().filter(|c| p2.contains(c)).collect();
                    prop_assert_eq!(&co, &brute);
                    pair_incidences += co.len() as u64;
                }
            }
            prop_assert_eq!(pair_incidences, idx.total_pairs());
        }

        #[test]
        fn galloping_matches_merge(
            a in prop::collection::btree_set(0u32..2000, 0..10),
            b in prop::collection::btree_set(0u32..2000, 0..600),
        ) {
            let a: Vec<u32> = a.into_iter().collect();
            let b: Vec<u32> = b.into_iter().collect();
            let expected: Vec<u32> = a.iter().copied().filter(|x| b.binary_search(x).is_ok()).collect();
            prop_assert_eq!(intersect(&a, &b), expected.clone());
            prop_assert_eq!(intersect(&b, &a), expected);
        }
    }
}
