//! Term pairs, labeled pair-of-pair preferences, and dataset synthesis.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;

use crate::corpus::Dictionary;
use crate::error::{Error, Result};
use crate::index::Index;
use crate::rng;
use crate::semantics;
use crate::TermId;

/// Test sets larger than this are subsampled.
pub const DEFAULT_TEST_CAP: u64 = 1_000_000;

/// Score given to GSS pairs that never co-occur. Finite so that it still
/// orders below every real score.
pub const GSS_SENTINEL: f64 = f64::MIN;

/// An unordered pair of distinct terms, stored with `lo < hi`.
///
/// `Ord` is the complete order over pairs used to break ties and to pick
/// canonical representatives: pairs compare by their larger term first, then
/// by their smaller term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TermPair {
    lo: TermId,
    hi: TermId,
}

impl TermPair {
    pub fn new(t1: TermId, t2: TermId) -> Result<Self> {
        match t1.cmp(&t2) {
            Ordering::Less => Ok(TermPair { lo: t1, hi: t2 }),
            Ordering::Greater => Ok(TermPair { lo: t2, hi: t1 }),
            Ordering::Equal => Err(Error::NotInDpref(format!("pair ({t1}, {t2}) repeats a term"))),
        }
    }

    pub fn lo(&self) -> TermId {
        self.lo
    }

    pub fn hi(&self) -> TermId {
        self.hi
    }

    pub fn contains(&self, t: TermId) -> bool {
        self.lo == t || self.hi == t
    }
}

impl Ord for TermPair {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.hi, self.lo).cmp(&(other.hi, other.lo))
    }
}

impl PartialOrd for TermPair {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TermPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.lo, self.hi)
    }
}

/// +1: the first pair is more related than the second; -1: the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    pub fn from_sign(v: i64) -> Option<Label> {
        match v {
            1 => Some(Label::Pos),
            -1 => Some(Label::Neg),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Pos => "+1",
            Label::Neg => "-1",
        })
    }
}

/// An ordered pair of distinct term pairs: the instance space of the
/// preference classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quadruple {
    pub first: TermPair,
    pub second: TermPair,
}

impl Quadruple {
    pub fn new(first: TermPair, second: TermPair) -> Result<Self> {
        if first == second {
            return Err(Error::NotInDpref(format!("both sides are {first}")));
        }
        Ok(Quadruple { first, second })
    }

    /// The same two pairs in the opposite order.
    pub fn inverse(&self) -> Quadruple {
        Quadruple {
            first: self.second,
            second: self.first,
        }
    }

    /// Whether the first pair is above the second in the pair order.
    pub fn is_descending(&self) -> bool {
        self.first > self.second
    }
}

/// A labeled quadruple in canonical form: `a < b` in the pair order, with the
/// label adjusted so the stored preference means the same thing as the raw
/// input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Preference {
    a: TermPair,
    b: TermPair,
    y: Label,
}

impl Preference {
    /// Canonicalizes `((t1, t2), (t3, t4))` with label `y`.
    pub fn canonical(t1: TermId, t2: TermId, t3: TermId, t4: TermId, y: Label) -> Result<Self> {
        Self::from_pairs(TermPair::new(t1, t2)?, TermPair::new(t3, t4)?, y)
    }

    pub fn from_pairs(first: TermPair, second: TermPair, y: Label) -> Result<Self> {
        match first.cmp(&second) {
            Ordering::Less => Ok(Preference { a: first, b: second, y }),
            Ordering::Greater => Ok(Preference {
                a: second,
                b: first,
                y: y.flip(),
            }),
            Ordering::Equal => Err(Error::NotInDpref(format!("both sides are {first}"))),
        }
    }

    /// Preference that `better` is more related than `worse`.
    pub fn prefer(better: TermPair, worse: TermPair) -> Result<Self> {
        Self::from_pairs(better, worse, Label::Pos)
    }

    pub fn a(&self) -> TermPair {
        self.a
    }

    pub fn b(&self) -> TermPair {
        self.b
    }

    pub fn label(&self) -> Label {
        self.y
    }

    pub fn quadruple(&self) -> Quadruple {
        Quadruple {
            first: self.a,
            second: self.b,
        }
    }

    /// (more related pair, less related pair).
    pub fn ordered(&self) -> (TermPair, TermPair) {
        match self.y {
            Label::Pos => (self.a, self.b),
            Label::Neg => (self.b, self.a),
        }
    }

    /// The contradicting preference: same pairs, opposite label.
    pub fn flipped(&self) -> Preference {
        Preference {
            y: self.y.flip(),
            ..*self
        }
    }
}

/// A pair with a ground-truth relatedness score (higher = more related).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub pair: TermPair,
    pub score: f64,
}

/// Collapses duplicate pairs to the mean of their scores; output is sorted by
/// `(lo, hi)`.
pub fn merge_duplicate_pairs(pairs: &[ScoredPair]) -> Vec<ScoredPair> {
    let mut sums: HashMap<TermPair, (f64, u32)> = HashMap::new();
    for sp in pairs {
        let e = sums.entry(sp.pair).or_insert((0.0, 0));
        e.0 += sp.score;
        e.1 += 1;
    }
    let mut out: Vec<ScoredPair> = sums
        .into_iter()
        .map(|(pair, (sum, n))| ScoredPair {
            pair,
            score: sum / n as f64,
        })
        .collect();
    out.sort_by_key(|sp| (sp.pair.lo, sp.pair.hi));
    out
}

/// Random access to a collection of preferences.
pub trait PreferenceSource {
    fn len(&self) -> u64;
    fn get(&self, i: u64) -> Preference;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PreferenceSource for [Preference] {
    fn len(&self) -> u64 {
        <[Preference]>::len(self) as u64
    }

    fn get(&self, i: u64) -> Preference {
        self[i as usize]
    }
}

impl PreferenceSource for Vec<Preference> {
    fn len(&self) -> u64 {
        self.as_slice().len() as u64
    }

    fn get(&self, i: u64) -> Preference {
        self[i as usize]
    }
}

/// Every preference implied by a list of scored pairs, without materializing
/// them.
///
/// Pairs are kept sorted by descending score. Position `i` contributes one
/// preference for each later pair with a strictly lower score; tied pairs
/// contribute nothing. Lookup by preference index is a binary search over
/// the cumulative counts, so memory stays linear in the number of pairs even
/// when the number of preferences is in the hundreds of billions.
#[derive(Debug, Clone)]
pub struct PreferencePool {
    pairs: Vec<ScoredPair>,
    group_end: Vec<usize>,
    cumulative: Vec<u64>,
}

/// Builds the preference collection over `scores`.
pub fn make_preferences(scores: &[ScoredPair]) -> Result<PreferencePool> {
    PreferencePool::new(scores)
}

impl PreferencePool {
    pub fn new(scores: &[ScoredPair]) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InsufficientPairs(scores.len()));
        }
        let mut seen = std::collections::HashSet::with_capacity(scores.len());
        for sp in scores {
            if !sp.score.is_finite() {
                return Err(Error::NonFiniteScore(sp.pair.lo, sp.pair.hi));
            }
            if !seen.insert(sp.pair) {
                return Err(Error::DuplicatePair(sp.pair.lo, sp.pair.hi));
            }
        }
        let mut pairs = scores.to_vec();
        pairs.sort_by(|x, y| {
            y.score
                .total_cmp(&x.score)
                .then_with(|| (x.pair.lo, x.pair.hi).cmp(&(y.pair.lo, y.pair.hi)))
        });
        let k = pairs.len();
        let mut group_end = vec![0; k];
        let mut start = 0;
        while start < k {
            let mut end = start + 1;
            while end < k && pairs[end].score == pairs[start].score {
                end += 1;
            }
            group_end[start..end].fill(end);
            start = end;
        }
        let mut cumulative = Vec::with_capacity(k + 1);
        cumulative.push(0u64);
        for &end in &group_end {
            cumulative.push(cumulative.last().unwrap() + (k - end) as u64);
        }
        Ok(PreferencePool {
            pairs,
            group_end,
            cumulative,
        })
    }

    /// Scored pairs in pool order (descending score).
    pub fn scored_pairs(&self) -> &[ScoredPair] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = Preference> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_vec(&self) -> Vec<Preference> {
        self.iter().collect()
    }
}

impl PreferenceSource for PreferencePool {
    fn len(&self) -> u64 {
        *self.cumulative.last().unwrap()
    }

    fn get(&self, idx: u64) -> Preference {
        assert!(idx < self.len(), "preference index {idx} out of range");
        // Last i with cumulative[i] <= idx.
        let i = self.cumulative.partition_point(|&c| c <= idx) - 1;
        let j = self.group_end[i] + (idx - self.cumulative[i]) as usize;
        Preference::prefer(self.pairs[i].pair, self.pairs[j].pair).expect("pool pairs are distinct")
    }
}

/// Train/test split of a preference collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Preference>,
    pub test: Vec<Preference>,
}

/// Draws an `m`-subset for training uniformly without replacement; the rest
/// is the test set, itself subsampled uniformly down to `test_cap`.
///
/// Both sets come from one draw of `m + min(|P| - m, test_cap)` distinct
/// indices: the first `m` train, the remainder test.
pub fn sample_split<P: PreferenceSource + ?Sized>(prefs: &P, m: u64, seed: u64, test_cap: u64) -> Result<Split> {
    let (train, test) = sample_split_indices(prefs.len(), m, seed, test_cap)?;
    Ok(Split {
        train: train.into_iter().map(|i| prefs.get(i)).collect(),
        test: test.into_iter().map(|i| prefs.get(i)).collect(),
    })
}

pub fn sample_split_indices(len: u64, m: u64, seed: u64, test_cap: u64) -> Result<(Vec<u64>, Vec<u64>)> {
    if m > len {
        return Err(Error::SplitTooLarge { m, available: len });
    }
    let amount = m + (len - m).min(test_cap);
    let mut rng = rng::seeded(seed);
    let drawn = rand::seq::index::sample(&mut rng, len as usize, amount as usize);
    let mut all: Vec<u64> = drawn.into_iter().map(|i| i as u64).collect();
    let test = all.split_off(m as usize);
    Ok((all, test))
}

/// A GSS score with a flag for pairs that got the sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GssScore {
    pub scored: ScoredPair,
    pub flagged: bool,
}

/// Scores every pair of `targets` by negated NSD over `index_b`.
///
/// Term ids in the output refer to `targets`. Pairs that never co-occur in
/// `index_b`, or that contain a term missing from its vocabulary, are
/// flagged and scored with [`GSS_SENTINEL`].
pub fn gss_scores(index_b: &Index, targets: &Dictionary) -> Result<Vec<GssScore>> {
    let mapped: Vec<Option<TermId>> = targets.terms().iter().map(|t| index_b.dictionary().id(t)).collect();
    let n = targets.len() as TermId;
    let mut out = Vec::with_capacity((n as usize) * (n as usize).saturating_sub(1) / 2);
    for lo in 0..n {
        for hi in (lo + 1)..n {
            let pair = TermPair::new(lo, hi)?;
            let distance = match (mapped[lo as usize], mapped[hi as usize]) {
                (Some(x), Some(y)) => Some(semantics::nsd(index_b, x, y)?),
                _ => None,
            };
            let (score, flagged) = match distance {
                Some(r) if r.is_finite() => (-r.distance, false),
                _ => (GSS_SENTINEL, true),
            };
            out.push(GssScore {
                scored: ScoredPair { pair, score },
                flagged,
            });
        }
    }
    Ok(out)
}

/// Uniform random partition of documents into two halves whose sizes differ
/// by at most one.
pub fn topic_split(doc_ids: &[u32], seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    if doc_ids.len() < 2 {
        return Err(Error::TooFewDocuments(doc_ids.len()));
    }
    let mut shuffled = doc_ids.to_vec();
    shuffled.shuffle(&mut rng::seeded(seed));
    let second = shuffled.split_off(shuffled.len().div_ceil(2));
    Ok((shuffled, second))
}

/// Checks that no two preferences assert opposite labels for the same
/// quadruple.
pub fn check_contradictions(prefs: &[Preference]) -> Result<()> {
    let mut seen: HashMap<(TermPair, TermPair), Preference> = HashMap::with_capacity(prefs.len());
    for p in prefs {
        if let Some(prev) = seen.insert((p.a, p.b), *p) {
            if prev.y != p.y {
                return Err(Error::Contradiction {
                    first: prev,
                    second: *p,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    const A: TermId = 0;
    const B: TermId = 1;
    const C: TermId = 2;

    fn tp(x: TermId, y: TermId) -> TermPair {
        TermPair::new(x, y).unwrap()
    }

    fn sp(x: TermId, y: TermId, s: f64) -> ScoredPair {
        ScoredPair {
            pair: tp(x, y),
            score: s,
        }
    }

    #[test]
    fn pair_order_matches_larger_term_first() {
        assert!(tp(A, C) > tp(A, B));
        assert!(tp(B, C) > tp(A, C));
        assert!(tp(A, B) < tp(B, C));
    }

    #[test]
    fn canonicalize_orientation() {
        let p = Preference::canonical(B, A, C, B, Label::Pos).unwrap();
        assert_eq!((p.a(), p.b(), p.label()), (tp(A, B), tp(B, C), Label::Pos));
    }

    #[test]
    fn canonicalize_swaps_and_flips() {
        let p = Preference::canonical(B, C, A, B, Label::Pos).unwrap();
        assert_eq!((p.a(), p.b(), p.label()), (tp(A, B), tp(B, C), Label::Neg));
        assert_eq!(p.ordered(), (tp(B, C), tp(A, B)));
    }

    #[test]
    fn canonicalize_rejects_outside_dpref() {
        assert!(Preference::canonical(A, B, A, B, Label::Pos).is_err());
        assert!(Preference::canonical(A, B, B, A, Label::Pos).is_err());
        assert!(Preference::canonical(A, A, B, C, Label::Pos).is_err());
        assert!(Preference::canonical(A, B, C, C, Label::Neg).is_err());
    }

    #[test]
    fn merge_averages_duplicates() {
        let merged = merge_duplicate_pairs(&[sp(5, 3, 2.0), sp(3, 5, 4.0)]);
        assert_eq!(merged, vec![sp(3, 5, 3.0)]);
        let merged = merge_duplicate_pairs(&[sp(0, 1, 1.0), sp(0, 1, 2.0), sp(1, 0, 3.0)]);
        assert_eq!(merged, vec![sp(0, 1, 2.0)]);
        let unique = vec![sp(0, 1, 1.0), sp(0, 2, 5.0)];
        assert_eq!(merge_duplicate_pairs(&unique), unique);
    }

    #[test]
    fn preferences_from_distinct_scores() {
        let pool = make_preferences(&[sp(0, 1, 1.0), sp(0, 2, 2.0), sp(1, 2, 3.0)]).unwrap();
        assert_eq!(pool.len(), 3);
        let all = pool.to_vec();
        assert!(all.contains(&Preference::prefer(tp(1, 2), tp(0, 1)).unwrap()));
        assert!(all.contains(&Preference::prefer(tp(0, 2), tp(0, 1)).unwrap()));
        assert!(all.contains(&Preference::prefer(tp(1, 2), tp(0, 2)).unwrap()));
    }

    #[test]
    fn preferences_exclude_ties() {
        let pool = make_preferences(&[sp(0, 1, 1.0), sp(0, 2, 1.0)]).unwrap();
        assert_eq!(pool.len(), 0);
    }

    #[test]
    fn preferences_need_two_pairs() {
        assert!(matches!(
            make_preferences(&[sp(0, 1, 1.0)]),
            Err(Error::InsufficientPairs(1))
        ));
        assert!(matches!(
            make_preferences(&[sp(0, 1, 1.0), sp(1, 0, 2.0)]),
            Err(Error::DuplicatePair(0, 1))
        ));
    }

    #[test]
    fn split_edges() {
        let prefs = make_preferences(&[sp(0, 1, 1.0), sp(0, 2, 2.0), sp(1, 2, 3.0), sp(0, 3, 4.0)])
            .unwrap()
            .to_vec();
        let s = sample_split(&prefs, 0, 1, DEFAULT_TEST_CAP).unwrap();
        assert!(s.train.is_empty());
        assert_eq!(s.test.len(), prefs.len());
        let s = sample_split(&prefs, prefs.len() as u64, 1, DEFAULT_TEST_CAP).unwrap();
        assert!(s.test.is_empty());
        assert_eq!(
            sample_split(&prefs, 2, 9, 3).unwrap(),
            sample_split(&prefs, 2, 9, 3).unwrap()
        );
        assert!(sample_split(&prefs, 7, 1, 10).is_err());
    }

    #[test]
    fn split_caps_test_set() {
        let (train, test) = sample_split_indices(1000, 10, 3, 50).unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 50);
    }

    #[test]
    fn split_handles_huge_lazy_pools() {
        // All pairs over 1000 terms: about 1.2 * 10^11 preferences, drawn from
        // without materializing them.
        let mut scores = Vec::new();
        for lo in 0..1000u32 {
            for hi in (lo + 1)..1000 {
                scores.push(sp(lo, hi, scores.len() as f64));
            }
        }
        let k = scores.len() as u64;
        let pool = make_preferences(&scores).unwrap();
        assert_eq!(pool.len(), k * (k - 1) / 2);
        let s = sample_split(&pool, 100, 5, 1000).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (100, 1000));
    }

    #[test]
    fn gss_on_fixture() {
        let idx = fixtures::fixture3();
        let scores = gss_scores(&idx, idx.dictionary()).unwrap();
        let by_pair: HashMap<TermPair, f64> = scores.iter().map(|g| (g.scored.pair, g.scored.score)).collect();
        let ab = -(1.5f64.ln() / 2.5f64.ln());
        let bc = -(2f64.ln() / 2.5f64.ln());
        assert!((by_pair[&tp(A, B)] - ab).abs() < 1e-12);
        assert!((by_pair[&tp(A, C)] - ab).abs() < 1e-12);
        assert!((by_pair[&tp(B, C)] - bc).abs() < 1e-12);
        assert!(scores.iter().all(|g| !g.flagged));
    }

    #[test]
    fn gss_flags_missing_and_non_co_occurring() {
        let idx = fixtures::fixture3();
        let targets = Dictionary::from_counts(vec![("a".into(), 5), ("zzz".into(), 1)]).unwrap();
        let scores = gss_scores(&idx, &targets).unwrap();
        assert_eq!(scores.len(), 1);
        assert!(scores[0].flagged);
        assert_eq!(scores[0].scored.score, GSS_SENTINEL);
    }

    #[test]
    fn topic_split_sizes() {
        let ten: Vec<u32> = (0..10).collect();
        let (x, y) = topic_split(&ten, 3).unwrap();
        assert_eq!((x.len(), y.len()), (5, 5));
        let eleven: Vec<u32> = (0..11).collect();
        let (x, y) = topic_split(&eleven, 3).unwrap();
        assert_eq!(x.len().abs_diff(y.len()), 1);
        assert_eq!(topic_split(&eleven, 3).unwrap(), (x, y));
        assert!(topic_split(&[1], 3).is_err());
    }

    #[test]
    fn contradiction_detected() {
        let p = Preference::canonical(A, B, B, C, Label::Pos).unwrap();
        assert!(check_contradictions(&[p, p]).is_ok());
        assert!(matches!(
            check_contradictions(&[p, p.flipped()]),
            Err(Error::Contradiction { .. })
        ));
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent(t in prop::array::uniform4(0u32..6), pos in any::<bool>()) {
            let y = if pos { Label::Pos } else { Label::Neg };
            if let Ok(p) = Preference::canonical(t[0], t[1], t[2], t[3], y) {
                let again = Preference::from_pairs(p.a(), p.b(), p.label()).unwrap();
                prop_assert_eq!(p, again);
                prop_assert!(p.a() < p.b());
                // Same meaning as the raw input.
                let (better, _) = p.ordered();
                let raw_better = if pos { TermPair::new(t[0], t[1]).unwrap() } else { TermPair::new(t[2], t[3]).unwrap() };
                prop_assert_eq!(better, raw_better);
            }
        }

        #[test]
        fn pool_matches_pairwise_enumeration(scores in prop::collection::vec(0u8..6, 2..25)) {
            let scored: Vec<ScoredPair> = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| sp(i as TermId, 100, s as f64))
                .collect();
            let pool = make_preferences(&scored).unwrap();
            let mut expected = Vec::new();
            for i in 0..scored.len() {
                for j in (i + 1)..scored.len() {
                    let (x, y) = (scored[i], scored[j]);
                    if x.score > y.score {
                        expected.push(Preference::prefer(x.pair, y.pair).unwrap());
                    } else if y.score > x.score {
                        expected.push(Preference::prefer(y.pair, x.pair).unwrap());
                    }
                }
            }
            let mut got = pool.to_vec();
            prop_assert_eq!(got.len(), expected.len());
            let key = |p: &Preference| (p.a().lo(), p.a().hi(), p.b().lo(), p.b().hi(), p.label().sign());
            got.sort_by_key(key);
            expected.sort_by_key(key);
            prop_assert_eq!(&got, &expected);
            prop_assert!(check_contradictions(&got).is_ok());
            // Every emitted preference points toward the higher score.
            let score: HashMap<TermPair, f64> = scored.iter().map(|s| (s.pair, s.score)).collect();
            for p in &got {
                let (better, worse) = p.ordered();
                prop_assert!(score[&better] > score[&worse]);
            }
        }

        #[test]
        fn split_invariants(len in 0u64..400, m_frac in 0.0f64..=1.0, cap in 0u64..300, seed in any::<u64>()) {
            let m = (len as f64 * m_frac) as u64;
            let (train, test) = sample_split_indices(len, m, seed, cap).unwrap();
            prop_assert_eq!(train.len() as u64, m);
            prop_assert_eq!(test.len() as u64, (len - m).min(cap));
            let mut all: Vec<u64> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), train.len() + test.len());
            prop_assert!(all.iter().all(|&i| i < len));
        }
    }
}
