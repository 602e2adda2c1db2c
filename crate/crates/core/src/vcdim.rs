//! Brute-force VC dimensions of two preference hypothesis classes on tiny
//! dictionaries.
//!
//! An anti-symmetric hypothesis labels every quadruple freely subject to
//! `h(x) = -h(inverse(x))`. A permutation hypothesis ranks all pairs and
//! prefers whichever pair of a quadruple ranks higher. Both are checked by
//! enumerating hypotheses, and each against an analytic criterion: a sample
//! is shattered by anti-symmetric hypotheses iff it holds no quadruple
//! together with its inverse, and by permutations iff its quadruples, read as
//! edges between pairs, form a forest.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::preferences::{Quadruple, TermPair};
use crate::TermId;

/// Largest dictionary for which anti-symmetric subsets are scanned.
pub const ANTISYMMETRIC_MAX_D: usize = 3;
/// Largest dictionary for which pair permutations are enumerated.
pub const PERMUTATION_MAX_D: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Antisymmetric,
    Permutation,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Antisymmetric => "antisymmetric",
            Kind::Permutation => "permutation",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "antisymmetric" => Ok(Kind::Antisymmetric),
            "permutation" => Ok(Kind::Permutation),
            _ => Err(format!(
                "unknown hypothesis kind {s:?} (expected antisymmetric or permutation)"
            )),
        }
    }
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// All pairs and all quadruples over a dictionary of `d` terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadrupleSpace {
    pub d: usize,
    /// Every pair, ascending in the pair order.
    pub pairs: Vec<TermPair>,
    /// Every ordered pair of distinct pairs (both orientations).
    pub quads: Vec<Quadruple>,
}

impl QuadrupleSpace {
    pub fn new(d: usize) -> Self {
        let mut pairs = Vec::with_capacity(choose2(d));
        for hi in 1..d as TermId {
            for lo in 0..hi {
                pairs.push(TermPair::new(lo, hi).unwrap());
            }
        }
        pairs.sort_unstable();
        let mut quads = Vec::with_capacity(pairs.len() * pairs.len().saturating_sub(1));
        for &p in &pairs {
            for &q in &pairs {
                if p != q {
                    quads.push(Quadruple { first: p, second: q });
                }
            }
        }
        QuadrupleSpace { d, pairs, quads }
    }

    fn position(&self, p: TermPair) -> usize {
        self.pairs.binary_search(&p).expect("pair within the space")
    }

    fn check_member(&self, x: &Quadruple) -> Result<()> {
        let d = self.d as TermId;
        if x.first == x.second {
            return Err(Error::NotInDpref(format!("both sides are {}", x.first)));
        }
        if [x.first, x.second].iter().any(|p| p.hi() >= d) {
            return Err(Error::NotInDpref(format!(
                "({}, {}) uses a term outside a dictionary of {d}",
                x.first, x.second
            )));
        }
        Ok(())
    }
}

/// The quadruples whose first pair is above the second in the pair order:
/// one representative of every `{x, inverse(x)}`.
pub fn canonical_antichain(d: usize) -> Vec<Quadruple> {
    QuadrupleSpace::new(d)
        .quads
        .into_iter()
        .filter(Quadruple::is_descending)
        .collect()
}

/// A single hypothesis of either class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Hypothesis {
    /// Bit `i` is the label (+1 when set) of the `i`-th canonical quadruple;
    /// inverses take the opposite label.
    Antisymmetric { canonical: Vec<Quadruple>, bits: u64 },
    /// `rank[i]` is the position of the `i`-th pair in the order; lower is
    /// more related.
    Permutation { pairs: Vec<TermPair>, rank: Vec<usize> },
}

impl Hypothesis {
    /// +1 when the first pair of `x` is preferred.
    pub fn label(&self, x: &Quadruple) -> i8 {
        match self {
            Hypothesis::Antisymmetric { canonical, bits } => {
                let (rep, sign) = if x.is_descending() { (*x, 1) } else { (x.inverse(), -1) };
                let i = canonical.iter().position(|q| *q == rep).expect("canonical member");
                let y = if bits >> i & 1 == 1 { 1 } else { -1 };
                y * sign
            }
            Hypothesis::Permutation { pairs, rank } => {
                let a = pairs.binary_search(&x.first).unwrap();
                let b = pairs.binary_search(&x.second).unwrap();
                if rank[a] < rank[b] {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

/// Rearranges `v` into the next permutation in lexicographic order; false
/// once the last one has been passed.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        v.reverse();
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Whether every labeling of `sample` is realized by some hypothesis,
/// decided by enumerating the whole class. Feasible for anti-symmetric
/// hypotheses up to `d = 4` and permutations up to `d = 4`.
pub fn shattered_by_enumeration(kind: Kind, d: usize, sample: &[Quadruple]) -> Result<bool> {
    let space = QuadrupleSpace::new(d);
    let sample = dedup_checked(&space, sample)?;
    if sample.len() >= 63 {
        return Ok(false);
    }
    let wanted = 1usize << sample.len();
    let mut seen: HashSet<u64> = HashSet::new();
    match kind {
        Kind::Antisymmetric => {
            let canonical = canonical_antichain(d);
            if canonical.len() > 20 {
                return Err(Error::EnumerationBound { kind: kind.name(), d });
            }
            // (bit of the canonical representative, whether x is that
            // representative or its inverse)
            let keys: Vec<(usize, bool)> = sample
                .iter()
                .map(|x| {
                    let rep = if x.is_descending() { *x } else { x.inverse() };
                    (canonical.iter().position(|q| *q == rep).unwrap(), x.is_descending())
                })
                .collect();
            for bits in 0u64..1 << canonical.len() {
                let mask = keys
                    .iter()
                    .enumerate()
                    .filter(|(_, &(i, direct))| (bits >> i & 1 == 1) == direct)
                    .fold(0u64, |m, (j, _)| m | 1 << j);
                seen.insert(mask);
                if seen.len() == wanted {
                    return Ok(true);
                }
            }
        }
        Kind::Permutation => {
            if d > PERMUTATION_MAX_D {
                return Err(Error::EnumerationBound { kind: kind.name(), d });
            }
            let keys: Vec<(usize, usize)> = sample
                .iter()
                .map(|x| (space.position(x.first), space.position(x.second)))
                .collect();
            let mut rank: Vec<usize> = (0..space.pairs.len()).collect();
            loop {
                let mask = keys
                    .iter()
                    .enumerate()
                    .filter(|(_, &(a, b))| rank[a] < rank[b])
                    .fold(0u64, |m, (j, _)| m | 1 << j);
                seen.insert(mask);
                if seen.len() == wanted {
                    return Ok(true);
                }
                if !next_permutation(&mut rank) {
                    break;
                }
            }
        }
    }
    Ok(seen.len() == wanted)
}

fn dedup_checked(space: &QuadrupleSpace, sample: &[Quadruple]) -> Result<Vec<Quadruple>> {
    let mut out: Vec<Quadruple> = Vec::with_capacity(sample.len());
    for x in sample {
        space.check_member(x)?;
        if !out.contains(x) {
            out.push(*x);
        }
    }
    Ok(out)
}

/// The inverse-pair rule: anti-symmetric hypotheses shatter a sample iff it
/// never contains both `x` and `inverse(x)`.
pub fn no_inverse_pair(sample: &[Quadruple]) -> bool {
    let set: HashSet<Quadruple> = sample.iter().copied().collect();
    !set.iter().any(|x| set.contains(&x.inverse()))
}

/// The forest rule: reading each quadruple as an edge between its two pairs,
/// permutations shatter the sample iff the resulting multigraph has no cycle
/// (a quadruple and its inverse count as a cycle of length two).
pub fn is_forest(sample: &[Quadruple]) -> bool {
    let mut nodes: Vec<TermPair> = sample.iter().flat_map(|x| [x.first, x.second]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut seen = HashSet::new();
    for x in sample {
        if !seen.insert(*x) {
            continue;
        }
        let a = find(&mut parent, nodes.binary_search(&x.first).unwrap());
        let b = find(&mut parent, nodes.binary_search(&x.second).unwrap());
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

/// Whether `sample` is shattered by hypotheses of `kind` over `d` terms.
///
/// Anti-symmetric samples are decided by the inverse-pair rule; permutation
/// samples by enumerating every order of the pairs (`d <= 4`).
pub fn is_shattered(kind: Kind, d: usize, sample: &[Quadruple]) -> Result<bool> {
    let space = QuadrupleSpace::new(d);
    let sample = dedup_checked(&space, sample)?;
    match kind {
        Kind::Antisymmetric => Ok(no_inverse_pair(&sample)),
        Kind::Permutation => shattered_by_enumeration(kind, d, &sample),
    }
}

/// Size of the largest sample shattered by `kind` over `d` terms, found by
/// scanning subsets.
///
/// Anti-symmetric: every subset of all quadruples, each checked by
/// enumerating hypotheses (`d <= 3`). Permutation: subsets of the canonical
/// quadruples from the largest feasible size down, each checked by
/// enumerating pair orders (`d <= 4`).
pub fn vcdim_bruteforce(kind: Kind, d: usize) -> Result<usize> {
    match kind {
        Kind::Antisymmetric => {
            if d > ANTISYMMETRIC_MAX_D {
                return Err(Error::EnumerationBound { kind: kind.name(), d });
            }
            let quads = QuadrupleSpace::new(d).quads;
            let mut best = 0;
            for mask in 0u64..1 << quads.len() {
                let size = mask.count_ones() as usize;
                if size <= best {
                    continue;
                }
                let s = subset(&quads, mask);
                if shattered_by_enumeration(kind, d, &s)? {
                    best = size;
                }
            }
            Ok(best)
        }
        Kind::Permutation => {
            if d > PERMUTATION_MAX_D {
                return Err(Error::EnumerationBound { kind: kind.name(), d });
            }
            let canonical = canonical_antichain(d);
            let orders: u64 = (1..=choose2(d) as u64).product();
            // A sample of size s needs 2^s distinct labelings.
            let max_size = (0..=canonical.len())
                .rev()
                .find(|&s| 1u64.checked_shl(s as u32).is_some_and(|n| n <= orders))
                .unwrap_or(0);
            for size in (1..=max_size).rev() {
                for mask in 0u64..1 << canonical.len() {
                    if mask.count_ones() as usize != size {
                        continue;
                    }
                    if shattered_by_enumeration(kind, d, &subset(&canonical, mask))? {
                        return Ok(size);
                    }
                }
            }
            Ok(0)
        }
    }
}

fn subset(items: &[Quadruple], mask: u64) -> Vec<Quadruple> {
    items
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, x)| *x)
        .collect()
}

/// The analytic value: `C(C(d,2),2)` for anti-symmetric hypotheses and
/// `C(d,2) - 1` for permutations.
pub fn expected_vcdim(kind: Kind, d: usize) -> usize {
    match kind {
        Kind::Antisymmetric => choose2(choose2(d)),
        Kind::Permutation => choose2(d).saturating_sub(1),
    }
}

/// Checks the inverse-pair rule against hypothesis enumeration on every
/// subset of quadruples over `d` terms.
pub fn antisymmetric_rule_agrees(d: usize) -> Result<bool> {
    if d > ANTISYMMETRIC_MAX_D {
        return Err(Error::EnumerationBound {
            kind: Kind::Antisymmetric.name(),
            d,
        });
    }
    let quads = QuadrupleSpace::new(d).quads;
    for mask in 0u64..1 << quads.len() {
        let s = subset(&quads, mask);
        if no_inverse_pair(&s) != shattered_by_enumeration(Kind::Antisymmetric, d, &s)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VcReport {
    pub kind: Kind,
    pub d: usize,
    pub vcdim: usize,
    pub expected: usize,
}

impl VcReport {
    pub fn matches(&self) -> bool {
        self.vcdim == self.expected
    }
}

pub fn vcdim_report(kind: Kind, d: usize) -> Result<VcReport> {
    Ok(VcReport {
        kind,
        d,
        vcdim: vcdim_bruteforce(kind, d)?,
        expected: expected_vcdim(kind, d),
    })
}

/// Plain-text table with columns kind, d, vcdim, expected, match.
pub fn report_table(rows: &[VcReport]) -> String {
    let mut out = format!(
        "{:<14} {:>2} {:>5} {:>8} {}\n",
        "kind", "d", "vcdim", "expected", "match"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<14} {:>2} {:>5} {:>8} {}\n",
            r.kind.to_string(),
            r.d,
            r.vcdim,
            r.expected,
            if r.matches() { "yes" } else { "no" }
        ));
    }
    out
}
