//! Normalized semantic distance, its context-weighted variant, and the
//! preference classifier built on them.
//!
//! For terms `t1`, `t2` with weighted context masses `WS(t1)`, `WS(t2)` and
//! joint mass `WS(t1, t2)`:
//!
//! ```text
//!            max(ln WS(t1), ln WS(t2)) - ln WS(t1, t2)
//! WNSD  =  ---------------------------------------------
//!               ln Z - min(ln WS(t1), ln WS(t2))
//! ```
//!
//! where `Z` is the weighted mass of all unordered pairs of distinct terms,
//! `sum_c w(c) * p_c` with `p_c` the number of such pairs in context `c`.
//! With every weight equal to one this is the unweighted distance (NSD).
//! Lower means more related. Pairs that never co-occur get `+inf`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::index::Index;
use crate::preferences::{Label, Quadruple, TermPair};
use crate::{ContextId, TermId};

/// Context weights plus the weighted pair mass `Z`, kept in sync on every
/// update.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticModel {
    weights: Vec<f64>,
    z_mass: f64,
    normalize: bool,
}

impl SemanticModel {
    /// All-ones model over `index`.
    pub fn unit(index: &Index) -> Self {
        SemanticModel {
            weights: vec![1.0; index.num_contexts()],
            z_mass: index.total_pairs() as f64,
            normalize: false,
        }
    }

    pub fn from_weights(weights: Vec<f64>, index: &Index) -> Result<Self> {
        if weights.len() != index.num_contexts() {
            return Err(Error::ModelMismatch {
                model: weights.len(),
                index: index.num_contexts(),
            });
        }
        if let Some((c, &w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidWeight {
                context: c as ContextId,
                weight: w,
            });
        }
        let z_mass = pair_mass(&weights, index);
        Ok(SemanticModel {
            weights,
            z_mass,
            normalize: false,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, c: ContextId) -> f64 {
        self.weights[c as usize]
    }

    pub fn z_mass(&self) -> f64 {
        self.z_mass
    }

    pub fn num_contexts(&self) -> usize {
        self.weights.len()
    }

    pub fn normalize_mode(&self) -> bool {
        self.normalize
    }

    /// Turns the sum-to-N constraint on or off. Turning it on rescales
    /// immediately.
    pub fn set_normalize_mode(&mut self, on: bool) {
        self.normalize = on;
        if on {
            self.renormalize();
        }
    }

    /// `Z` recomputed from scratch.
    pub fn recompute_z(&self, index: &Index) -> f64 {
        pair_mass(&self.weights, index)
    }

    /// Relative difference between the maintained and recomputed `Z`.
    pub fn z_drift(&self, index: &Index) -> f64 {
        let exact = self.recompute_z(index);
        (self.z_mass - exact).abs() / exact.abs().max(1.0)
    }

    /// Multiplies the weight of `c` by `factor`, updating `Z`. Returns the
    /// weight before the update.
    pub fn scale_context(&mut self, index: &Index, c: ContextId, factor: f64) -> f64 {
        let old = self.weights[c as usize];
        self.weights[c as usize] = old * factor;
        self.z_mass += (factor - 1.0) * old * index.contexts()[c as usize].pair_count() as f64;
        old
    }

    /// Multiplies every weight (and `Z`) by `factor`.
    pub fn scale_all(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
        self.z_mass *= factor;
    }

    /// Rescales so the weights sum to the number of contexts. Returns the
    /// factor applied.
    pub fn renormalize(&mut self) -> f64 {
        let sum: f64 = self.weights.iter().sum();
        let factor = self.weights.len() as f64 / sum;
        self.scale_all(factor);
        factor
    }

    /// Rebuilds a model from stored parts; `z_mass` must agree with the
    /// weights within `1e-9` relative.
    pub fn from_stored(weights: Vec<f64>, z_mass: f64, index: &Index) -> Result<Self> {
        let mut model = Self::from_weights(weights, index)?;
        let exact = model.z_mass;
        if (z_mass - exact).abs() > 1e-9 * exact.abs().max(1.0) {
            return Err(Error::CorruptArtifact(format!(
                "stored z_mass {z_mass} disagrees with recomputed {exact}"
            )));
        }
        model.z_mass = z_mass;
        Ok(model)
    }
}

fn pair_mass(weights: &[f64], index: &Index) -> f64 {
    weights
        .iter()
        .zip(index.contexts())
        .map(|(w, m)| w * m.pair_count() as f64)
        .sum()
}

/// A distance value; `+inf` when the two terms never co-occur.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relatedness {
    pub distance: f64,
}

impl Relatedness {
    pub const INFINITE: Relatedness = Relatedness {
        distance: f64::INFINITY,
    };

    pub fn is_finite(&self) -> bool {
        self.distance.is_finite()
    }

    /// Relatedness score, higher = more related.
    pub fn score(&self) -> f64 {
        -self.distance
    }
}

/// Distance from the three masses and the normalizer. Shared by the
/// unweighted and weighted forms.
pub fn distance_from_masses(ws1: f64, ws2: f64, ws12: f64, z: f64) -> Result<Relatedness> {
    if ws12 <= 0.0 {
        return Ok(Relatedness::INFINITE);
    }
    let (l1, l2) = (ws1.ln(), ws2.ln());
    let denom = z.ln() - l1.min(l2);
    if !(denom > 0.0) {
        return Err(Error::DegenerateCorpus);
    }
    Ok(Relatedness {
        distance: (l1.max(l2) - ws12.ln()) / denom,
    })
}

/// Weighted mass of the contexts containing `t`.
pub fn ws_term(model: &SemanticModel, index: &Index, t: TermId) -> Result<f64> {
    Ok(sum_weights(model, index.postings(t)?))
}

/// Weighted mass of the contexts containing both terms.
pub fn ws_pair(model: &SemanticModel, index: &Index, t1: TermId, t2: TermId) -> Result<f64> {
    Ok(sum_weights(model, &index.co_occurring(t1, t2)?))
}

pub(crate) fn sum_weights(model: &SemanticModel, contexts: &[ContextId]) -> f64 {
    contexts.iter().map(|&c| model.weights[c as usize]).sum()
}

/// Unweighted distance from plain context counts.
pub fn nsd(index: &Index, t1: TermId, t2: TermId) -> Result<Relatedness> {
    let co = index.co_occurring(t1, t2)?;
    distance_from_masses(
        index.postings(t1)?.len() as f64,
        index.postings(t2)?.len() as f64,
        co.len() as f64,
        index.total_pairs() as f64,
    )
}

pub fn wnsd(model: &SemanticModel, index: &Index, t1: TermId, t2: TermId) -> Result<Relatedness> {
    if model.num_contexts() != index.num_contexts() {
        return Err(Error::ModelMismatch {
            model: model.num_contexts(),
            index: index.num_contexts(),
        });
    }
    distance_from_masses(
        ws_term(model, index, t1)?,
        ws_term(model, index, t2)?,
        ws_pair(model, index, t1, t2)?,
        model.z_mass,
    )
}

pub fn wnsd_pair(model: &SemanticModel, index: &Index, pair: TermPair) -> Result<Relatedness> {
    wnsd(model, index, pair.lo(), pair.hi())
}

/// Label for `(first, second)` given their distances. Strictly smaller
/// distance wins; exact ties go to whichever pair is higher in the pair order,
/// which keeps the classifier anti-symmetric.
pub fn decide(first: TermPair, d_first: Relatedness, second: TermPair, d_second: Relatedness) -> Label {
    match d_first.distance.partial_cmp(&d_second.distance) {
        Some(Ordering::Less) => Label::Pos,
        Some(Ordering::Greater) => Label::Neg,
        _ => {
            if first > second {
                Label::Pos
            } else {
                Label::Neg
            }
        }
    }
}

/// +1 when the first pair of `x` is more related than the second.
pub fn classify(model: &SemanticModel, index: &Index, x: Quadruple) -> Result<Label> {
    if x.first == x.second {
        return Err(Error::NotInDpref(format!("both sides are {}", x.first)));
    }
    let d1 = wnsd_pair(model, index, x.first)?;
    let d2 = wnsd_pair(model, index, x.second)?;
    Ok(decide(x.first, d1, x.second, d2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const A: TermId = 0;
    const B: TermId = 1;
    const C: TermId = 2;

    fn tp(x: TermId, y: TermId) -> TermPair {
        TermPair::new(x, y).unwrap()
    }

    fn ab_expected() -> f64 {
        (3f64.ln() - 2f64.ln()) / (5f64.ln() - 2f64.ln())
    }

    fn bc_expected() -> f64 {
        2f64.ln() / (5f64.ln() - 2f64.ln())
    }

    #[test]
    fn weighted_masses_on_fixture() {
        let idx = fixtures::fixture3();
        let unit = SemanticModel::unit(&idx);
        assert_eq!(ws_term(&unit, &idx, A).unwrap(), 3.0);
        assert_eq!(ws_term(&unit, &idx, B).unwrap(), 2.0);
        assert_eq!(ws_pair(&unit, &idx, A, B).unwrap(), 2.0);
        assert_eq!(ws_pair(&unit, &idx, B, C).unwrap(), 1.0);
        assert_eq!(unit.z_mass(), 5.0);
        let doubled = SemanticModel::from_weights(vec![2.0; 3], &idx).unwrap();
        assert_eq!(ws_term(&doubled, &idx, A).unwrap(), 6.0);
    }

    #[test]
    fn nsd_fixture_values() {
        let idx = fixtures::fixture3();
        assert!((nsd(&idx, A, B).unwrap().distance - ab_expected()).abs() < 1e-12);
        assert!((nsd(&idx, B, C).unwrap().distance - bc_expected()).abs() < 1e-12);
        assert!((ab_expected() - 0.4425).abs() < 1e-4);
        assert!((bc_expected() - 0.7565).abs() < 1e-4);
    }

    #[test]
    fn self_distance_through_postings_is_zero() {
        let idx = fixtures::fixture3();
        let n = idx.postings(A).unwrap().len() as f64;
        let d = distance_from_masses(n, n, n, idx.total_pairs() as f64).unwrap();
        assert_eq!(d.distance, 0.0);
    }

    #[test]
    fn wnsd_matches_nsd_at_unit_weights() {
        let idx = fixtures::fixture3();
        let unit = SemanticModel::unit(&idx);
        for (x, y) in [(A, B), (A, C), (B, C)] {
            assert_eq!(wnsd(&unit, &idx, x, y).unwrap(), nsd(&idx, x, y).unwrap());
        }
    }

    #[test]
    fn wnsd_scale_invariant_and_trained_weights() {
        let idx = fixtures::fixture3();
        let doubled = SemanticModel::from_weights(vec![2.0; 3], &idx).unwrap();
        assert!((wnsd(&doubled, &idx, A, B).unwrap().distance - ab_expected()).abs() < 1e-12);
        let trained = SemanticModel::from_weights(vec![0.8, 1.0, 1.0], &idx).unwrap();
        let expected = (2.8f64.ln() - 1.8f64.ln()) / (4.8f64.ln() - 1.8f64.ln());
        let got = wnsd(&trained, &idx, A, B).unwrap().distance;
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.4504).abs() < 1e-4);
    }

    #[test]
    fn degenerate_corpus_rejected() {
        // One context holding exactly two terms: Z = 1 = |S(t)|.
        let idx = fixtures::from_term_lists(&[&["x", "y"]]);
        assert!(matches!(nsd(&idx, 0, 1), Err(Error::DegenerateCorpus)));
    }

    #[test]
    fn non_co_occurring_is_infinite() {
        let idx = fixtures::from_term_lists(&[&["x", "y"], &["z", "y"], &["x", "w"]]);
        let x = idx.dictionary().id("x").unwrap();
        let z = idx.dictionary().id("z").unwrap();
        let d = nsd(&idx, x, z).unwrap();
        assert!(!d.is_finite());
    }

    #[test]
    fn classify_fixture() {
        let idx = fixtures::fixture3();
        let unit = SemanticModel::unit(&idx);
        let q = Quadruple::new(tp(A, B), tp(B, C)).unwrap();
        assert_eq!(classify(&unit, &idx, q).unwrap(), Label::Pos);
        assert_eq!(classify(&unit, &idx, q.inverse()).unwrap(), Label::Neg);
        let tie = Quadruple::new(tp(A, B), tp(A, C)).unwrap();
        assert_eq!(classify(&unit, &idx, tie).unwrap(), Label::Neg);
        assert_eq!(classify(&unit, &idx, tie.inverse()).unwrap(), Label::Pos);
    }

    #[test]
    fn classify_rejects_meaningless() {
        let idx = fixtures::fixture3();
        let unit = SemanticModel::unit(&idx);
        let q = Quadruple {
            first: tp(A, B),
            second: tp(A, B),
        };
        assert!(matches!(classify(&unit, &idx, q), Err(Error::NotInDpref(_))));
    }

    #[test]
    fn model_validation() {
        let idx = fixtures::fixture3();
        assert!(matches!(
            SemanticModel::from_weights(vec![1.0; 2], &idx),
            Err(Error::ModelMismatch { .. })
        ));
        assert!(matches!(
            SemanticModel::from_weights(vec![1.0, 0.0, 1.0], &idx),
            Err(Error::InvalidWeight { context: 1, .. })
        ));
    }

    #[test]
    fn incremental_z_tracks_updates() {
        let idx = fixtures::fixture3();
        let mut m = SemanticModel::unit(&idx);
        m.scale_context(&idx, 0, 0.8);
        m.scale_context(&idx, 2, 1.25);
        m.scale_context(&idx, 2, 0.8);
        assert!((m.z_mass() - 4.8).abs() < 1e-12);
        assert!(m.z_drift(&idx) < 1e-12);
        m.set_normalize_mode(true);
        let sum: f64 = m.weights().iter().sum();
        assert!((sum - 3.0).abs() < 1e-12);
        assert!(m.z_drift(&idx) < 1e-12);
    }
}
