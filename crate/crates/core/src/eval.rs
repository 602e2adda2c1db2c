//! Metrics, learning curves and model inspection.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::Index;
use crate::preferences::{sample_split, Preference, PreferenceSource, ScoredPair, TermPair};
use crate::rng::derive_seed;
use crate::semantics::{decide, wnsd, wnsd_pair, Relatedness, SemanticModel};
use crate::trainer::{train, TrainerConfig};
use crate::TermId;

/// Fraction of `prefs` that the model labels correctly.
pub fn accuracy(model: &SemanticModel, index: &Index, prefs: &[Preference]) -> Result<f64> {
    if prefs.is_empty() {
        return Err(Error::EmptyPreferences);
    }
    let mut cache: HashMap<TermPair, Relatedness> = HashMap::new();
    let mut dist = |p: TermPair| -> Result<Relatedness> {
        if let Some(&d) = cache.get(&p) {
            return Ok(d);
        }
        let d = wnsd_pair(model, index, p)?;
        cache.insert(p, d);
        Ok(d)
    };
    let mut correct = 0usize;
    for e in prefs {
        let (a, b) = (e.a(), e.b());
        if decide(a, dist(a)?, b, dist(b)?) == e.label() {
            correct += 1;
        }
    }
    Ok(correct as f64 / prefs.len() as f64)
}

/// 1-based ranks with ties sharing the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation("inputs differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero rank variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Which pairs enter the learning-curve Spearman correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairUniverse {
    /// Distinct pairs appearing in the trial's test preferences.
    #[default]
    TestPairs,
    /// Every pair with a ground-truth score.
    AllScoredPairs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub test_cap: u64,
    pub universe: PairUniverse,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            test_cap: crate::preferences::DEFAULT_TEST_CAP,
            universe: PairUniverse::TestPairs,
        }
    }
}

/// One (m, trial) measurement. `spearman` is NaN when the correlation is
/// undefined for that trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub m: u64,
    pub trial: usize,
    pub accuracy: f64,
    pub spearman: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub m: u64,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub sem_accuracy: f64,
    pub mean_spearman: f64,
    pub sem_spearman: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub raw: Vec<TrialResult>,
}

/// Mean and standard error of the mean (sample standard deviation over
/// `sqrt(n)`; zero for a single value).
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    if let Some(&first) = values.first() {
        // Avoid rounding noise when every value is the same.
        if values.iter().all(|&v| v == first) {
            return (first, 0.0);
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `trials` train/test rounds for every training size in `sizes`.
///
/// Each round draws its own split with a seed derived from `(seed, m,
/// trial)`, trains a fresh all-ones model and evaluates it on the test
/// preferences. Rounds run in parallel; results do not depend on the thread
/// count.
#[allow(clippy::too_many_arguments)]
pub fn learning_curve<P: PreferenceSource + Sync + ?Sized>(
    prefs: &P,
    scores: &[ScoredPair],
    sizes: &[u64],
    trials: usize,
    seed: u64,
    config: &TrainerConfig,
    index: &Index,
    options: &CurveOptions,
) -> Result<Curve> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("sizes must be ascending".into()));
    }
    config.validate()?;
    let truth: HashMap<TermPair, f64> = scores.iter().map(|s| (s.pair, s.score)).collect();
    let jobs: Vec<(u64, usize)> = sizes.iter().flat_map(|&m| (0..trials).map(move |t| (m, t))).collect();
    let raw: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(m, trial)| run_trial(prefs, &truth, scores, m, trial, seed, config, index, options))
        .collect::<Result<_>>()?;

    let points = sizes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let rows = &raw[i * trials..(i + 1) * trials];
            let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            let rho: Vec<f64> = rows.iter().map(|r| r.spearman).collect();
            let (mean_accuracy, sem_accuracy) = mean_sem(&acc);
            let (mean_spearman, sem_spearman) = mean_sem(&rho);
            CurvePoint {
                m,
                trials,
                mean_accuracy,
                sem_accuracy,
                mean_spearman,
                sem_spearman,
            }
        })
        .collect();
    Ok(Curve { points, raw })
}

#[allow(clippy::too_many_arguments)]
fn run_trial<P: PreferenceSource + ?Sized>(
    prefs: &P,
    truth: &HashMap<TermPair, f64>,
    scores: &[ScoredPair],
    m: u64,
    trial: usize,
    seed: u64,
    config: &TrainerConfig,
    index: &Index,
    options: &CurveOptions,
) -> Result<TrialResult> {
    let split = sample_split(prefs, m, derive_seed(seed, &[m, trial as u64]), options.test_cap)?;
    let mut model = SemanticModel::unit(index);
    train(&mut model, index, &split.train, config)?;
    let accuracy = accuracy(&model, index, &split.test)?;

    let pairs: Vec<TermPair> = match options.universe {
        PairUniverse::AllScoredPairs => scores.iter().map(|s| s.pair).collect(),
        PairUniverse::TestPairs => {
            let mut v: Vec<TermPair> = split.test.iter().flat_map(|e| [e.a(), e.b()]).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
    };
    let mut predicted = Vec::with_capacity(pairs.len());
    let mut expected = Vec::with_capacity(pairs.len());
    for p in pairs {
        let Some(&g) = truth.get(&p) else { continue };
        predicted.push(wnsd_pair(&model, index, p)?.score());
        expected.push(g);
    }
    let spearman = spearman(&predicted, &expected).unwrap_or(f64::NAN);
    Ok(TrialResult {
        m,
        trial,
        accuracy,
        spearman,
    })
}

pub const RAW_CSV_HEADER: &str = "m,trial,accuracy,spearman";
pub const CURVE_CSV_HEADER: &str = "m,trials,mean_acc,sem_acc,mean_rho,sem_rho";

pub fn raw_csv(rows: &[TrialResult]) -> String {
    let mut out = format!("{RAW_CSV_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.m, r.trial, r.accuracy, r.spearman).unwrap();
    }
    out
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = format!("{CURVE_CSV_HEADER}\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.m, p.trials, p.mean_accuracy, p.sem_accuracy, p.mean_spearman, p.sem_spearman
        )
        .unwrap();
    }
    out
}

/// The `k` terms closest to `target`, nearest first, ties by term id.
/// Terms that never co-occur with `target` are left out unless
/// `include_infinite` is set.
pub fn rank_topk(
    model: &SemanticModel,
    index: &Index,
    target: TermId,
    k: usize,
    include_infinite: bool,
) -> Result<Vec<(TermId, Relatedness)>> {
    index.postings(target)?;
    let mut ranked = Vec::new();
    for t in 0..index.num_terms() as TermId {
        if t == target {
            continue;
        }
        let d = wnsd(model, index, target, t)?;
        if d.is_finite() || include_infinite {
            ranked.push((t, d));
        }
    }
    ranked.sort_by(|x, y| x.1.distance.total_cmp(&y.1.distance).then(x.0.cmp(&y.0)));
    ranked.truncate(k);
    Ok(ranked)
}

pub const UNMAPPED_GROUP: &str = "(unmapped)";

#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeightDelta {
    pub group: String,
    pub initial: f64,
    pub final_weight: f64,
    pub delta: f64,
}

/// Total context weight per document group before and after training,
/// sorted by delta, largest first (ties by group name).
pub fn group_weight_delta(
    initial: &SemanticModel,
    final_model: &SemanticModel,
    doc_groups: &HashMap<u32, String>,
    index: &Index,
) -> Result<Vec<GroupWeightDelta>> {
    for m in [initial, final_model] {
        if m.num_contexts() != index.num_contexts() {
            return Err(Error::ModelMismatch {
                model: m.num_contexts(),
                index: index.num_contexts(),
            });
        }
    }
    let mut sums: HashMap<&str, (f64, f64)> = HashMap::new();
    for (c, meta) in index.contexts().iter().enumerate() {
        let g = doc_groups
            .get(&meta.doc_id)
            .map(String::as_str)
            .unwrap_or(UNMAPPED_GROUP);
        let e = sums.entry(g).or_default();
        e.0 += initial.weights()[c];
        e.1 += final_model.weights()[c];
    }
    let mut out: Vec<GroupWeightDelta> = sums
        .into_iter()
        .map(|(g, (i, f))| GroupWeightDelta {
            group: g.to_string(),
            initial: i,
            final_weight: f,
            delta: f - i,
        })
        .collect();
    out.sort_by(|a, b| b.delta.total_cmp(&a.delta).then_with(|| a.group.cmp(&b.group)));
    Ok(out)
}

pub fn group_delta_tsv(rows: &[GroupWeightDelta]) -> String {
    let mut out = String::from("group\tinit\tfinal\tdelta\n");
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t{}", r.group, r.initial, r.final_weight, r.delta).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::preferences::Label;
    use proptest::prelude::*;

    fn tp(x: TermId, y: TermId) -> TermPair {
        TermPair::new(x, y).unwrap()
    }

    #[test]
    fn spearman_unit_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap(), 0.5);
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn accuracy_fixture() {
        let idx = fixtures::fixture3();
        let unit = SemanticModel::unit(&idx);
        let prefs = [
            Preference::prefer(tp(0, 1), tp(1, 2)).unwrap(),
            Preference::prefer(tp(1, 2), tp(0, 2)).unwrap(),
        ];
        assert_eq!(accuracy(&unit, &idx, &prefs).unwrap(), 0.5);
        let flipped: Vec<Preference> = prefs.iter().map(Preference::flipped).collect();
        assert_eq!(accuracy(&unit, &idx, &flipped).unwrap(), 0.5);
        assert!(matches!(accuracy(&unit, &idx, &[]), Err(Error::EmptyPreferences)));
    }

    #[test]
    fn accuracy_self_consistent_and_complement() {
        let s = fixtures::synthetic_suite(1, 20, 200, 300);
        assert_eq!(accuracy(&s.hidden, &s.index, &s.preferences).unwrap(), 1.0);
        let flipped: Vec<Preference> = s.preferences.iter().map(Preference::flipped).collect();
        assert_eq!(accuracy(&s.hidden, &s.index, &flipped).unwrap(), 0.0);
        let unit = SemanticModel::unit(&s.index);
        let a = accuracy(&unit, &s.index, &s.preferences).unwrap();
        let b = accuracy(&unit, &s.index, &flipped).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn topk_fixture() {
        let idx = fixtures::fixture3();
        let unit = SemanticModel::unit(&idx);
        let top = rank_topk(&unit, &idx, 0, 2, false).unwrap();
        assert_eq!(top.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!((top[0].1.distance - 0.4425).abs() < 1e-4);
        assert_eq!(top[0].1, top[1].1);
        assert_eq!(rank_topk(&unit, &idx, 0, 10, false).unwrap().len(), 2);

        let lonely = fixtures::from_term_lists(&[&["x", "y"], &["z", "w"], &["x", "w"]]);
        let unit = SemanticModel::unit(&lonely);
        let y = lonely.dictionary().id("y").unwrap();
        let near = rank_topk(&unit, &lonely, y, 10, false).unwrap();
        assert_eq!(near.len(), 1);
        assert_eq!(rank_topk(&unit, &lonely, y, 10, true).unwrap().len(), 3);
    }

    #[test]
    fn group_deltas_fixture() {
        let idx = fixtures::fixture3();
        let init = SemanticModel::unit(&idx);
        let trained = SemanticModel::from_weights(vec![0.8, 1.0, 1.0], &idx).unwrap();
        let map: HashMap<u32, String> = [(0, "g1".to_string()), (1, "g2".to_string()), (2, "g2".to_string())].into();
        let rows = group_weight_delta(&init, &trained, &map, &idx).unwrap();
        assert_eq!(rows[0].group, "g2");
        assert_eq!(rows[0].delta, 0.0);
        assert_eq!(rows[1].group, "g1");
        assert!((rows[1].delta + 0.2).abs() < 1e-12);

        let same = group_weight_delta(&init, &init, &HashMap::new(), &idx).unwrap();
        assert_eq!(same.len(), 1);
        assert_eq!(same[0].group, UNMAPPED_GROUP);
        assert_eq!(same[0].delta, 0.0);
        assert!(group_delta_tsv(&rows).starts_with("group\tinit\tfinal\tdelta\n"));
    }

    #[test]
    fn curve_baseline_and_determinism() {
        let s = fixtures::synthetic_suite(4, 12, 60, 50);
        let cfg = TrainerConfig::default();
        let opts = CurveOptions {
            test_cap: 200,
            ..CurveOptions::default()
        };
        let run = || learning_curve(&s.pool, &s.scores, &[0, 20], 3, 9, &cfg, &s.index, &opts).unwrap();
        let a = run();
        assert_eq!(raw_csv(&a.raw), raw_csv(&run().raw));
        assert_eq!(a.raw.len(), 6);

        let unit = SemanticModel::unit(&s.index);
        for r in a.raw.iter().filter(|r| r.m == 0) {
            let split = sample_split(&s.pool, 0, derive_seed(9, &[0, r.trial as u64]), 200).unwrap();
            assert_eq!(r.accuracy, accuracy(&unit, &s.index, &split.test).unwrap());
        }
        let one = learning_curve(&s.pool, &s.scores, &[5], 1, 9, &cfg, &s.index, &opts).unwrap();
        assert_eq!(one.points[0].sem_accuracy, 0.0);
        assert!(curve_csv(&a.points).starts_with(CURVE_CSV_HEADER));
    }

    #[test]
    fn sem_zero_when_constant() {
        assert_eq!(mean_sem(&[0.5, 0.5, 0.5]), (0.5, 0.0));
        // Ten copies sum with rounding error; the SEM must still be exactly 0.
        let v = [6.0 / 11.0; 10];
        assert_eq!(mean_sem(&v), (6.0 / 11.0, 0.0));
    }

    #[test]
    fn label_checks_use_classifier_ties() {
        let idx = fixtures::fixture3();
        let unit = SemanticModel::unit(&idx);
        // (a,b) and (a,c) tie; the higher pair (a,c) wins.
        let p = Preference::from_pairs(tp(0, 2), tp(0, 1), Label::Pos).unwrap();
        assert_eq!(accuracy(&unit, &idx, &[p]).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn spearman_symmetric_and_monotone_invariant(
            v in prop::collection::vec((0i32..6, 0i32..6), 2..12)
        ) {
            let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            let r = spearman(&x, &y);
            prop_assume!(r.is_ok());
            let r = r.unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert_eq!(r, spearman(&y, &x).unwrap());
            let tx: Vec<f64> = x.iter().map(|a| (a * 0.5).exp() + 3.0).collect();
            prop_assert!((spearman(&tx, &y).unwrap() - r).abs() < 1e-12);
        }
    }
}
