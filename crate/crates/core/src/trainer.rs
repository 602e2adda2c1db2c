//! Learning context weights from labeled preferences.
//!
//! Each epoch walks the training preferences in order. An example whose
//! preferred pair currently scores worse than the other pair is unsatisfied:
//! the contexts of the preferred pair are multiplied by `lambda_up`, those of
//! the other pair by `lambda_dn = 1 / lambda_up`, and the score gap is added to
//! the epoch total `delta`. The rates shrink as `alpha` grows; `alpha` doubles
//! whenever an epoch fails to lower `delta` by at least `epsilon`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::index::{intersect, Index};
use crate::preferences::{check_contradictions, Preference, TermPair};
use crate::semantics::{distance_from_masses, wnsd_pair, Relatedness, SemanticModel};
use crate::{ContextId, TermId};

/// Step function from a score gap to a base learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTable {
    buckets: Vec<(f64, f64)>,
}

impl LambdaTable {
    /// `buckets` are `(threshold, rate)`: a gap uses the first bucket whose
    /// threshold it reaches.
    pub fn new(buckets: Vec<(f64, f64)>) -> Result<Self> {
        let table = LambdaTable { buckets };
        table.validate()?;
        Ok(table)
    }

    pub fn buckets(&self) -> &[(f64, f64)] {
        &self.buckets
    }

    fn validate(&self) -> Result<()> {
        if self.buckets.is_empty() {
            return Err(Error::InvalidConfig("lambda_table is empty".into()));
        }
        if self.buckets.windows(2).any(|w| !(w[0].0 > w[1].0)) {
            return Err(Error::InvalidConfig(
                "lambda_table thresholds must be strictly decreasing".into(),
            ));
        }
        if self
            .buckets
            .iter()
            .any(|&(t, r)| t.is_nan() || t == f64::INFINITY || !(r.is_finite() && r > 0.0))
        {
            return Err(Error::InvalidConfig(
                "lambda_table needs finite positive rates and thresholds below +inf".into(),
            ));
        }
        if self.buckets.last().unwrap().0 > 0.0 {
            return Err(Error::InvalidConfig(
                "last lambda_table threshold must be <= 0 so every gap has a rate".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LambdaTable {
    fn default() -> Self {
        LambdaTable {
            buckets: vec![(0.1, 4.0), (0.04, 8.0), (0.005, 16.0), (f64::NEG_INFINITY, 32.0)],
        }
    }
}

impl fmt::Display for LambdaTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (t, r)) in self.buckets.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}:{r}")?;
        }
        Ok(())
    }
}

impl FromStr for LambdaTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut buckets = Vec::new();
        for item in s.split(',') {
            let (t, r) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidConfig(format!("bad lambda_table entry {item:?}")))?;
            buckets.push((parse_f64("lambda_table", t)?, parse_f64("lambda_table", r)?));
        }
        LambdaTable::new(buckets)
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: not a number: {v:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub alpha0: f64,
    pub alpha_max: f64,
    pub epsilon: f64,
    pub lambda_table: LambdaTable,
    /// Upper bound on a single example's gap; also the gap used when the
    /// preferred pair never co-occurs.
    pub delta_cap: f64,
    pub max_epochs: usize,
    /// Rescale weights to sum to the number of contexts after every update.
    pub normalize: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            alpha0: 1.0,
            alpha_max: 32.0,
            epsilon: 1e-4,
            lambda_table: LambdaTable::default(),
            delta_cap: 1.0,
            max_epochs: 1000,
            normalize: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(Error::InvalidConfig("alpha0 must be positive".into()));
        }
        if !(self.alpha_max > self.alpha0) {
            return Err(Error::InvalidConfig("alpha_max must exceed alpha0".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.delta_cap.is_finite() && self.delta_cap > 0.0) {
            return Err(Error::InvalidConfig("delta_cap must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        self.lambda_table.validate()
    }

    /// Parses `key=value` lines; blank lines and `#` comments are ignored and
    /// missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainerConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "alpha0" => cfg.alpha0 = parse_f64(key, value)?,
                "alpha_max" => cfg.alpha_max = parse_f64(key, value)?,
                "epsilon" => cfg.epsilon = parse_f64(key, value)?,
                "delta_cap" => cfg.delta_cap = parse_f64(key, value)?,
                "max_epochs" => {
                    cfg.max_epochs = value
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("max_epochs: {value:?}")))?
                }
                "normalize" => {
                    cfg.normalize = match value {
                        "on" | "true" | "1" => true,
                        "off" | "false" | "0" => false,
                        _ => return Err(Error::InvalidConfig(format!("normalize: {value:?}"))),
                    }
                }
                "lambda_table" => cfg.lambda_table = value.parse()?,
                _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "alpha0={}\nalpha_max={}\nepsilon={}\ndelta_cap={}\nmax_epochs={}\nnormalize={}\nlambda_table={}\n",
            self.alpha0,
            self.alpha_max,
            self.epsilon,
            self.delta_cap,
            self.max_epochs,
            if self.normalize { "on" } else { "off" },
            self.lambda_table
        )
    }
}

/// Base rate for a score gap.
pub fn lambda_rate(delta_e: f64, table: &LambdaTable) -> Result<f64> {
    if !(delta_e >= 0.0) {
        return Err(Error::NegativeDelta(delta_e));
    }
    Ok(table
        .buckets
        .iter()
        .find(|(t, _)| delta_e >= *t)
        .map(|&(_, r)| r)
        .expect("validated table covers every non-negative gap"))
}

/// `(lambda_up, lambda_dn)` for a gap at damping `alpha`.
pub fn update_factors(delta_e: f64, alpha: f64, table: &LambdaTable) -> Result<(f64, f64)> {
    let al = alpha * lambda_rate(delta_e, table)?;
    let up = (al + 1.0) / al;
    Ok((up, 1.0 / up))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    DeltaZero,
    AlphaMax,
    MaxEpochs,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::DeltaZero => "delta_zero",
            Termination::AlphaMax => "alpha_max",
            Termination::MaxEpochs => "max_epochs",
        })
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta_zero" => Ok(Termination::DeltaZero),
            "alpha_max" => Ok(Termination::AlphaMax),
            "max_epochs" => Ok(Termination::MaxEpochs),
            _ => Err(Error::InvalidConfig(format!("unknown termination {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub delta_per_epoch: Vec<f64>,
    /// The `alpha` in effect during each epoch.
    pub alpha_per_epoch: Vec<f64>,
    pub unsatisfied_per_epoch: Vec<usize>,
    pub terminated_by: Termination,
    /// Updates whose gap was capped because the preferred pair never
    /// co-occurs.
    pub infinite_gap_updates: u64,
}

impl TrainReport {
    pub fn final_delta(&self) -> f64 {
        self.delta_per_epoch.last().copied().unwrap_or(0.0)
    }
}

/// What a finished epoch looked like, for progress callbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub delta: f64,
    pub alpha: f64,
    pub unsatisfied: usize,
}

/// Gap of an example, or `None` when it is satisfied. The flag marks a gap
/// capped because the preferred side is infinitely far.
fn gap(preferred: Relatedness, other: Relatedness, cap: f64) -> Option<(f64, bool)> {
    if !(preferred.distance > other.distance) {
        return None;
    }
    if preferred.distance.is_infinite() {
        return Some((cap, true));
    }
    Some(((preferred.distance - other.distance).abs().min(cap), false))
}

/// Sorted `a \ b`.
fn difference(a: &[ContextId], b: &[ContextId]) -> Vec<ContextId> {
    let mut out = Vec::with_capacity(a.len());
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j >= b.len() || b[j] != x {
            out.push(x);
        }
    }
    out
}

/// Applies one example to `model` against a fresh score computation and
/// returns its gap (0 when satisfied).
///
/// Contexts supporting both pairs would be multiplied by `lambda_up` and then
/// by `lambda_dn`; they are skipped so their net factor is exactly 1.
pub fn apply_update(
    model: &mut SemanticModel,
    index: &Index,
    e: &Preference,
    alpha: f64,
    config: &TrainerConfig,
) -> Result<f64> {
    let (pa, pb) = e.ordered();
    let da = wnsd_pair(model, index, pa)?;
    let db = wnsd_pair(model, index, pb)?;
    let Some((delta_e, _)) = gap(da, db, config.delta_cap) else {
        return Ok(0.0);
    };
    let (up, dn) = update_factors(delta_e, alpha, &config.lambda_table)?;
    let sa = index.co_occurring(pa.lo(), pa.hi())?;
    let sb = index.co_occurring(pb.lo(), pb.hi())?;
    for c in difference(&sa, &sb) {
        model.scale_context(index, c, up);
    }
    for c in difference(&sb, &sa) {
        model.scale_context(index, c, dn);
    }
    if config.normalize {
        model.renormalize();
    }
    Ok(delta_e)
}

/// Trains `model` in place on `prefs`.
pub fn train(
    model: &mut SemanticModel,
    index: &Index,
    prefs: &[Preference],
    config: &TrainerConfig,
) -> Result<TrainReport> {
    train_with_observer(model, index, prefs, config, |_, _| {})
}

/// As [`train`], calling `observer` after every epoch with the model as it
/// stands at that point.
pub fn train_with_observer<F>(
    model: &mut SemanticModel,
    index: &Index,
    prefs: &[Preference],
    config: &TrainerConfig,
    mut observer: F,
) -> Result<TrainReport>
where
    F: FnMut(&EpochStats, &SemanticModel),
{
    config.validate()?;
    check_contradictions(prefs)?;
    if model.num_contexts() != index.num_contexts() {
        return Err(Error::ModelMismatch {
            model: model.num_contexts(),
            index: index.num_contexts(),
        });
    }
    model.set_normalize_mode(config.normalize);
    let mut cache = Cache::new(model, index, prefs)?;

    let mut report = TrainReport {
        epochs: 0,
        delta_per_epoch: Vec::new(),
        alpha_per_epoch: Vec::new(),
        unsatisfied_per_epoch: Vec::new(),
        terminated_by: Termination::MaxEpochs,
        infinite_gap_updates: 0,
    };
    let mut alpha = config.alpha0;
    let mut delta_prev = f64::INFINITY;
    while report.epochs < config.max_epochs {
        let mut delta = 0.0;
        let mut unsatisfied = 0;
        for e in prefs {
            let (pa, pb) = e.ordered();
            let Some((delta_e, infinite)) =
                gap(cache.distance(model, pa)?, cache.distance(model, pb)?, config.delta_cap)
            else {
                continue;
            };
            unsatisfied += 1;
            if infinite {
                report.infinite_gap_updates += 1;
            }
            let (up, dn) = update_factors(delta_e, alpha, &config.lambda_table)?;
            cache.update(model, pa, pb, up, dn);
            delta += delta_e;
        }
        report.epochs += 1;
        report.delta_per_epoch.push(delta);
        report.alpha_per_epoch.push(alpha);
        report.unsatisfied_per_epoch.push(unsatisfied);
        observer(
            &EpochStats {
                epoch: report.epochs,
                delta,
                alpha,
                unsatisfied,
            },
            model,
        );
        log::debug!(
            "epoch {} delta {delta} alpha {alpha} unsatisfied {unsatisfied}",
            report.epochs
        );
        if delta == 0.0 {
            report.terminated_by = Termination::DeltaZero;
            return Ok(report);
        }
        if delta - delta_prev + config.epsilon >= 0.0 {
            alpha *= 2.0;
            if alpha >= config.alpha_max {
                report.terminated_by = Termination::AlphaMax;
                return Ok(report);
            }
        }
        delta_prev = delta;
    }
    Ok(report)
}

/// Incremental bookkeeping so an example costs work proportional to the
/// contexts of its pairs rather than the postings of its terms.
struct Cache<'a> {
    index: &'a Index,
    /// Weighted mass of each training term, by slot.
    term_mass: Vec<f64>,
    slot: HashMap<TermId, usize>,
    /// Slots of the training terms occurring in each touched context.
    context_terms: HashMap<ContextId, Vec<usize>>,
    pair_contexts: HashMap<TermPair, Vec<ContextId>>,
}

impl<'a> Cache<'a> {
    fn new(model: &SemanticModel, index: &'a Index, prefs: &[Preference]) -> Result<Self> {
        let mut slot = HashMap::new();
        let mut pair_contexts = HashMap::new();
        for e in prefs {
            for p in [e.a(), e.b()] {
                for t in [p.lo(), p.hi()] {
                    let next = slot.len();
                    slot.entry(t).or_insert(next);
                }
                if let std::collections::hash_map::Entry::Vacant(v) = pair_contexts.entry(p) {
                    v.insert(intersect(index.postings(p.lo())?, index.postings(p.hi())?));
                }
            }
        }
        let mut term_mass = vec![0.0; slot.len()];
        let mut context_terms: HashMap<ContextId, Vec<usize>> = HashMap::new();
        let mut terms: Vec<(TermId, usize)> = slot.iter().map(|(&t, &s)| (t, s)).collect();
        terms.sort_unstable();
        for (t, s) in terms {
            let postings = index.postings(t)?;
            term_mass[s] = postings.iter().map(|&c| model.weight(c)).sum();
            for &c in postings {
                context_terms.entry(c).or_default().push(s);
            }
        }
        Ok(Cache {
            index,
            term_mass,
            slot,
            context_terms,
            pair_contexts,
        })
    }

    fn distance(&self, model: &SemanticModel, p: TermPair) -> Result<Relatedness> {
        let joint: f64 = self.pair_contexts[&p].iter().map(|&c| model.weight(c)).sum();
        distance_from_masses(
            self.term_mass[self.slot[&p.lo()]],
            self.term_mass[self.slot[&p.hi()]],
            joint,
            model.z_mass(),
        )
    }

    fn scale(&mut self, model: &mut SemanticModel, c: ContextId, factor: f64) {
        let old = model.scale_context(self.index, c, factor);
        if let Some(slots) = self.context_terms.get(&c) {
            for &s in slots {
                self.term_mass[s] += (factor - 1.0) * old;
            }
        }
    }

    fn update(&mut self, model: &mut SemanticModel, pa: TermPair, pb: TermPair, up: f64, dn: f64) {
        let promote = difference(&self.pair_contexts[&pa], &self.pair_contexts[&pb]);
        let demote = difference(&self.pair_contexts[&pb], &self.pair_contexts[&pa]);
        for c in promote {
            self.scale(model, c, up);
        }
        for c in demote {
            self.scale(model, c, dn);
        }
        if model.normalize_mode() {
            let f = model.renormalize();
            for m in &mut self.term_mass {
                *m *= f;
            }
        }
    }
}
