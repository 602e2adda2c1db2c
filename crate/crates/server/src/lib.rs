//! HTTP service for collecting preference labels and retraining on them.
//!
//! | method | path              | body / query              | reply                                         |
//! |--------|-------------------|---------------------------|-----------------------------------------------|
//! | GET    | /api/next-query   |                           | `{query_id, t1, t2, t3, t4}`                  |
//! | POST   | /api/label        | `{query_id, choice}`      | `{accepted, labeled_count}`                   |
//! | POST   | /api/retrain      | `{warm}`                  | `{model_version, report}`                     |
//! | GET    | /api/rank         | `?term=..&k=..`           | `[{term, distance}]`                          |
//! | GET    | /api/status       |                           | `{model_version, labeled_count, last_report, vocab_size}` |
//!
//! `choice` is `"first"` when `t1`/`t2` are more related than `t3`/`t4` and
//! `"second"` otherwise. Errors are `{"error": message}` with status 404
//! (unknown query or term), 409 (no unlabeled quadruple left, contradicting
//! label, retrain already running) or 400 (bad request).

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::{Deserialize, Serialize};

use semsort_core::eval::rank_topk;
use semsort_core::preferences::Quadruple;
use semsort_core::rng;
use semsort_core::store::tsv::TermResolver;
use semsort_core::trainer::{train, TrainReport};
use semsort_core::{Index, Preference, SemanticModel, TermPair, TrainerConfig};

/// How long an issued query stays reserved.
pub const QUERY_TTL: Duration = Duration::from_secs(3600);
pub const DEFAULT_RANK_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryReply {
    pub query_id: u64,
    pub t1: String,
    pub t2: String,
    pub t3: String,
    pub t4: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub query_id: u64,
    pub choice: Choice,
    /// Who gave the label; recorded with it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReply {
    pub accepted: bool,
    pub labeled_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrainRequest {
    #[serde(default)]
    pub warm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub epochs: usize,
    pub final_delta: f64,
    pub terminated_by: String,
}

impl From<&TrainReport> for ReportSummary {
    fn from(r: &TrainReport) -> Self {
        ReportSummary {
            epochs: r.epochs,
            final_delta: r.final_delta(),
            terminated_by: r.terminated_by.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainReply {
    pub model_version: u64,
    pub report: ReportSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub term: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReply {
    pub model_version: u64,
    pub labeled_count: usize,
    pub last_report: Option<ReportSummary>,
    pub vocab_size: usize,
}

/// A stored label with its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPreference {
    pub preference: Preference,
    pub rater: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Error reply: a status code and a JSON body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        ApiError {
            status,
            body: serde_json::json!({ "error": msg.into() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

struct Pending {
    quad: Quadruple,
    issued: Instant,
}

struct Labels {
    records: Vec<LabeledPreference>,
    by_quad: HashMap<(TermPair, TermPair), usize>,
    pending: HashMap<u64, Pending>,
    next_query_id: u64,
    rng: rng::Rng,
}

struct Published {
    version: u64,
    model: Arc<SemanticModel>,
    last_report: Option<ReportSummary>,
}

/// Shared state of one labeling session.
pub struct LabelSession {
    index: Arc<Index>,
    config: TrainerConfig,
    labels: Mutex<Labels>,
    published: RwLock<Published>,
    training: AtomicBool,
}

/// Held while a retrain runs; a second retrain is refused until it drops.
pub struct TrainingGuard<'a>(&'a AtomicBool);

impl Drop for TrainingGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

/// Number of pairs over `d` terms, and of unordered pairs of those.
fn space_size(d: u64) -> (u128, u128) {
    let p = u128::from(d) * u128::from(d.saturating_sub(1)) / 2;
    (p, p * p.saturating_sub(1) / 2)
}

/// Largest `h` with `h * (h - 1) / 2 <= k`.
fn triangular_root(k: u128) -> u128 {
    let mut h = ((2.0 * k as f64).sqrt() as u128).max(1);
    while h * (h - 1) / 2 > k {
        h -= 1;
    }
    while (h + 1) * h / 2 <= k {
        h += 1;
    }
    h
}

/// The `k`-th pair in the pair order.
fn unrank_pair(k: u128) -> TermPair {
    let hi = triangular_root(k);
    let lo = k - hi * (hi - 1) / 2;
    TermPair::new(lo as u32, hi as u32).expect("distinct terms")
}

/// The `q`-th canonical quadruple: first pair above the second.
fn unrank_quad(q: u128) -> Quadruple {
    let j = triangular_root(q);
    let i = q - j * (j - 1) / 2;
    Quadruple {
        first: unrank_pair(j),
        second: unrank_pair(i),
    }
}

fn rank_quad(x: &Quadruple) -> u128 {
    let rank_pair = |p: TermPair| {
        let (lo, hi) = (u128::from(p.lo()), u128::from(p.hi()));
        hi * (hi - 1) / 2 + lo
    };
    let (j, i) = (rank_pair(x.first), rank_pair(x.second));
    j * (j - 1) / 2 + i
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl LabelSession {
    pub fn new(index: Arc<Index>, config: TrainerConfig, seed: u64) -> Self {
        let model = Arc::new(SemanticModel::unit(&index));
        LabelSession {
            index,
            config,
            labels: Mutex::new(Labels {
                records: Vec::new(),
                by_quad: HashMap::new(),
                pending: HashMap::new(),
                next_query_id: 1,
                rng: rng::seeded(seed),
            }),
            published: RwLock::new(Published {
                version: 0,
                model,
                last_report: None,
            }),
            training: AtomicBool::new(false),
        }
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    fn term(&self, t: u32) -> String {
        self.index.dictionary().term(t).unwrap_or_default().to_string()
    }

    /// Issues a uniformly drawn canonical quadruple that is neither labeled
    /// nor pending.
    pub fn next_query(&self) -> Result<QueryReply, ApiError> {
        let mut l = self.labels.lock().unwrap();
        let now = Instant::now();
        l.pending.retain(|_, p| now.duration_since(p.issued) < QUERY_TTL);
        let (_, total) = space_size(self.index.num_terms() as u64);
        let taken = (l.records.len() + l.pending.len()) as u128;
        let reserved: std::collections::HashSet<Quadruple> = l.pending.values().map(|p| p.quad).collect();
        let is_free =
            |l: &Labels, x: &Quadruple| !l.by_quad.contains_key(&(x.second, x.first)) && !reserved.contains(x);
        if taken >= total {
            return Err(ApiError::new(StatusCode::CONFLICT, "no unlabeled quadruples left"));
        }
        let mut chosen = None;
        // Rejection sampling is uniform over the free set; when the space is
        // nearly full, fall back to listing what is left.
        for _ in 0..64 {
            let q = l.rng.random_range(0..total);
            let x = unrank_quad(q);
            if is_free(&l, &x) {
                chosen = Some(x);
                break;
            }
        }
        if chosen.is_none() && total <= 1 << 22 {
            let free: Vec<Quadruple> = (0..total).map(unrank_quad).filter(|x| is_free(&l, x)).collect();
            if !free.is_empty() {
                let k = l.rng.random_range(0..free.len());
                chosen = Some(free[k]);
            }
        }
        let Some(quad) = chosen else {
            return Err(ApiError::new(StatusCode::CONFLICT, "no unlabeled quadruples left"));
        };
        debug_assert!(rank_quad(&quad) < total);
        let query_id = l.next_query_id;
        l.next_query_id += 1;
        l.pending.insert(query_id, Pending { quad, issued: now });
        Ok(QueryReply {
            query_id,
            t1: self.term(quad.first.lo()),
            t2: self.term(quad.first.hi()),
            t3: self.term(quad.second.lo()),
            t4: self.term(quad.second.hi()),
        })
    }

    /// Records the answer to a pending query. The query is consumed even if
    /// the label is refused.
    pub fn label(&self, req: &LabelRequest) -> Result<LabelReply, ApiError> {
        let mut l = self.labels.lock().unwrap();
        let Some(pending) = l.pending.remove(&req.query_id) else {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                format!("unknown query_id {}", req.query_id),
            ));
        };
        let x = pending.quad;
        let (better, worse) = match req.choice {
            Choice::First => (x.first, x.second),
            Choice::Second => (x.second, x.first),
        };
        let pref = Preference::prefer(better, worse).expect("query pairs differ");
        let rater = req.rater.clone().unwrap_or_else(|| "anonymous".into());
        self.insert(&mut l, pref, rater)
    }

    /// Adds a label directly, e.g. one collected in an earlier session.
    pub fn add_label(&self, pref: Preference, rater: &str) -> Result<LabelReply, ApiError> {
        let mut l = self.labels.lock().unwrap();
        self.insert(&mut l, pref, rater.to_string())
    }

    fn insert(&self, l: &mut Labels, pref: Preference, rater: String) -> Result<LabelReply, ApiError> {
        let key = (pref.a(), pref.b());
        if let Some(&i) = l.by_quad.get(&key) {
            let existing = &l.records[i];
            if existing.preference.label() != pref.label() {
                let (eb, ew) = existing.preference.ordered();
                let mut err = ApiError::new(StatusCode::CONFLICT, "label contradicts an existing one");
                err.body["conflict"] = serde_json::json!({
                    "t1": self.term(eb.lo()),
                    "t2": self.term(eb.hi()),
                    "t3": self.term(ew.lo()),
                    "t4": self.term(ew.hi()),
                    "rater": existing.rater,
                    "timestamp": existing.timestamp,
                });
                return Err(err);
            }
            return Ok(LabelReply {
                accepted: true,
                labeled_count: l.records.len(),
            });
        }
        let i = l.records.len();
        l.records.push(LabeledPreference {
            preference: pref,
            rater,
            timestamp: now_secs(),
        });
        l.by_quad.insert(key, i);
        Ok(LabelReply {
            accepted: true,
            labeled_count: l.records.len(),
        })
    }

    pub fn labels(&self) -> Vec<LabeledPreference> {
        self.labels.lock().unwrap().records.clone()
    }

    /// Reserves the trainer, or `None` if a retrain is already running.
    pub fn try_begin_training(&self) -> Option<TrainingGuard<'_>> {
        self.training
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| TrainingGuard(&self.training))
    }

    /// Trains on every label collected so far and publishes the result.
    /// Blocking; run it off the async executor.
    pub fn retrain(&self, warm: bool) -> Result<RetrainReply, ApiError> {
        let Some(_guard) = self.try_begin_training() else {
            return Err(ApiError::new(StatusCode::CONFLICT, "retrain already in progress"));
        };
        self.retrain_locked(warm)
    }

    fn retrain_locked(&self, warm: bool) -> Result<RetrainReply, ApiError> {
        let prefs: Vec<Preference> = self.labels().iter().map(|r| r.preference).collect();
        if prefs.is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "no labels to train on"));
        }
        let mut model = if warm {
            (*self.published.read().unwrap().model).clone()
        } else {
            SemanticModel::unit(&self.index)
        };
        let report = train(&mut model, &self.index, &prefs, &self.config)
            .map_err(|e| ApiError::new(StatusCode::CONFLICT, e.to_string()))?;
        let summary = ReportSummary::from(&report);
        let mut p = self.published.write().unwrap();
        p.version += 1;
        p.model = Arc::new(model);
        p.last_report = Some(summary.clone());
        Ok(RetrainReply {
            model_version: p.version,
            report: summary,
        })
    }

    /// The current published model and its version.
    pub fn snapshot(&self) -> (u64, Arc<SemanticModel>) {
        let p = self.published.read().unwrap();
        (p.version, p.model.clone())
    }

    pub fn rank(&self, term: &str, k: usize) -> Result<Vec<RankEntry>, ApiError> {
        let Some(t) = TermResolver::for_index(&self.index).resolve(term) else {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown term {term:?}")));
        };
        let (_, model) = self.snapshot();
        let top = rank_topk(&model, &self.index, t, k, false)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
        Ok(top
            .into_iter()
            .map(|(id, r)| RankEntry {
                term: self.term(id),
                distance: r.distance,
            })
            .collect())
    }

    pub fn status(&self) -> StatusReply {
        let labeled_count = self.labels.lock().unwrap().records.len();
        let p = self.published.read().unwrap();
        StatusReply {
            model_version: p.version,
            labeled_count,
            last_report: p.last_report.clone(),
            vocab_size: self.index.num_terms(),
        }
    }
}

type Shared = Arc<LabelSession>;

async fn next_query(State(s): State<Shared>) -> Result<Json<QueryReply>, ApiError> {
    s.next_query().map(Json)
}

async fn label(State(s): State<Shared>, Json(req): Json<LabelRequest>) -> Result<Json<LabelReply>, ApiError> {
    s.label(&req).map(Json)
}

async fn retrain(State(s): State<Shared>, body: Option<Json<RetrainRequest>>) -> Result<Json<RetrainReply>, ApiError> {
    let warm = body.map(|b| b.0.warm).unwrap_or(false);
    // Claim the trainer before leaving the request task so a concurrent
    // request sees the conflict immediately.
    if s.try_begin_training().map(std::mem::forget).is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "retrain already in progress"));
    }
    let worker = s.clone();
    tokio::task::spawn_blocking(move || {
        let _guard = TrainingGuard(&worker.training);
        worker.retrain_locked(warm)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct RankParams {
    term: String,
    k: Option<usize>,
}

async fn rank(State(s): State<Shared>, Query(q): Query<RankParams>) -> Result<Json<Vec<RankEntry>>, ApiError> {
    s.rank(&q.term, q.k.unwrap_or(DEFAULT_RANK_K)).map(Json)
}

async fn status(State(s): State<Shared>) -> Json<StatusReply> {
    Json(s.status())
}

pub fn router(session: Shared) -> Router {
    Router::new()
        .route("/api/next-query", get(next_query))
        .route("/api/label", post(label))
        .route("/api/retrain", post(retrain))
        .route("/api/rank", get(rank))
        .route("/api/status", get(status))
        .with_state(session)
}

/// Serves `session` on `addr` until the process ends.
pub async fn serve(session: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(session)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadruple_ranking_is_a_bijection() {
        let (_, total) = space_size(5);
        let mut seen = std::collections::HashSet::new();
        for q in 0..total {
            let x = unrank_quad(q);
            assert!(x.is_descending());
            assert!(x.first.hi() < 5);
            assert_eq!(rank_quad(&x), q);
            assert!(seen.insert(x));
        }
        assert_eq!(seen.len(), 45);
    }

    #[test]
    fn triangular_root_edges() {
        for k in 0..2000u128 {
            let h = triangular_root(k);
            assert!(h * (h - 1) / 2 <= k && k < (h + 1) * h / 2);
        }
    }
}
