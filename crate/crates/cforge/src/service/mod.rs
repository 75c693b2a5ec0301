//! HTTP facade for live elicitation sessions.
//!
//! Choice indices on the wire are 1-based. Sessions move from
//! `awaiting-context` to `awaiting-choice` on `POST /query` and back (or to
//! `finished`) on `POST /choice`.

pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cforge_core::domain::{ContextPool, Value};
use cforge_core::perceptron::replay_weights;
use cforge_core::{
    Context, DomainSpec, ElicitError, QueryError, QueryStrategy, Session, SessionConfig, TraceRow,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::SolverConfig;
use crate::io::Registry;
use store::{LiveSession, SessionMeta, SessionStore};

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub store: Arc<SessionStore>,
    pub solver: SolverConfig,
}

/// Settings read from the command line or environment.
#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub instances: PathBuf,
    pub solver: SolverConfig,
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    detail: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            detail: None,
        }
    }

    fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(d) = self.detail {
            body["detail"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<crate::Error> for ApiError {
    fn from(e: crate::Error) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

fn elicit_error(e: ElicitError, ctx: &Context) -> ApiError {
    let msg = e.to_string();
    match e {
        ElicitError::Finished => ApiError::new(StatusCode::CONFLICT, msg),
        ElicitError::InvalidConfig(_) | ElicitError::InvalidChoice { .. } => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg)
        }
        ElicitError::Query(QueryError::InfeasibleContext) => {
            let fixed: Vec<String> = ctx.fixed.iter().map(|(a, v)| format!("{a}={}", render_raw(v))).collect();
            let extra: Vec<String> = ctx
                .constraints
                .iter()
                .enumerate()
                .map(|(i, c)| c.name.clone().unwrap_or_else(|| format!("context constraint {}", i + 1)))
                .collect();
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg)
                .with_detail(json!({ "fixed": fixed, "constraints": extra }))
        }
        ElicitError::Query(QueryError::CutoffWithoutIncumbent) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, msg),
        ElicitError::Query(
            QueryError::DomainTooSmall { .. }
            | QueryError::Domain(_)
            | QueryError::InvalidSetSize(_)
            | QueryError::RequiresEnumeration,
        )
        | ElicitError::Domain(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg),
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, msg),
    }
}

fn render_raw(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Cat(i) => format!("#{i}"),
        Value::Int(x) => x.to_string(),
        Value::Real(x) => x.to_string(),
    }
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStateName {
    AwaitingContext,
    AwaitingChoice,
    Finished,
}

fn state_of(s: &Session) -> SessionStateName {
    if s.is_finished() {
        SessionStateName::Finished
    } else if s.pending().is_some() {
        SessionStateName::AwaitingChoice
    } else {
        SessionStateName::AwaitingContext
    }
}

fn default_horizon() -> usize {
    25
}

#[derive(Clone, Debug, Deserialize)]
pub struct CreateSession {
    pub domain: String,
    pub k: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub strategy: Option<QueryStrategy>,
    #[serde(default)]
    pub adapt_eta: Option<bool>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttributeView {
    pub name: String,
    pub value: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureView {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptionView {
    /// 1-based.
    pub index: usize,
    pub attributes: Vec<AttributeView>,
    pub features: Vec<FeatureView>,
    pub estimated_utility: f64,
    pub configuration: cforge_core::Configuration,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryDiagnostics {
    pub diversity: f64,
    pub quality: f64,
    pub objective: f64,
    pub solver_status: String,
    pub timed_out: bool,
    pub nodes: u64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryView {
    pub t: usize,
    pub gamma: f64,
    pub eta: f64,
    pub context: Context,
    pub options: Vec<OptionView>,
    pub diagnostics: QueryDiagnostics,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub domain: String,
    pub k: usize,
    pub horizon: usize,
    /// Iteration about to run (or running, when awaiting a choice).
    pub t: usize,
    pub state: SessionStateName,
    pub weights: Vec<f64>,
    /// Weights recomputed from the recorded updates.
    pub replayed_weights: Vec<f64>,
    pub query: Option<QueryView>,
}

fn query_view(spec: &DomainSpec, s: &Session) -> Option<QueryView> {
    let p = s.pending()?;
    let q = &p.selection.query;
    let names = spec.features();
    let options = q
        .items
        .iter()
        .zip(&q.features)
        .enumerate()
        .map(|(i, (y, phi))| OptionView {
            index: i + 1,
            attributes: spec
                .attributes()
                .iter()
                .zip(y.values())
                .map(|(a, v)| AttributeView {
                    name: a.name.clone(),
                    value: a.render(v),
                })
                .collect(),
            features: names
                .iter()
                .zip(phi)
                .map(|(f, &value)| FeatureView {
                    name: f.name.clone(),
                    value,
                })
                .collect(),
            estimated_utility: cforge_core::math::dot(&s.weights().0, phi),
            configuration: y.clone(),
        })
        .collect();
    let st = &p.selection.stats;
    Some(QueryView {
        t: p.t,
        gamma: p.gamma,
        eta: p.eta,
        context: q.context.clone(),
        options,
        diagnostics: QueryDiagnostics {
            diversity: st.delta,
            quality: st.mu,
            objective: st.objective,
            solver_status: st.status.as_str().to_string(),
            timed_out: st.timed_out,
            nodes: st.nodes,
            wall_ms: st.wall_s * 1000.0,
        },
    })
}

fn replayed(s: &Session) -> Vec<f64> {
    replay_weights(s.spec().dim(), s.rows().iter().map(|r| (r.eta, r.delta.as_slice()))).0
}

fn session_view(live: &LiveSession) -> SessionView {
    let s = &live.session;
    SessionView {
        id: live.meta.id.clone(),
        domain: live.meta.domain.clone(),
        k: live.meta.config.k,
        horizon: live.meta.config.horizon,
        t: s.state().t,
        state: state_of(s),
        weights: s.weights().0.clone(),
        replayed_weights: replayed(s),
        query: query_view(s.spec(), s),
    }
}

async fn create_session(
    State(app): State<AppState>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, HeaderMap, Json<SessionView>), ApiError> {
    let spec = app.registry.get(&req.domain).ok_or_else(|| not_found("domain", &req.domain))?.clone();
    let mut config = SessionConfig::new(req.k, req.horizon);
    if let Some(s) = req.strategy {
        config.strategy = s;
    }
    if let Some(a) = req.adapt_eta {
        config.adapt_eta = a;
    }
    if let Some(e) = req.eta {
        config.eta = e;
    }
    config.seed = req.seed.unwrap_or(0);
    config
        .validate()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let solver = app.solver.build(&spec)?;
    let session =
        Session::new(spec, config.clone(), solver).map_err(|e| elicit_error(e, &Context::empty()))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let live = LiveSession {
        meta: SessionMeta {
            id: id.clone(),
            domain: req.domain,
            config,
        },
        session,
        idempotent: HashMap::new(),
    };
    let view = session_view(&live);
    app.store.insert(live)?;
    let mut headers = HeaderMap::new();
    headers.insert(
        axum::http::header::LOCATION,
        format!("/sessions/{id}").parse().expect("valid header value"),
    );
    Ok((StatusCode::CREATED, headers, Json(view)))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| not_found("session", &id))?;
    let live = handle.lock().await;
    Ok(Json(session_view(&live)))
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct QueryRequest {
    #[serde(default)]
    pub context: Context,
    /// Boolean attributes to force true, e.g. must-visit cities.
    #[serde(default)]
    pub require_true: Vec<String>,
}

async fn post_query(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<QueryRequest>>,
) -> Result<Json<QueryView>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| not_found("session", &id))?;
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let mut ctx = req.context;
    ctx.fixed.extend(req.require_true.into_iter().map(|a| (a, Value::Bool(true))));
    let mut live = handle.lock_owned().await;
    match state_of(&live.session) {
        SessionStateName::AwaitingContext => {}
        SessionStateName::AwaitingChoice => {
            return Err(ApiError::new(StatusCode::CONFLICT, "a query is already awaiting a choice"))
        }
        SessionStateName::Finished => return Err(ApiError::new(StatusCode::CONFLICT, "session is finished")),
    }
    tokio::task::spawn_blocking(move || {
        let s = &mut live.session;
        s.prepare(ctx.clone()).map_err(|e| elicit_error(e, &ctx))?;
        Ok(Json(query_view(s.spec(), s).expect("query just prepared")))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Clone, Debug, Deserialize)]
pub struct ChoiceRequest {
    /// 1-based index into the current query.
    pub index: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChoiceResponse {
    pub id: String,
    /// Iteration that the choice answered.
    pub answered: usize,
    pub chosen_index: usize,
    /// Next iteration.
    pub t: usize,
    pub state: SessionStateName,
    pub weights: Vec<f64>,
}

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

async fn post_choice(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<ChoiceRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| not_found("session", &id))?;
    let key = headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let mut live = handle.lock().await;
    if let Some(prev) = key.as_ref().and_then(|k| live.idempotent.get(k)) {
        return Ok(Json(prev.clone()));
    }
    let k = match state_of(&live.session) {
        SessionStateName::AwaitingChoice => live.meta.config.k,
        SessionStateName::AwaitingContext => {
            return Err(ApiError::new(StatusCode::CONFLICT, "no query is awaiting a choice"))
        }
        SessionStateName::Finished => return Err(ApiError::new(StatusCode::CONFLICT, "session is finished")),
    };
    let pending_k = live.session.pending().map_or(k, |p| p.selection.query.k());
    if req.index == 0 || req.index > pending_k {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("choice index must be in 1..={pending_k}, got {}", req.index),
        ));
    }
    let row: TraceRow = live
        .session
        .answer(req.index - 1, None)
        .map_err(|e| elicit_error(e, &Context::empty()))?
        .clone();
    app.store.record(&id, &row)?;
    let resp = ChoiceResponse {
        id: id.clone(),
        answered: row.t,
        chosen_index: row.chosen_index,
        t: live.session.state().t,
        state: state_of(&live.session),
        weights: live.session.weights().0.clone(),
    };
    let value = serde_json::to_value(&resp).expect("responses serialize");
    if let Some(k) = key {
        live.idempotent.insert(k, value.clone());
    }
    Ok(Json(value))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceView {
    pub id: String,
    pub domain: String,
    pub rows: Vec<TraceRow>,
    pub weights: Vec<f64>,
    pub replayed_weights: Vec<f64>,
}

async fn get_trace(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<TraceView>, ApiError> {
    let handle = app.store.get(&id).ok_or_else(|| not_found("session", &id))?;
    let live = handle.lock().await;
    let s = &live.session;
    Ok(Json(TraceView {
        id: live.meta.id.clone(),
        domain: live.meta.domain.clone(),
        rows: s.rows().to_vec(),
        weights: s.weights().0.clone(),
        replayed_weights: replayed(s),
    }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainView {
    pub id: String,
    pub name: String,
    pub description: String,
    pub dim: usize,
    pub attributes: Vec<cforge_core::domain::Attribute>,
    pub features: Vec<String>,
    pub context: Option<ContextPool>,
}

async fn list_domains(State(app): State<AppState>) -> Json<Vec<DomainView>> {
    Json(
        app.registry
            .domains
            .iter()
            .map(|(id, (entry, spec))| DomainView {
                id: id.clone(),
                name: spec.name().to_string(),
                description: entry.description.clone(),
                dim: spec.dim(),
                attributes: spec.attributes().to_vec(),
                features: spec.features().iter().map(|f| f.name.clone()).collect(),
                context: spec.context_pool().cloned(),
            })
            .collect(),
    )
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/domains", get(list_domains))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", post(post_query))
        .route("/sessions/{id}/choice", post(post_choice))
        .route("/sessions/{id}/trace", get(get_trace))
        .with_state(state)
}

pub fn build_state(cfg: &ServiceConfig) -> crate::Result<AppState> {
    let registry = Registry::load(&cfg.instances)?;
    let store = match &cfg.data_dir {
        Some(dir) => SessionStore::open(dir, &registry, &cfg.solver)?,
        None => SessionStore::in_memory(),
    };
    Ok(AppState {
        registry: Arc::new(registry),
        store: Arc::new(store),
        solver: cfg.solver.clone(),
    })
}

pub async fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    let state = build_state(&cfg)?;
    tracing::info!(domains = state.registry.domains.len(), sessions = state.store.len(), "state loaded");
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
