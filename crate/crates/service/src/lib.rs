//! Read-only JSON API over a loaded static model and an optional two-slice model.
//!
//! Routes live under `/v1/`:
//!
//! * `GET /v1/network`: nodes, states, CPTs, arc diameters and equivalence-class flags
//! * `POST /v1/query`: posterior of a target at slice `T` or `T+1`
//! * `POST /v1/mpe`: most probable explanation
//! * `GET /v1/sensitivity?target=`: mutual information, Sobol indices and arc diameters
//! * `GET /v1/tornado?target=&state=&top_k=`: one-way CPT sensitivity

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use carbonet_core::dbn::{temporal_query, TwoSliceNetwork};
use carbonet_core::graph::cpdag;
use carbonet_core::inference::{mpe, posterior, EvidenceMap, PosteriorReport};
use carbonet_core::network::{BayesianNetwork, ModelJson};
use carbonet_core::sensitivity::{edge_strengths, sensitivity_report, tornado, SensitivityReport, DEFAULT_DELTA};
use carbonet_core::Error;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeView {
    pub parent: String,
    pub child: String,
    pub diameter: f64,
    /// The edge's orientation is not identified by the equivalence class.
    pub undirected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkView {
    #[serde(flatten)]
    pub model: ModelJson,
    pub arcs: Vec<EdgeView>,
    /// Inter-slice edges `[parent at T, child at T+1]`, when a two-slice model is loaded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<[String; 2]>>,
}

/// Everything a request can read. Built once per load and never mutated.
#[derive(Debug)]
pub struct ModelSnapshot {
    model: BayesianNetwork,
    two_slice: Option<TwoSliceNetwork>,
    network: NetworkView,
    baselines: BTreeMap<String, PosteriorReport>,
    sensitivity: BTreeMap<String, Result<SensitivityReport, String>>,
}

impl ModelSnapshot {
    pub fn new(model: BayesianNetwork, two_slice: Option<TwoSliceNetwork>) -> carbonet_core::Result<Self> {
        if let Some(t) = &two_slice {
            if t.static_net().names() != model.names() || t.static_net().all_states() != model.all_states() {
                return Err(Error::Invalid(
                    "two-slice model nodes differ from the static model".into(),
                ));
            }
        }
        let pdag = cpdag(model.dag());
        let arcs = edge_strengths(&model, false)?
            .into_iter()
            .map(|e| {
                let p = model.index_of(&e.parent).expect("edge endpoints exist");
                let c = model.index_of(&e.child).expect("edge endpoints exist");
                EdgeView {
                    undirected: pdag.is_undirected(p, c),
                    parent: e.parent,
                    child: e.child,
                    diameter: e.diameter,
                }
            })
            .collect();
        let transitions = two_slice.as_ref().map(|t| {
            t.transition_edges()
                .into_iter()
                .map(|(p, c)| [model.name(p).to_string(), model.name(c).to_string()])
                .collect()
        });
        let mut baselines = BTreeMap::new();
        let mut sensitivity = BTreeMap::new();
        for name in model.names() {
            baselines.insert(name.clone(), posterior(&model, name, &EvidenceMap::new())?);
            let report = if model.n_nodes() > 1 {
                sensitivity_report(&model, name).map_err(|e| e.to_string())
            } else {
                Err("sensitivity needs at least two nodes".into())
            };
            sensitivity.insert(name.clone(), report);
        }
        Ok(Self {
            network: NetworkView {
                model: model.to_json_model(),
                arcs,
                transitions,
            },
            model,
            two_slice,
            baselines,
            sensitivity,
        })
    }

    pub fn model(&self) -> &BayesianNetwork {
        &self.model
    }

    pub fn two_slice(&self) -> Option<&TwoSliceNetwork> {
        self.two_slice.as_ref()
    }

    pub fn network(&self) -> &NetworkView {
        &self.network
    }

    pub fn baseline(&self, target: &str) -> Option<&PosteriorReport> {
        self.baselines.get(target)
    }
}

/// Shared handle to the current snapshot. Reloading swaps the whole snapshot.
#[derive(Debug, Default)]
pub struct AppState {
    snapshot: RwLock<Option<Arc<ModelSnapshot>>>,
}

impl AppState {
    pub fn new(snapshot: Option<ModelSnapshot>) -> Self {
        Self {
            snapshot: RwLock::new(snapshot.map(Arc::new)),
        }
    }

    pub fn reload(&self, snapshot: ModelSnapshot) {
        *self.snapshot.write().expect("snapshot lock poisoned") = Some(Arc::new(snapshot));
    }

    pub fn current(&self) -> Option<Arc<ModelSnapshot>> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::ZeroProbabilityEvidence | Error::ZeroVariance(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Numerical(_) | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&ErrorBody { error: &self.message }).unwrap_or_default();
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

/// Serializes exactly as `serde_json::to_vec` does, so responses match module output bytes.
fn json<T: Serialize>(value: &T) -> Result<Response, ApiError> {
    let body = serde_json::to_vec(value).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

fn loaded(state: &AppState) -> Result<Arc<ModelSnapshot>, ApiError> {
    state
        .current()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("bad request body: {e}")))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slice {
    #[default]
    #[serde(rename = "T")]
    T,
    #[serde(rename = "T+1")]
    Next,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    #[serde(default)]
    pub evidence: EvidenceMap,
    pub target: String,
    #[serde(default)]
    pub slice: Slice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpeRequest {
    #[serde(default)]
    pub evidence: EvidenceMap,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SensitivityParams {
    pub target: String,
}

#[derive(Clone, Debug, Deserialize)]
pub struct TornadoParams {
    pub target: String,
    pub state: String,
    pub top_k: Option<usize>,
    pub delta: Option<f64>,
}

async fn get_network(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    json(loaded(&state)?.network())
}

async fn post_query(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let snap = loaded(&state)?;
    let req: QueryRequest = parse_body(&body)?;
    match req.slice {
        Slice::T => {
            if req.evidence.is_empty() {
                if let Some(b) = snap.baseline(&req.target) {
                    return json(b);
                }
            }
            json(&posterior(snap.model(), &req.target, &req.evidence)?)
        }
        Slice::Next => {
            let tsn = snap
                .two_slice()
                .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "no two-slice model loaded"))?;
            json(&temporal_query(tsn, &req.evidence, &req.target)?.at_t1)
        }
    }
}

async fn post_mpe(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let snap = loaded(&state)?;
    let req: MpeRequest = parse_body(&body)?;
    json(&mpe(snap.model(), &req.evidence)?)
}

async fn get_sensitivity(
    State(state): State<Arc<AppState>>,
    Query(params): Query<SensitivityParams>,
) -> Result<Response, ApiError> {
    let snap = loaded(&state)?;
    match snap.sensitivity.get(&params.target) {
        Some(Ok(report)) => json(report),
        Some(Err(msg)) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg.clone())),
        None => Err(Error::UnknownNode(params.target).into()),
    }
}

async fn get_tornado(
    State(state): State<Arc<AppState>>,
    Query(params): Query<TornadoParams>,
) -> Result<Response, ApiError> {
    let snap = loaded(&state)?;
    let entries = tokio::task::spawn_blocking(move || {
        tornado(
            snap.model(),
            &params.target,
            &params.state,
            params.top_k.unwrap_or(10),
            params.delta.unwrap_or(DEFAULT_DELTA),
        )
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    json(&entries)
}

/// Routes with CORS open to `origin`, or to any origin when `None`.
pub fn router(state: Arc<AppState>, origin: Option<HeaderValue>) -> Router {
    let allow = match origin {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/v1/network", get(get_network))
        .route("/v1/query", post(post_query))
        .route("/v1/mpe", post(post_mpe))
        .route("/v1/sensitivity", get(get_sensitivity))
        .route("/v1/tornado", get(get_tornado))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>, origin: Option<HeaderValue>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, origin)).await
}
