//! REST interface over the store. Every request is authenticated and checked
//! against the access matrix before its body is looked at.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use ed25519_dalek::VerifyingKey;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use super::auth::{allowed, AuthError, CredentialStore, Endpoint, Role};
use super::clock::Clock;
use super::store::{Admission, NodePatch, Store, StoreError, View, Window};
use crate::codec::MacAddress;
use crate::sniffer::{UploadAck, UploadBatch};

pub struct AppState {
    pub store: RwLock<Store>,
    pub credentials: RwLock<CredentialStore>,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(store: Store, credentials: CredentialStore, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(AppState {
            store: RwLock::new(store),
            credentials: RwLock::new(credentials),
            clock,
        })
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Store> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Store> {
        self.store.write().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug)]
pub enum ApiError {
    Unauthenticated(AuthError),
    Forbidden { role: Role, endpoint: Endpoint },
    BadRequest(String),
    Store(StoreError),
    Conflict(String),
    NotFound(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error, detail) = match self {
            ApiError::Unauthenticated(e) => {
                (StatusCode::UNAUTHORIZED, "unauthorized", e.to_string())
            }
            ApiError::Forbidden { role, endpoint } => (
                StatusCode::FORBIDDEN,
                "forbidden",
                format!(
                    "role {role:?} may not call {} {}",
                    endpoint.method(),
                    endpoint.path()
                )
                .to_lowercase(),
            ),
            ApiError::BadRequest(d) => (StatusCode::BAD_REQUEST, "bad_request", d),
            ApiError::Conflict(d) => (StatusCode::CONFLICT, "conflict", d),
            ApiError::NotFound(d) => (StatusCode::NOT_FOUND, "not_found", d),
            ApiError::Store(e) => {
                let status = match e {
                    StoreError::UnknownNode(_) => StatusCode::NOT_FOUND,
                    StoreError::Locked(_) => StatusCode::LOCKED,
                    StoreError::KeyConflict(_) => StatusCode::CONFLICT,
                    StoreError::BadRecord { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                    StoreError::BadWindow { .. }
                    | StoreError::BadStep
                    | StoreError::UnknownPlacement { .. } => StatusCode::BAD_REQUEST,
                };
                let error = match status {
                    StatusCode::NOT_FOUND => "not_found",
                    StatusCode::LOCKED => "locked",
                    StatusCode::CONFLICT => "conflict",
                    StatusCode::UNPROCESSABLE_ENTITY => "unprocessable",
                    _ => "bad_request",
                };
                (status, error, e.to_string())
            }
        };
        let mut resp = (
            status,
            Json(ErrorBody {
                error: error.into(),
                detail,
            }),
        )
            .into_response();
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut().insert(
                header::WWW_AUTHENTICATE,
                "Basic realm=\"wsnscope\"".parse().unwrap(),
            );
        }
        resp
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Store(e)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn authorize(state: &AppState, headers: &HeaderMap, endpoint: Endpoint) -> Result<Role, ApiError> {
    let header = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok());
    let creds = state.credentials.read().unwrap_or_else(|e| e.into_inner());
    let (_, role) = creds
        .authenticate_header(header)
        .map_err(ApiError::Unauthenticated)?;
    if !allowed(endpoint, role) {
        return Err(ApiError::Forbidden { role, endpoint });
    }
    Ok(role)
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(e.to_string()))
}

fn parse_mac(s: &str) -> Result<MacAddress, ApiError> {
    s.parse()
        .map_err(|e: crate::codec::CodecError| ApiError::BadRequest(e.to_string()))
}

type Params = Query<HashMap<String, String>>;

fn param<T: std::str::FromStr>(
    q: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    q.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| ApiError::BadRequest(format!("{key}: {e}")))
        })
        .transpose()
}

fn window(q: &HashMap<String, String>) -> Result<Window, ApiError> {
    let t0 = param(q, "t0")?.unwrap_or(Window::ALL.t0);
    let t1 = param(q, "t1")?.unwrap_or(Window::ALL.t1);
    Ok(Window::new(t0, t1)?)
}

async fn post_packets(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    raw: Bytes,
) -> ApiResult<UploadAck> {
    authorize(&s, &headers, Endpoint::PostPackets)?;
    let batch: UploadBatch = body(&raw)?;
    Store::validate(&batch.records)?;
    let mut store = s.write();
    let mut ack = UploadAck::default();
    for r in &batch.records {
        match store.admit(&batch.sniffer_id, r) {
            Admission::Admitted => ack.admitted += 1,
            Admission::Duplicate => ack.duplicate += 1,
            Admission::Corrupt => ack.corrupt += 1,
        }
    }
    Ok(Json(ack))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRequest {
    pub mac: MacAddress,
    pub placement: String,
    #[serde(default)]
    pub ts: Option<u64>,
}

async fn post_nodes(State(s): State<Arc<AppState>>, headers: HeaderMap, raw: Bytes) -> Response {
    let run = || -> Result<Response, ApiError> {
        authorize(&s, &headers, Endpoint::PostNodes)?;
        let req: ScanRequest = body(&raw)?;
        let ts = req.ts.unwrap_or_else(|| s.clock.now_us());
        let mut store = s.write();
        let existed = store.node(req.mac).is_ok();
        let out = store.register_marker_scan(req.mac, &req.placement, ts);
        let status = if existed {
            StatusCode::OK
        } else {
            StatusCode::CREATED
        };
        Ok((status, Json(out)).into_response())
    };
    run().unwrap_or_else(IntoResponse::into_response)
}

async fn get_nodes(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
) -> ApiResult<Vec<super::NodeRecord>> {
    authorize(&s, &headers, Endpoint::GetNodes)?;
    Ok(Json(s.read().nodes()))
}

async fn get_node(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(mac): Path<String>,
    Query(q): Params,
) -> ApiResult<super::NodeInfo> {
    authorize(&s, &headers, Endpoint::GetNode)?;
    let mac = parse_mac(&mac)?;
    let w = window(&q)?;
    Ok(Json(s.read().node_info(mac, w)?))
}

async fn patch_node(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(mac): Path<String>,
    raw: Bytes,
) -> ApiResult<super::NodeRecord> {
    authorize(&s, &headers, Endpoint::PatchNode)?;
    let mac = parse_mac(&mac)?;
    let patch: NodePatch = body(&raw)?;
    Ok(Json(s.write().update_metadata(mac, patch)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolveRequest {
    pub placement: String,
}

async fn resolve_node(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(mac): Path<String>,
    raw: Bytes,
) -> ApiResult<super::NodeRecord> {
    authorize(&s, &headers, Endpoint::ResolveNode)?;
    let mac = parse_mac(&mac)?;
    let req: ResolveRequest = body(&raw)?;
    Ok(Json(s.write().resolve(mac, &req.placement)?))
}

async fn get_edges(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Params,
) -> ApiResult<Vec<super::TrafficEdge>> {
    authorize(&s, &headers, Endpoint::GetEdges)?;
    let view = param::<View>(&q, "view")?.unwrap_or(View::Ip);
    let w = window(&q)?;
    Ok(Json(s.read().edges(view, w)))
}

async fn get_warnings(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Params,
) -> ApiResult<Vec<super::Warning>> {
    authorize(&s, &headers, Endpoint::GetWarnings)?;
    let w = window(&q)?;
    Ok(Json(s.read().warnings(w)))
}

async fn get_timeline(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Params,
) -> ApiResult<Vec<super::Snapshot>> {
    authorize(&s, &headers, Endpoint::GetTimeline)?;
    let step =
        param::<u64>(&q, "step")?.ok_or_else(|| ApiError::BadRequest("step is required".into()))?;
    let view = param::<View>(&q, "view")?.unwrap_or(View::Mac);
    let origin = param::<u64>(&q, "origin")?;
    Ok(Json(s.read().timeline(view, step, origin)?))
}

async fn get_rssi(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Params,
) -> ApiResult<super::RssiReport> {
    authorize(&s, &headers, Endpoint::GetRssi)?;
    let mac = q
        .get("mac")
        .ok_or_else(|| ApiError::BadRequest("mac is required".into()))?;
    let mac = parse_mac(mac)?;
    let w = window(&q)?;
    Ok(Json(s.read().rssi(
        mac,
        q.get("sniffer").map(String::as_str),
        w,
    )))
}

async fn get_spoof(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(mac): Path<String>,
) -> ApiResult<super::SpoofReport> {
    authorize(&s, &headers, Endpoint::GetSpoof)?;
    let mac = parse_mac(&mac)?;
    Ok(Json(s.write().spoof(mac)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyRequest {
    pub mac: MacAddress,
    /// 32-byte Ed25519 public key, hex.
    pub public_key: String,
    #[serde(default)]
    pub replace: bool,
}

async fn post_keys(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<StatusCode, ApiError> {
    authorize(&s, &headers, Endpoint::PostKeys)?;
    let req: KeyRequest = body(&raw)?;
    let mut bytes = [0u8; 32];
    hex::decode_to_slice(&req.public_key, &mut bytes)
        .map_err(|e| ApiError::BadRequest(format!("public_key: {e}")))?;
    let key = VerifyingKey::from_bytes(&bytes)
        .map_err(|e| ApiError::BadRequest(format!("public_key: {e}")))?;
    s.write().register_key(req.mac, key, req.replace)?;
    Ok(StatusCode::CREATED)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CredentialRequest {
    pub username: String,
    pub secret: String,
    pub role: Role,
}

async fn post_credentials(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    raw: Bytes,
) -> Result<StatusCode, ApiError> {
    authorize(&s, &headers, Endpoint::PostCredentials)?;
    let req: CredentialRequest = body(&raw)?;
    let mut creds = s.credentials.write().unwrap_or_else(|e| e.into_inner());
    match creds.add(&req.username, &req.secret, req.role) {
        Ok(()) => Ok(StatusCode::CREATED),
        Err(e @ AuthError::Exists(_)) => Err(ApiError::Conflict(e.to_string())),
        Err(e) => Err(ApiError::BadRequest(e.to_string())),
    }
}

async fn delete_credential(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(username): Path<String>,
) -> Result<StatusCode, ApiError> {
    authorize(&s, &headers, Endpoint::DeleteCredential)?;
    let mut creds = s.credentials.write().unwrap_or_else(|e| e.into_inner());
    match creds.revoke(&username) {
        Ok(()) => Ok(StatusCode::NO_CONTENT),
        Err(e) => Err(ApiError::NotFound(e.to_string())),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/packets", post(post_packets))
        .route("/api/nodes", post(post_nodes).get(get_nodes))
        .route("/api/nodes/{mac}", get(get_node).patch(patch_node))
        .route("/api/nodes/{mac}/resolve", post(resolve_node))
        .route("/api/edges", get(get_edges))
        .route("/api/warnings", get(get_warnings))
        .route("/api/timeline", get(get_timeline))
        .route("/api/rssi", get(get_rssi))
        .route("/api/spoof/{mac}", get(get_spoof))
        .route("/api/keys", post(post_keys))
        .route("/api/credentials", post(post_credentials))
        .route("/api/credentials/{username}", delete(delete_credential))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A backend running on its own runtime thread, for tests and scenario runs.
pub struct BackendHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl BackendHandle {
    pub fn spawn(state: Arc<AppState>, bind: SocketAddr) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(TcpListener::bind(bind))?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let served = state.clone();
        let thread = std::thread::Builder::new()
            .name("backend".into())
            .spawn(move || {
                runtime.block_on(serve(listener, served, async {
                    let _ = stopped.await;
                }))
            })?;
        Ok(BackendHandle {
            addr,
            state,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_now()
    }

    fn stop_now(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("backend thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackendHandle {
    fn drop(&mut self) {
        let _ = self.stop_now();
    }
}
