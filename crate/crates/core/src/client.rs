//! Blocking HTTP client for the backend API.

use std::time::Duration;

use ed25519_dalek::VerifyingKey;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use ureq::http::Response;
use ureq::Body;

use crate::backend::{
    basic_header, CredentialRequest, ErrorBody, KeyRequest, NodeInfo, NodePatch, NodeRecord,
    ResolveRequest, Role, RssiReport, ScanOutcome, ScanRequest, Snapshot, SpoofReport, TrafficEdge,
    View, Warning, Window,
};
use crate::codec::MacAddress;
use crate::sniffer::{FlushError, Uplink, UploadAck, UploadBatch};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("locked: {0}")]
    Locked(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("rejected ({status}): {detail}")]
    Rejected { status: u16, detail: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl From<ClientError> for FlushError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Unauthorized(d) | ClientError::Forbidden(d) => FlushError::Unauthorized(d),
            ClientError::Transport(d) => FlushError::Unreachable(d),
            other => FlushError::Rejected(other.to_string()),
        }
    }
}

#[derive(Clone)]
pub struct ApiClient {
    base: String,
    auth: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for ApiClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ApiClient")
            .field("base", &self.base)
            .finish_non_exhaustive()
    }
}

impl ApiClient {
    pub fn new(base_url: &str, username: &str, secret: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        ApiClient {
            base: base_url.trim_end_matches('/').to_string(),
            auth: basic_header(username, secret),
            agent,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn finish<T: DeserializeOwned>(
        resp: Result<Response<Body>, ureq::Error>,
    ) -> Result<T, ClientError> {
        let mut resp = check(resp)?;
        resp.body_mut()
            .read_json::<T>()
            .map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn get<T: DeserializeOwned>(
        &self,
        path: &str,
        query: &[(&str, String)],
    ) -> Result<T, ClientError> {
        let mut req = self
            .agent
            .get(self.url(path))
            .header("Authorization", &self.auth);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        Self::finish(req.call())
    }

    fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        Self::finish(
            self.agent
                .post(self.url(path))
                .header("Authorization", &self.auth)
                .send_json(body),
        )
    }

    fn post_no_content<B: Serialize>(&self, path: &str, body: &B) -> Result<(), ClientError> {
        check(
            self.agent
                .post(self.url(path))
                .header("Authorization", &self.auth)
                .send_json(body),
        )
        .map(drop)
    }

    pub fn upload(&self, batch: &UploadBatch) -> Result<UploadAck, ClientError> {
        self.post("/api/packets", batch)
    }

    pub fn scan_marker(
        &self,
        mac: MacAddress,
        placement: &str,
        ts: Option<u64>,
    ) -> Result<ScanOutcome, ClientError> {
        self.post(
            "/api/nodes",
            &ScanRequest {
                mac,
                placement: placement.to_string(),
                ts,
            },
        )
    }

    pub fn update_node(
        &self,
        mac: MacAddress,
        patch: &NodePatch,
    ) -> Result<NodeRecord, ClientError> {
        let path = format!("/api/nodes/{mac}");
        Self::finish(
            self.agent
                .patch(self.url(&path))
                .header("Authorization", &self.auth)
                .send_json(patch),
        )
    }

    pub fn resolve(&self, mac: MacAddress, placement: &str) -> Result<NodeRecord, ClientError> {
        self.post(
            &format!("/api/nodes/{mac}/resolve"),
            &ResolveRequest {
                placement: placement.to_string(),
            },
        )
    }

    pub fn register_key(
        &self,
        mac: MacAddress,
        key: &VerifyingKey,
        replace: bool,
    ) -> Result<(), ClientError> {
        self.post_no_content(
            "/api/keys",
            &KeyRequest {
                mac,
                public_key: hex::encode(key.as_bytes()),
                replace,
            },
        )
    }

    pub fn add_credential(
        &self,
        username: &str,
        secret: &str,
        role: Role,
    ) -> Result<(), ClientError> {
        let req = CredentialRequest {
            username: username.to_string(),
            secret: secret.to_string(),
            role,
        };
        self.post_no_content("/api/credentials", &req)
    }

    pub fn revoke_credential(&self, username: &str) -> Result<(), ClientError> {
        let path = format!("/api/credentials/{username}");
        check(
            self.agent
                .delete(self.url(&path))
                .header("Authorization", &self.auth)
                .call(),
        )
        .map(drop)
    }

    pub fn nodes(&self) -> Result<Vec<NodeRecord>, ClientError> {
        self.get("/api/nodes", &[])
    }

    pub fn node(&self, mac: MacAddress, window: Option<Window>) -> Result<NodeInfo, ClientError> {
        self.get(&format!("/api/nodes/{mac}"), &window_query(window))
    }

    pub fn edges(
        &self,
        view: View,
        window: Option<Window>,
    ) -> Result<Vec<TrafficEdge>, ClientError> {
        let mut q = window_query(window);
        q.push(("view", view_name(view).into()));
        self.get("/api/edges", &q)
    }

    pub fn warnings(&self, window: Option<Window>) -> Result<Vec<Warning>, ClientError> {
        self.get("/api/warnings", &window_query(window))
    }

    pub fn timeline(
        &self,
        view: View,
        step_us: u64,
        origin: Option<u64>,
    ) -> Result<Vec<Snapshot>, ClientError> {
        let mut q = vec![
            ("step", step_us.to_string()),
            ("view", view_name(view).into()),
        ];
        if let Some(o) = origin {
            q.push(("origin", o.to_string()));
        }
        self.get("/api/timeline", &q)
    }

    pub fn rssi(&self, mac: MacAddress, sniffer: Option<&str>) -> Result<RssiReport, ClientError> {
        let mut q = vec![("mac", mac.to_string())];
        if let Some(s) = sniffer {
            q.push(("sniffer", s.to_string()));
        }
        self.get("/api/rssi", &q)
    }

    pub fn spoof(&self, mac: MacAddress) -> Result<SpoofReport, ClientError> {
        self.get(&format!("/api/spoof/{mac}"), &[])
    }
}

fn view_name(v: View) -> &'static str {
    match v {
        View::Ip => "ip",
        View::Mac => "mac",
    }
}

fn window_query(w: Option<Window>) -> Vec<(&'static str, String)> {
    w.map(|w| vec![("t0", w.t0.to_string()), ("t1", w.t1.to_string())])
        .unwrap_or_default()
}

fn check(resp: Result<Response<Body>, ureq::Error>) -> Result<Response<Body>, ClientError> {
    let mut resp = resp.map_err(|e| ClientError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    if (200..300).contains(&status) {
        return Ok(resp);
    }
    let text = resp.body_mut().read_to_string().unwrap_or_default();
    let detail = serde_json::from_str::<ErrorBody>(&text)
        .map(|b| b.detail)
        .unwrap_or(text);
    Err(match status {
        401 => ClientError::Unauthorized(detail),
        403 => ClientError::Forbidden(detail),
        404 => ClientError::NotFound(detail),
        409 => ClientError::Conflict(detail),
        423 => ClientError::Locked(detail),
        _ => ClientError::Rejected { status, detail },
    })
}

/// Sniffer uplink over HTTP.
#[derive(Debug, Clone)]
pub struct HttpUplink(pub ApiClient);

impl Uplink for HttpUplink {
    fn upload(&mut self, batch: &UploadBatch) -> Result<UploadAck, FlushError> {
        Ok(self.0.upload(batch)?)
    }
}
