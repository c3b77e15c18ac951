//! Credentials, roles and the endpoint access matrix.

use std::collections::BTreeMap;

use base64::prelude::{Engine, BASE64_STANDARD};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    /// Per-device identity of a Sniffer Unit; may only upload.
    Sniffer,
    /// Read-only access.
    Trainee,
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "operator" => Ok(Role::Operator),
            "sniffer" => Ok(Role::Sniffer),
            "trainee" => Ok(Role::Trainee),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    PostPackets,
    PostNodes,
    PatchNode,
    ResolveNode,
    GetNodes,
    GetNode,
    GetEdges,
    GetWarnings,
    GetTimeline,
    GetRssi,
    GetSpoof,
    PostKeys,
    PostCredentials,
    DeleteCredential,
}

impl Endpoint {
    pub const ALL: [Endpoint; 14] = [
        Endpoint::PostPackets,
        Endpoint::PostNodes,
        Endpoint::PatchNode,
        Endpoint::ResolveNode,
        Endpoint::GetNodes,
        Endpoint::GetNode,
        Endpoint::GetEdges,
        Endpoint::GetWarnings,
        Endpoint::GetTimeline,
        Endpoint::GetRssi,
        Endpoint::GetSpoof,
        Endpoint::PostKeys,
        Endpoint::PostCredentials,
        Endpoint::DeleteCredential,
    ];

    pub fn method(&self) -> &'static str {
        match self {
            Endpoint::PostPackets
            | Endpoint::PostNodes
            | Endpoint::ResolveNode
            | Endpoint::PostKeys
            | Endpoint::PostCredentials => "POST",
            Endpoint::PatchNode => "PATCH",
            Endpoint::DeleteCredential => "DELETE",
            _ => "GET",
        }
    }

    pub fn path(&self) -> &'static str {
        match self {
            Endpoint::PostPackets => "/api/packets",
            Endpoint::PostNodes | Endpoint::GetNodes => "/api/nodes",
            Endpoint::PatchNode | Endpoint::GetNode => "/api/nodes/{mac}",
            Endpoint::ResolveNode => "/api/nodes/{mac}/resolve",
            Endpoint::GetEdges => "/api/edges",
            Endpoint::GetWarnings => "/api/warnings",
            Endpoint::GetTimeline => "/api/timeline",
            Endpoint::GetRssi => "/api/rssi",
            Endpoint::GetSpoof => "/api/spoof/{mac}",
            Endpoint::PostKeys => "/api/keys",
            Endpoint::PostCredentials => "/api/credentials",
            Endpoint::DeleteCredential => "/api/credentials/{username}",
        }
    }

    pub fn is_read(&self) -> bool {
        self.method() == "GET"
    }
}

/// The access matrix. Total over every (endpoint, role) pair.
pub fn allowed(endpoint: Endpoint, role: Role) -> bool {
    match role {
        Role::Operator => true,
        Role::Sniffer => endpoint == Endpoint::PostPackets,
        Role::Trainee => endpoint.is_read(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("missing or malformed authorization header")]
    MissingHeader,
    #[error("invalid credentials")]
    BadCredentials,
    #[error("credentials for {0} have been revoked")]
    Revoked(String),
    #[error("user {0} already exists")]
    Exists(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("username must be non-empty and free of ':'")]
    BadUsername,
}

#[derive(Debug, Clone)]
struct Entry {
    salt: [u8; 16],
    hash: [u8; 32],
    role: Role,
    revoked: bool,
}

fn hash_secret(salt: &[u8; 16], secret: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(secret.as_bytes());
    h.finalize().into()
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Username → salted secret hash and role.
#[derive(Debug, Clone, Default)]
pub struct CredentialStore {
    entries: BTreeMap<String, Entry>,
}

impl CredentialStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, username: &str, secret: &str, role: Role) -> Result<(), AuthError> {
        if username.is_empty() || username.contains(':') {
            return Err(AuthError::BadUsername);
        }
        if self.entries.contains_key(username) {
            return Err(AuthError::Exists(username.to_string()));
        }
        let mut salt = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut salt);
        let hash = hash_secret(&salt, secret);
        self.entries.insert(
            username.to_string(),
            Entry {
                salt,
                hash,
                role,
                revoked: false,
            },
        );
        Ok(())
    }

    pub fn revoke(&mut self, username: &str) -> Result<(), AuthError> {
        let e = self
            .entries
            .get_mut(username)
            .ok_or_else(|| AuthError::UnknownUser(username.to_string()))?;
        e.revoked = true;
        Ok(())
    }

    pub fn authenticate(&self, username: &str, secret: &str) -> Result<Role, AuthError> {
        let e = self
            .entries
            .get(username)
            .ok_or(AuthError::BadCredentials)?;
        if !constant_time_eq(&hash_secret(&e.salt, secret), &e.hash) {
            return Err(AuthError::BadCredentials);
        }
        if e.revoked {
            return Err(AuthError::Revoked(username.to_string()));
        }
        Ok(e.role)
    }

    /// Authenticates the value of an `Authorization: Basic ...` header.
    pub fn authenticate_header(&self, header: Option<&str>) -> Result<(String, Role), AuthError> {
        let (user, secret) = header
            .and_then(parse_basic)
            .ok_or(AuthError::MissingHeader)?;
        let role = self.authenticate(&user, &secret)?;
        Ok((user, role))
    }
}

pub fn basic_header(username: &str, secret: &str) -> String {
    format!(
        "Basic {}",
        BASE64_STANDARD.encode(format!("{username}:{secret}"))
    )
}

pub fn parse_basic(header: &str) -> Option<(String, String)> {
    let encoded = header.strip_prefix("Basic ")?.trim();
    let decoded = String::from_utf8(BASE64_STANDARD.decode(encoded).ok()?).ok()?;
    let (user, secret) = decoded.split_once(':')?;
    Some((user.to_string(), secret.to_string()))
}

/// Parses `username:secret` as given on the command line or in the environment.
pub fn parse_credential_pair(s: &str) -> Option<(String, String)> {
    let (u, p) = s.split_once(':')?;
    (!u.is_empty()).then(|| (u.to_string(), p.to_string()))
}
