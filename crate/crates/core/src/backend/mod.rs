//! Information storage: duplicate-free admission of sniffer uploads, the
//! node registry merging scanned markers with observed traffic, windowed
//! traffic views, warnings and the authenticated HTTP API.

mod api;
mod auth;
mod clock;
mod store;

pub use api::{
    router, serve, ApiError, AppState, BackendHandle, CredentialRequest, ErrorBody, KeyRequest,
    ResolveRequest, ScanRequest,
};
pub use auth::{
    allowed, basic_header, parse_basic, parse_credential_pair, AuthError, CredentialStore,
    Endpoint, Role,
};
pub use clock::{Clock, ManualClock, SystemClock};
pub use store::{
    Admission, NodeInfo, NodePatch, NodeRecord, RssiReport, RssiSample, ScanOutcome, Snapshot,
    SpoofReport, Store, StoreError, StoredTransmission, TrafficEdge, View, Warning, WarningKind,
    Window, Witness, DEFAULT_EPSILON_US,
};
